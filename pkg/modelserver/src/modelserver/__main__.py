"""Run the server: python -m modelserver [--config server.json] [--port N]."""

import argparse

import uvicorn

from .app import create_app
from .config import ServerConfig, load_server_config


def main():
    parser = argparse.ArgumentParser(prog="modelserver")
    parser.add_argument("--config", help="JSON config path")
    parser.add_argument("--host", default=None)
    parser.add_argument("--port", type=int, default=None)
    args = parser.parse_args()

    config = load_server_config(args.config) if args.config else ServerConfig()
    host = args.host if args.host is not None else config.host
    port = args.port if args.port is not None else config.port
    uvicorn.run(create_app(config), host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
