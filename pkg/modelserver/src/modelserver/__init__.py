"""Vision model server for the segment / inpaint / classify wire protocol."""

from .app import create_app
from .config import ServerConfig, load_server_config

__all__ = ["create_app", "ServerConfig", "load_server_config"]
__version__ = "0.1.0"
