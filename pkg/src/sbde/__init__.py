"""Segmentation-driven defect editing toolkit.

Turns images of normal fasteners into missing-pin / missing-nut defect
images by mask extraction, morphological mask optimization, and
inpainting-based attribute removal, then composites the edits back into
full inspection scenes to augment detection datasets.
"""

from .types import BinaryMask, RasterImage

__all__ = ["BinaryMask", "RasterImage"]
__version__ = "0.1.0"
