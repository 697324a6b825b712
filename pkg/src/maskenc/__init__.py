"""Linear mask encoding: PCA codebooks for instance masks and tools to evaluate them."""
from .codebook import (
    Codebook,
    CodebookError,
    FitAccumulator,
    accumulate,
    decode,
    decode_soft,
    encode,
    merge,
    solve,
    truncate,
)
from .masks import BBox, MaskError, crop_resize, iou, paste, polygon_rasterize, tight_bbox
from .rle import RLE, rle_decode, rle_encode

__version__ = "0.1.0"
