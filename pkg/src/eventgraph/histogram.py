"""Linearized HSV binning shared by mask validation and person descriptors.

Pixels are (hue in degrees [0, 360), saturation [0, 1], value [0, 1]).
With the default 20/10/5 bins the linear index is binH*50 + binS*5 + binV
and descriptors have 1000 entries.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence, Tuple

import numpy as np

from .errors import OutOfRangePixel

DEFAULT_BINS: Tuple[int, int, int] = (20, 10, 5)


def descriptor_length(bins: Tuple[int, int, int] = DEFAULT_BINS) -> int:
    h, s, v = bins
    return h * s * v


def hsv_bin_index(h: float, s: float, v: float,
                  bins: Tuple[int, int, int] = DEFAULT_BINS) -> int:
    """Linear bin index of one pixel.

    Saturation or value exactly 1.0 clamp into the last bin; a hue of 360
    is out of range (the hue domain is half-open).
    """
    hb, sb, vb = bins
    if not (0.0 <= h < 360.0) or math.isnan(h):
        raise OutOfRangePixel((h, s, v), "hue must be in [0, 360)")
    if not (0.0 <= s <= 1.0):
        raise OutOfRangePixel((h, s, v), "saturation must be in [0, 1]")
    if not (0.0 <= v <= 1.0):
        raise OutOfRangePixel((h, s, v), "value must be in [0, 1]")
    bin_h = min(int(math.floor(h / (360.0 / hb))), hb - 1)
    bin_s = min(int(math.floor(s * sb)), sb - 1)
    bin_v = min(int(math.floor(v * vb)), vb - 1)
    return bin_h * (sb * vb) + bin_s * vb + bin_v


def compute_histogram(pixels: Iterable[Sequence[float]],
                      bins: Tuple[int, int, int] = DEFAULT_BINS) -> np.ndarray:
    """Accumulate one count per pixel into the linearized HSV histogram.

    The sum of the result equals the number of pixels.
    """
    out = np.zeros(descriptor_length(bins), dtype=np.int64)
    for px in pixels:
        h, s, v = px
        out[hsv_bin_index(h, s, v, bins)] += 1
    return out
