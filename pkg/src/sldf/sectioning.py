"""Optical sectioning from three phase-shifted frames.

Unmodulated (out-of-focus) light is identical in the three frames and cancels
in the pairwise differences; only fringe-modulated in-focus signal survives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatchError, PartialProtocolError
from .imagecore import Image
from .stack import RawStack

COMBINE_MODES = ("single", "mean", "max")


def section_three(i1: Image, i2: Image, i3: Image) -> Image:
    """sqrt((I1 - I2)^2 + (I2 - I3)^2 + (I3 - I1)^2), pixelwise."""
    if not (i1.grid.same_as(i2.grid) and i1.grid.same_as(i3.grid)):
        raise GridMismatchError("sectioning frames must share one grid")
    a, b, c = i1.data, i2.data, i3.data
    # hypot keeps tiny differences from underflowing to an exact zero
    return Image(np.hypot(np.hypot(a - b, b - c), c - a), i1.pixel_pitch)


@dataclass(frozen=True, eq=False)
class SectionedImage:
    image: Image
    orientations: tuple[int, ...]
    combine_mode: str


def section_stack(stack: RawStack, combine_mode: str = "mean", orientation: int | None = None) -> SectionedImage:
    """Section every orientation, then merge them.

    ``combine_mode="single"`` uses one orientation (``orientation``, default 0);
    ``"mean"`` and ``"max"`` combine all orientations pixelwise.
    """
    if combine_mode not in COMBINE_MODES:
        raise ValueError(f"combine_mode must be one of {COMBINE_MODES}, got {combine_mode!r}")
    if stack.n_phases != 3:
        raise PartialProtocolError(f"sectioning needs exactly 3 phases per orientation, got {stack.n_phases}")
    if combine_mode == "single":
        k = 0 if orientation is None else int(orientation)
        if not 0 <= k < stack.n_orientations:
            raise IndexError(f"orientation index {k} out of range")
        return SectionedImage(section_three(*stack.frames[k]), (k,), combine_mode)
    parts = np.stack([section_three(*row).data for row in stack.frames])
    data = parts.mean(axis=0) if combine_mode == "mean" else parts.max(axis=0)
    return SectionedImage(
        Image(data, stack.grid.pixel_pitch), tuple(range(stack.n_orientations)), combine_mode
    )
