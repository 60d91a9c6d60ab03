"""The raw acquisition container shared by the simulator, reconstruction and I/O."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .errors import GridMismatchError, PartialProtocolError
from .imagecore import Grid, Image

if TYPE_CHECKING:
    from .optics import OpticsConfig
    from .patterns import PatternSpec


@dataclass(frozen=True, eq=False)
class RawStack:
    """Fringe-modulated frames indexed ``frames[orientation][phase]``.

    ``pattern`` and ``optics`` are the acquisition manifest; ``provenance``
    records where the frames came from (``{"simulated": {"seed": ...}}`` or
    ``{"ingested": {"source": ...}}``) plus any processing history.
    """

    frames: tuple
    pattern: "PatternSpec"
    optics: "OpticsConfig"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        frames = tuple(tuple(row) for row in self.frames)
        object.__setattr__(self, "frames", frames)
        if not frames or not frames[0]:
            raise PartialProtocolError("stack has no frames")
        if len(frames) != len(self.pattern.orientations):
            raise PartialProtocolError(
                f"{len(frames)} orientation rows but manifest lists {len(self.pattern.orientations)}"
            )
        grid = frames[0][0].grid
        for row in frames:
            if len(row) != len(self.pattern.phases):
                raise PartialProtocolError(
                    f"orientation row has {len(row)} frames, manifest lists {len(self.pattern.phases)} phases"
                )
            for img in row:
                if not img.grid.same_as(grid):
                    raise GridMismatchError("all frames of a stack must share one grid")

    @property
    def grid(self) -> Grid:
        return self.frames[0][0].grid

    @property
    def n_orientations(self) -> int:
        return len(self.frames)

    @property
    def n_phases(self) -> int:
        return len(self.frames[0])

    def iter_frames(self):
        """Yield ``(orientation_index, phase_index, image)`` in orientation-major order."""
        for i, row in enumerate(self.frames):
            for j, img in enumerate(row):
                yield i, j, img

    def conventional(self) -> Image:
        """Phase- and orientation-averaged frame: the ordinary dark-field image."""
        acc = np.zeros(self.grid.shape)
        for _, _, img in self.iter_frames():
            acc += img.data
        return Image(acc / (self.n_orientations * self.n_phases), self.grid.pixel_pitch)

    def scaled(self, s: float) -> "RawStack":
        frames = [[img.with_data(img.data * s) for img in row] for row in self.frames]
        return RawStack(frames, self.pattern, self.optics, dict(self.provenance))
