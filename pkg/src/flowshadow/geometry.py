"""Array layout and geometric flow occlusion.

Heading convention, used by every module in the package: a heading ``phi``
is the direction the flow comes FROM, in degrees, measured counterclockwise
from the array's +x axis. The flow therefore propagates along
``-(cos phi, sin phi)`` and the upstream whisker of a pair is the one nearer
the source.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, IdentifierError

#: Below this spacing neighbouring whiskers touch at 6.5 m/s.
MIN_CONTACT_SPACING_MM = 30.0

GRID2X2_SPACING_MM = 35.0
GRID2X2_DIAMETER_MM = 15.0


class LayoutWarning(UserWarning):
    pass


def normalize_heading(deg: float) -> float:
    """Wrap an angle in degrees to [0, 360)."""
    out = math.fmod(float(deg), 360.0)
    if out < 0.0:
        out += 360.0
    # fmod of a tiny negative number can round up to exactly 360
    return 0.0 if out >= 360.0 else out


def wrap_difference(deg: float) -> float:
    """Wrap an angle difference to (-180, 180]."""
    out = normalize_heading(deg)
    return out - 360.0 if out > 180.0 else out


def unit(deg: float) -> np.ndarray:
    rad = math.radians(deg)
    return np.array([math.cos(rad), math.sin(rad)])


@dataclass(frozen=True)
class FlowSource:
    heading_phi: float
    speed_v: float

    def __post_init__(self):
        if not math.isfinite(self.heading_phi):
            raise ConfigurationError("flow heading must be finite")
        if not (self.speed_v >= 0.0 and math.isfinite(self.speed_v)):
            raise ConfigurationError(f"flow speed must be >= 0, got {self.speed_v}")
        object.__setattr__(self, "heading_phi", normalize_heading(self.heading_phi))

    @property
    def propagation(self) -> np.ndarray:
        """Unit vector the flow travels along (away from its source)."""
        return -unit(self.heading_phi)


@dataclass(frozen=True)
class FlowPair:
    flow1: FlowSource
    flow2: FlowSource

    @property
    def alpha(self) -> float:
        """Smallest unsigned angle between the two headings, in [0, 180]."""
        return abs(wrap_difference(self.flow2.heading_phi - self.flow1.heading_phi))

    @property
    def speed_ratio(self) -> float | None:
        if self.flow2.speed_v <= 0.0:
            return None
        return self.flow1.speed_v / self.flow2.speed_v


@dataclass(frozen=True)
class ArrayLayout:
    """Planar whisker array.

    ``whiskers`` is an ordered tuple of ``(id, (x_mm, y_mm))``; ids must be
    1..n. Construction fails if two drag elements would overlap and warns if
    any pair sits closer than the contact spacing.
    """

    whiskers: tuple
    diameter_d: float
    nominal_spacing_s: float
    _positions: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        whiskers = tuple((int(i), (float(p[0]), float(p[1]))) for i, p in self.whiskers)
        object.__setattr__(self, "whiskers", whiskers)
        ids = [i for i, _ in whiskers]
        if not whiskers:
            raise ConfigurationError("layout needs at least one whisker")
        if sorted(ids) != list(range(1, len(ids) + 1)):
            raise ConfigurationError(f"whisker ids must be unique and contiguous from 1, got {ids}")
        if not self.diameter_d > 0:
            raise ConfigurationError(f"diameter_d must be positive, got {self.diameter_d}")
        if not self.nominal_spacing_s > 0:
            raise ConfigurationError(f"nominal_spacing_s must be positive, got {self.nominal_spacing_s}")
        positions = {i: np.array(p) for i, p in whiskers}
        close = None
        for a in range(len(ids)):
            for b in range(a + 1, len(ids)):
                dist = float(np.linalg.norm(positions[ids[a]] - positions[ids[b]]))
                if dist < self.diameter_d:
                    raise ConfigurationError(
                        f"whiskers {ids[a]} and {ids[b]} overlap ({dist:.2f} mm < d={self.diameter_d} mm)"
                    )
                if dist < MIN_CONTACT_SPACING_MM:
                    close = (ids[a], ids[b], dist)
        if close is not None:
            warnings.warn(
                f"whiskers {close[0]} and {close[1]} are {close[2]:.1f} mm apart; "
                f"contact is likely below {MIN_CONTACT_SPACING_MM:.0f} mm",
                LayoutWarning,
                stacklevel=3,
            )
        object.__setattr__(self, "_positions", positions)

    @property
    def ids(self) -> list[int]:
        return [i for i, _ in self.whiskers]

    def __len__(self):
        return len(self.whiskers)

    def position(self, whisker_id: int) -> np.ndarray:
        try:
            return self._positions[whisker_id].copy()
        except KeyError:
            raise IdentifierError(f"unknown whisker id {whisker_id!r}") from None

    def transformed(self, rotate_deg: float = 0.0, shift: Sequence[float] = (0.0, 0.0)) -> "ArrayLayout":
        """Copy rotated about the origin by ``rotate_deg`` then translated by ``shift``."""
        c, s = math.cos(math.radians(rotate_deg)), math.sin(math.radians(rotate_deg))
        rot = np.array([[c, -s], [s, c]])
        moved = tuple((i, tuple(rot @ np.asarray(p) + np.asarray(shift))) for i, p in self.whiskers)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LayoutWarning)
            return ArrayLayout(moved, self.diameter_d, self.nominal_spacing_s)

    @classmethod
    def from_positions(cls, positions: Iterable[Sequence[float]], diameter_d: float,
                       nominal_spacing_s: float) -> "ArrayLayout":
        return cls(tuple((k + 1, tuple(p)) for k, p in enumerate(positions)), diameter_d, nominal_spacing_s)


def grid2x2(spacing: float = GRID2X2_SPACING_MM, diameter: float = GRID2X2_DIAMETER_MM) -> ArrayLayout:
    """The canonical square 2x2 array, centred on the origin.

    Numbering: 1 at (+x, -y), 2 at (-x, -y), 3 at (-x, +y), 4 at (+x, +y).
    With flows from 0 deg and 90 deg this makes whisker 1 shadowed only from
    the 90 deg flow and whisker 2 shadowed from both.
    """
    h = spacing / 2.0
    return ArrayLayout.from_positions([(h, -h), (-h, -h), (-h, h), (h, h)], diameter, spacing)


def pair_layout(spacing: float, diameter: float = GRID2X2_DIAMETER_MM) -> ArrayLayout:
    """Two whiskers on the x axis: 1 at the origin, 2 at (-spacing, 0).

    Whisker 1 is upstream for flows from 0 deg.
    """
    return ArrayLayout.from_positions([(0.0, 0.0), (-spacing, 0.0)], diameter, spacing)


def single_layout(diameter: float = GRID2X2_DIAMETER_MM) -> ArrayLayout:
    return ArrayLayout.from_positions([(0.0, 0.0)], diameter, GRID2X2_SPACING_MM)


PRESETS = {"grid2x2": grid2x2, "single": single_layout}


def occlusion_percent(flow_heading: float, target_id: int, occluder_id: int, layout: ArrayLayout) -> float:
    """Percent of the target's diameter shadowed by one occluder, in [0, 100].

    For a pair ``s`` apart with the flow rotated ``phi`` off their axis this
    is ``100 * (d - min(s*|sin phi|, d)) / d``.
    """
    if target_id == occluder_id:
        raise IdentifierError(f"target and occluder are the same whisker ({target_id})")
    delta = layout.position(target_id) - layout.position(occluder_id)
    travel = -unit(flow_heading)
    along = float(travel @ delta)
    if along <= 0.0:
        return 0.0
    lateral = abs(float(travel[0] * delta[1] - travel[1] * delta[0]))
    d = layout.diameter_d
    return 100.0 * (d - min(lateral, d)) / d


def occlusion_for_whisker(flow_heading: float, target_id: int, layout: ArrayLayout) -> float:
    """Occlusion of one whisker by its worst occluder (occluders do not stack)."""
    layout.position(target_id)
    return max(
        (occlusion_percent(flow_heading, target_id, other, layout) for other in layout.ids if other != target_id),
        default=0.0,
    )


def occlusion_map(flow_heading: float, layout: ArrayLayout) -> dict[int, float]:
    return {i: occlusion_for_whisker(flow_heading, i, layout) for i in layout.ids}


def occlusion_table(layout: ArrayLayout, headings) -> np.ndarray:
    """Vectorized ``occlusion_for_whisker``: shape (len(headings), n_whiskers), columns in id order."""
    h = np.radians(np.atleast_1d(np.asarray(headings, dtype=float)))
    travel = -np.stack([np.cos(h), np.sin(h)], axis=-1)  # (H, 2)
    pos = np.array([layout.position(i) for i in layout.ids])  # (n, 2)
    delta = pos[:, None, :] - pos[None, :, :]  # delta[target, occluder]
    along = np.einsum("hk,tok->hto", travel, delta)
    lateral = np.abs(travel[:, None, None, 0] * delta[None, :, :, 1] - travel[:, None, None, 1] * delta[None, :, :, 0])
    d = layout.diameter_d
    occ = 100.0 * (d - np.minimum(lateral, d)) / d
    n = len(layout.ids)
    occ = np.where((along > 0.0) & ~np.eye(n, dtype=bool)[None], occ, 0.0)
    return occ.max(axis=2) if n > 1 else np.zeros((len(h), 1))
