"""Per-whisker processing chain: calibrate, filter, direction and magnitude."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, MissingDataError, UndefinedDirectionError

DEFAULT_WINDOW = 5
CALIBRATION_SPEED = 5.5  # m/s


@dataclass(frozen=True)
class SensorSample:
    t: float
    whisker_id: int
    bx: float
    by: float
    bz: float = 0.0


@dataclass(frozen=True)
class WhiskerGains:
    gain_x_pos: float = 1.0
    gain_x_neg: float = 1.0
    gain_y_pos: float = 1.0
    gain_y_neg: float = 1.0

    def __post_init__(self):
        for name in ("gain_x_pos", "gain_x_neg", "gain_y_pos", "gain_y_neg"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ConfigurationError(f"{name} must be a positive finite number, got {value}")


@dataclass(frozen=True)
class Calibration:
    """Half-axis gains per whisker.

    ``default`` applies to whiskers without an explicit entry; set it to
    None to make every whisker require its own gains.
    """

    gains: Mapping[int, WhiskerGains] = field(default_factory=dict)
    reference_speed: float = CALIBRATION_SPEED
    default: WhiskerGains | None = WhiskerGains()

    @classmethod
    def identity(cls) -> "Calibration":
        return cls()

    @classmethod
    def from_reference_readings(cls, readings: Mapping[int, Mapping[str, float]],
                                reference_speed: float = CALIBRATION_SPEED) -> "Calibration":
        """Build gains from the mean response to reference flows along each half axis.

        ``readings[id]`` maps ``"+x"``, ``"-x"``, ``"+y"``, ``"-y"`` to the
        on-axis component recorded under that flow (sign is ignored).
        """
        gains = {}
        for wid, rec in readings.items():
            try:
                gains[int(wid)] = WhiskerGains(abs(rec["+x"]), abs(rec["-x"]), abs(rec["+y"]), abs(rec["-y"]))
            except KeyError as exc:
                raise ConfigurationError(f"whisker {wid}: missing reference reading {exc}") from None
        return cls(gains, reference_speed, default=None)

    def for_whisker(self, whisker_id: int) -> WhiskerGains:
        g = self.gains.get(whisker_id, self.default)
        if g is None:
            raise ConfigurationError(f"no calibration for whisker {whisker_id}")
        return g


@dataclass(frozen=True)
class ProcessedReading:
    whisker_id: int
    theta_n: float | None
    b_norm: float
    b_rel: float | None = None

    @property
    def vector(self) -> np.ndarray:
        """(Bx, By) rebuilt from direction and magnitude; relative units when available."""
        mag = self.b_rel if self.b_rel is not None else self.b_norm
        if self.theta_n is None or mag == 0.0:
            return np.zeros(2)
        rad = math.radians(self.theta_n)
        return mag * np.array([math.cos(rad), math.sin(rad)])


def apply_calibration(sample: SensorSample, cal: Calibration) -> SensorSample:
    g = cal.for_whisker(sample.whisker_id)
    bx = sample.bx / (g.gain_x_pos if sample.bx >= 0 else g.gain_x_neg)
    by = sample.by / (g.gain_y_pos if sample.by >= 0 else g.gain_y_neg)
    return replace(sample, bx=bx, by=by)


def _causal_mean(x: np.ndarray, window: int) -> np.ndarray:
    csum = np.cumsum(x)
    out = csum.copy()
    out[window:] = csum[window:] - csum[:-window]
    counts = np.minimum(np.arange(1, len(x) + 1), window)
    return out / counts


def moving_average(stream: Sequence[SensorSample], window: int = DEFAULT_WINDOW) -> list[SensorSample]:
    """Causal moving average of bx and by.

    The first ``window - 1`` outputs average every sample seen so far, so the
    output is as long as the input.
    """
    if window < 1:
        raise ConfigurationError(f"window must be >= 1, got {window}")
    if not stream:
        return []
    bx = _causal_mean(np.array([s.bx for s in stream], dtype=float), window)
    by = _causal_mean(np.array([s.by for s in stream], dtype=float), window)
    return [replace(s, bx=float(x), by=float(y)) for s, x, y in zip(stream, bx, by)]


def direction_theta(bx: float, by: float) -> float:
    """Direction of (bx, by) in degrees, [0, 360)."""
    if bx == 0 and by == 0:
        raise UndefinedDirectionError("direction of a zero signal is undefined")
    deg = math.degrees(math.atan2(by, bx))
    if deg < 0.0:
        deg += 360.0
    return 0.0 if deg >= 360.0 else deg


def magnitude_b(bx: float, by: float) -> float:
    return math.hypot(bx, by)


def normalize_to_array_max(readings: Iterable[ProcessedReading]) -> list[ProcessedReading]:
    readings = list(readings)
    peak = max((r.b_norm for r in readings), default=0.0)
    if peak <= 0.0:
        return [replace(r, b_rel=0.0) for r in readings]
    return [replace(r, b_rel=r.b_norm / peak) for r in readings]


def process_window(samples: Iterable[SensorSample], cal: Calibration | None = None,
                   window: int = DEFAULT_WINDOW, whisker_ids: Iterable[int] | None = None,
                   ) -> list[ProcessedReading]:
    """Reduce a block of samples to one ProcessedReading per whisker.

    Per whisker: calibrate, filter, average the filtered vectors over time,
    then take direction and magnitude. ``b_rel`` is relative to the largest
    magnitude in the array. Pass ``whisker_ids`` to require those whiskers
    to be present.
    """
    cal = cal or Calibration.identity()
    streams: dict[int, list[SensorSample]] = defaultdict(list)
    for s in samples:
        streams[s.whisker_id].append(s)
    if whisker_ids is not None:
        missing = set(whisker_ids) - set(streams)
        if missing:
            raise MissingDataError(missing)
    if not streams:
        raise MissingDataError([] if whisker_ids is None else whisker_ids)

    readings = []
    for wid in sorted(streams):
        stream = sorted(streams[wid], key=lambda s: s.t)
        filtered = moving_average([apply_calibration(s, cal) for s in stream], window)
        bx = float(np.mean([s.bx for s in filtered]))
        by = float(np.mean([s.by for s in filtered]))
        mag = magnitude_b(bx, by)
        theta = direction_theta(bx, by) if mag > 0.0 else None
        readings.append(ProcessedReading(wid, theta, mag))
    return normalize_to_array_max(readings)
