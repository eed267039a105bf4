"""Forward model: synthesize whisker sample streams for one or two flows."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, UnsupportedConfigurationError
from .geometry import ArrayLayout, FlowSource, occlusion_map
from .signal import CALIBRATION_SPEED, SensorSample

DEFAULT_RATE_HZ = 100.0
SENSOR_HEADING_RMSE = 5.22  # degrees, single whisker under fan flow
MAX_SOURCES = 2


@dataclass(frozen=True)
class ResponseModel:
    speed_exponent: float = 2.0
    reference_speed: float = CALIBRATION_SPEED
    attenuation_slope: float = 0.8

    def __post_init__(self):
        if not 0.0 <= self.attenuation_slope <= 1.0:
            raise ConfigurationError(f"attenuation_slope must be in [0, 1], got {self.attenuation_slope}")
        if not self.reference_speed > 0:
            raise ConfigurationError(f"reference_speed must be positive, got {self.reference_speed}")
        if not self.speed_exponent > 0:
            raise ConfigurationError(f"speed_exponent must be positive, got {self.speed_exponent}")


@dataclass(frozen=True)
class NoiseModel:
    """Seeded Gaussian noise on direction and magnitude.

    ``sigma_dir`` and ``sigma_mag_frac`` are drawn once per whisker per
    trial and persist for the whole trial (mounting and flow-field bias, the
    part that averaging cannot remove). ``jitter_dir`` and
    ``jitter_mag_frac`` are drawn independently for every sample and are
    multiplied by ``occlusion_noise_gain`` on whiskers shadowed from any
    source, where the incident flow is more turbulent.
    """

    sigma_dir: float = SENSOR_HEADING_RMSE
    sigma_mag_frac: float = 0.05
    jitter_dir: float = SENSOR_HEADING_RMSE
    jitter_mag_frac: float = 0.10
    occlusion_noise_gain: float = 2.0
    seed: int = 0

    def __post_init__(self):
        for name in ("sigma_dir", "sigma_mag_frac", "jitter_dir", "jitter_mag_frac"):
            if not getattr(self, name) >= 0:
                raise ConfigurationError(f"noise.{name} must be >= 0")
        if not self.occlusion_noise_gain >= 1:
            raise ConfigurationError("noise.occlusion_noise_gain must be >= 1")

    @classmethod
    def noiseless(cls, seed: int = 0) -> "NoiseModel":
        return cls(0.0, 0.0, 0.0, 0.0, 1.0, seed)

    @property
    def is_noiseless(self) -> bool:
        return not (self.sigma_dir or self.sigma_mag_frac or self.jitter_dir or self.jitter_mag_frac)


def expected_ratio(occ_percent: float, model: ResponseModel = ResponseModel()) -> float:
    """Downstream/upstream magnitude ratio for a given occlusion percent."""
    if not 0.0 <= occ_percent <= 100.0:
        raise ValueError(f"occlusion percent must be in [0, 100], got {occ_percent}")
    return 1.0 - model.attenuation_slope * (occ_percent / 100.0)


def speed_gain(speed: float, model: ResponseModel = ResponseModel()) -> float:
    return (speed / model.reference_speed) ** model.speed_exponent


def whisker_response(flow: FlowSource, occ_percent: float, model: ResponseModel = ResponseModel()) -> np.ndarray:
    """Noiseless (bx, by) of one whisker under one flow, in calibrated units."""
    mag = speed_gain(flow.speed_v, model) * expected_ratio(occ_percent, model)
    rad = math.radians(flow.heading_phi)
    return mag * np.array([math.cos(rad), math.sin(rad)])


def _check_flows(flows: Sequence[FlowSource]) -> list[FlowSource]:
    flows = list(flows)
    if not flows:
        raise ConfigurationError("at least one flow source is required")
    if len(flows) > MAX_SOURCES:
        raise UnsupportedConfigurationError(
            f"{len(flows)} flow sources given; the shadowing model covers at most {MAX_SOURCES}"
        )
    return flows


def array_response(layout: ArrayLayout, flows: Sequence[FlowSource],
                   response: ResponseModel = ResponseModel()) -> tuple[dict[int, np.ndarray], dict[int, float]]:
    """Noiseless per-whisker vectors (vector sum over sources) and max occlusion per whisker."""
    flows = _check_flows(flows)
    vectors = {i: np.zeros(2) for i in layout.ids}
    worst = {i: 0.0 for i in layout.ids}
    for flow in flows:
        if flow.speed_v == 0.0:
            continue
        occ = occlusion_map(flow.heading_phi, layout)
        for i in layout.ids:
            vectors[i] = vectors[i] + whisker_response(flow, occ[i], response)
            worst[i] = max(worst[i], occ[i])
    return vectors, worst


def simulate_trial(layout: ArrayLayout, flows: Sequence[FlowSource],
                   response: ResponseModel = ResponseModel(), noise: NoiseModel = NoiseModel(),
                   n_samples: int = 50, rate_hz: float = DEFAULT_RATE_HZ) -> list[SensorSample]:
    """Sample stream for one trial, ordered by time then whisker id.

    The persistent offsets and the per-sample jitter come from separate
    child streams of ``noise.seed``, so the first k samples of a trial do not
    depend on ``n_samples``.
    """
    if n_samples < 1:
        raise ConfigurationError(f"n_samples must be >= 1, got {n_samples}")
    if not rate_hz > 0:
        raise ConfigurationError(f"rate_hz must be positive, got {rate_hz}")
    vectors, worst = array_response(layout, flows, response)
    ids = layout.ids
    n = len(ids)

    base = np.array([vectors[i] for i in ids])
    mag = np.hypot(base[:, 0], base[:, 1])
    ang = np.arctan2(base[:, 1], base[:, 0])
    gain = np.array([noise.occlusion_noise_gain if worst[i] > 0.0 else 1.0 for i in ids])

    bias_rng, dir_rng, mag_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(noise.seed).spawn(3))
    dir_bias = np.radians(noise.sigma_dir) * bias_rng.standard_normal(n)
    mag_bias = 1.0 + noise.sigma_mag_frac * bias_rng.standard_normal(n)
    dir_jit = np.radians(noise.jitter_dir) * gain * dir_rng.standard_normal((n_samples, n))
    mag_jit = 1.0 + noise.jitter_mag_frac * gain * mag_rng.standard_normal((n_samples, n))

    theta = ang + dir_bias + dir_jit
    r = mag * mag_bias * mag_jit
    bx = r * np.cos(theta)
    by = r * np.sin(theta)
    if noise.is_noiseless:
        # skip the cos/sin round trip so noiseless output is exact
        bx = np.broadcast_to(base[:, 0], (n_samples, n))
        by = np.broadcast_to(base[:, 1], (n_samples, n))

    samples = []
    for k in range(n_samples):
        t = k / rate_hz
        for j, wid in enumerate(ids):
            samples.append(SensorSample(t, wid, float(bx[k, j]), float(by[k, j]), 0.0))
    return samples
