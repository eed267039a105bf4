"""Evaluation harness: the two-flow grid, occlusion sweeps, heading accuracy."""

from __future__ import annotations

import itertools
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError
from .estimate import RmseSummary, estimate_single_flow, method1, method2, rmse
from .geometry import (
    ArrayLayout,
    FlowSource,
    normalize_heading,
    occlusion_for_whisker,
    pair_layout,
    single_layout,
    wrap_difference,
)
from .signal import DEFAULT_WINDOW, process_window
from .simulate import NoiseModel, ResponseModel, simulate_trial

# Two-flow characterization grid: every combination is one grid point.
GRID_PHI1 = (0.0, 15.0)
GRID_ALPHA = (45.0, 90.0, 135.0)
GRID_V1 = (5.2, 6.5)
GRID_V2 = (7.3, 8.3)

FAN_SWEEP_HEADINGS = tuple(float(h) for h in range(-30, 31, 5))
SWEEP_SPEED = 6.5


def trial_seed(*keys: int) -> int:
    """Stable 64-bit seed derived from a root seed and trial coordinates."""
    return int(np.random.SeedSequence([int(k) & 0xFFFFFFFFFFFFFFFF for k in keys]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class GridPoint:
    phi1: float
    alpha: float
    v1: float
    v2: float

    def __post_init__(self):
        if not 0.0 < self.alpha <= 180.0:
            raise ConfigurationError(f"alpha_deg must be in (0, 180], got {self.alpha}")
        if not (self.v1 >= 0.0 and self.v2 > 0.0):
            raise ConfigurationError(f"speeds must satisfy v1 >= 0 and v2 > 0, got {self.v1}, {self.v2}")

    @property
    def phi2(self) -> float:
        return normalize_heading(self.phi1 + self.alpha)

    @property
    def ratio(self) -> float:
        return self.v1 / self.v2

    @property
    def flows(self) -> tuple[FlowSource, FlowSource]:
        return FlowSource(self.phi1, self.v1), FlowSource(self.phi2, self.v2)


def standard_grid(alphas: Sequence[float] = GRID_ALPHA) -> list[GridPoint]:
    return [GridPoint(p, a, v1, v2) for p, a, v1, v2 in itertools.product(GRID_PHI1, alphas, GRID_V1, GRID_V2)]


@dataclass(frozen=True)
class TrialResult:
    point: GridPoint
    trial: int
    seed: int
    m1_phi2_hat: float
    m2_phi1_hat: float
    m2_phi2_hat: float

    @property
    def m1_phi2_err(self) -> float:
        return wrap_difference(self.m1_phi2_hat - self.point.phi2)

    @property
    def m2_phi1_err(self) -> float:
        return wrap_difference(self.m2_phi1_hat - self.point.phi1)

    @property
    def m2_phi2_err(self) -> float:
        return wrap_difference(self.m2_phi2_hat - self.point.phi2)


@dataclass(frozen=True)
class SummaryRow:
    """One summary row: both methods at one (alpha, speed ratio)."""

    alpha: float
    ratio: float
    m1_phi2_rmse: float
    m2_phi1_rmse: float
    m2_phi2_rmse: float
    n_trials: int

    def as_rmse_summaries(self) -> tuple[RmseSummary, RmseSummary]:
        return (RmseSummary(self.alpha, self.ratio, self.m1_phi2_rmse, None, self.n_trials),
                RmseSummary(self.alpha, self.ratio, self.m2_phi2_rmse, self.m2_phi1_rmse, self.n_trials))


@dataclass(frozen=True)
class EvalConfig:
    layout: ArrayLayout
    response: ResponseModel = ResponseModel()
    noise: NoiseModel = NoiseModel()
    n_samples: int = 50
    window: int = DEFAULT_WINDOW
    refine: str = "joint"
    refine_iters: int = 1


def run_trial(point: GridPoint, cfg: EvalConfig, trial: int, seed: int) -> TrialResult:
    noise = replace(cfg.noise, seed=seed)
    samples = simulate_trial(cfg.layout, point.flows, cfg.response, noise, cfg.n_samples)
    readings = process_window(samples, window=cfg.window, whisker_ids=cfg.layout.ids)
    r1 = method1(readings, cfg.layout, point.phi1, cfg.response)
    r2 = method2(readings, cfg.layout, cfg.response, refine_iters=cfg.refine_iters, refine=cfg.refine)
    return TrialResult(point, trial, seed, r1.phi2_hat, r2.phi1_hat, r2.phi2_hat)


def _run_job(job):
    return run_trial(*job)


def evaluate_grid(points: Sequence[GridPoint], cfg: EvalConfig, trials: int = 2, seed: int = 0,
                  jobs: int = 1) -> tuple[list[SummaryRow], list[TrialResult]]:
    """Run every grid point ``trials`` times; summaries are keyed by (alpha, ratio to 2 dp).

    Trial seeds depend only on (seed, point index, trial index), so results
    do not depend on ``jobs``.
    """
    if not points:
        raise ConfigurationError("grid is empty")
    if trials < 1:
        raise ConfigurationError(f"trials must be >= 1, got {trials}")
    work = [(p, cfg, t, trial_seed(seed, k, t)) for k, p in enumerate(points) for t in range(trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_job, work, chunksize=max(1, len(work) // (4 * jobs))))
    else:
        results = [_run_job(w) for w in work]
    return summarize(results), results


def summarize(results: Iterable[TrialResult]) -> list[SummaryRow]:
    groups: dict[tuple[float, float], list[TrialResult]] = defaultdict(list)
    for r in results:
        groups[(round(r.point.alpha, 6), round(r.point.ratio, 2))].append(r)
    rows = []
    for (alpha, ratio), rs in sorted(groups.items(), key=lambda kv: (kv[0][0], -kv[0][1])):
        truth1 = [r.point.phi1 for r in rs]
        truth2 = [r.point.phi2 for r in rs]
        rows.append(SummaryRow(alpha, ratio,
                               rmse(truth2, [r.m1_phi2_hat for r in rs]),
                               rmse(truth1, [r.m2_phi1_hat for r in rs]),
                               rmse(truth2, [r.m2_phi2_hat for r in rs]),
                               len(rs)))
    return rows


# -- occlusion sweep ---------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    heading: float
    occ_percent: float
    b_rel: float


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float

    def __str__(self):
        return f"b_rel = {self.intercept:.6f} {self.slope:+.6f} * occ_percent"


def occlusion_sweep(spacing: float, headings: Iterable[float] = FAN_SWEEP_HEADINGS, diameter: float = 15.0,
                    speed: float = SWEEP_SPEED, response: ResponseModel = ResponseModel(),
                    noise: NoiseModel | None = None, n_samples: int = 50,
                    window: int = DEFAULT_WINDOW) -> tuple[list[SweepRow], LineFit]:
    """Rotate a two-whisker pair through ``headings`` and record downstream/upstream magnitude.

    Heading 0 puts the flow along the pair's axis (full shadow). Returns the
    rows and the least-squares line of ``b_rel`` against occlusion percent.
    """
    layout = pair_layout(spacing, diameter)
    noise = noise or NoiseModel.noiseless()
    rows = []
    for k, h in enumerate(headings):
        occ = occlusion_for_whisker(h, 2, layout)
        trial_noise = replace(noise, seed=trial_seed(noise.seed, k))
        samples = simulate_trial(layout, [FlowSource(h, speed)], response, trial_noise, n_samples)
        up, down = process_window(samples, window=window)
        rows.append(SweepRow(float(h), occ, down.b_norm / up.b_norm))
    x = np.array([r.occ_percent for r in rows])
    y = np.array([r.b_rel for r in rows])
    if len(rows) < 2 or np.ptp(x) == 0.0:
        raise ConfigurationError("sweep needs at least two distinct occlusion values to fit a line")
    slope, intercept = np.polyfit(x, y, 1)
    return rows, LineFit(float(slope), float(intercept))


# -- single-sensor accuracy ----------------------------------------------------


def heading_accuracy(headings: Iterable[float], trials: int, noise: NoiseModel, n_samples: int = 50,
                     layout: ArrayLayout | None = None, speed: float = SWEEP_SPEED,
                     response: ResponseModel = ResponseModel()) -> tuple[float, list[tuple[float, float]]]:
    """Single-flow heading estimates over a sweep; returns (RMSE, [(truth, estimate), ...])."""
    layout = layout or single_layout()
    pairs = []
    for k, h in enumerate(headings):
        for t in range(trials):
            trial_noise = replace(noise, seed=trial_seed(noise.seed, k, t))
            samples = simulate_trial(layout, [FlowSource(h, speed)], response, trial_noise, n_samples)
            pairs.append((normalize_heading(h), estimate_single_flow(process_window(samples))))
    return rmse([p[0] for p in pairs], [p[1] for p in pairs]), pairs

