"""Heading estimation from processed array readings.

Two estimators for two simultaneous flows:

* :func:`method1` knows the first heading, predicts what that flow alone
  would do to each whisker using the occlusion geometry and ratio law,
  subtracts the prediction and reads the second heading off the summed
  residual.
* :func:`method2` knows neither. It seeds the first heading with the
  whisker direction furthest from the array mean, runs the same residual
  step for the second heading, then refines the pair.

Angles are degrees throughout; means and distances are circular.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq, minimize

from .errors import (
    ConfigurationError,
    DegenerateGeometryError,
    InsufficientDataError,
    MissingDataError,
    NoSignalError,
)
from .geometry import ArrayLayout, normalize_heading, occlusion_table, unit, wrap_difference
from .signal import ProcessedReading
from .simulate import ResponseModel

SIGNAL_FLOOR = 0.05
LOW_CONFIDENCE_FRACTION = 0.05
REFINE_MODES = ("joint", "alternate")


@dataclass(frozen=True)
class WhiskerVector:
    whisker_id: int
    vector: tuple[float, float]

    def __post_init__(self):
        if not all(math.isfinite(c) for c in self.vector):
            raise ValueError(f"whisker {self.whisker_id}: non-finite vector {self.vector}")


@dataclass(frozen=True)
class EstimateReport:
    phi2_hat: float
    phi1_hat: float | None = None
    per_whisker_residuals: tuple[WhiskerVector, ...] = ()
    iterations: int = 0
    low_confidence: bool = False
    single_flow: bool = False
    method: str = ""

    def __post_init__(self):
        object.__setattr__(self, "phi2_hat", normalize_heading(self.phi2_hat))
        if self.phi1_hat is not None:
            object.__setattr__(self, "phi1_hat", normalize_heading(self.phi1_hat))


@dataclass(frozen=True)
class RmseSummary:
    alpha: float
    speed_ratio: float
    rmse_phi2: float
    rmse_phi1: float | None
    n_trials: int

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")


# -- circular helpers ------------------------------------------------------


def heading_of(vec) -> float:
    return normalize_heading(math.degrees(math.atan2(vec[1], vec[0])))


def circular_mean(angles: Sequence[float], weights: Sequence[float] | None = None) -> float:
    """Direction of the (weighted) sum of unit vectors."""
    rad = np.radians(np.asarray(angles, dtype=float))
    w = np.ones_like(rad) if weights is None else np.asarray(weights, dtype=float)
    return heading_of((float(w @ np.cos(rad)), float(w @ np.sin(rad))))


def angular_distance(a: float, b: float) -> float:
    return abs(wrap_difference(a - b))


def rmse(true_values: Sequence[float], predictions: Sequence[float]) -> float:
    """Root mean square of wrapped heading errors, degrees."""
    true_values, predictions = list(true_values), list(predictions)
    if len(true_values) != len(predictions):
        raise ValueError(f"length mismatch: {len(true_values)} truths vs {len(predictions)} predictions")
    if not true_values:
        raise ValueError("rmse needs at least one value")
    err = np.array([wrap_difference(p - t) for t, p in zip(true_values, predictions)])
    return float(np.sqrt(np.mean(err**2)))


# -- single flow -----------------------------------------------------------


def estimate_single_flow(readings: Sequence[ProcessedReading], floor: float = SIGNAL_FLOOR) -> float:
    """Magnitude-weighted circular mean of whisker directions above ``floor`` (relative)."""
    peak = max((r.b_norm for r in readings), default=0.0)
    if peak <= 0.0:
        raise NoSignalError("no whisker has a non-zero signal")
    angles, weights = [], []
    for r in readings:
        rel = r.b_rel if r.b_rel is not None else r.b_norm / peak
        if r.theta_n is not None and rel >= floor:
            angles.append(r.theta_n)
            weights.append(r.b_norm)
    return circular_mean(angles, weights)


# -- shared machinery ------------------------------------------------------


def _ratios(layout: ArrayLayout, heading: float, response: ResponseModel) -> np.ndarray:
    occ = occlusion_table(layout, [heading])[0]
    return 1.0 - response.attenuation_slope * occ / 100.0


def _vectors(readings: Sequence[ProcessedReading], layout: ArrayLayout) -> np.ndarray:
    by_id = {r.whisker_id: r for r in readings}
    missing = set(layout.ids) - set(by_id)
    if missing:
        raise MissingDataError(missing)
    return np.array([by_id[i].vector for i in layout.ids])


def predict_flow1_response(layout: ArrayLayout, phi1: float, response: ResponseModel = ResponseModel(),
                           scale: float = 1.0) -> list[WhiskerVector]:
    """Expected whisker vectors if only the known flow were present."""
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    u = unit(phi1)
    ratios = _ratios(layout, phi1, response)
    return [WhiskerVector(i, tuple(scale * r * u)) for i, r in zip(layout.ids, ratios)]


def _fit_amplitudes(B: np.ndarray, r1: np.ndarray, u1: np.ndarray, r2: np.ndarray, u2: np.ndarray):
    """Least-squares amplitudes (A, C) for B_n ~ A r1_n u1 + C r2_n u2."""
    X = np.column_stack([(r1[:, None] * u1).ravel(), (r2[:, None] * u2).ravel()])
    coef, _, rank, _ = np.linalg.lstsq(X, B.ravel(), rcond=None)
    if rank < 2:
        # both columns describe the same shadow pattern: credit the first flow only
        a = float(X[:, 0] @ B.ravel() / (X[:, 0] @ X[:, 0])) if X[:, 0].any() else 0.0
        return a, 0.0
    return float(coef[0]), float(coef[1])


def _initial_scale(B: np.ndarray, occ: np.ndarray) -> float:
    """Smallest magnitude among the whiskers least shadowed from the known flow."""
    least = occ <= occ.min() + 1e-9
    return float(np.hypot(B[least, 0], B[least, 1]).min())


@dataclass
class _Inversion:
    heading: float
    residuals: np.ndarray
    kept: np.ndarray
    iterations: int
    low_confidence: bool
    scale: float = field(default=0.0)


def _max_amplitude(B: np.ndarray, response: ResponseModel) -> float:
    """Largest flow amplitude the readings can support.

    A flow of amplitude A shows at least (1 - slope) * A on every whisker it
    reaches; bigger fitted amplitudes only come from near-opposite flows
    cancelling each other.
    """
    return float(np.hypot(B[:, 0], B[:, 1]).max()) / max(1.0 - response.attenuation_slope, 0.05)


def _solve_scale(g, s0: float, s_hi: float, n_scan: int, max_iter: int) -> tuple[float, int]:
    """Root of ``g`` on (0, s_hi] nearest ``s0``; smallest ``|g|`` on the scan if there is none.

    Returns the scale and the number of ``g`` evaluations.
    """
    grid = np.union1d(np.linspace(s_hi / n_scan, s_hi, n_scan), [s0])
    vals = np.array([g(x) for x in grid])
    evals = len(grid)
    roots = [float(x) for x, v in zip(grid, vals) if v == 0.0]
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if fa * fb < 0.0:
            r, info = brentq(g, a, b, xtol=1e-13 * s_hi, maxiter=max(max_iter, 100), full_output=True, disp=False)
            evals += info.function_calls
            # a sign change across a jump in the residual heading is not a root
            if abs(g(r)) <= 1e-6 * s_hi:
                roots.append(float(r))
            evals += 1
    if roots:
        return min(roots, key=lambda r: (abs(r - s0), r)), evals
    return float(grid[int(np.argmin(np.abs(vals)))]), evals


def _invert(B: np.ndarray, layout: ArrayLayout, known: float, response: ResponseModel, drop_exposed: bool,
            scale: float | None, max_iter: int, n_scan: int = 64) -> _Inversion:
    """Known flow in, other flow's heading out.

    With ``scale=None`` the known flow's amplitude is the self-consistent
    value s = A(s): subtracting s times the known flow's shadow pattern
    leaves a residual heading at which a joint least-squares fit gives the
    known flow amplitude A(s) again. The root nearest
    :func:`_initial_scale` wins.
    """
    occ = occlusion_table(layout, [known])[0]
    ratios = 1.0 - response.attenuation_slope * occ / 100.0
    u = unit(known)
    kept = occ > 0.0 if drop_exposed else np.ones(len(occ), dtype=bool)
    if not kept.any():
        raise DegenerateGeometryError(
            f"no whisker is shadowed from the known flow at {known:.2f} deg; nothing left after dropping exposed whiskers"
        )

    def step(s):
        resid = B[kept] - s * ratios[kept, None] * u
        return resid, resid.sum(axis=0)

    def mismatch(s):
        heading = heading_of(step(s)[1])
        A, _ = _fit_amplitudes(B, ratios, u, _ratios(layout, heading, response), unit(heading))
        return A - s

    iterations = 1
    if scale is None:
        s0 = _initial_scale(B, occ)
        s_hi = max(_max_amplitude(B, response), s0)
        s, iterations = _solve_scale(mismatch, s0, s_hi, n_scan, max_iter) if s_hi > 0 else (0.0, 1)
    else:
        s = float(scale)
    resid, total = step(s)
    heading = heading_of(total)
    signal = np.linalg.norm(B[kept].sum(axis=0))
    low = bool(np.linalg.norm(total) < LOW_CONFIDENCE_FRACTION * signal) if signal > 0 else True
    return _Inversion(heading, resid, kept, iterations, low, s)


def _residual_vectors(layout: ArrayLayout, inv: _Inversion) -> tuple[WhiskerVector, ...]:
    ids = [i for i, k in zip(layout.ids, inv.kept) if k]
    return tuple(WhiskerVector(i, (float(v[0]), float(v[1]))) for i, v in zip(ids, inv.residuals))


def method1(readings: Sequence[ProcessedReading], layout: ArrayLayout, phi1: float,
            response: ResponseModel = ResponseModel(), scale: float | None = None,
            max_iter: int = 50, n_scan: int = 64) -> EstimateReport:
    """Second heading given the first.

    Whiskers the known flow reaches unshadowed are left out of the residual
    sum. ``scale`` fixes the known flow's amplitude (relative units) instead
    of fitting it.
    """
    if scale is not None and not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    B = _vectors(readings, layout)
    inv = _invert(B, layout, phi1, response, True, scale, max_iter, n_scan)
    return EstimateReport(
        phi2_hat=inv.heading,
        phi1_hat=None,
        per_whisker_residuals=_residual_vectors(layout, inv),
        iterations=inv.iterations,
        low_confidence=inv.low_confidence,
        method="1",
    )


# -- method 2 --------------------------------------------------------------


def furthest_from_mean(readings: Sequence[ProcessedReading]) -> tuple[ProcessedReading, float, float]:
    """Reading whose direction is furthest from the circular mean of all directions.

    Returns ``(reading, distance, mean)``. Ties go to the larger relative
    magnitude, then the lower whisker id.
    """
    usable = [r for r in readings if r.theta_n is not None and r.b_norm > 0.0]
    mean = circular_mean([r.theta_n for r in usable])
    dist = {r.whisker_id: angular_distance(r.theta_n, mean) for r in usable}
    far = max(dist.values())
    tied = [r for r in usable if dist[r.whisker_id] >= far - 1e-9]
    pick = min(tied, key=lambda r: (-(r.b_rel if r.b_rel is not None else r.b_norm), r.whisker_id))
    return pick, dist[pick.whisker_id], mean


class _PairModel:
    """Two-flow least-squares fit with non-negative amplitudes."""

    def __init__(self, B: np.ndarray, layout: ArrayLayout, response: ResponseModel):
        self.B = B
        self.layout = layout
        self.response = response
        self.energy = float((B**2).sum())
        self.max_amplitude = _max_amplitude(B, response)

    def ratios(self, headings) -> np.ndarray:
        return 1.0 - self.response.attenuation_slope * occlusion_table(self.layout, headings) / 100.0

    def grid_search(self, step: float) -> tuple[float, float]:
        H = np.arange(0.0, 360.0, step)
        R = self.ratios(H)  # (H, n)
        U = np.stack([np.cos(np.radians(H)), np.sin(np.radians(H))], axis=1)
        b = np.einsum("hn,hn->h", R, U @ self.B.T)
        g = np.einsum("hn,hn->h", R, R)
        G12 = (R @ R.T) * (U @ U.T)
        det = g[:, None] * g[None, :] - G12**2
        with np.errstate(divide="ignore", invalid="ignore"):
            A = (b[:, None] * g[None, :] - b[None, :] * G12) / det
            C = (b[None, :] * g[:, None] - b[:, None] * G12) / det
            explained = A * b[:, None] + C * b[None, :]
        lim = self.max_amplitude
        ok = (det > 1e-9 * np.maximum(g[:, None] * g[None, :], 1e-300)) & (A >= 0) & (C >= 0) & (A <= lim) & (C <= lim)
        cost = np.where(ok, self.energy - explained, np.inf)
        k = np.unravel_index(np.argmin(cost), cost.shape)
        if not np.isfinite(cost[k]):
            raise DegenerateGeometryError("no heading pair admits a two-flow fit")
        return float(H[k[0]]), float(H[k[1]])

    def cost(self, x) -> float:
        """Residual energy of the best non-negative amplitude pair at headings ``x``."""
        r1, r2 = self.ratios(x)
        u1, u2 = unit(x[0]), unit(x[1])
        b1, b2 = float(r1 @ (self.B @ u1)), float(r2 @ (self.B @ u2))
        g1, g2 = float(r1 @ r1), float(r2 @ r2)
        g12 = float(r1 @ r2) * float(u1 @ u2)
        det = g1 * g2 - g12**2
        if det <= 1e-9 * g1 * g2:
            return self.energy - max(b1, 0.0) ** 2 / g1
        A = (b1 * g2 - b2 * g12) / det
        C = (b2 * g1 - b1 * g12) / det
        if not (0.0 <= A <= self.max_amplitude and 0.0 <= C <= self.max_amplitude):
            return self.energy * 10.0
        return self.energy - (A * b1 + C * b2)

    def solve(self, step: float) -> tuple[float, float]:
        x0 = np.array(self.grid_search(step))
        res = minimize(self.cost, x0, method="Nelder-Mead",
                       options={"xatol": 1e-9, "fatol": 1e-15 * self.energy, "maxiter": 600, "initial_simplex":
                                np.array([x0, x0 + [step, 0.0], x0 + [0.0, step]])})
        x = res.x if res.fun <= self.cost(x0) else x0
        return normalize_heading(x[0]), normalize_heading(x[1])


def method2(readings: Sequence[ProcessedReading], layout: ArrayLayout, response: ResponseModel = ResponseModel(),
            refine_iters: int = 1, refine: str = "joint", grid_step: float = 1.0,
            max_iter: int = 50, n_scan: int = 64) -> EstimateReport:
    """Both headings, no prior.

    Seed: the whisker direction furthest from the mean direction becomes
    the first heading. The residual step then gives the second heading.

    Refinement (``refine_iters >= 1``):

    * ``"joint"``: find the heading pair whose shadowed two-flow
      prediction best fits all whiskers (global 2D scan, then local
      polish). The flow with the smaller fitted amplitude is labelled
      flow 1, which is the flow the seed rule targets: the mean direction
      leans toward the stronger flow. Equal amplitudes fall back to the
      seed's side of the mean.
    * ``"alternate"``: swap roles and redo the residual step,
      ``refine_iters`` times. Converges poorly when the flows are not
      aligned with the grid.
    """
    if refine not in REFINE_MODES:
        raise ConfigurationError(f"refine must be one of {REFINE_MODES}, got {refine!r}")
    if refine_iters < 0:
        raise ValueError("refine_iters must be >= 0")
    B = _vectors(readings, layout)
    usable = [r for r in readings if r.theta_n is not None and r.b_norm > 0.0]
    if len(usable) < 2:
        raise InsufficientDataError(f"method 2 needs at least 2 whiskers with signal, got {len(usable)}")

    seed, spread, mean = furthest_from_mean(usable)
    if spread < 1e-9:
        return EstimateReport(phi2_hat=seed.theta_n, phi1_hat=seed.theta_n, single_flow=True, method="2")

    phi1 = seed.theta_n
    inv = _invert(B, layout, phi1, response, False, None, max_iter, n_scan)
    phi2, iterations = inv.heading, inv.iterations
    if refine_iters and refine == "alternate":
        for k in range(refine_iters):
            back = _invert(B, layout, phi2, response, False, None, max_iter, n_scan)
            phi1 = back.heading
            iterations += back.iterations
            if k < refine_iters - 1:
                inv = _invert(B, layout, phi1, response, False, None, max_iter, n_scan)
                phi2 = inv.heading
                iterations += inv.iterations
    elif refine_iters:
        model = _PairModel(B, layout, response)
        a, b = model.solve(grid_step)
        amp_a, amp_b = _fit_amplitudes(B, model.ratios([a])[0], unit(a), model.ratios([b])[0], unit(b))
        if abs(amp_a - amp_b) > 1e-9 * max(amp_a, amp_b):
            first_is_a = amp_a < amp_b
        else:
            side = math.copysign(1.0, wrap_difference(seed.theta_n - mean))
            first_is_a = side * wrap_difference(a - mean) >= side * wrap_difference(b - mean)
        phi1, phi2 = (a, b) if first_is_a else (b, a)
        amp1 = amp_a if first_is_a else amp_b
        inv = _invert(B, layout, phi1, response, False, max(amp1, 1e-300), max_iter, n_scan)
        iterations += 1
    # with neither flow shadowing any whisker, every heading pair bracketing
    # the mean direction fits equally well: the split is not identifiable
    unshadowed = not occlusion_table(layout, [phi1, phi2]).any()
    return EstimateReport(
        phi2_hat=phi2,
        phi1_hat=phi1,
        per_whisker_residuals=_residual_vectors(layout, inv),
        iterations=iterations,
        low_confidence=inv.low_confidence or unshadowed,
        method="2",
    )
