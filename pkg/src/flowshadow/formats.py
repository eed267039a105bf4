"""CSV formats and the plain-text scenario file.

All angles in files are degrees. Floats are written with ``repr`` so every
file re-parses to the identical values.
"""

from __future__ import annotations

import csv
import io
import math
import os
import re
from dataclasses import dataclass, field, fields
from typing import Iterable, TextIO

from .errors import ConfigurationError, DataFormatError, UnsupportedConfigurationError
from .geometry import PRESETS, ArrayLayout, FlowSource
from .signal import Calibration, ProcessedReading, SensorSample, WhiskerGains
from .simulate import DEFAULT_RATE_HZ, MAX_SOURCES, NoiseModel, ResponseModel

SAMPLE_HEADER = ["t_s", "whisker_id", "bx", "by", "bz"]
PROCESSED_HEADER = ["whisker_id", "theta_deg", "b_norm", "b_rel"]
SUMMARY_HEADER = ["alpha_deg", "ratio", "m1_phi2_rmse_deg", "m2_phi1_rmse_deg", "m2_phi2_rmse_deg", "n_trials"]
REPORT_HEADER = ["method", "phi1_known_deg", "phi1_hat_deg", "phi2_hat_deg", "iterations", "low_confidence",
                 "single_flow"]
CALIBRATION_HEADER = ["whisker_id", "gain_x_pos", "gain_x_neg", "gain_y_pos", "gain_y_neg"]
GRID_HEADER = ["phi1_deg", "alpha_deg", "v1_mps", "v2_mps"]
SWEEP_HEADER = ["heading_deg", "occ_percent", "b_rel"]
TRIAL_HEADER = ["phi1_deg", "alpha_deg", "v1_mps", "v2_mps", "ratio", "trial", "seed",
                "m1_phi2_hat_deg", "m1_phi2_err_deg", "m2_phi1_hat_deg", "m2_phi2_hat_deg",
                "m2_phi1_err_deg", "m2_phi2_err_deg"]

MIN_SCENARIO_SAMPLES = 5


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _open_out(target):
    if isinstance(target, (str, os.PathLike)):
        return open(target, "w", encoding="utf-8", newline=""), True
    return target, False


def write_rows(target, header: list[str], rows: Iterable[Iterable]) -> None:
    fh, owned = _open_out(target)
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    finally:
        if owned:
            fh.close()


def read_rows(source, header: list[str]) -> list[tuple[int, dict[str, str]]]:
    """Rows as ``(line_number, {column: text})`` after checking the header."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8", newline="") as fh:
            text = fh.read()
    else:
        text = source.read()
    reader = csv.reader(io.StringIO(text))
    try:
        got = next(reader)
    except StopIteration:
        raise DataFormatError("empty file, expected header " + ",".join(header), line=1) from None
    if [h.strip() for h in got] != header:
        raise DataFormatError(f"bad header {','.join(got)!r}, expected {','.join(header)!r}", line=1)
    rows = []
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataFormatError(f"expected {len(header)} fields, got {len(row)}", line=line)
        rows.append((line, dict(zip(header, (c.strip() for c in row)))))
    return rows


def _num(row, key, line, optional=False):
    text = row[key]
    if text == "":
        if optional:
            return None
        raise DataFormatError(f"missing value for {key}", line=line)
    try:
        value = float(text)
    except ValueError:
        raise DataFormatError(f"{key}: not a number: {text!r}", line=line) from None
    if not math.isfinite(value):
        raise DataFormatError(f"{key}: non-finite value {text!r}", line=line)
    return value


def _int(row, key, line):
    try:
        return int(row[key])
    except ValueError:
        raise DataFormatError(f"{key}: not an integer: {row[key]!r}", line=line) from None


# -- sample log -------------------------------------------------------------


def write_samples(target, samples: Iterable[SensorSample]) -> None:
    write_rows(target, SAMPLE_HEADER, ((s.t, s.whisker_id, s.bx, s.by, s.bz) for s in samples))


def read_samples(source) -> list[SensorSample]:
    samples = []
    last_t: dict[int, float] = {}
    for line, row in read_rows(source, SAMPLE_HEADER):
        s = SensorSample(_num(row, "t_s", line), _int(row, "whisker_id", line), _num(row, "bx", line),
                         _num(row, "by", line), _num(row, "bz", line))
        if s.t < last_t.get(s.whisker_id, -math.inf):
            raise DataFormatError(f"time goes backwards for whisker {s.whisker_id}", line=line)
        last_t[s.whisker_id] = s.t
        samples.append(s)
    return samples


# -- processed readings -----------------------------------------------------


def write_processed(target, readings: Iterable[ProcessedReading]) -> None:
    write_rows(target, PROCESSED_HEADER, ((r.whisker_id, r.theta_n, r.b_norm, r.b_rel) for r in readings))


def read_processed(source) -> list[ProcessedReading]:
    out = []
    for line, row in read_rows(source, PROCESSED_HEADER):
        out.append(ProcessedReading(_int(row, "whisker_id", line), _num(row, "theta_deg", line, optional=True),
                                    _num(row, "b_norm", line), _num(row, "b_rel", line, optional=True)))
    return out


# -- calibration ------------------------------------------------------------


def read_calibration(source) -> Calibration:
    gains = {}
    for line, row in read_rows(source, CALIBRATION_HEADER):
        try:
            gains[_int(row, "whisker_id", line)] = WhiskerGains(*(_num(row, k, line) for k in CALIBRATION_HEADER[1:]))
        except ConfigurationError as exc:
            raise DataFormatError(str(exc), line=line) from None
    return Calibration(gains, default=None)


def write_calibration(target, cal: Calibration, whisker_ids: Iterable[int]) -> None:
    rows = []
    for i in whisker_ids:
        g = cal.for_whisker(i)
        rows.append((i, g.gain_x_pos, g.gain_x_neg, g.gain_y_pos, g.gain_y_neg))
    write_rows(target, CALIBRATION_HEADER, rows)


# -- summaries --------------------------------------------------------------


def write_summary(target, rows) -> None:
    write_rows(target, SUMMARY_HEADER, ((r.alpha, r.ratio, r.m1_phi2_rmse, r.m2_phi1_rmse, r.m2_phi2_rmse, r.n_trials)
                                        for r in rows))


def read_summary(source):
    from .evaluate import SummaryRow

    return [SummaryRow(_num(r, "alpha_deg", ln), _num(r, "ratio", ln), _num(r, "m1_phi2_rmse_deg", ln),
                       _num(r, "m2_phi1_rmse_deg", ln), _num(r, "m2_phi2_rmse_deg", ln), _int(r, "n_trials", ln))
            for ln, r in read_rows(source, SUMMARY_HEADER)]


def write_trials(target, results) -> None:
    write_rows(target, TRIAL_HEADER, (
        (t.point.phi1, t.point.alpha, t.point.v1, t.point.v2, t.point.ratio, t.trial, t.seed,
         t.m1_phi2_hat, t.m1_phi2_err, t.m2_phi1_hat, t.m2_phi2_hat, t.m2_phi1_err, t.m2_phi2_err)
        for t in results))


def write_grid(target, points) -> None:
    write_rows(target, GRID_HEADER, ((p.phi1, p.alpha, p.v1, p.v2) for p in points))


def read_grid(source):
    from .evaluate import GridPoint

    points = []
    for line, row in read_rows(source, GRID_HEADER):
        try:
            points.append(GridPoint(*(_num(row, k, line) for k in GRID_HEADER)))
        except ConfigurationError as exc:
            raise DataFormatError(str(exc), line=line) from None
    return points


@dataclass(frozen=True)
class ReportRow:
    method: str
    phi1_known: float | None
    phi1_hat: float | None
    phi2_hat: float | None
    iterations: int = 0
    low_confidence: bool = False
    single_flow: bool = False


def write_report(target, row: ReportRow) -> None:
    write_rows(target, REPORT_HEADER, [(row.method, row.phi1_known, row.phi1_hat, row.phi2_hat, row.iterations,
                                        row.low_confidence, row.single_flow)])


def read_report(source) -> list[ReportRow]:
    return [ReportRow(r["method"], _num(r, "phi1_known_deg", ln, True), _num(r, "phi1_hat_deg", ln, True),
                      _num(r, "phi2_hat_deg", ln, True), _int(r, "iterations", ln), r["low_confidence"] == "1",
                      r["single_flow"] == "1")
            for ln, r in read_rows(source, REPORT_HEADER)]


def write_sweep(target, rows) -> None:
    write_rows(target, SWEEP_HEADER, ((r.heading, r.occ_percent, r.b_rel) for r in rows))


# -- scenario ---------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    layout: ArrayLayout
    flows: tuple[FlowSource, ...]
    response: ResponseModel = ResponseModel()
    noise: NoiseModel = NoiseModel()
    n_samples: int = 50
    trials: int = 2
    seed: int = 0
    rate_hz: float = DEFAULT_RATE_HZ
    layout_name: str = field(default="grid2x2", compare=False)

    def __post_init__(self):
        if not 1 <= len(self.flows) <= MAX_SOURCES:
            raise UnsupportedConfigurationError(f"flows: expected 1 or 2 sources, got {len(self.flows)}")
        if self.n_samples < MIN_SCENARIO_SAMPLES:
            raise ConfigurationError(f"n_samples: must be >= {MIN_SCENARIO_SAMPLES}, got {self.n_samples}")
        if self.trials < 1:
            raise ConfigurationError(f"trials: must be >= 1, got {self.trials}")


_KEY_RE = re.compile(r"^[a-z][a-z0-9_]*(\.[a-z][a-z0-9_]*)?$")
_FLOW_RE = re.compile(r"^flow(\d+)\.(heading_deg|speed_mps)$")
_NOISE_KEYS = {f.name for f in fields(NoiseModel)} - {"seed"}
_RESPONSE_KEYS = {f.name for f in fields(ResponseModel)}
_TOP_KEYS = {"n_samples": int, "trials": int, "seed": int, "rate_hz": float}


def parse_key_values(text: str) -> dict[str, tuple[int, str]]:
    """``key = value`` lines; ``#`` starts a comment. Returns key -> (line, value)."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if not _KEY_RE.match(key):
            raise ConfigurationError(f"line {lineno}: malformed key {key!r}")
        if key in out:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        out[key] = (lineno, value)
    return out


def _convert(key, value, kind):
    try:
        if kind is bool:
            low = value.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return low in ("true", "1", "yes")
        result = kind(value)
    except ValueError:
        raise ConfigurationError(f"{key}: expected {kind.__name__}, got {value!r}") from None
    if kind is float and not math.isfinite(result):
        raise ConfigurationError(f"{key}: must be finite, got {value!r}")
    return result


def _parse_positions(value: str):
    pts = []
    for chunk in value.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.replace(",", " ").split()
        if len(parts) != 2:
            raise ConfigurationError(f"layout.positions: expected 'x y' pairs separated by ';', got {chunk!r}")
        pts.append(tuple(_convert("layout.positions", p, float) for p in parts))
    if not pts:
        raise ConfigurationError("layout.positions: no positions given")
    return pts


def parse_scenario(text: str) -> Scenario:
    kv = parse_key_values(text)
    values = {k: v for k, (_, v) in kv.items()}

    flow_fields: dict[int, dict[str, float]] = {}
    layout_kw: dict[str, str] = {}
    response_kw, noise_kw, top_kw = {}, {}, {}
    for key, value in values.items():
        m = _FLOW_RE.match(key)
        if m:
            flow_fields.setdefault(int(m.group(1)), {})[m.group(2)] = _convert(key, value, float)
        elif key == "layout" or key.startswith("layout."):
            layout_kw[key] = value
        elif key.startswith("response."):
            name = key.split(".", 1)[1]
            if name not in _RESPONSE_KEYS:
                raise ConfigurationError(f"{key}: unknown response field (known: {sorted(_RESPONSE_KEYS)})")
            response_kw[name] = _convert(key, value, float)
        elif key.startswith("noise."):
            name = key.split(".", 1)[1]
            if name == "enabled":
                noise_kw[name] = _convert(key, value, bool)
            elif name in _NOISE_KEYS:
                noise_kw[name] = _convert(key, value, float)
            else:
                raise ConfigurationError(f"{key}: unknown noise field (known: {sorted(_NOISE_KEYS | {'enabled'})})")
        elif key in _TOP_KEYS:
            top_kw[key] = _convert(key, value, _TOP_KEYS[key])
        else:
            raise ConfigurationError(f"{key}: unknown key")

    if not flow_fields:
        raise ConfigurationError("flow1.heading_deg: at least one flow is required")
    if any(i < 1 for i in flow_fields):
        raise ConfigurationError("flows are numbered from 1")
    if max(flow_fields) > MAX_SOURCES or len(flow_fields) > MAX_SOURCES:
        raise UnsupportedConfigurationError(
            f"flow{max(flow_fields)}: at most {MAX_SOURCES} flow sources are supported")
    flows = []
    for i in range(1, max(flow_fields) + 1):
        f = flow_fields.get(i)
        if f is None:
            raise ConfigurationError(f"flow{i}: missing (flows must be numbered contiguously)")
        for k in ("heading_deg", "speed_mps"):
            if k not in f:
                raise ConfigurationError(f"flow{i}.{k}: missing")
        flows.append(FlowSource(f["heading_deg"], f["speed_mps"]))

    layout, name = _build_layout(layout_kw)
    enabled = noise_kw.pop("enabled", True)
    seed = top_kw.get("seed", 0)
    noise = NoiseModel(**noise_kw, seed=seed) if enabled else NoiseModel.noiseless(seed)
    return Scenario(layout, tuple(flows), ResponseModel(**response_kw), noise, layout_name=name, **top_kw)


def _build_layout(kw: dict[str, str]) -> tuple[ArrayLayout, str]:
    allowed = {"layout", "layout.spacing_mm", "layout.diameter_mm", "layout.positions"}
    for key in kw:
        if key not in allowed:
            raise ConfigurationError(f"{key}: unknown layout field")
    name = kw.get("layout", "grid2x2")
    diameter = _convert("layout.diameter_mm", kw["layout.diameter_mm"], float) if "layout.diameter_mm" in kw else None
    spacing = _convert("layout.spacing_mm", kw["layout.spacing_mm"], float) if "layout.spacing_mm" in kw else None
    if name == "custom":
        if "layout.positions" not in kw:
            raise ConfigurationError("layout.positions: required for a custom layout")
        pts = _parse_positions(kw["layout.positions"])
        return ArrayLayout.from_positions(pts, diameter or 15.0, spacing or 35.0), name
    if "layout.positions" in kw:
        raise ConfigurationError("layout.positions: only valid with layout = custom")
    if name not in PRESETS:
        raise ConfigurationError(f"layout: unknown preset {name!r} (known: {sorted(PRESETS)} or custom)")
    args = {}
    if name == "grid2x2" and spacing is not None:
        args["spacing"] = spacing
    elif spacing is not None:
        raise ConfigurationError(f"layout.spacing_mm: not used by preset {name!r}")
    if diameter is not None:
        args["diameter"] = diameter
    return PRESETS[name](**args), name


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def format_scenario(sc: Scenario) -> str:
    lines = []
    if sc.layout_name == "custom":
        lines.append("layout = custom")
        lines.append("layout.positions = " + "; ".join(f"{fmt(x)} {fmt(y)}" for _, (x, y) in sc.layout.whiskers))
        lines.append(f"layout.spacing_mm = {fmt(sc.layout.nominal_spacing_s)}")
    else:
        lines.append(f"layout = {sc.layout_name}")
        if sc.layout_name == "grid2x2":
            lines.append(f"layout.spacing_mm = {fmt(sc.layout.nominal_spacing_s)}")
    lines.append(f"layout.diameter_mm = {fmt(sc.layout.diameter_d)}")
    for i, flow in enumerate(sc.flows, start=1):
        lines.append(f"flow{i}.heading_deg = {fmt(flow.heading_phi)}")
        lines.append(f"flow{i}.speed_mps = {fmt(flow.speed_v)}")
    for f in fields(ResponseModel):
        lines.append(f"response.{f.name} = {fmt(getattr(sc.response, f.name))}")
    lines.append(f"noise.enabled = {'false' if sc.noise.is_noiseless else 'true'}")
    if not sc.noise.is_noiseless:
        for name in sorted(_NOISE_KEYS):
            lines.append(f"noise.{name} = {fmt(getattr(sc.noise, name))}")
    lines.append(f"n_samples = {sc.n_samples}")
    lines.append(f"trials = {sc.trials}")
    lines.append(f"seed = {sc.seed}")
    lines.append(f"rate_hz = {fmt(sc.rate_hz)}")
    return "\n".join(lines) + "\n"
