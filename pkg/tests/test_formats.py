import io

import pytest

from flowshadow import formats
from flowshadow.errors import ConfigurationError, DataFormatError, UnsupportedConfigurationError
from flowshadow.evaluate import EvalConfig, evaluate_grid, standard_grid
from flowshadow.geometry import FlowSource, grid2x2
from flowshadow.signal import Calibration, WhiskerGains, process_window
from flowshadow.simulate import NoiseModel, simulate_trial

SCENARIO = """\
# two flows on the standard array
layout = grid2x2
flow1.heading_deg = 0
flow1.speed_mps = 5.2
flow2.heading_deg = 90   # alpha = 90
flow2.speed_mps = 8.3
noise.sigma_dir = 3.0
n_samples = 20
seed = 7
"""


def roundtrip(write, read, obj):
    buf = io.StringIO()
    write(buf, obj)
    buf.seek(0)
    return read(buf)


def test_samples_roundtrip_exactly():
    samples = simulate_trial(grid2x2(), [FlowSource(12.5, 6.1)], noise=NoiseModel(seed=4), n_samples=6)
    assert roundtrip(formats.write_samples, formats.read_samples, samples) == samples


def test_processed_roundtrip_keeps_missing_direction():
    samples = simulate_trial(grid2x2(), [FlowSource(0.0, 0.0)], n_samples=5)
    readings = process_window(samples)
    back = roundtrip(formats.write_processed, formats.read_processed, readings)
    assert back == readings
    assert back[0].theta_n is None


def test_calibration_roundtrip():
    cal = Calibration({1: WhiskerGains(1.5, 0.5, 2.0, 1.0), 2: WhiskerGains()})
    buf = io.StringIO()
    formats.write_calibration(buf, cal, [1, 2])
    buf.seek(0)
    back = formats.read_calibration(buf)
    assert back.for_whisker(1) == cal.for_whisker(1)
    with pytest.raises(ConfigurationError):
        back.for_whisker(3)


def test_summary_grid_and_report_roundtrip():
    rows, _ = evaluate_grid(standard_grid((90.0,))[:2], EvalConfig(grid2x2()), trials=1)
    assert roundtrip(formats.write_summary, formats.read_summary, rows) == rows
    pts = standard_grid()
    assert roundtrip(formats.write_grid, formats.read_grid, pts) == pts
    row = formats.ReportRow("2", None, 1.25, 91.0, 3, False, True)
    assert roundtrip(formats.write_report, formats.read_report, row) == [row]


def test_headers_are_the_documented_ones():
    buf = io.StringIO()
    formats.write_samples(buf, [])
    assert buf.getvalue() == "t_s,whisker_id,bx,by,bz\n"
    buf = io.StringIO()
    formats.write_summary(buf, [])
    assert buf.getvalue() == "alpha_deg,ratio,m1_phi2_rmse_deg,m2_phi1_rmse_deg,m2_phi2_rmse_deg,n_trials\n"


@pytest.mark.parametrize("body,line", [
    ("0.0,1,1.0,0.0,0.0\n0.01,1,abc,0.0,0.0\n", 3),
    ("0.0,1,1.0,0.0\n", 2),
    ("0.0,1,1.0,0.0,0.0\n0.01,2,1,0,0\n-0.5,1,1,0,0\n", 4),
    ("0.0,1,nan,0.0,0.0\n", 2),
])
def test_malformed_rows_report_line(body, line):
    text = "t_s,whisker_id,bx,by,bz\n" + body
    with pytest.raises(DataFormatError) as err:
        formats.read_samples(io.StringIO(text))
    assert err.value.line == line
    assert str(err.value).startswith(f"line {line}:")


def test_bad_header():
    with pytest.raises(DataFormatError) as err:
        formats.read_samples(io.StringIO("time,id,x,y,z\n"))
    assert err.value.line == 1


def test_parse_scenario():
    sc = formats.parse_scenario(SCENARIO)
    assert sc.flows == (FlowSource(0.0, 5.2), FlowSource(90.0, 8.3))
    assert sc.noise.sigma_dir == 3.0 and sc.noise.seed == 7
    assert sc.n_samples == 20 and sc.trials == 2
    assert sc.layout == grid2x2()


def test_scenario_format_roundtrip():
    sc = formats.parse_scenario(SCENARIO)
    assert formats.parse_scenario(formats.format_scenario(sc)) == sc
    custom = formats.parse_scenario("layout = custom\nlayout.positions = 0 0; 40 0; 0 40\nflow1.heading_deg = 10\n"
                                    "flow1.speed_mps = 6\nnoise.enabled = false\n")
    assert len(custom.layout) == 3 and custom.noise.is_noiseless
    assert formats.parse_scenario(formats.format_scenario(custom)) == custom


@pytest.mark.parametrize("text,exc,field", [
    ("flow1.heading_deg = 0\nflow1.speed_mps = 1\nflow2.heading_deg = 1\nflow2.speed_mps = 1\n"
     "flow3.heading_deg = 2\nflow3.speed_mps = 1\n", UnsupportedConfigurationError, "flow3"),
    ("flow1.heading_deg = 0\n", ConfigurationError, "flow1.speed_mps"),
    ("flow1.heading_deg = 0\nflow1.speed_mps = fast\n", ConfigurationError, "flow1.speed_mps"),
    ("flow1.heading_deg = 0\nflow1.speed_mps = 1\nn_samples = 4\n", ConfigurationError, "n_samples"),
    ("flow1.heading_deg = 0\nflow1.speed_mps = 1\nnoise.colour = red\n", ConfigurationError, "noise.colour"),
    ("flow1.heading_deg = 0\nflow1.speed_mps = 1\nlayout = hexagon\n", ConfigurationError, "layout"),
    ("flow1.heading_deg = 0\nflow1.heading_deg = 1\n", ConfigurationError, "duplicate"),
    ("flow1.heading_deg 0\n", ConfigurationError, "line 1"),
])
def test_scenario_errors_name_the_field(text, exc, field):
    with pytest.raises(exc) as err:
        formats.parse_scenario(text)
    assert field in str(err.value)
