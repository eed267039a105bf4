"""Flow shadowing in planar whisker flow-sensor arrays.

Simulate one or two airflows over an array, process the magnetic readings
into per-whisker directions and magnitudes, and recover the flow headings.
"""

from .errors import (
    ConfigurationError,
    DataFormatError,
    DegenerateGeometryError,
    FlowShadowError,
    IdentifierError,
    InsufficientDataError,
    MissingDataError,
    NoSignalError,
    UndefinedDirectionError,
    UnsupportedConfigurationError,
)
from .estimate import (
    EstimateReport,
    RmseSummary,
    WhiskerVector,
    estimate_single_flow,
    method1,
    method2,
    predict_flow1_response,
    rmse,
)
from .geometry import (
    ArrayLayout,
    FlowPair,
    FlowSource,
    grid2x2,
    occlusion_for_whisker,
    occlusion_percent,
)
from .signal import (
    Calibration,
    ProcessedReading,
    SensorSample,
    apply_calibration,
    direction_theta,
    magnitude_b,
    moving_average,
    process_window,
)
from .simulate import NoiseModel, ResponseModel, expected_ratio, simulate_trial, whisker_response

__version__ = "0.1.0"
