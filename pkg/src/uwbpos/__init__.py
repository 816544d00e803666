"""UWB indoor positioning toolkit.

ToA-based and CIR-fingerprinting-based positioning: conventional Peak/LDE
detectors, linear and Gauss-Newton multilateration, two small 1D-CNN
estimators trained from scratch, and a synthetic multipath channel simulator
for controlled evaluation.
"""

from .core import (
    WINDOW_LEN,
    CirRecord,
    CirWindow,
    PhysConstants,
    Position2D,
    preprocess,
    toa_label,
    toa_to_range,
)
from .detectors import LdeParams, PeakParams, TuneGrid, lde_toa, peak_toa, tune
from .locate import (
    PositionFix,
    RangeObservation,
    SolverConfig,
    algo1_lls,
    algo2_iterative,
    position_from_toas,
    positioning_error,
)
from .models import (
    FingerprintSet,
    build_ann_fp,
    build_ann_toa,
    estimate_position_fp,
    estimate_toa,
)
from .simulate import (
    PathComponent,
    PulseShape,
    Scenario,
    SynthRecord,
    generate_corpus,
    render_cir,
    simulate_link,
)

__version__ = "0.1.0"
