"""Tile-based 360-degree video resource allocation and session simulation.

QoE-driven rate allocation over LTE plus multi-AP Wi-Fi for tiled 360 video:
probable-FoV enumeration, a relaxed concave program with a sparsity penalty
for AP association, discrete representation selection, a hierarchical playback
buffer, and a trace-driven session simulator with a CLI front end.
"""

from .core_model import (
    Allocation,
    ConstraintReport,
    InfeasibleError,
    Instance,
    QoeParams,
    RepresentationLadder,
    SaliencyMap,
    TileGrid,
    UserState,
    check_allocation,
    quantize_down,
    validate_instance,
)
from .fov_geometry import (
    FovExtent,
    FovPrediction,
    ProbableFovSet,
    ViewDirection,
    enumerate_probable_fovs,
    viewport_tiles,
)
from .qoe_model import expected_user_qoe, fov_quality, system_qoe, tile_utility
from .allocation import STRATEGIES, run_strategy
from .buffer_strategy import BufferParams, BufferState, DownloadPlan, StallEvent
from .simulator import (
    ComparisonReport,
    FovTrace,
    NetworkTrace,
    Scenario,
    SessionReport,
    SynthSpec,
    compare_strategies,
    run_session,
    synth_fov_trace,
    synth_instance,
    synth_trace,
)

__version__ = "0.1.0"
