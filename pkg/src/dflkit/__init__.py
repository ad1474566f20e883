"""dflkit: device-free localization from multichannel RSS.

Simulate multipath RSS scenes, detect obstructed links by the
across-channel variance ratio, and localize a passive target with the
robust weighted least squares pipeline (detect, grid vote, spatial
filter, WLS refine).
"""

__version__ = "0.1.0"

from ._kernels import backend_name
from .channelsim import (
    ChannelPlan,
    MultipathProfile,
    ObstructionModel,
    SimConfig,
    mc_power_moments,
    path_loss_amplitude,
    power_mean_closed_form,
    power_variance_closed_form,
    received_power,
    simulate_scene,
    single_channel_power_delta,
)
from .detection import (
    AttenuationEstimate,
    DetectionResult,
    DetectorConfig,
    detect_links,
    estimate_attenuation_mean,
    estimate_attenuation_single_channel,
    estimate_attenuation_variance,
)
from .evaluate import (
    Dataset,
    DetectionMetrics,
    LocalizationMetrics,
    SweepConfig,
    detection_metrics,
    localization_metrics,
    sweep_channels,
    sweep_threshold,
)
from .localization import (
    CoarseGrid,
    PositionEstimate,
    RwlsConfig,
    WlsSystem,
    coarse_estimate,
    rwls_localize,
    spatial_filter,
    wls_solve,
)
from .rss import QuantizationMap, RssTensor
from .scene import (
    Link,
    MonitoredArea,
    Scene,
    Sensor,
    build_scene,
    ground_truth_indicator,
    load_scene,
    office_16_layout,
    point_line_distance,
)
from .traceio import Frame, decode_frame, encode_frame, frames_to_tensor, read_trace, write_trace
