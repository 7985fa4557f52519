"""csiscope: real-time WiFi CSI capture, preprocessing, recording, streaming
and classification plumbing."""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    ClassificationResult,
    CsiFrame,
    FrameMeta,
    PolarFrame,
    ProcessedFrame,
    SubcarrierOrder,
    ValidationReport,
    format_mac,
    parse_mac,
    validate_frame,
)
from .codec import (  # noqa: F401
    DEFAULT_INGEST_LAYOUT,
    DEFAULT_UDP_PORT,
    IngestLayout,
    encode_wire_frame,
    parse_nexmon_payload,
    parse_wire_frame,
    quantize_for_wire,
    read_pcap_stream,
)
from .source import (  # noqa: F401
    PatternBand,
    SourceUri,
    SynthProfile,
    builtin_profiles,
    generate_synthetic_frame,
    open_source,
    parse_source_uri,
    with_noise_scaled,
)
from .pipeline import (  # noqa: F401
    ChainConfig,
    PipelineState,
    PluginInstance,
    SmoothingState,
    chain_from_json,
    chain_to_json,
    compensate_agc,
    default_chain,
    extract_amplitude_phase,
    filter_mac,
    narrow_bandwidth,
    null_guard_subcarriers,
    reorder_subcarriers,
    run_chain,
    smooth_rssi,
    unwrap_phase,
    update_chain,
    validate_chain,
)
from .recording import (  # noqa: F401
    QueuedRecorder,
    RecordingMeta,
    open_recording,
    read_recording,
)
from .bridge import (  # noqa: F401
    BridgeHandle,
    poll_results,
    send_frame,
    spawn_classifier,
)
from .centroid import (  # noqa: F401
    CentroidModel,
    classify_window,
    compute_window_features,
    evaluate_fscore,
    train_centroids,
)
from .server import ClientBuffer, Session  # noqa: F401
