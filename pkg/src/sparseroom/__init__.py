"""Room acoustics toolkit: image-model simulation, structured sparse
recovery, blind geometry/absorption estimation, and source separation."""

from .errors import (
    AmbiguityError,
    ColaError,
    DegenerateBlockError,
    DomainError,
    EmptyGridError,
    EstimationError,
    InfeasibleError,
    InsufficientDecayError,
    NumericalError,
    SingularityError,
    SparseRoomError,
    TruncationError,
    ValidationError,
)
from .scene import (
    MicArray,
    PlanarGrid,
    ReflectionProfile,
    RoomSpec,
    build_grid,
    enumerate_images,
    expand_grid_images,
)
from .stft import SpectroTemporalTensor, StftConfig, analyze, synthesize
from .forward import (
    MeasurementMatrix,
    Rir,
    block_coherence,
    build_phi,
    channel_response,
    coherence,
    free_space_matrix,
    green_coeff,
    simulate_recordings,
    synthesize_rir,
)
from .recovery import SparseEstimate, StructureModel, iht, l1l2, localize, omp
from .geometry import (
    Candidate,
    GeometryEstimate,
    GeometryPipelineResult,
    cluster_images,
    estimate_room_geometry,
    extended_plane_grid,
    fit_room,
    localize_images,
    split_actual_sources,
    strip_grid,
)
from .channels import (
    AbsorptionProfile,
    CrossRelationSystem,
    KroneckerSystem,
    block_sparse_covariance_recovery,
    build_cross_relation,
    build_kronecker_system,
    detect_active_count,
    estimate_rir_structured,
    extract_absorption,
    fit_absorption_ls,
    observation_covariance,
    rt60_from_edc,
    rt60_sabine,
)
from .dereverb import InverseFilterResult, inverse_filter, zelinski_postfilter
from .metrics import orthogonality_ratio, product_histogram, sir, support_metrics
from .scenefile import Scene, SceneFileError, SourceSpec, load_scene, parse_scene

__version__ = "0.1.0"

__all__ = [
    "AbsorptionProfile",
    "AmbiguityError",
    "Candidate",
    "ColaError",
    "CrossRelationSystem",
    "DegenerateBlockError",
    "DomainError",
    "EmptyGridError",
    "EstimationError",
    "GeometryEstimate",
    "GeometryPipelineResult",
    "InfeasibleError",
    "InsufficientDecayError",
    "InverseFilterResult",
    "KroneckerSystem",
    "MeasurementMatrix",
    "MicArray",
    "NumericalError",
    "PlanarGrid",
    "ReflectionProfile",
    "Rir",
    "RoomSpec",
    "Scene",
    "SceneFileError",
    "SingularityError",
    "SourceSpec",
    "SparseEstimate",
    "SparseRoomError",
    "SpectroTemporalTensor",
    "StftConfig",
    "StructureModel",
    "TruncationError",
    "ValidationError",
    "analyze",
    "block_coherence",
    "block_sparse_covariance_recovery",
    "build_cross_relation",
    "build_grid",
    "build_kronecker_system",
    "build_phi",
    "channel_response",
    "cluster_images",
    "coherence",
    "detect_active_count",
    "enumerate_images",
    "estimate_rir_structured",
    "estimate_room_geometry",
    "expand_grid_images",
    "extended_plane_grid",
    "extract_absorption",
    "fit_absorption_ls",
    "fit_room",
    "free_space_matrix",
    "green_coeff",
    "iht",
    "inverse_filter",
    "l1l2",
    "load_scene",
    "localize",
    "localize_images",
    "observation_covariance",
    "omp",
    "orthogonality_ratio",
    "parse_scene",
    "product_histogram",
    "rt60_from_edc",
    "rt60_sabine",
    "simulate_recordings",
    "sir",
    "split_actual_sources",
    "strip_grid",
    "support_metrics",
    "synthesize",
    "synthesize_rir",
    "zelinski_postfilter",
]
