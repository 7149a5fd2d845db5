"""Bijective large-deformation image registration with quasiconformal maps."""

from .errors import (
    DegenerateImageError,
    DegenerateMeshError,
    DegeneratePerturbationError,
    FieldShapeError,
    FormatError,
    InvalidDimensionError,
    NearSingularError,
    NonQuasiconformalError,
    PartitionError,
    QCRegError,
    SingularFaceError,
    SolverFailureError,
    StageError,
    UsageError,
    ZeroVectorError,
)
from .mesh import (
    SparseSPDSystem,
    TriMesh,
    build_grid_mesh,
    cotangent_laplacian,
    face_to_vertex,
    signed_areas,
    vertex_to_face,
)
from .beltrami import (
    QCMap,
    compute_mu,
    identity_map,
    interpolate_map,
    maximal_dilation,
    truncate_mu,
)
from .lbs import (
    BoundaryCondition,
    LBSCoefficients,
    identity_boundary,
    lbs_coefficients,
    solve_lbs,
)
from .features import (
    CorrelationMatrix,
    FeatureBank,
    PatchGrid,
    build_correlation,
    correlation_raw,
    eliminate_background,
    extract_features,
    load_features,
    partition_patches,
    row_normalize,
    sparsify,
    write_features,
)
from .fidelity import (
    CorrespondenceState,
    correspondence_matrix,
    fidelity_descent,
    fidelity_energy,
    gaussian_smooth_field,
    make_correspondence_state,
    rasterize_descent,
)
from .intensity import (
    demon_force,
    demons_refine_step,
    histogram_match,
    image_gradient,
    intensity_descent,
    sample_image,
    warp_image,
)
from .metrics import (
    MetricsReport,
    compute_metrics,
    count_flips,
    e_sim,
    e_smooth,
    e_total,
)
from .optimizer import (
    RegistrationConfig,
    RegistrationState,
    TraceRow,
    descent_to_dmu,
    effective_levels,
    refine_intensity,
    register,
    register_multires,
    solve_el,
    update_mu,
    write_trace,
)
from .fileio import (
    read_image,
    read_map,
    read_mu,
    render_grid,
    write_image,
    write_map,
    write_mu,
)
from .synth import SHIPPED_PAIRS, bent_bar, translated_blob, warped_disk

__version__ = "0.1.0"

__all__ = [
    "BoundaryCondition",
    "CorrelationMatrix",
    "CorrespondenceState",
    "DegenerateImageError",
    "DegenerateMeshError",
    "DegeneratePerturbationError",
    "FeatureBank",
    "FieldShapeError",
    "FormatError",
    "InvalidDimensionError",
    "LBSCoefficients",
    "MetricsReport",
    "NearSingularError",
    "NonQuasiconformalError",
    "PartitionError",
    "PatchGrid",
    "QCMap",
    "QCRegError",
    "RegistrationConfig",
    "RegistrationState",
    "SHIPPED_PAIRS",
    "SingularFaceError",
    "SolverFailureError",
    "SparseSPDSystem",
    "StageError",
    "TraceRow",
    "TriMesh",
    "UsageError",
    "ZeroVectorError",
    "bent_bar",
    "build_correlation",
    "build_grid_mesh",
    "compute_metrics",
    "compute_mu",
    "correlation_raw",
    "correspondence_matrix",
    "cotangent_laplacian",
    "count_flips",
    "demon_force",
    "demons_refine_step",
    "descent_to_dmu",
    "e_sim",
    "e_smooth",
    "e_total",
    "effective_levels",
    "eliminate_background",
    "extract_features",
    "face_to_vertex",
    "fidelity_descent",
    "fidelity_energy",
    "gaussian_smooth_field",
    "histogram_match",
    "identity_boundary",
    "identity_map",
    "image_gradient",
    "intensity_descent",
    "interpolate_map",
    "lbs_coefficients",
    "load_features",
    "make_correspondence_state",
    "maximal_dilation",
    "partition_patches",
    "rasterize_descent",
    "read_image",
    "read_map",
    "read_mu",
    "refine_intensity",
    "register",
    "register_multires",
    "render_grid",
    "row_normalize",
    "sample_image",
    "signed_areas",
    "solve_el",
    "solve_lbs",
    "sparsify",
    "translated_blob",
    "truncate_mu",
    "update_mu",
    "vertex_to_face",
    "warp_image",
    "warped_disk",
    "write_features",
    "write_image",
    "write_map",
    "write_mu",
    "write_trace",
]
