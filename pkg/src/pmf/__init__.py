"""Product manifold filter: dense bijective correspondences between finite metric spaces."""

from .assignment import (
    Assignment,
    AuctionConfig,
    BijectionError,
    InfeasibleAssignmentError,
    Permutation,
    hall_violation,
    lap_auction,
    lap_auction_sparse,
    lap_bruteforce,
    lap_exact,
    solve,
)
from .density import (
    InfeasibleMaskError,
    KernelParams,
    MatchSet,
    PayoffMatrix,
    WeightMask,
    kernel_matrix,
    load_matches,
    payoff_dense,
    payoff_sparse,
    weight_mask,
    write_matches,
)
from .evaluation import (
    ErrorCurve,
    color_transfer_export,
    error_curve,
    geodesic_errors,
    read_permutation,
    write_permutation,
)
from .filtering import (
    PmfConfig,
    PmfResult,
    SizeMismatchError,
    WidenPolicy,
    pmf_multiscale,
    pmf_single_scale,
    pointwise_estimate,
    three_point_1d,
)
from .geometry import MeshParseError, MeshValidationError, TriMesh, load_mesh, mesh_area, shape_diameter, write_mesh
from .metric import (
    CircleSpace,
    ExplicitSpace,
    MatrixCapExceeded,
    MeshGeodesicSpace,
    MetricError,
    MetricSpace,
    SubsetSpace,
    load_explicit,
    write_explicit,
)
from .sampling import SamplingHierarchy, default_schedule, farthest_point_sampling, read_hierarchy, write_hierarchy

__version__ = "0.1.0"
