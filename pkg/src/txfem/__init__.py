"""Thread-transposed finite element residual integration on a deterministic
virtual accelerator, with an analytic traffic/flop model and runtime kernel
source generation."""

from .backend import active_backend, compiled_available
from .codegen import KernelSource, generate_kernel_source
from .device import (
    BatchCounters,
    ChunkTrace,
    ExecutionTrace,
    TaskRecord,
    model_batch_counters,
    shared_image_bytes,
    simulate_chunk,
)
from .element import (
    QuadratureRule,
    Tabulation,
    p1_basis,
    quadrature_rule,
    tabulate,
    two_point_rule,
)
from .errors import (
    CapacityError,
    CodegenError,
    ConfigurationError,
    DomainError,
    InvalidDimensionError,
    MissingAuxiliaryError,
    OrientationError,
    ShapeError,
    UnsupportedOrderError,
)
from .executor import execute_chunk, integrate_transposed, scalar_dtype
from .mesh import (
    CellGeometry,
    FieldLayout,
    Mesh,
    compute_geometry,
    dump_mesh,
    gather_coefficients,
    generate_unit_simplex_mesh,
    interior_vertex_mask,
    scatter_add_element_vectors,
)
from .perf_model import (
    PerfEstimate,
    balance,
    build_estimate,
    predict_bandwidth_bound,
    shared_memory_bytes,
    traffic_and_flops,
)
from .physics import (
    CellAux,
    PhysicsForm,
    PointState,
    elasticity_form,
    poisson_form,
    poisson_varcoef_form,
    user_form,
)
from .reference import assemble_residual, integrate_reference
from .schedule import ExecutionGeometry, derive_execution_geometry

__version__ = "0.1.0"
