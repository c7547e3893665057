"""Membrane model on lattice boxes: exact sampling, Green's-function
estimates, and rare-event probability estimation."""

from .constructions import (
    CoveringSet,
    OrthantCertificate,
    SeparatedSet,
    ShiftFunction,
    choose_alpha,
    correlation_sum,
    covering_number,
    covering_set,
    cutoff_eta,
    dudley_bound,
    lishao_certificate,
    separated_boundary_set,
    shift_function,
)
from .estimators import (
    EstimateReport,
    EventSpec,
    conditional_max,
    direct_mc,
    gci_check,
    local_smallness_probability,
    positivity_event,
    scaling_fit,
    smallness_event,
    smallness_probability,
    tilted_mc,
)
from .greens import (
    BoundConstants,
    GreensColumn,
    PrecisionFactor,
    factorize,
    fit_bound_constants,
    greens_column,
    variance_profile,
)
from .lattice import (
    BoxDomain,
    SiteSet,
    boundary_distance,
    cube_around,
    directional_distance,
    dyadic_annulus,
    sub_box,
)
from .operator import (
    LatticeFunction,
    PrecisionOperator,
    assemble_precision,
    dirichlet_energy,
    laplacian_extended,
    laplacian_pairing,
)
from .sampler import (
    FieldSample,
    SeededStream,
    empirical_covariance,
    sample,
    sample_batch,
)

__all__ = [name for name in dir() if not name.startswith("_")]
