"""Calculus of sections of monotone families of finite-dimensional normed spaces."""

from .errors import (
    DimensionError,
    MonofamError,
    MonotonicityError,
    OrderError,
    ResolutionError,
    WindowError,
)
from .family import (
    MonotoneFamily,
    NormedNode,
    TimeGrid,
    TransitionMap,
    affine_phi,
    apply_transition,
    build_affine_composition,
    build_nested_lq,
    build_sup_counterexample,
    build_weighted_hilbert,
    check_family,
    constant_family,
    cross_time_add,
    eval_norm,
    family_from_json,
    family_to_json,
    load_family,
)
from .isomorphism import (
    EdgeSpaces,
    FamilyIsomorphism,
    IsomorphismReport,
    composition_blowup_demo,
    difference_quotient_criterion,
    edge_spaces,
    embed_from_x0,
    estimate_M,
    estimate_operator_norm,
    identity_isomorphism,
    lift_bound,
    lift_section,
    project_to_xT,
    weight_isomorphism,
)
from .kernels import BACKEND
from .report import ConvergenceStudy, VerificationReport
from .sections import (
    DirectNorm,
    Section,
    SimpleSection,
    approximate_by_simple,
    constant_section,
    lebesgue_point_residual,
    local_integral,
    lp_direct_norm,
    section_from_function,
    smooth_Mh,
    zero_section,
)
from .sobolev import (
    SobolevNorm,
    UpperGradient,
    difference_quotient,
    ftc_reconstruct,
    minimal_gradient_oracle,
    minimal_upper_gradient,
    reshetnyak_check,
    scalar_characterization_check,
    sobolev_norm,
    verify_upper_gradient,
    weak_derivative,
)

__version__ = "0.1.0"
