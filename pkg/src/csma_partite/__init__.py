"""Exact analysis and simulation of CSMA activity on complete K-partite interference graphs."""

from .errors import (
    CapacityError,
    ConditioningError,
    PartiteError,
    SingularSystemError,
    StructureError,
    UnsupportedCaseError,
    ValidationError,
)
from .model import (
    CENTER,
    AggState,
    Distribution,
    FullState,
    Generator,
    PartiteNetwork,
    agg_states,
    aggregate,
    branch,
    build_generator,
    build_network,
    full_states,
    load_network,
    parse_state,
    stationary_agg,
    stationary_full,
)
from .spectral import (
    PhaseType,
    SymmetrizedChain,
    absorption_spectrum,
    eigen_time_products,
    gershgorin_discs,
    phase_type_cdf,
    potential_coefficients,
    symmetrize,
    transient_distribution,
)
from .hitting import (
    AsymptoticLaw,
    EscapeParams,
    HittingQuery,
    LimitLaw,
    asymptotic_mean,
    bd_step_mean,
    escape_params,
    excursion_pmf,
    limit_law_cdf,
    mean_hitting_time,
)
from .mixing import (
    MixingReport,
    conductance,
    conductance_star,
    mixing_bounds,
    mixing_time,
    tv_distance,
    worst_case_distance,
)

__version__ = "0.1.0"
