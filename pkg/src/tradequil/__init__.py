"""Equilibrium price vectors and recession diagnostics for goods-exchange
economies built from bilateral trade-flow data."""

from .cone_geometry import (
    BiorthogonalSystem,
    ConeBasis,
    Membership,
    MembershipResult,
    PositiveSolutionFamily,
    biorthogonal_system,
    classify_membership,
    generating_set,
    positive_solution_family,
    strictly_positive_solution,
)
from .consistency import (
    ConsistencyCertificate,
    DVector,
    Factorization,
    PriceRecovery,
    certify_consistency,
    construct_ideal_supply,
    construct_supply,
    factor_supply,
    price_from_D,
    solve_D,
)
from .equilibrium_solver import (
    EpsilonSchedule,
    EquilibriumCheck,
    EquilibriumSolution,
    IdealCheck,
    IdealExistence,
    PriceVector,
    check_ideal,
    evaluate_solution,
    excess_demand,
    exists_ideal,
    is_equilibrium,
    solve_fixed_point,
)
from .errors import (
    DegenerateTargetError,
    DivisionGuardError,
    EmptyMatrixError,
    InfeasibleError,
    InvalidFlowError,
    NonConvergenceError,
    OutsideConeError,
    PreconditionError,
    RankDeficiencyError,
    SchemaError,
)
from .recession import (
    RecessionReport,
    degeneracy_report,
    generalized_price,
    modified_supply,
    real_consumption,
    recession_level,
)
from .trade_data import (
    CostMatrices,
    ShareReport,
    TradeFlowTensor,
    build_cost_matrices,
    read_flows_csv,
    shares,
)

__version__ = "0.1.0"

__all__ = [
    "BiorthogonalSystem",
    "ConeBasis",
    "ConsistencyCertificate",
    "CostMatrices",
    "DVector",
    "DegenerateTargetError",
    "DivisionGuardError",
    "EmptyMatrixError",
    "EpsilonSchedule",
    "EquilibriumCheck",
    "EquilibriumSolution",
    "Factorization",
    "IdealCheck",
    "IdealExistence",
    "InfeasibleError",
    "InvalidFlowError",
    "Membership",
    "MembershipResult",
    "NonConvergenceError",
    "OutsideConeError",
    "PositiveSolutionFamily",
    "PreconditionError",
    "PriceRecovery",
    "PriceVector",
    "RankDeficiencyError",
    "RecessionReport",
    "SchemaError",
    "ShareReport",
    "TradeFlowTensor",
    "biorthogonal_system",
    "build_cost_matrices",
    "certify_consistency",
    "check_ideal",
    "classify_membership",
    "construct_ideal_supply",
    "construct_supply",
    "degeneracy_report",
    "evaluate_solution",
    "excess_demand",
    "exists_ideal",
    "factor_supply",
    "generalized_price",
    "generating_set",
    "is_equilibrium",
    "modified_supply",
    "positive_solution_family",
    "price_from_D",
    "read_flows_csv",
    "real_consumption",
    "recession_level",
    "shares",
    "solve_D",
    "solve_fixed_point",
    "strictly_positive_solution",
]
