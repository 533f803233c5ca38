"""Joint video-tier selection and downlink power allocation toolkit.

The package couples a fixed-selection interior-point power solver with a
tangent-cut master search inside an outer-approximation loop, plus a greedy
baseline and a small CLI.  Import the pieces directly::

    from tieralloc import table1_config, oa_solve, greedy_solve

    cfg = table1_config()
    outcome, trace = oa_solve(cfg)
"""

from .channel import (
    LinkModel,
    channel_gain,
    min_power,
    path_loss_db,
    rate,
    user_distance,
)
from .errors import ConfigError, InfeasibleError, SolverError
from .greedy import greedy_solve
from .milp import (
    LpResult,
    MasterProblem,
    MilpSolution,
    RateCut,
    brute_force_master,
    format_master,
    linearize_rate,
    solve_lp,
    solve_master,
)
from .model import (
    FeasibilityReport,
    RedundancyConvention,
    ScenarioConfig,
    SolveOutcome,
    TierSelection,
    TierTable,
    UtilityWeights,
    best_qos,
    check_feasibility,
    load_config,
    normalizers,
    parse_config,
    qos,
    redundancy,
    table1_config,
    table1_path,
    utility,
)
from .nlp import (
    NlpIterate,
    NlpResult,
    analytic_power_oracle,
    barrier_value,
    kkt_residual,
    solve_fixed_selection,
    subproblem_constant,
)
from .oa import OaRecord, OaTrace, gap, initial_selection, oa_solve

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "InfeasibleError",
    "SolverError",
    "LinkModel",
    "user_distance",
    "path_loss_db",
    "channel_gain",
    "rate",
    "min_power",
    "RedundancyConvention",
    "TierTable",
    "TierSelection",
    "UtilityWeights",
    "ScenarioConfig",
    "FeasibilityReport",
    "SolveOutcome",
    "qos",
    "best_qos",
    "normalizers",
    "redundancy",
    "utility",
    "check_feasibility",
    "parse_config",
    "load_config",
    "table1_path",
    "table1_config",
    "NlpIterate",
    "NlpResult",
    "subproblem_constant",
    "barrier_value",
    "kkt_residual",
    "solve_fixed_selection",
    "analytic_power_oracle",
    "RateCut",
    "MasterProblem",
    "MilpSolution",
    "LpResult",
    "linearize_rate",
    "solve_lp",
    "solve_master",
    "brute_force_master",
    "format_master",
    "OaRecord",
    "OaTrace",
    "initial_selection",
    "gap",
    "oa_solve",
    "greedy_solve",
    "__version__",
]
