"""Online stochastic matching with nonparametric demand.

Library layout:

* :mod:`demandmatch.demand` -- demand models, instances, sampling.
* :mod:`demandmatch.linprog` -- dense two-phase simplex in one normal form.
* :mod:`demandmatch.relaxations` -- fluid, subset-tightened, and conditional
  LPs, with the knapsack separation oracle and cutting-plane loop.
* :mod:`demandmatch.rounding` -- lossless rounding of feasible columns into
  routing distributions with exact marginals.
* :mod:`demandmatch.policies` -- the guaranteed threshold and horizon
  policies, contention-resolution schedules, the static-bar baseline.
* :mod:`demandmatch.oracles` -- offline optima, the optimal online DP,
  exact policy values, adversarial-order search.
* :mod:`demandmatch.experiments` -- named instance families, ratio
  experiments, CSV/Markdown reporting.
* :mod:`demandmatch.acceptance` -- the pinned verification suite.
"""

from .demand import (
    Arrival,
    ArrivalSequence,
    CorrelDemandModel,
    DemandDistribution,
    IndepDemandModel,
    Instance,
    RealizedDemand,
    StochasticHorizonModel,
    expand_unit_capacity,
    sample_demand,
    sample_horizon_path,
    sample_random_order,
    survival,
    truncated_expectation,
    truncated_poisson,
)
from .linprog import LinearProgram, LpSolution, LpStatus, solve_lp
from .relaxations import (
    Cut,
    CutPool,
    build_conditional_lp,
    build_fluid_lp,
    build_truncated_lp,
    separation_oracle,
)
from .rounding import (
    InfeasibleColumnError,
    Routing,
    RoundingState,
    RoutingDistribution,
    SegmentPartition,
    stage_advance,
    typeround,
    verify_marginals,
)
from .policies import (
    HorizonPlan,
    IndepAdvPlan,
    OcrsPlan,
    TraceEvent,
    build_horizon_policy,
    build_indep_adv_policy,
    best_static_threshold,
    horizon_policy_step,
    ocrs_plan,
    plan_horizon_policy,
    plan_indep_adv_policy,
    static_threshold_policy,
    static_threshold_value,
    threshold_policy_step,
    trace_to_csv,
)
from .oracles import (
    OracleValue,
    exact_policy_value,
    expected_offline,
    horizon_policy_value,
    offline_optimum,
    optimal_online_dp,
    worst_case_order,
)
from .experiments import (
    ExperimentConfig,
    RatioEstimate,
    gen_counterexample,
    report,
    run_experiment,
)
from .io import InstanceFormatError, load_instance, loads_instance, parse_instance

__version__ = "0.1.0"
