"""colcomp: joint collaboration-compression design for distributed
sequential LMMSE estimation over energy-constrained sensor networks."""

from .model import (
    Dimensions,
    EnergyBudget,
    ModelError,
    Realization,
    SignalModel,
    Topology,
    TopologyError,
    draw_realization,
    expected_collab_cost,
    expected_compress_cost,
    snr_db_to_variance,
    total_cost,
    validate_model,
)
from .kronmap import (
    OffDiagonalSelector,
    WeightIndexMap,
    devectorize,
    linear_form_vector,
    off_diagonal_selector,
    quad_form_matrix,
    row_lift,
    vectorize_weights,
)
from .qcqp import (
    ConvexQcqp,
    InfeasibleStartError,
    QcqpSolution,
    SingleEqualityQcqp,
    SingleEqualitySolution,
    WhitenedPair,
    WhiteningError,
    secular_function,
    solve_convex_qcqp,
    solve_single_equality_qcqp,
    whiten_pair,
)
from .collab import CollabProblem, assemble_collab_problem, solve_collaboration
from .compress import (
    CompressionSet,
    DecentralizedGainProblem,
    EffectiveChannel,
    FilterGain,
    assemble_centralized_fi,
    assemble_decentralized_fi,
    assemble_decentralized_gain_problem,
    effective_channel,
    filter_gain_closed_form,
    filter_gain_decentralized,
    sweep_centralized,
)
from .estimator import (
    EstimatorState,
    MonotonicityRecord,
    StateModel,
    benchmark_step,
    kalman_predict,
    kalman_update,
    monotonicity_check,
    mse_trace,
    rlmmse_step,
)
from .sim import (
    RunResult,
    ScenarioConfig,
    emit_results,
    format_config,
    geometric_topology,
    load_config,
    parse_config,
    run_scenario,
    sweep,
)

__version__ = "0.1.0"
