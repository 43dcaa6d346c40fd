"""Sequential-measurement contextuality lab."""

from .catalog import (
    NamedState,
    ObservableSet,
    SET_NAMES,
    STATE_NAMES,
    kcbs_extremal_state,
    load_set,
    load_state,
)
from .compat import (
    DisturbanceReport,
    EpsilonReport,
    FlipReport,
    condition_i_audit,
    epsilon_pair,
    length2_reduction_check,
    p_err_s3,
    p_err_sandwich,
    p_flip,
    p_flip_pair_then,
)
from .engine import (
    BranchTable,
    MeasurementSequence,
    Observable,
    OutcomeRecord,
    QuantumState,
    branch_table,
    conditional_mean,
    lueders_update,
    sample_sequence,
    sequence_mean,
)
from .hvmodels import (
    MODEL_IDS,
    condition_on_first,
    locking_initial_distribution,
    make_model,
    qmhv_distribution_for,
    run_hv_sequence,
)
from .inequalities import (
    InequalityResult,
    chsh_epsilon,
    chsh_noise2,
    chsh_sequential,
    chsh_stoch,
    flip_sandwich_bounds,
    kcbs_sequential,
    ks_sequential,
)
from .noise import NoiseConfig, NoisySystem, replicate_headlines, replicate_tables
from .systems import HVSystem, QuantumSystem
from .tolerances import TOL

__all__ = [name for name in dir() if not name.startswith("_")]
