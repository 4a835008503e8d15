"""Thompson-sampling cascading bandits for online learning to rank."""

from .cascade import (
    Feedback,
    RankedAction,
    RegretRecord,
    best_action,
    expected_cascade_reward,
    linear_step_regret,
    simulate_cascade_round,
    step_regret,
)
from .envgen import (
    BanditInstance,
    PriorSpec,
    env_step,
    misspecified_prior,
    sample_beta_instances,
    sample_linear_instance,
    sample_logistic_instance,
)
from .harness import (
    ExperimentConfig,
    ResultTable,
    SweepTable,
    emit_csv,
    emit_plot_data,
    parse_csv,
    run_experiment,
    run_misspecification_sweep,
)
from .policies import (
    POLICY_NAMES,
    bayes_ucb_policy,
    cascade_klucb_policy,
    cascade_linucb_policy,
    cascade_ucb1_policy,
    glmts_policy,
    gts_policy,
    lints_policy,
    newton_glmts_policy,
    oracle_policy,
    ts_beta_policy,
)

__version__ = "0.1.0"
