"""Reward-guided tree search over multi-step plans, with a full test harness.

The package bundles a deterministic block-stacking environment and exact plan
oracle, synthetic and remote token-level policies, draft-verified sampling, a
contrastive multi-factor reward with clustered online normalization, the tree
search itself, and an experiment harness (benchmark, ablation ladder, sweeps,
speed report, edge analysis) behind the `scmcts` command.
"""

from .analysis import (
    interpretability_report,
    pearson,
    permutation_pvalue,
    rankdata_average,
    spearman,
)
from .blocksworld import (
    ActionKind,
    BlockAction,
    BlocksState,
    Problem,
    apply,
    is_goal,
    legal_actions,
    load_problem,
    make_state,
    parse_action,
    problem_from_dict,
    problem_to_dict,
    save_problem,
    state_from_dict,
    state_to_dict,
)
from .dataset import (
    BLOCK_NAME_POOL,
    DatasetSpec,
    generate_dataset,
    generate_problem,
    load_dataset,
    random_configuration,
    save_dataset,
)
from .decoding import (
    ActionGeneration,
    CDConfig,
    DecodeStats,
    DirectSampler,
    GreedySampler,
    Sampler,
    SpeculativeSampler,
    align_distributions,
    contrastive_logits,
    decode_greedy,
    generate_action,
    speculative_step,
)
from .errors import (
    BackendUnavailable,
    ConfigError,
    ContextTooLong,
    EmptyAnswer,
    GenerationFailed,
    IllegalAction,
    InsufficientData,
    InsufficientSamples,
    MalformedAction,
    MissingDemonstrations,
    OracleLimitExceeded,
    ScmctsError,
    Unsolvable,
)
from .harness import (
    BackendSpec,
    ExperimentConfig,
    analyze_edges,
    build_task,
    load_experiment_config,
    run_ablation,
    run_benchmark,
    run_prior_phase,
    run_speed,
    run_sweep,
    solve_instance,
)
from .oracle import PlanOracle, bfs_min_plan, verifier_progress
from .policy import (
    PolicyContext,
    PolicyHandle,
    PolicySuite,
    SyntheticPolicy,
    SyntheticPolicyConfig,
    TokenDistribution,
    Vocabulary,
    build_action_vocabulary,
)
from .prompts import Demonstration, PromptTemplate, describe_goal, describe_state, render_prompt
from .remote import RemoteEndpointConfig, RemotePolicy, TokenRegistry
from .rewards import (
    FACTORS,
    AblationMask,
    CompositeRewardConfig,
    FactorStats,
    RegionStats,
    RewardBreakdown,
    RewardFactorStats,
    RewardModel,
    SelfEvalTemplate,
    cluster_regions,
    collect_prior_stats,
    composite_reward,
    jsd_base2,
    reward_jsd,
    reward_ll,
    reward_se,
)
from .search import (
    EdgeRecord,
    SearchConfig,
    SearchEngine,
    SearchNode,
    SearchResult,
    SearchTree,
    mix_value,
    path_value,
    uct_score,
    uct_select,
)
from .treeio import load_tree, save_dot, save_tree, tree_to_dict, tree_to_dot

__version__ = "0.1.0"
