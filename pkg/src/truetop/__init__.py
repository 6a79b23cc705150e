"""Sybil-resilient top-K influence ranking over directed interaction graphs."""

from .attack import (
    AttackResult,
    AttackScenario,
    SybilRegion,
    attach_sybil_region,
    attack_fraction_from_io_ratios,
    sybil_count_bound,
    sybil_count_metric,
    sybil_credit_closed_form,
    two_region_graph,
)
from .errors import (
    EmptyGraphError,
    ScenarioError,
    SeedingError,
    SnapshotFormatError,
    TrueTopError,
    ValidationError,
)
from .evaluate import (
    EvalReport,
    GroundTruth,
    compare_baselines,
    evaluate_attack,
    estimate_decay_rate,
    fit_power_law,
    ground_truth,
    rank_stability_check,
    relative_gap_curve,
    run_trials,
    type1_error,
    type2_error,
)
from .graph import (
    InteractionGraph,
    NormalizedMatrix,
    WeightModel,
    build_graph,
    edge_weight_entropy,
    edge_weight_sum,
    extract_gscc,
    inverse_unit_graph,
    normalize,
    read_snapshot,
    write_snapshot,
)
from .ingest import (
    InteractionRecord,
    RecordBatch,
    SyntheticSpec,
    TargetPeriod,
    UserAttributes,
    generate_powerlaw_graph,
    parse_interaction_log,
    parse_user_attributes,
    serialize_interaction_log,
)
from .rank import (
    CreditState,
    RankedList,
    RankResult,
    SeedConfig,
    TerminationConfig,
    distribute_step,
    kred_baseline,
    pagerank_baseline,
    power_iteration,
    ranked_list,
    ranking_distance,
    select_seeds,
    truetop_rank,
)

__version__ = "0.1.0"
