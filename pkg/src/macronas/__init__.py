"""Macro neural-architecture search over probabilistic layer-transition graphs.

Build a search space from summaries of existing networks, evolve complete
architectures from scratch by probabilistic layer sampling, and rank the
candidates with a mixed estimator that blends an untrained-network
Jacobian eigenvalue score with short partial-training runs.
"""

from .archfmt import (
    ArchitectureSummary,
    LayerKind,
    LayerRecord,
    SummaryError,
    SummaryParseError,
    parse_summary,
    read_summary_file,
    validate_summary,
    write_summary,
    write_summary_file,
)
from .data import Dataset, PartialSplit, SynthSpec, cutout, load_dataset, partial_split, synth_dataset
from .estimate import (
    FitnessBreakdown,
    MixedEvaluator,
    PopulationStats,
    correlation_matrix,
    ensemble_predict,
    jacobian_score,
    kendall_tau,
    low_fidelity_fitness,
    mixed_fitness,
    score_network,
)
from .evolve import (
    CandidateArchitecture,
    SearchConfig,
    SearchResult,
    evolve,
    fps_sample,
    generate_architecture,
    maybe_mutate,
    parent_pool,
    ranked_roulette,
    sample_next_layer,
    sample_random_candidates,
)
from .netrt import (
    CompileError,
    NetworkPlan,
    TrainConfig,
    compile_plan,
    evaluate,
    forward,
    init_params,
    input_jacobian,
    train,
)
from .wdg import (
    WDG,
    Distribution,
    SearchSpace,
    SpaceEntry,
    build_wdg,
    candidate_to_wdg,
    edge_prob,
    export_dot,
    inner_state_dist,
    transition_dist,
    wdg_from_json,
    wdg_to_json,
)

__version__ = "0.1.0"
