"""Ancestral discovery for a foreground subsystem behind a background covariate tier."""

from .graphs import (
    AncestralMatrix,
    GraphError,
    RelationKind,
    Tier,
    TieredGraph,
    Vertex,
    canonicalize,
)
from .metrics import metric_accuracy, metric_pve
from .oracle import (
    LazyQuery,
    OracleResult,
    OracleTranscript,
    minimal_activator_holds,
    minimal_deactivator_holds,
    run_cbl_oracle,
)
from .sample import (
    PairEvidence,
    RunConfig,
    SampleResult,
    adaptive_epsilon,
    decide_unordered,
    draw_complementary_pairs,
    fit_quartet,
    run_cbl_sample,
)
from .selection import (
    ActiveSet,
    SelectorSpec,
    gbm_active_set,
    lasso_active_set,
    select,
    ztest_active_set,
)
from .simulate import Dataset, Regime, SimSpec, apply_transform, gen_dataset, gen_graph
from .stability import (
    Ordering,
    Quartet,
    RateTable,
    Signal,
    estimate_rates,
    max_errors_bound,
    rconcave_tail_bound,
    stability_select,
)

__all__ = [
    "ActiveSet",
    "AncestralMatrix",
    "Dataset",
    "GraphError",
    "LazyQuery",
    "OracleResult",
    "OracleTranscript",
    "Ordering",
    "PairEvidence",
    "Quartet",
    "RateTable",
    "Regime",
    "RelationKind",
    "RunConfig",
    "SampleResult",
    "SelectorSpec",
    "Signal",
    "SimSpec",
    "Tier",
    "TieredGraph",
    "Vertex",
    "adaptive_epsilon",
    "apply_transform",
    "canonicalize",
    "decide_unordered",
    "draw_complementary_pairs",
    "estimate_rates",
    "fit_quartet",
    "gbm_active_set",
    "gen_dataset",
    "gen_graph",
    "lasso_active_set",
    "max_errors_bound",
    "metric_accuracy",
    "metric_pve",
    "minimal_activator_holds",
    "minimal_deactivator_holds",
    "rconcave_tail_bound",
    "run_cbl_oracle",
    "run_cbl_sample",
    "select",
    "ztest_active_set",
    "stability_select",
]
