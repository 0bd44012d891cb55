"""Edge-level credit assignment for model outputs on causal graphs."""

from .baselines import (
    SetGame,
    brute_force_shapley,
    dummy_edges,
    independent_shap,
    linear_ground_truth,
    owen_oracle,
    owen_values,
)
from .dot import emit_dot
from .errors import *  # noqa: F401,F403
from .flow import (
    EdgeAttribution,
    asv_view,
    attribute,
    check_conservation,
    check_efficiency,
    collapse_boundary,
    multi_background,
    node_attribution,
    shapley_flow_exact,
    shapley_flow_mc,
    shapley_flow_paths,
)
from .functions import Expression, FunctionSpec, Linear, Table, parse_expression
from .graph import (
    SUPER_SOURCE,
    Boundary,
    CausalGraph,
    NodeSpec,
    augment_super_source,
    build_graph,
    enumerate_boundaries,
    forward_values,
    graph_to_doc,
    topological_order,
)
from .io import AttributionReport, CaseBundle, CaseOptions, load_case, run_attribution
from .synthetic import (
    NoiseInterval,
    RandomGraphConfig,
    augment_noise_nodes,
    gen_random_linear_graph,
    infer_noise_interval,
    make_chain,
    make_diamond,
    make_or_game,
)

__version__ = "0.1.0"
