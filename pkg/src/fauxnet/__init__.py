"""Content-free detection of misleading image posts from comment networks.

The pipeline never looks at a post's own image or text: it builds the reply
graph of the comment thread, attaches per-comment features, and classifies
the whole graph with a small graph-convolutional network trained from
scratch on a reverse-mode tape.
"""

from .comment_graph import (
    CommentGraph,
    CommentRecord,
    Platform,
    PostRecord,
    SparseAdjacency,
    adjacency,
    build_graph,
    filter_by_window,
)
from .node_features import (
    Lexicons,
    assemble_feature_matrix,
    endorsement_value,
    feature_dim,
    linguistic_vector,
    metadata_features,
    sentiment_score,
    tokenize,
)
from .model import (
    BatchedGraphs,
    ModelConfig,
    ModelParams,
    block_diagonal,
    cluster_pool,
    dense_forward_oracle,
    forward,
    graph_conv,
    init_params,
    normalize_adjacency,
)
from .training import (
    EvalReport,
    LabeledExample,
    PipelineConfig,
    TrainConfig,
    TrainResult,
    build_example,
    build_examples,
    compute_metrics,
    cross_validate,
    evaluate_examples,
    mean_loss,
    predict,
    roc_auc,
    score_examples,
    standardize_features,
    time_sweep,
    train,
)
from .dataio import (
    DataError,
    SyntheticConfig,
    generate_synthetic,
    load_model,
    parse_posts,
    save_model,
    write_posts,
)

__version__ = "0.1.0"
