"""Fairness-aware multivariate time-series forecasting.

The library learns an implicit variable graph, encodes each input window
with a recurrent graph convolutional cell, groups variables through a
spectral relaxation of K-means, filters group-specific information out of
the hidden state adversarially, and forecasts all horizons in one pass.
Training alternates forecaster and discriminator updates; reports cover
accuracy (MAE/RMSE/MAPE) and fairness (variance of per-variable MAE).
"""

from .adversary import (
    Discriminator,
    FilterBank,
    adversarial_loss,
    filter_apply,
    fuse,
    init_discriminator,
    init_filter_bank,
    orthogonality_loss,
)
from .autodiff import Parameter, Tensor
from .config import TrainConfig
from .data import (
    MinMaxNormalizer,
    SeriesMatrix,
    WindowBatch,
    chronological_split,
    group_labels,
    load_series,
    make_windows,
    save_series,
    synth_two_group,
)
from .encoder import RgcuParams, encode, graph_propagate, init_rgcu, rgcu_step
from .graph import (
    GraphState,
    build_adjacency,
    default_top_n,
    dump_adjacency,
    init_node_embedding,
    sparsify_topn,
    with_self_loop,
)
from .grouping import (
    ClusterIndicator,
    GroupingHeads,
    cluster_assign,
    clustering_loss,
    dump_embeddings,
    init_grouping_heads,
    init_indicator,
    project,
    update_indicator,
)
from .metrics import (
    MetricsReport,
    aggregate,
    evaluate_model,
    per_variable_abs_error,
    write_per_variable_csv,
    write_report,
)
from .model import ForecastModel, ForwardOutputs
from .predictor import PredictorParams, combine, forecasting_loss, init_predictor, predict
from .training import (
    Adam,
    CheckpointError,
    LossBundle,
    TrainingDiverged,
    TrainingState,
    apply_best,
    discriminator_step,
    fit,
    generator_step,
    init_training_state,
    load_checkpoint,
    save_checkpoint,
    validation_mae,
)

__version__ = "0.1.0"
