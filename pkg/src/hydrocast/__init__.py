"""hydrocast: rainfall-runoff forecasting with exogenous encodings.

Pipeline: CAMELS-style CSV panels -> spatial/temporal encodings ->
location-based split and sliding windows -> dense/LSTM model trained from
scratch with Adam -> per-variable RMSE reports, ablations, cross-model
comparisons and SVG figures.
"""

__version__ = "0.1.0"

from .dataset import (
    DYNAMIC_VARIABLES,
    NormalizationSpec,
    StaticAttributeTable,
    TimeSeriesPanel,
    apply_normalization,
    encode_month_ordinal,
    fit_normalization,
    impute_static_means,
    invert_normalization,
    load_static_csv,
    load_timeseries_csv,
    slice_date_range,
)
from .encodings import (
    BoundingBox,
    EncodingConfig,
    EncodingMatrix,
    assemble_known_inputs,
    fourier_features,
    legendre_features,
    linear_space,
    linear_time,
    spatial_bounds,
)
from .errors import ConfigError, DataError, NumericalError
from .evaluate import (
    AblationGrid,
    ExperimentProtocol,
    MetricsReport,
    SyntheticRecipe,
    compare_external,
    default_ablation_grid,
    generate_synthetic_dataset,
    rmse_per_variable,
    run_ablation,
)
from .nn import ModelParams, grad_check, init_model, model_backward, model_forward, mse_loss
from .train import AdamState, Checkpoint, EpochRecord, TrainConfig, adam_step, fit, select_checkpoint
from .windowing import (
    SplitAssignment,
    WindowBatch,
    WindowSpec,
    batch_indices,
    make_windows,
    select_feature_roles,
    spatial_split,
)
