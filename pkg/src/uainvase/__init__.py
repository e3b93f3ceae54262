"""Uncertainty-aware instance-wise feature selection (INVASE with a Gaussian head)."""

from .data import LabeledDataset, SplitSpec, gen_synthetic, load_wdbc, resample, standardize
from .errors import (
    ConfigurationError,
    DataError,
    IngestionError,
    InvaseError,
    TrainingDivergence,
    UndefinedMetricError,
    UsageError,
)
from .evaluation import (
    PredictionSet,
    QueryCurve,
    auc_pr,
    auc_roc,
    evaluate,
    gain_table,
    query_curve,
    query_order,
)
from .invase import (
    Predictor,
    TrainedModel,
    TrainingConfig,
    gaussian_nll,
    gaussian_nll_grad,
    predict,
    train,
)
from .nn import DenseNetwork, grad_check

__version__ = "0.1.0"
