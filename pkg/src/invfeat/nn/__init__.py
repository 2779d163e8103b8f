"""From-scratch numpy models with manual reverse mode."""

from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import GradcheckReport, gradcheck
from .layers import MLP, DeepSet, SetBatch, binary_expansion, mlp_forward, segment_sum
from .models import (
    DSCI,
    OIDS,
    BinaryExpansion,
    CloudFeatures,
    GWHeadParams,
    MatrixFeatures,
    PairBatch,
    PairDistanceModel,
    build_model,
    cloud_features,
    ds_ci_forward,
    gw_predict,
    matrix_features,
    oi_ds_forward,
)
from .optim import Adam, AdamState
from .train import TrainConfig, TrainResult, loss_and_grad, spearman, split_indices, train

__all__ = [
    "Adam", "AdamState", "BinaryExpansion", "CloudFeatures", "DSCI", "DeepSet", "GWHeadParams",
    "GradcheckReport", "MLP", "MatrixFeatures", "OIDS", "PairBatch", "PairDistanceModel", "SetBatch",
    "TrainConfig", "TrainResult", "binary_expansion", "build_model", "cloud_features", "ds_ci_forward",
    "gradcheck", "gw_predict", "load_checkpoint", "loss_and_grad", "matrix_features", "mlp_forward",
    "oi_ds_forward", "save_checkpoint", "segment_sum", "spearman", "split_indices", "train",
]
