from .network import ArchitectureDescriptor, Network, linear_head, micro_cnn, normalize_descriptor
from .checkpoint import (
    Checkpoint,
    checkpoint_from_bytes,
    checkpoint_to_bytes,
    load_checkpoint,
    make_checkpoint,
    network_from_checkpoint,
    reinit_head,
    save_checkpoint,
)
from .train import (
    EarlyStopper,
    TrainConfig,
    evaluate,
    fit,
    predict,
    predict_proba,
    read_features_csv,
    train,
    train_head_on_features,
)

__all__ = [
    "ArchitectureDescriptor",
    "Checkpoint",
    "EarlyStopper",
    "Network",
    "TrainConfig",
    "checkpoint_from_bytes",
    "checkpoint_to_bytes",
    "evaluate",
    "fit",
    "linear_head",
    "load_checkpoint",
    "make_checkpoint",
    "micro_cnn",
    "network_from_checkpoint",
    "normalize_descriptor",
    "predict",
    "predict_proba",
    "read_features_csv",
    "reinit_head",
    "save_checkpoint",
    "train",
    "train_head_on_features",
]
