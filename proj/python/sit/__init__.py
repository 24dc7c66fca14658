"""Self-supervised vision transformer: C++ core with training and evaluation.

The heavy lifting lives in the compiled module; this package re-exports it.
Images are float32 arrays shaped (N, C, H, W) with values in [0, 1].
"""

from ._sit import (
    Model,
    corrupt,
    corruption_self_check,
    cross_entropy,
    finetune,
    gradcheck,
    l1_loss,
    linear_probe,
    load_checkpoint,
    lr_at,
    nt_xent,
    pretrain,
    rotate90,
    synthetic_dataset,
)

__all__ = [
    "Model",
    "corrupt",
    "corruption_self_check",
    "cross_entropy",
    "finetune",
    "gradcheck",
    "l1_loss",
    "linear_probe",
    "load_checkpoint",
    "lr_at",
    "nt_xent",
    "pretrain",
    "rotate90",
    "synthetic_dataset",
]
