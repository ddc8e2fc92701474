"""GeometricImageNet: equivariant networks built from invariant filters."""
from geomnet.ginet.net import (
    BASELINE_PRESETS,
    GINET_PRESETS,
    PRESETS,
    BaselineCNN,
    GINet,
    build_baseline,
    build_model,
    loss_and_grad,
    predict,
    preset,
)

__all__ = [
    "BASELINE_PRESETS",
    "GINET_PRESETS",
    "PRESETS",
    "BaselineCNN",
    "GINet",
    "build_baseline",
    "build_model",
    "loss_and_grad",
    "predict",
    "preset",
]
