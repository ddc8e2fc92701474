"""Adam training with exponential learning-rate decay and validation early stopping."""
from dataclasses import asdict, dataclass, field
from math import ceil

import numpy as np

from geomnet import numerics
from geomnet.ginet import autodiff as ad
from geomnet.ginet.net import loss_and_grad, predict


class TrainingError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    """Raised on a non-finite loss; ``state`` holds what is needed to inspect the failure."""

    def __init__(self, message, state):
        super().__init__(message)
        self.state = state


@dataclass
class TrainConfig:
    lr: float = 0.005
    decay: float = 0.995
    batch_fraction: float = 0.2
    patience: int = 20
    max_epochs: int = 2000
    init_std: float = 0.1
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        positive = ("lr", "decay", "batch_fraction", "patience", "max_epochs", "init_std", "adam_eps")
        for name in positive:
            if not getattr(self, name) > 0:
                raise TrainingError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.batch_fraction > 1:
            raise TrainingError("batch_fraction must lie in (0, 1]")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise TrainingError("Adam moment decays must lie in [0, 1)")

    @classmethod
    def from_dict(cls, data):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise TrainingError(f"unknown training options {sorted(unknown)}")
        return cls(**data)

    def to_dict(self):
        return asdict(self)


def batch_size(n_train, fraction):
    return max(1, int(round(fraction * n_train)))


def learning_rate(cfg, step, batches_per_epoch):
    """Continuous exponential decay: one factor of ``decay`` per epoch of steps."""
    return cfg.lr * cfg.decay ** (step / batches_per_epoch)


class Adam:
    def __init__(self, size, beta1, beta2, eps):
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def step(self, theta, grad, lr):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return theta - lr * m_hat / (np.sqrt(v_hat) + self.eps)


def init_params(model, cfg):
    return numerics.prng(cfg.seed, 0).normal(0.0, cfg.init_std, model.n_params)


def split_rmse(model, theta, x, y, chunk=16):
    """Mean over samples of per-sample RMSE."""
    per = [ad.per_sample_rmse(predict(model, theta, x[i : i + chunk]), y[i : i + chunk]) for i in range(0, len(x), chunk)]
    return float(np.mean(np.concatenate(per)))


@dataclass
class TrainResult:
    params: np.ndarray
    history: list = field(default_factory=list)
    best_epoch: int = 0
    stop_reason: str = ""

    def final_row(self):
        return self.history[self.best_epoch]


def train(model, train_xy, val_xy, cfg=None, progress=None):
    """Fit ``model``; returns the parameters with the best validation RMSE."""
    cfg = cfg or TrainConfig()
    x_tr, y_tr = (np.asarray(a, dtype=np.float64) for a in train_xy)
    x_va, y_va = (np.asarray(a, dtype=np.float64) for a in val_xy)
    if len(x_tr) == 0 or len(x_va) == 0:
        raise TrainingError("training and validation splits must be non-empty")
    if len(x_tr) != len(y_tr) or len(x_va) != len(y_va):
        raise TrainingError("inputs and targets differ in length")

    n = len(x_tr)
    bs = batch_size(n, cfg.batch_fraction)
    per_epoch = ceil(n / bs)
    theta = init_params(model, cfg)
    opt = Adam(model.n_params, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)

    def row(epoch, lr):
        return {
            "epoch": epoch,
            "train_rmse": split_rmse(model, theta, x_tr, y_tr),
            "val_rmse": split_rmse(model, theta, x_va, y_va),
            "lr": lr,
        }

    history = [row(0, cfg.lr)]
    best_val, best_epoch, best_theta = history[0]["val_rmse"], 0, theta.copy()
    step = 0
    reason = "max_epochs"
    for epoch in range(1, cfg.max_epochs + 1):
        order = numerics.prng(cfg.seed, 1, epoch).permutation(n)
        for b in range(per_epoch):
            idx = np.sort(order[b * bs : (b + 1) * bs])
            lr = learning_rate(cfg, step, per_epoch)
            loss, grad = loss_and_grad(model, theta, x_tr[idx], y_tr[idx])
            if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {b}",
                    {"epoch": epoch, "batch": b, "step": step, "lr": lr, "loss": loss,
                     "batch_indices": idx.tolist(), "params": theta, "history": history},
                )
            theta = opt.step(theta, grad, lr)
            step += 1
        history.append(row(epoch, learning_rate(cfg, step, per_epoch)))
        if progress:
            progress(history[-1])
        val = history[-1]["val_rmse"]
        if not np.isfinite(val):
            raise TrainingDiverged(f"non-finite validation loss at epoch {epoch}",
                                   {"epoch": epoch, "params": theta, "history": history})
        if val < best_val:
            best_val, best_epoch, best_theta = val, epoch, theta.copy()
        elif epoch - best_epoch >= cfg.patience:
            reason = "patience"
            break
    return TrainResult(best_theta, history, best_epoch, reason)
