"""Mini-batch training of :class:`LandingTimeNet`, prediction and checkpoints."""

from __future__ import annotations

import contextlib
import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError, TrainingDiverged
from .nn import Adam, LandingTimeNet, ModelConfig, build_model, no_grad
from .nn import functional as F

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "altpred-checkpoint"
CHECKPOINT_VERSION = 1
HISTORY_COLUMNS = ("epoch", "train_mae", "val_mae")


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0
    dtype: str = "float32"
    eval_batch_size: int = 256

    def validate(self) -> None:
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 1 or self.eval_batch_size < 1:
            raise ConfigError("batch sizes must be >= 1")
        if not (self.lr >= 0 and math.isfinite(self.lr)):
            raise ConfigError("lr must be a finite non-negative number")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown training options: {sorted(extra)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Arrays:
    """Network-ready inputs: ink-encoded images (NHWC), tabular, holding, labels in seconds."""

    images: np.ndarray
    tabular: np.ndarray
    holding: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        n = len(self.labels)
        if not (len(self.images) == len(self.tabular) == len(self.holding) == n):
            raise DataError("input arrays have different lengths")

    def __len__(self) -> int:
        return len(self.labels)

    def take(self, idx) -> "Arrays":
        return Arrays(self.images[idx], self.tabular[idx], self.holding[idx], self.labels[idx])

    def cast(self, dtype) -> "Arrays":
        return Arrays(self.images.astype(dtype, copy=False), self.tabular.astype(dtype, copy=False),
                      self.holding.astype(dtype, copy=False), self.labels)


@dataclass
class TrainResult:
    model: LandingTimeNet
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val_mae: float = float("inf")


def _closing(fh):
    return fh if fh is not None else contextlib.nullcontext()


def predict(model: LandingTimeNet, data: Arrays, batch_size: int = 256) -> np.ndarray:
    """Predictions in seconds, in eval mode and without building a graph."""
    was_training = model.training
    model.eval()
    dtype = model.dtype
    out = []
    try:
        with no_grad():
            for lo in range(0, len(data), batch_size):
                b = data.take(slice(lo, lo + batch_size)).cast(dtype)
                hold = None if model.cfg.ablate_holding else b.holding
                out.append(model(b.images, b.tabular, hold).data.reshape(-1))
    finally:
        model.train(was_training)
    return np.concatenate(out).astype(np.float64) if out else np.zeros(0)


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    starts = list(range(0, n, batch_size))
    for lo in starts:
        idx = perm[lo:lo + batch_size]
        # a lone sample in training-mode batch norm carries no signal
        if len(idx) == 1 and n > 1:
            continue
        yield idx


def set_output_scale(model: LandingTimeNet, labels: np.ndarray) -> None:
    """Centre and scale the regressor output on the training labels."""
    labels = np.asarray(labels, dtype=np.float64)
    std = float(labels.std())
    model.output.center = np.array([float(np.median(labels))], dtype=model.dtype)
    model.output.scale = np.array([std if std > 0 else 1.0], dtype=model.dtype)


def train(
    model: LandingTimeNet,
    train_set: Arrays,
    val_set: Arrays,
    cfg: TrainConfig,
    history_path: str | Path | None = None,
) -> TrainResult:
    """Adam on the L1 loss; returns the weights of the epoch with the lowest validation MAE.

    The whole run is a function of ``cfg.seed`` (batch order and dropout
    masks) and the model's initial weights.
    """
    cfg.validate()
    if len(train_set) == 0 or len(val_set) == 0:
        raise DataError("training and validation sets must be non-empty")
    dtype = np.dtype(cfg.dtype)
    model.to(dtype)
    set_output_scale(model, train_set.labels)
    rng = np.random.default_rng(cfg.seed)
    model.set_dropout_rng(np.random.default_rng([cfg.seed, 1]))
    opt = Adam(model.parameters(), lr=cfg.lr)
    train_cast = train_set.cast(dtype)
    use_holding = not model.cfg.ablate_holding

    result = TrainResult(model)
    best_state = model.state_dict()
    writer = None
    fh = open(history_path, "w", newline="") if history_path is not None else None
    # overflow on a diverging run is reported as TrainingDiverged below
    with np.errstate(over="ignore", invalid="ignore"), _closing(fh):
        if fh is not None:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(HISTORY_COLUMNS)
        for epoch in range(1, cfg.epochs + 1):
            model.train()
            abs_sum, count = 0.0, 0
            for idx in _batches(len(train_cast), cfg.batch_size, rng):
                b = train_cast.take(idx)
                opt.zero_grad()
                pred = model(b.images, b.tabular, b.holding if use_holding else None)
                loss = F.l1_loss(pred, b.labels)
                value = float(loss.data)
                if not math.isfinite(value):
                    raise TrainingDiverged(f"loss became {value} at epoch {epoch}; try a lower learning rate")
                loss.backward()
                opt.step()
                abs_sum += value * len(idx)
                count += len(idx)
            train_mae = abs_sum / max(count, 1)
            val_pred = predict(model, val_set, cfg.eval_batch_size)
            if not np.all(np.isfinite(val_pred)):
                raise TrainingDiverged(f"validation predictions are not finite at epoch {epoch}")
            val_mae = float(np.mean(np.abs(val_pred - val_set.labels)))
            result.history.append({"epoch": epoch, "train_mae": train_mae, "val_mae": val_mae})
            if writer is not None:
                writer.writerow((epoch, f"{train_mae:.6f}", f"{val_mae:.6f}"))
                fh.flush()
            log.info("epoch %d train_mae %.2f val_mae %.2f", epoch, train_mae, val_mae)
            if val_mae < result.best_val_mae:
                result.best_val_mae, result.best_epoch = val_mae, epoch
                best_state = model.state_dict()
    model.load_state_dict(best_state)
    model.eval()
    return result


# --------------------------------------------------------------------------
# checkpoints


def save_checkpoint(model: LandingTimeNet, path: str | Path, extra: dict | None = None) -> Path:
    """JSON weight dump with the model configuration echoed alongside."""
    state = model.state_dict()
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "dtype": str(model.dtype),
        "model_config": model.cfg.to_dict(),
        "extra": extra or {},
        "state": {k: {"shape": list(v.shape), "data": v.astype(np.float64).ravel().tolist()} for k, v in state.items()},
    }
    path = Path(path)
    path.write_text(json.dumps(doc))
    return path


def load_checkpoint(path: str | Path) -> tuple[LandingTimeNet, dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"{path} is not a model checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {doc.get('version')}")
    model = build_model(ModelConfig.from_dict(doc["model_config"]))
    dtype = np.dtype(doc.get("dtype", "float64"))
    model.to(dtype)
    state = {k: np.array(v["data"], dtype=dtype).reshape(v["shape"]) for k, v in doc["state"].items()}
    model.load_state_dict(state)
    model.eval()
    return model, doc.get("extra", {})


def read_history(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{"epoch": int(r["epoch"]), "train_mae": float(r["train_mae"]), "val_mae": float(r["val_mae"])}
                for r in csv.DictReader(fh)]


def arrays_from_samples(samples: Sequence, dtype=np.float32) -> Arrays:
    from .dataset import sample_arrays

    return Arrays(*sample_arrays(samples, dtype))
