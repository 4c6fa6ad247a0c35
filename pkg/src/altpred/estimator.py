"""scikit-learn compatible wrappers around the dataset encoding and the network.

Samples travel through sklearn as one packed row each: the ink-encoded
image flattened, then the 12 tabular values, then the 5 holding values.

    >>> pipe = make_pipeline(SampleEncoder(image_size=64), LandingTimeRegressor(epochs=50))
    >>> pipe.fit(train_samples, train_labels).predict(test_samples)
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.preprocessing import StandardScaler
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .errors import DataError
from .nn import ModelConfig, build_model
from .raster import ink
from .train import Arrays, TrainConfig, predict, train

N_TABULAR = 12
N_HOLDING = 5
N_FEATURES = N_TABULAR + N_HOLDING


def pack_inputs(images: np.ndarray, tabular: np.ndarray, holding: np.ndarray) -> np.ndarray:
    """``(n, H, W, 3)``, ``(n, 12)``, ``(n, 5)`` -> ``(n, H*W*3 + 17)``."""
    images = np.asarray(images)
    n = images.shape[0]
    return np.concatenate([images.reshape(n, -1), np.asarray(tabular).reshape(n, -1),
                           np.asarray(holding).reshape(n, -1)], axis=1)


def unpack_inputs(X: np.ndarray, image_size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n_pix = image_size * image_size * 3
    if X.shape[1] != n_pix + N_FEATURES:
        raise ValueError(
            f"expected {n_pix + N_FEATURES} columns for {image_size}px images, got {X.shape[1]}"
        )
    images = X[:, :n_pix].reshape(-1, image_size, image_size, 3)
    return images, X[:, n_pix:n_pix + N_TABULAR], X[:, n_pix + N_TABULAR:]


class SampleEncoder(TransformerMixin, BaseEstimator):
    """Turn dataset samples into packed rows, z-scoring the 17 feature values.

    The scaler is fitted on whatever is passed to ``fit`` (the training split).
    """

    def __init__(self, image_size: int = 64, dtype: str = "float32"):
        self.image_size = image_size
        self.dtype = dtype

    def fit(self, samples: Sequence, y=None):
        if len(samples) == 0:
            raise DataError("cannot fit on zero samples")
        self.scaler_ = StandardScaler().fit(self._features(samples))
        self.n_features_out_ = self.image_size * self.image_size * 3 + N_FEATURES
        return self

    @staticmethod
    def _features(samples: Sequence) -> np.ndarray:
        return np.stack([np.concatenate([s.tabular, s.holding]) for s in samples])

    def transform(self, samples: Sequence) -> np.ndarray:
        check_is_fitted(self, "scaler_")
        z = self.scaler_.transform(self._features(samples))
        images = []
        for s in samples:
            px = s.pixels()
            if px.shape[:2] != (self.image_size, self.image_size):
                raise DataError(f"{s.aircraft_id}: image is {px.shape[:2]}, expected {self.image_size}px")
            images.append(ink(px, self.dtype))
        return pack_inputs(np.stack(images), z[:, :N_TABULAR], z[:, N_TABULAR:]).astype(self.dtype)


class LandingTimeRegressor(RegressorMixin, BaseEstimator):
    """Predict landing time in seconds from packed rows.

    A ``validation_fraction`` slice of the training rows (seeded by
    ``random_state``) selects the best epoch; with 0 the training rows are
    reused for that.
    """

    def __init__(
        self,
        image_size: int = 64,
        ablate_holding: bool = False,
        epochs: int = 50,
        batch_size: int = 64,
        lr: float = 1e-3,
        dtype: str = "float32",
        validation_fraction: float = 0.15,
        random_state: int = 0,
    ):
        self.image_size = image_size
        self.ablate_holding = ablate_holding
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.dtype = dtype
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _arrays(self, X, y=None) -> Arrays:
        images, tab, hold = unpack_inputs(X, self.image_size)
        labels = np.zeros(len(X)) if y is None else np.asarray(y, dtype=np.float64)
        return Arrays(images, tab, hold, labels)

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=[np.float32, np.float64], y_numeric=True)
        if np.any(y <= 0):
            raise ValueError("landing times must be positive")
        if not 0 <= self.validation_fraction < 1:
            raise ValueError("validation_fraction must be in [0, 1)")
        self.n_features_in_ = X.shape[1]
        data = self._arrays(X, y)
        n_val = int(np.floor(self.validation_fraction * len(y)))
        if n_val > 0 and len(y) - n_val >= 1:
            perm = np.random.default_rng(self.random_state).permutation(len(y))
            tr, va = data.take(perm[n_val:]), data.take(perm[:n_val])
        else:
            tr = va = data
        cfg = ModelConfig.desk(image_size=self.image_size, ablate_holding=self.ablate_holding)
        self.model_ = build_model(cfg, self.random_state)
        tcfg = TrainConfig(epochs=self.epochs, batch_size=self.batch_size, lr=self.lr, seed=self.random_state,
                           dtype=self.dtype)
        result = train(self.model_, tr, va, tcfg)
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=[np.float32, np.float64])
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return predict(self.model_, self._arrays(X))
