"""scikit-learn-compatible wrapper around the patch classifier.

Lets the from-scratch network drop into sklearn pipelines and model
selection; the federation layer works on raw ModelWeights and does not go
through this class.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array

from .nn import NetworkSpec, forward, init_weights, train_epochs


class ConvPatchClassifier(BaseEstimator, ClassifierMixin):
    """Binary patch classifier with the fixed conv/GAP/sigmoid recipe.

    X may be (n, side, side, channels) or flattened (n, side*side*channels);
    values are expected in [0, 1]. y holds binary labels.
    """

    def __init__(self, input_side=32, input_channels=3,
                 conv_blocks=((8, 1), (16, 1), (32, 1)),
                 learning_rate=1e-3, epochs=5, batch_size=32, random_state=0):
        self.input_side = input_side
        self.input_channels = input_channels
        self.conv_blocks = conv_blocks
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.random_state = random_state

    def _spec(self) -> NetworkSpec:
        return NetworkSpec(self.input_side, self.input_channels,
                           tuple(tuple(b) for b in self.conv_blocks),
                           seed=self.random_state)

    def _as_batch(self, X):
        X = check_array(X, allow_nd=True, dtype=np.float32)
        shape = (self.input_side, self.input_side, self.input_channels)
        if X.ndim == 2:
            expected = int(np.prod(shape))
            if X.shape[1] != expected:
                raise ValueError(
                    f"flattened input has {X.shape[1]} features, expected "
                    f"{expected} for {shape}")
            X = X.reshape(-1, *shape)
        elif X.ndim != 4 or X.shape[1:] != shape:
            raise ValueError(f"input shape {X.shape} does not match (n, "
                             f"{shape[0]}, {shape[1]}, {shape[2]})")
        return X

    def fit(self, X, y):
        X = self._as_batch(X)
        y = np.asarray(y)
        labels = np.unique(y)
        if not set(labels.tolist()) <= {0, 1}:
            raise ValueError(f"labels must be binary 0/1, got {labels}")
        spec = self._spec()
        result = train_epochs(init_weights(spec), X, y.astype(np.uint8),
                              self.epochs, seed=self.random_state,
                              learning_rate=self.learning_rate,
                              batch_size=self.batch_size)
        self.weights_ = result.weights
        self.loss_curve_ = result.epoch_losses
        self.classes_ = np.array([0, 1])
        return self

    def _check_fitted(self):
        if not hasattr(self, "weights_"):
            raise NotFittedError("call fit before predicting")

    def predict_proba(self, X):
        self._check_fitted()
        p = forward(self.weights_, self._as_batch(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(int)
