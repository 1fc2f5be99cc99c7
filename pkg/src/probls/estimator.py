"""scikit-learn front end: a linear or two-layer classifier trained by line-search SGD."""
from __future__ import annotations

import numpy as np
from scipy.special import softmax
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_is_fitted, validate_data

from .driver import MODES, RunConfig, run
from .objectives import MLP2, Dataset, SoftmaxRegression
from .wolfe import WolfeParams

MODELS = ("logistic", "mlp2")


class LineSearchSGDClassifier(ClassifierMixin, BaseEstimator):
    """Classifier fit by minibatch SGD whose step sizes come from the probabilistic line search.

    Parameters
    ----------
    model : {"logistic", "mlp2"}
        Softmax regression, or a network with one logistic hidden layer.
    mode : {"linesearch", "sgd-fixed", "sgd-decay"}
        ``linesearch`` tunes the step per iteration; the other two are plain
        SGD with rate ``alpha0`` or ``alpha0 / i``.
    alpha0 : float
        Initial learning rate (only a starting scale in ``linesearch`` mode).
    batch_size, num_epochs : int, float
        Minibatch size and training length in passes over the data, counted
        in gradient evaluations.
    l2 : float
        Weight penalty (logistic model only).
    standardize : bool
        Centre and scale features with training statistics.
    random_state : int
        Seeds batch sampling and network initialization.
    """

    def __init__(self, model="logistic", mode="linesearch", alpha0=1.0, batch_size=10,
                 num_epochs=10.0, l2=0.0, hidden=32, budget=7, standardize=False,
                 random_state=0):
        self.model = model
        self.mode = mode
        self.alpha0 = alpha0
        self.batch_size = batch_size
        self.num_epochs = num_epochs
        self.l2 = l2
        self.hidden = hidden
        self.budget = budget
        self.standardize = standardize
        self.random_state = random_state

    def _validate_params(self):
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.num_epochs > 0:
            raise ValueError("num_epochs must be positive")

    def fit(self, X, y):
        self._validate_params()
        X, y = validate_data(self, X, y)
        check_classification_targets(y)
        self.classes_, codes = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError(f"need samples of at least two classes, got 1 class ({self.classes_[0]!r})")
        data = Dataset(X, codes, len(self.classes_))
        if self.standardize:
            data = data.standardize()
            self.feature_mean_, self.feature_scale_ = data.feature_mean, data.feature_scale
        seed = 0 if self.random_state is None else int(self.random_state)
        if self.model == "logistic":
            self.objective_ = SoftmaxRegression(data, self.l2)
        else:
            self.objective_ = MLP2(data, self.hidden, seed=seed)
        config = RunConfig(mode=self.mode, alpha0=self.alpha0, batch_size=self.batch_size,
                           num_steps=None, num_epochs=self.num_epochs, seed=seed,
                           budget=self.budget, wolfe=WolfeParams())
        self.trace_ = run(self.objective_, config)
        self.coef_ = self.trace_.x_final
        self.n_iter_ = len(self.trace_.rows)
        return self

    def _logits(self, X):
        check_is_fitted(self, ["coef_", "classes_"])
        X = validate_data(self, X, reset=False)
        if self.standardize:
            X = (X - self.feature_mean_) / self.feature_scale_
        return self.objective_.logits(self.coef_, X)

    def decision_function(self, X):
        """Class scores; for two classes, the margin of ``classes_[1]`` as a 1-d array."""
        z = self._logits(X)
        return z[:, 1] - z[:, 0] if z.shape[1] == 2 else z

    def predict_proba(self, X):
        return softmax(self._logits(X), axis=1)

    def predict(self, X):
        z = self._logits(X)
        return self.classes_[np.argmax(z, axis=1)]
