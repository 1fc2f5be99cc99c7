"""Desk-scale test problems with exchangeable per-sample losses.

Every objective exposes ``n_samples``, ``dim``, ``loss_grad(x, indices)``
returning per-sample losses ``(m,)`` and gradients ``(m, dim)``, and
``initial_point()``. The full-data loss is the mean over all samples.
"""
from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_softmax, softmax

KINDS = ("noisy-quadratic", "noisy-rosenbrock-like", "logistic-regression", "mlp2")


class DatasetError(ValueError):
    """Malformed dataset file."""


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int | None = None
    feature_mean: np.ndarray | None = None
    feature_scale: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise DatasetError("features must be a non-empty 2-D array")
        if self.labels.shape != (self.features.shape[0],):
            raise DatasetError("one label per row is required")
        if self.num_classes is None:
            self.num_classes = int(self.labels.max()) + 1
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise DatasetError(f"labels must lie in [0, {self.num_classes})")

    @property
    def M(self):
        return self.features.shape[0]

    @property
    def D(self):
        return self.features.shape[1]

    def standardize(self, mean=None, scale=None):
        """Zero-mean / unit-variance copy; pass ``mean, scale`` to reuse training statistics."""
        mean = self.features.mean(axis=0) if mean is None else mean
        if scale is None:
            scale = self.features.std(axis=0)
            scale = np.where(scale > 0, scale, 1.0)
        return Dataset((self.features - mean) / scale, self.labels, self.num_classes, mean, scale)


def load_csv(path, standardize=False):
    """Read ``label,feat1,...,featD`` rows."""
    rows, labels = [], []
    width = None
    with open(path, newline="") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if not record or all(not f.strip() for f in record):
                continue
            if width is None:
                width = len(record)
                if width < 2:
                    raise DatasetError(f"line {lineno}: need a label and at least one feature")
            elif len(record) != width:
                raise DatasetError(
                    f"line {lineno}: expected {width} fields, found {len(record)}")
            try:
                label = float(record[0])
                feats = [float(f) for f in record[1:]]
            except ValueError as exc:
                raise DatasetError(f"line {lineno}: non-numeric field ({exc})") from None
            if label != int(label) or label < 0:
                raise DatasetError(f"line {lineno}: label must be a nonnegative integer")
            labels.append(int(label))
            rows.append(feats)
    if not rows:
        raise DatasetError(f"{path}: empty dataset")
    data = Dataset(np.array(rows), np.array(labels))
    return data.standardize() if standardize else data


def write_csv(dataset, path):
    """Write ``dataset`` in the format read by :func:`load_csv` (atomically)."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            for label, feats in zip(dataset.labels, dataset.features):
                fh.write(",".join([str(int(label))] + [repr(float(v)) for v in feats]) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def gen_synth(num_classes, M, D, separation, seed, *, decades=2.0):
    """Gaussian-mixture classification data sharing one anisotropic covariance.

    Class means sit at ``separation`` times random unit vectors. The shared
    covariance has a log-spaced spectrum over ``decades`` decades (two by
    default) in a random basis,
    so the class-mean difference is not the Bayes-optimal direction and plain
    gradient descent has to work through poor conditioning.
    """
    if M < 1 or D < 1 or num_classes < 1:
        raise ValueError("num_classes, M and D must be >= 1")
    if not decades >= 0:
        raise ValueError("decades must be >= 0")
    rng = np.random.default_rng(seed)
    directions = rng.normal(size=(num_classes, D))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    means = separation * directions
    basis, _ = np.linalg.qr(rng.normal(size=(D, D)))
    spread = np.logspace(0.0, -decades, D) if D > 1 else np.ones(1)
    cov_sqrt = basis * np.sqrt(spread)
    labels = rng.integers(0, num_classes, size=M)
    features = means[labels] + rng.normal(size=(M, D)) @ cov_sqrt.T
    return Dataset(features, labels, num_classes)


# ---------------------------------------------------------------------------
# objectives


class Objective:
    n_samples: int
    dim: int

    def loss_grad(self, x, indices):
        raise NotImplementedError

    def initial_point(self):
        return np.zeros(self.dim)

    def full_loss(self, x):
        losses, _ = self.loss_grad(x, np.arange(self.n_samples))
        return math.fsum(losses) / self.n_samples


class NoisyQuadratic(Objective):
    """``l(x, d) = 0.5 (x - d)^T A (x - d)`` over fixed draws ``d``."""

    def __init__(self, A, samples, x0=None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.samples = np.atleast_2d(np.asarray(samples, dtype=float))
        self.n_samples, self.dim = self.samples.shape
        self.x0 = np.zeros(self.dim) if x0 is None else np.asarray(x0, dtype=float)

    def loss_grad(self, x, indices):
        r = x[None, :] - self.samples[indices]
        g = r @ self.A.T
        return 0.5 * np.einsum("ij,ij->i", r, g), g

    def initial_point(self):
        return self.x0.copy()

    def minimizer(self):
        return self.samples.mean(axis=0)


class NoisyRosenbrock(Objective):
    """Rosenbrock valley whose per-sample target ``d`` replaces the all-ones anchor."""

    def __init__(self, samples, x0=None, curvature=100.0):
        self.samples = np.atleast_2d(np.asarray(samples, dtype=float))
        self.n_samples, self.dim = self.samples.shape
        if self.dim < 2:
            raise ValueError("rosenbrock-like objective needs dimension >= 2")
        self.curvature = curvature
        self.x0 = np.full(self.dim, -1.0) if x0 is None else np.asarray(x0, dtype=float)

    def loss_grad(self, x, indices):
        d = self.samples[indices]
        valley = x[1:] - x[:-1] ** 2
        anchor = d[:, :-1] - x[None, :-1]
        loss = self.curvature * np.sum(valley**2) + np.sum(anchor**2, axis=1)
        g_shared = np.zeros(self.dim)
        g_shared[1:] += 2.0 * self.curvature * valley
        g_shared[:-1] -= 4.0 * self.curvature * valley * x[:-1]
        grads = np.tile(g_shared, (len(d), 1))
        grads[:, :-1] -= 2.0 * anchor
        return loss, grads

    def initial_point(self):
        return self.x0.copy()


class SoftmaxRegression(Objective):
    """Multinomial logistic regression; parameters are ``[W.ravel(), b]``.

    ``l2`` adds ``l2/2 * |W|^2`` to every per-sample loss (biases are not penalized).
    """

    def __init__(self, dataset, l2=0.0):
        if l2 < 0:
            raise ValueError(f"l2 must be nonnegative, got {l2}")
        self.data = dataset
        self.l2 = float(l2)
        self.K = dataset.num_classes
        self.n_samples = dataset.M
        self.dim = dataset.D * self.K + self.K

    def _unpack(self, x):
        D, K = self.data.D, self.K
        return x[: D * K].reshape(D, K), x[D * K:]

    def logits(self, x, X):
        W, b = self._unpack(x)
        return X @ W + b

    def loss_grad(self, x, indices):
        X = self.data.features[indices]
        y = self.data.labels[indices]
        z = self.logits(x, X)
        logp = log_softmax(z, axis=1)
        rows = np.arange(len(y))
        loss = -logp[rows, y]
        delta = np.exp(logp)
        delta[rows, y] -= 1.0
        gW = X[:, :, None] * delta[:, None, :]
        grads = np.hstack([gW.reshape(len(y), -1), delta])
        if self.l2:
            w = x[: self.data.D * self.K]
            loss = loss + 0.5 * self.l2 * float(w @ w)
            grads[:, : w.size] += self.l2 * w
        return loss, grads

    def predict(self, x, X):
        return np.argmax(self.logits(x, X), axis=1)


class MLP2(Objective):
    """Two-layer network with a logistic hidden layer and softmax output."""

    def __init__(self, dataset, hidden=32, seed=0):
        self.data = dataset
        self.K = dataset.num_classes
        self.H = hidden
        self.n_samples = dataset.M
        D = dataset.D
        self._shapes = [(D, hidden), (hidden,), (hidden, self.K), (self.K,)]
        self.dim = sum(int(np.prod(s)) for s in self._shapes)
        self.seed = seed

    def _unpack(self, x):
        out, pos = [], 0
        for shape in self._shapes:
            size = int(np.prod(shape))
            out.append(x[pos:pos + size].reshape(shape))
            pos += size
        return out

    def initial_point(self):
        rng = np.random.default_rng(self.seed)
        D, H, K = self.data.D, self.H, self.K
        return np.concatenate([
            rng.normal(scale=1.0 / math.sqrt(D), size=D * H), np.zeros(H),
            rng.normal(scale=1.0 / math.sqrt(H), size=H * K), np.zeros(K),
        ])

    def _forward(self, x, X):
        W1, b1, W2, b2 = self._unpack(x)
        h = expit(X @ W1 + b1)
        return h, h @ W2 + b2

    def loss_grad(self, x, indices):
        X = self.data.features[indices]
        y = self.data.labels[indices]
        W1, b1, W2, b2 = self._unpack(x)
        h, z = self._forward(x, X)
        logp = log_softmax(z, axis=1)
        rows = np.arange(len(y))
        loss = -logp[rows, y]
        dz = softmax(z, axis=1)
        dz[rows, y] -= 1.0
        dh = (dz @ W2.T) * h * (1.0 - h)
        m = len(y)
        grads = np.hstack([
            (X[:, :, None] * dh[:, None, :]).reshape(m, -1), dh,
            (h[:, :, None] * dz[:, None, :]).reshape(m, -1), dz,
        ])
        return loss, grads

    def logits(self, x, X):
        return self._forward(x, X)[1]

    def predict(self, x, X):
        return np.argmax(self.logits(x, X), axis=1)


def error_rate(objective, x, dataset):
    """Misclassification rate of a classifier objective at ``x`` on ``dataset``."""
    with np.errstate(all="ignore"):
        pred = objective.predict(x, dataset.features)
    return float(np.mean(pred != dataset.labels))


# ---------------------------------------------------------------------------
# problem specifications


@dataclass
class ProblemSpec:
    kind: str = "noisy-quadratic"
    dimension: int = 10
    n_samples: int = 1000
    noise: float = 1.0
    seed: int = 0
    dataset: str | None = None
    test_dataset: str | None = None
    num_classes: int = 2
    separation: float = 2.0
    decades: float = 2.0
    n_test: int = 1000
    hidden: int = 32
    standardize: bool = False
    l2: float = 0.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown problem kind {self.kind!r}; expected one of {KINDS}")
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")


@dataclass
class Problem:
    """An objective plus, for classifiers, the data it was built from."""

    spec: ProblemSpec
    objective: Objective
    train: Dataset | None = None
    test: Dataset | None = None

    def test_error(self, x):
        if self.test is None:
            return None
        return error_rate(self.objective, x, self.test)

    def train_error(self, x):
        if self.train is None:
            return None
        return error_rate(self.objective, x, self.train)


def _classification_data(spec):
    if spec.dataset is not None:
        train = load_csv(spec.dataset)
        test = load_csv(spec.test_dataset) if spec.test_dataset else None
    else:
        both = gen_synth(spec.num_classes, spec.n_samples + spec.n_test, spec.dimension,
                         spec.separation, spec.seed, decades=spec.decades)
        n = spec.n_samples
        train = Dataset(both.features[:n], both.labels[:n], both.num_classes)
        test = Dataset(both.features[n:], both.labels[n:], both.num_classes) if spec.n_test else None
    if test is not None and test.num_classes != train.num_classes:
        k = max(test.num_classes, train.num_classes)
        train = Dataset(train.features, train.labels, k)
        test = Dataset(test.features, test.labels, k)
    if spec.standardize:
        train = train.standardize()
        if test is not None:
            test = test.standardize(train.feature_mean, train.feature_scale)
    return train, test


def make_problem(spec):
    """Build the objective described by ``spec`` (deterministic in ``spec.seed``)."""
    rng = np.random.default_rng(spec.seed)
    D, M = spec.dimension, spec.n_samples
    if spec.kind == "noisy-quadratic":
        eig = np.asarray(spec.extra.get("eigenvalues", np.logspace(0, 1, D)), dtype=float)
        basis, _ = np.linalg.qr(rng.normal(size=(D, D)))
        A = (basis * eig) @ basis.T
        x_star = np.asarray(spec.extra.get("x_star", np.ones(D)), dtype=float)
        samples = x_star + spec.noise * rng.normal(size=(M, D))
        x0 = np.asarray(spec.extra.get("x0", np.zeros(D)), dtype=float)
        return Problem(spec, NoisyQuadratic(A, samples, x0))
    if spec.kind == "noisy-rosenbrock-like":
        samples = 1.0 + spec.noise * rng.normal(size=(M, D))
        return Problem(spec, NoisyRosenbrock(samples))
    train, test = _classification_data(spec)
    if spec.kind == "logistic-regression":
        return Problem(spec, SoftmaxRegression(train, spec.l2), train, test)
    return Problem(spec, MLP2(train, spec.hidden, seed=spec.seed), train, test)
