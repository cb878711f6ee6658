"""Kernel SVM classification of per-point features.

A binary model predicts with ``f(x) = sum_i alpha_i y_i K(x_i, x) + b`` over
its support vectors. Training solves the soft-margin dual by SMO with
maximal-violating-pair (second-order) working-set selection. Multiclass is
one-vs-rest, and evaluation is k-fold cross-validation with the feature
scaler refit on every training split.
"""

from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidLabelsError, InvalidParameterError, ShapeError
from .features import ScalerParams, fit_scaler

logger = logging.getLogger(__name__)

TAU = 1e-12
FULL_KERNEL_LIMIT = 20000


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"
    gamma: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("linear", "rbf"):
            raise InvalidParameterError(f"unknown kernel {self.kind!r}")
        if self.kind == "rbf" and self.gamma is not None and not self.gamma > 0:
            raise InvalidParameterError(f"rbf gamma must be > 0, got {self.gamma}")

    def resolved(self, dim: int) -> "KernelSpec":
        """Fill in the default rbf gamma of 1 / feature dimension."""
        if self.kind == "rbf" and self.gamma is None:
            return KernelSpec("rbf", 1.0 / max(dim, 1))
        return self

    def to_dict(self) -> dict:
        return {"kind": self.kind, "gamma": self.gamma}


def kernel_eval(spec: KernelSpec, x, x2) -> float:
    x, x2 = np.asarray(x, dtype=np.float64), np.asarray(x2, dtype=np.float64)
    if x.shape != x2.shape:
        raise ShapeError(f"kernel arguments differ in shape: {x.shape} vs {x2.shape}")
    if spec.kind == "linear":
        return float(x @ x2)
    if spec.gamma is None:
        raise InvalidParameterError("rbf kernel needs a gamma")
    d = x - x2
    return float(np.exp(-spec.gamma * (d @ d)))


def kernel_matrix(spec: KernelSpec, A, B) -> np.ndarray:
    A, B = np.atleast_2d(np.asarray(A, dtype=np.float64)), np.atleast_2d(np.asarray(B, dtype=np.float64))
    if A.shape[1] != B.shape[1]:
        raise ShapeError(f"kernel arguments have {A.shape[1]} and {B.shape[1]} columns")
    dots = A @ B.T
    if spec.kind == "linear":
        return dots
    if spec.gamma is None:
        raise InvalidParameterError("rbf kernel needs a gamma")
    d2 = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * dots
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-spec.gamma * d2)


class _KernelRows:
    """Kernel rows of the training set, fully cached up to FULL_KERNEL_LIMIT rows."""

    def __init__(self, spec: KernelSpec, X: np.ndarray, full: Optional[np.ndarray] = None, cache_rows: int = 512):
        self.spec, self.X = spec, X
        if full is None and len(X) <= FULL_KERNEL_LIMIT:
            full = kernel_matrix(spec, X, X)
        self.full = full
        if full is not None:
            self.diag = np.diag(full).copy()
        elif spec.kind == "rbf":
            self.diag = np.ones(len(X))
        else:
            self.diag = (X * X).sum(axis=1)
        self._cache: OrderedDict = OrderedDict()
        self._cache_rows = cache_rows

    def row(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[i]
        hit = self._cache.get(i)
        if hit is None:
            hit = kernel_matrix(self.spec, self.X[i:i + 1], self.X)[0]
            self._cache[i] = hit
            if len(self._cache) > self._cache_rows:
                self._cache.popitem(last=False)
        else:
            self._cache.move_to_end(i)
        return hit


@dataclass(frozen=True, eq=False)
class SvmBinaryModel:
    support_vectors: np.ndarray
    labels: np.ndarray
    alphas: np.ndarray
    bias: float
    kernel: KernelSpec
    C: float = float("inf")
    iterations: int = 0

    def decision(self, X) -> np.ndarray:
        return decision_function(self, X)

    def negated(self) -> "SvmBinaryModel":
        """The mirror model for the swapped labelling (-f)."""
        return SvmBinaryModel(self.support_vectors, -self.labels, self.alphas, -self.bias,
                              self.kernel, self.C, self.iterations)


def dual_objective(alphas, y, K) -> float:
    """``sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij`` (to be maximized)."""
    ay = np.asarray(alphas) * np.asarray(y)
    return float(np.sum(alphas) - 0.5 * ay @ K @ ay)


def _solve_dual(K: _KernelRows, y: np.ndarray, C: float, tol: float, max_passes: int, max_iter: int):
    n = len(y)
    alpha = np.zeros(n)
    G = -np.ones(n)  # gradient of 1/2 a'Qa - e'a with Q_ij = y_i y_j K_ij
    stalls = 0
    it = 0
    pos, neg = y > 0, y < 0
    for it in range(1, max_iter + 1):
        yG = -y * G
        up = (pos & (alpha < C)) | (neg & (alpha > 0))
        low = (pos & (alpha > 0)) | (neg & (alpha < C))
        if not up.any() or not low.any():
            break
        i = int(np.flatnonzero(up)[np.argmax(yG[up])])
        g_max = yG[i]
        g_min = yG[low].min()
        if g_max - g_min <= tol:
            break
        Ki = K.row(i)
        cand = low & (yG < g_max)
        diff = g_max - yG[cand]
        quad = K.diag[i] + K.diag[cand] - 2.0 * Ki[cand]
        quad = np.where(quad > 0, quad, TAU)
        j = int(np.flatnonzero(cand)[np.argmax(diff * diff / quad)])
        Kj = K.row(j)

        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            q = K.diag[i] + K.diag[j] - 2.0 * Ki[j]
            delta = (-G[i] - G[j]) / (q if q > 0 else TAU)
            d = ai - aj
            ni, nj = ai + delta, aj + delta
            if d > 0:
                if nj < 0:
                    nj, ni = 0.0, d
            elif ni < 0:
                ni, nj = 0.0, -d
            if d > 0:
                if ni > C:
                    ni, nj = C, C - d
            elif nj > C:
                nj, ni = C, C + d
        else:
            q = K.diag[i] + K.diag[j] - 2.0 * Ki[j]
            delta = (G[i] - G[j]) / (q if q > 0 else TAU)
            s = ai + aj
            ni, nj = ai - delta, aj + delta
            if s > C:
                if ni > C:
                    ni, nj = C, s - C
            elif nj < 0:
                nj, ni = 0.0, s
            if s > C:
                if nj > C:
                    nj, ni = C, s - C
            elif ni < 0:
                ni, nj = 0.0, s
        ni, nj = min(max(ni, 0.0), C), min(max(nj, 0.0), C)
        dai, daj = ni - ai, nj - aj
        if dai == 0.0 and daj == 0.0:
            stalls += 1
            if stalls >= max_passes:
                logger.warning("SMO stalled after %d iterations with violation %.3g", it, g_max - g_min)
                break
            continue
        stalls = 0
        alpha[i], alpha[j] = ni, nj
        G += y * (y[i] * dai * Ki + y[j] * daj * Kj)
    else:
        logger.warning("SMO hit the iteration cap (%d)", max_iter)

    yG = -y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        b = float(yG[free].mean())
    else:
        up = (pos & (alpha < C)) | (neg & (alpha > 0))
        low = (pos & (alpha > 0)) | (neg & (alpha < C))
        hi = yG[up].max() if up.any() else yG[low].min()
        lo = yG[low].min() if low.any() else hi
        b = float((hi + lo) / 2.0)
    return alpha, b, it


def train_binary_svm(X, y, C: float = 10.0, kernel: KernelSpec = KernelSpec(), tol: float = 1e-3,
                     max_passes: int = 10, max_iter: Optional[int] = None,
                     kernel_rows: Optional[_KernelRows] = None) -> SvmBinaryModel:
    """Fit a soft-margin SVM on labels in {-1, +1}.

    Stops once no pair violates the optimality conditions by more than
    ``tol``; ``max_passes`` consecutive zero-length pair updates also stop
    the solver (numerical stall).
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if len(X) != len(y):
        raise ShapeError(f"{len(X)} rows but {len(y)} labels")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise InvalidLabelsError("binary labels must be -1 or +1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise InvalidLabelsError("binary SVM needs at least one example of each sign")
    if not C > 0:
        raise InvalidParameterError(f"C must be > 0, got {C}")
    kernel = kernel.resolved(X.shape[1])
    K = kernel_rows if kernel_rows is not None else _KernelRows(kernel, X)
    if max_iter is None:
        max_iter = max(100_000, 100 * len(y))
    alpha, b, iters = _solve_dual(K, y, float(C), tol, max_passes, max_iter)
    sv = alpha > 0
    return SvmBinaryModel(X[sv].copy(), y[sv].copy(), alpha[sv].copy(), b, kernel, float(C), iters)


def decision_function(model: SvmBinaryModel, X) -> np.ndarray:
    """Decision values for rows of ``X`` (a single vector gives a length-1 result)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if len(model.alphas) == 0:
        return np.full(len(X), model.bias)
    if X.shape[1] != model.support_vectors.shape[1]:
        raise ShapeError(f"model expects {model.support_vectors.shape[1]} features, got {X.shape[1]}")
    K = kernel_matrix(model.kernel, X, model.support_vectors)
    return K @ (model.alphas * model.labels) + model.bias


@dataclass
class OneVsRestModel:
    classes: list
    models: dict
    skipped: list = field(default_factory=list)
    scaler: Optional[ScalerParams] = None

    def decision_matrix(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.full((len(X), len(self.classes)), -np.inf)
        for c, cls in enumerate(self.classes):
            model = self.models.get(cls)
            if model is not None:
                out[:, c] = decision_function(model, X)
        return out


def train_one_vs_rest(X, labels, C: float = 10.0, kernel: KernelSpec = KernelSpec(), tol: float = 1e-3,
                      max_passes: int = 10, classes=None) -> OneVsRestModel:
    """One binary model per class (that class +1, all others -1).

    ``classes`` fixes the class order (used for argmax ties); classes listed
    but absent from ``labels`` get no model and are reported in ``skipped``.
    With exactly two trained classes a single model is fit and the second
    class uses its mirror image.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    labels = np.asarray(labels).reshape(-1)
    present = sorted(set(labels.tolist()))
    if len(present) < 2:
        raise InvalidLabelsError(f"one-vs-rest needs at least 2 classes, got {present}")
    classes = present if classes is None else list(classes)
    kernel = kernel.resolved(X.shape[1])
    rows = _KernelRows(kernel, X)
    models, skipped = {}, [c for c in classes if c not in present]
    trained = [c for c in classes if c in present]
    if len(trained) == 2:
        first = train_binary_svm(X, np.where(labels == trained[0], 1.0, -1.0), C, kernel, tol, max_passes,
                                 kernel_rows=rows)
        models[trained[0]], models[trained[1]] = first, first.negated()
    else:
        for cls in trained:
            models[cls] = train_binary_svm(X, np.where(labels == cls, 1.0, -1.0), C, kernel, tol, max_passes,
                                           kernel_rows=rows)
    return OneVsRestModel(classes, models, skipped)


def predict(model: OneVsRestModel, X) -> np.ndarray:
    """Argmax of per-class decision values; ties go to the class listed first.

    Rows are scaled with ``model.scaler`` first when one is attached.
    """
    if model.scaler is not None:
        X = model.scaler.apply(X)
    scores = model.decision_matrix(X)
    return np.asarray(model.classes)[np.argmax(scores, axis=1)]


# -- cross-validation ------------------------------------------------------

@dataclass(frozen=True)
class FoldPlan:
    folds: tuple
    seed: int

    @property
    def k(self) -> int:
        return len(self.folds)


def make_folds(n: int, k: int = 10, seed: int = 0) -> FoldPlan:
    """Seeded shuffle of ``0..n-1`` dealt round-robin into ``k`` folds."""
    if k < 2:
        raise InvalidParameterError(f"need at least 2 folds, got {k}")
    if n < k:
        raise InvalidParameterError(f"cannot split {n} rows into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    return FoldPlan(tuple(np.sort(perm[f::k]) for f in range(k)), seed)


@dataclass
class FoldRecord:
    test_indices: np.ndarray
    train_indices: np.ndarray
    scaler: Optional[ScalerParams]
    skipped_classes: list


@dataclass
class EvalReport:
    classes: list
    confusion: np.ndarray
    folds: int
    predictions: np.ndarray
    flags: list = field(default_factory=list)
    class_names: dict = field(default_factory=dict)
    fold_records: list = field(default_factory=list, repr=False)
    parameters: dict = field(default_factory=dict)

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    @property
    def overall_accuracy(self) -> float:
        return float(np.trace(self.confusion) / self.total * 100.0) if self.total else 0.0

    @property
    def per_class_accuracy(self) -> dict:
        out = {}
        for c, cls in enumerate(self.classes):
            row = self.confusion[c].sum()
            out[self._name(cls)] = float(self.confusion[c, c] / row * 100.0) if row else None
        return out

    def _name(self, cls) -> str:
        return str(self.class_names.get(cls, cls))

    def to_dict(self) -> dict:
        return {
            "kind": "evaluation",
            "overall_accuracy": self.overall_accuracy,
            "per_class_accuracy": self.per_class_accuracy,
            "classes": [self._name(c) for c in self.classes],
            "confusion": [[int(v) for v in row] for row in self.confusion],
            "rows": self.total,
            "folds": self.folds,
            "parameters": dict(self.parameters),
            "flags": list(self.flags),
        }


def evaluate_cv(features, labels, k: int = 10, C: float = 10.0, kernel: KernelSpec = KernelSpec(),
                tol: float = 1e-3, seed: int = 0, scaler_mode: Optional[str] = "both",
                max_passes: int = 10, class_names: Optional[dict] = None) -> EvalReport:
    """k-fold evaluation: every row is predicted once by a model that never saw it.

    The scaler is fit on the training rows of each fold only. Confusion rows
    are true classes, columns predicted classes.
    """
    X = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels).reshape(-1)
    if X.ndim != 2 or len(X) != len(labels):
        raise ShapeError(f"{len(X)} feature rows but {len(labels)} labels")
    plan = make_folds(len(labels), k, seed)
    classes = sorted(set(labels.tolist()))
    pos = {c: i for i, c in enumerate(classes)}
    kernel = kernel.resolved(X.shape[1])
    predictions = np.empty_like(labels)
    seen = np.zeros(len(labels), dtype=int)
    confusion = np.zeros((len(classes), len(classes)), dtype=np.int64)
    flags, records = [], []
    all_rows = np.arange(len(labels))
    for f, test in enumerate(plan.folds):
        train = np.setdiff1d(all_rows, test, assume_unique=True)
        assert np.intersect1d(train, test).size == 0
        scaler = fit_scaler(X[train], scaler_mode) if scaler_mode else None
        Xtr = scaler.apply(X[train]) if scaler else X[train]
        Xte = scaler.apply(X[test]) if scaler else X[test]
        ytr = labels[train]
        present = sorted(set(ytr.tolist()))
        missing = [c for c in classes if c not in present]
        for c in missing:
            flags.append(f"fold {f}: class {class_names.get(c, c) if class_names else c} absent from training split")
        if len(present) == 1:
            pred = np.full(len(test), present[0], dtype=labels.dtype)
        else:
            model = train_one_vs_rest(Xtr, ytr, C, kernel, tol, max_passes, classes=classes)
            pred = predict(model, Xte)
        predictions[test] = pred
        seen[test] += 1
        for t, p in zip(labels[test], pred):
            confusion[pos[t], pos[p]] += 1
        records.append(FoldRecord(test, train, scaler, missing))
        logger.info("fold %d/%d: %d train, %d test", f + 1, k, len(train), len(test))
    assert np.all(seen == 1)
    return EvalReport(
        classes, confusion, plan.k, predictions, flags, dict(class_names or {}), records,
        {"k": k, "C": C, "kernel": kernel.to_dict(), "tol": tol, "seed": seed, "scaler": scaler_mode},
    )
