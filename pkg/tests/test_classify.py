import numpy as np
import pytest

from bimcloud.classify import (
    KernelSpec,
    dual_objective,
    evaluate_cv,
    kernel_eval,
    kernel_matrix,
    make_folds,
    predict,
    train_binary_svm,
    train_one_vs_rest,
)
from bimcloud.errors import InvalidLabelsError, InvalidParameterError, ShapeError

from conftest import active_set_dual_optimum


def kkt_violation(model_alpha, y, K, b, C):
    """Largest violation of the per-point optimality conditions."""
    f = K @ (model_alpha * y) + b
    m = y * f
    worst = 0.0
    for a, mi in zip(model_alpha, m):
        if a <= 1e-12:
            worst = max(worst, 1 - mi)
        elif a >= C - 1e-12:
            worst = max(worst, mi - 1)
        else:
            worst = max(worst, abs(mi - 1))
    return worst


def full_alpha(model, X):
    """Scatter support-vector alphas back to training rows."""
    alpha = np.zeros(len(X))
    for sv, a in zip(model.support_vectors, model.alphas):
        alpha[np.flatnonzero((X == sv).all(axis=1))[0]] = a
    return alpha


def test_kernels():
    lin, rbf = KernelSpec("linear"), KernelSpec("rbf", 0.5)
    assert kernel_eval(lin, [1, 2], [3, 4]) == 11.0
    assert kernel_eval(rbf, [0, 0], [1, 1]) == pytest.approx(np.exp(-1.0))
    A = np.random.default_rng(0).normal(size=(4, 3))
    K = kernel_matrix(rbf, A, A)
    assert np.allclose(np.diag(K), 1.0)
    assert np.allclose(K, [[kernel_eval(rbf, a, b) for b in A] for a in A])
    assert KernelSpec().resolved(8).gamma == 0.125
    with pytest.raises(InvalidParameterError):
        KernelSpec("poly")
    with pytest.raises(ShapeError):
        kernel_eval(lin, [1, 2], [1, 2, 3])


def test_two_point_problem():
    model = train_binary_svm([[-1.0], [1.0]], [-1, 1], C=10.0, kernel=KernelSpec("linear"), tol=1e-9)
    assert np.allclose(sorted(model.alphas), [0.5, 0.5], atol=1e-6)
    assert abs(model.bias) < 1e-6
    assert model.decision([[2.0]])[0] == pytest.approx(2.0, abs=1e-6)
    assert model.decision([[-0.3]])[0] == pytest.approx(-0.3, abs=1e-6)


@pytest.mark.parametrize("seed", range(10))
def test_smo_matches_active_set_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    X = rng.normal(size=(n, 2))
    y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    y[0], y[1] = 1.0, -1.0
    C = float(rng.choice([0.5, 1.0, 5.0]))
    kernel = KernelSpec("rbf", 0.7) if seed % 2 else KernelSpec("linear")
    model = train_binary_svm(X, y, C, kernel, tol=1e-6)
    K = kernel_matrix(kernel, X, X)
    alpha = full_alpha(model, X)
    best, _ = active_set_dual_optimum(K, y, C)
    assert abs(dual_objective(alpha, y, K) - best) < 1e-3
    assert kkt_violation(alpha, y, K, model.bias, C) <= 1e-6 + 1e-9


def test_kkt_on_larger_problem():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(200, 4))
    y = np.where(X[:, 0] + 0.3 * rng.normal(size=200) > 0, 1.0, -1.0)
    tol = 1e-3
    model = train_binary_svm(X, y, 2.0, KernelSpec("rbf"), tol=tol)
    K = kernel_matrix(model.kernel, X, X)
    alpha = full_alpha(model, X)
    assert abs(alpha @ y) < 1e-9
    assert np.all(alpha >= 0) and np.all(alpha <= 2.0)
    assert kkt_violation(alpha, y, K, model.bias, 2.0) <= tol


def test_binary_validation():
    with pytest.raises(InvalidLabelsError):
        train_binary_svm([[0.0], [1.0]], [0, 1])
    with pytest.raises(InvalidLabelsError):
        train_binary_svm([[0.0], [1.0]], [1, 1])
    with pytest.raises(InvalidParameterError):
        train_binary_svm([[0.0], [1.0]], [-1, 1], C=0)
    with pytest.raises(ShapeError):
        train_binary_svm([[0.0], [1.0]], [-1, 1, 1])


def test_one_vs_rest_two_classes_mirrors_binary():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(60, 2))
    labels = np.where(X[:, 0] > 0, 7, 3)
    ovr = train_one_vs_rest(X, labels, 1.0, KernelSpec("linear"))
    binary = train_binary_svm(X, np.where(labels == 3, 1.0, -1.0), 1.0, KernelSpec("linear"))
    Xt = rng.normal(size=(30, 2))
    want = np.where(binary.decision(Xt) >= 0, 3, 7)
    assert np.array_equal(predict(ovr, Xt), want)


def test_one_vs_rest_multiclass():
    rng = np.random.default_rng(2)
    centers = np.array([[0, 0], [4, 0], [0, 4]])
    labels = np.repeat([0, 1, 2], 30)
    X = centers[labels] + rng.normal(scale=0.5, size=(90, 2))
    model = train_one_vs_rest(X, labels, 10.0, KernelSpec("rbf"), classes=[0, 1, 2, 5])
    assert model.skipped == [5]
    assert (predict(model, X) == labels).mean() > 0.95
    with pytest.raises(InvalidLabelsError):
        train_one_vs_rest(X, np.zeros(90))


def test_folds_partition_rows():
    plan = make_folds(103, 10, seed=4)
    sizes = [len(f) for f in plan.folds]
    assert max(sizes) - min(sizes) <= 1
    assert np.array_equal(np.sort(np.concatenate(plan.folds)), np.arange(103))
    assert all(np.array_equal(a, b) for a, b in zip(plan.folds, make_folds(103, 10, seed=4).folds))
    with pytest.raises(InvalidParameterError):
        make_folds(5, 10)
    with pytest.raises(InvalidParameterError):
        make_folds(5, 1)


def test_evaluate_cv_protocol():
    rng = np.random.default_rng(3)
    labels = np.repeat([0, 1, 2], 40)
    X = np.array([[0, 0], [3, 0], [0, 3]])[labels] + rng.normal(scale=0.6, size=(120, 2))
    rep = evaluate_cv(X, labels, k=5, C=5.0, seed=1)
    assert rep.total == 120
    assert rep.confusion.sum(axis=1).tolist() == [40, 40, 40]
    assert rep.overall_accuracy > 85
    for rec in rep.fold_records:
        assert np.intersect1d(rec.test_indices, rec.train_indices).size == 0
        ref = X[rec.train_indices]
        # scaler statistics equal those of the training rows alone
        scaled = rec.scaler.apply(ref)
        assert np.allclose(scaled.mean(axis=0), 0, atol=1e-9)
        assert np.allclose(scaled.std(axis=0), 1, atol=1e-9)
    d = rep.to_dict()
    assert d["kind"] == "evaluation" and d["rows"] == 120


def test_evaluate_cv_flags_missing_class():
    X = np.arange(24, dtype=float).reshape(12, 2)
    labels = np.array([0] * 10 + [1, 2])
    rep = evaluate_cv(X, labels, k=3, C=1.0, seed=0)
    assert rep.total == 12
    assert any("absent" in f for f in rep.flags)
