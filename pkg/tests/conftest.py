"""Shared brute-force oracles and fixtures.

The oracles deliberately avoid the package's own helpers so that they can
serve as independent references.
"""

import itertools

import numpy as np
import pytest

from bimcloud.core import PointCloud


def brute_knn(points, query, k):
    d = np.sqrt(((points - query) ** 2).sum(axis=1))
    order = sorted(range(len(points)), key=lambda i: (d[i], i))[:k]
    return [(i, float(d[i])) for i in order]


def brute_radius(points, query, radius):
    d = np.sqrt(((points - query) ** 2).sum(axis=1))
    return [i for i in range(len(points)) if d[i] <= radius]


def brute_sor_mask(points, k, std_ratio):
    """Removed-mask of statistical removal, computed from the full distance matrix."""
    n = len(points)
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    means = np.empty(n)
    for i in range(n):
        others = sorted((dist[i, j], j) for j in range(n) if j != i)[:k]
        means[i] = np.mean([d for d, _ in others])
    mu = means.mean()
    sigma = np.sqrt(((means - mu) ** 2).mean())
    return means > mu + std_ratio * sigma


def brute_radius_mask(points, radius, min_neighbors):
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    counts = (dist <= radius).sum(axis=1) - 1
    return counts < min_neighbors


def active_set_dual_optimum(K, y, C):
    """Exact maximum of the soft-margin dual by enumerating active sets.

    Every alpha is either at 0, at C, or free. For each assignment the
    free coordinates solve the stationarity system with the equality
    constraint, and feasible solutions are compared by objective value.
    The global optimum of a concave QP is attained at one of these.
    """
    n = len(y)
    Q = (y[:, None] * y[None, :]) * K
    best = -np.inf
    best_alpha = None
    for state in itertools.product((0, 1, 2), repeat=n):
        alpha = np.zeros(n)
        free = [i for i, s in enumerate(state) if s == 1]
        for i, s in enumerate(state):
            if s == 2:
                alpha[i] = C
        if free:
            f = np.array(free)
            bound = np.array([i for i in range(n) if state[i] != 1], dtype=int)
            # Q_ff a_f + y_f nu = 1 - Q_fb a_b ;  y_f . a_f = -y_b . a_b
            m = len(f)
            A = np.zeros((m + 1, m + 1))
            A[:m, :m] = Q[np.ix_(f, f)]
            A[:m, m] = y[f]
            A[m, :m] = y[f]
            rhs = np.zeros(m + 1)
            rhs[:m] = 1.0 - (Q[np.ix_(f, bound)] @ alpha[bound] if len(bound) else 0.0)
            rhs[m] = -(y[bound] @ alpha[bound]) if len(bound) else 0.0
            sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
            if not np.allclose(A @ sol, rhs, atol=1e-9):
                continue
            alpha[f] = sol[:m]
        if np.any(alpha < -1e-9) or np.any(alpha > C + 1e-9) or abs(alpha @ y) > 1e-9:
            continue
        alpha = np.clip(alpha, 0.0, C)
        obj = alpha.sum() - 0.5 * alpha @ Q @ alpha
        if obj > best:
            best, best_alpha = obj, alpha
    return best, best_alpha


def straight_line_forward(coords, layers):
    """Reference forward pass written with explicit per-point loops."""
    local = []
    for p in np.asarray(coords, dtype=np.float64):
        x = p
        for i in range(5):
            w, b = layers[i]
            x = w.astype(np.float64) @ x + b.astype(np.float64)
            if i < 4:
                x = np.where(x > 0, x, 0.0)
        local.append(x)
    local = np.array(local)
    g = local.max(axis=0)
    w5, b5 = layers[5]
    w6, b6 = layers[6]
    h = w5.astype(np.float64) @ g + b5.astype(np.float64)
    h = np.where(h > 0, h, 0.0)
    head = w6.astype(np.float64) @ h + b6.astype(np.float64)
    return local, g, head


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def gaussian_cloud():
    pts = np.random.default_rng(3).normal(size=(2000, 3))
    return PointCloud(pts)


ACCEPTANCE_RESULTS = {}


def record_acceptance(number, passed, detail):
    line = f"acceptance {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_RESULTS[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[number])
