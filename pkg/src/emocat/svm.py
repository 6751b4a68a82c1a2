"""Soft-margin binary SVM with an RBF kernel, trained by SMO."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

ALPHA_PRUNE = 1e-9
DEFAULT_TOL = 1e-3
DEFAULT_MAX_PASSES = 200


class SvmTrainingError(ValueError):
    """Ill-posed training problem (single class, bad hyperparameters, ...)."""


@dataclass(frozen=True)
class SvmProblem:
    """Labelled points plus the C/gamma trade-off of the soft-margin dual."""

    x: np.ndarray
    y: np.ndarray
    c: float
    gamma: float

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if x.ndim != 2 or y.shape != (x.shape[0],):
            raise SvmTrainingError("x must be (n, d) with one label per row")
        if not np.all(np.isfinite(x)):
            raise SvmTrainingError("non-finite feature value in training data")
        if not np.all(np.abs(y) == 1.0):
            raise SvmTrainingError("labels must be +1/-1")
        if not (np.any(y > 0) and np.any(y < 0)):
            raise SvmTrainingError("training data must contain both classes")
        if self.c <= 0 or self.gamma <= 0:
            raise SvmTrainingError("C and gamma must be positive")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)


@dataclass(frozen=True)
class SvmModel:
    """Support vectors with dual coefficients alpha_i * y_i and a bias."""

    support_vectors: np.ndarray
    coefficients: np.ndarray
    bias: float
    gamma: float
    converged: bool = True

    def __post_init__(self):
        sv = np.asarray(self.support_vectors, dtype=np.float64)
        coef = np.asarray(self.coefficients, dtype=np.float64)
        if sv.ndim != 2 or sv.shape[0] == 0 or coef.shape != (sv.shape[0],):
            raise ValueError("model needs at least one support vector with one coefficient each")
        if np.any(coef == 0.0):
            raise ValueError("support-vector coefficients must be nonzero")
        object.__setattr__(self, "support_vectors", sv)
        object.__setattr__(self, "coefficients", coef)


def rbf_kernel(x: np.ndarray, x2: np.ndarray, gamma: float) -> float:
    x = np.asarray(x, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x.shape != x2.shape:
        raise ValueError("kernel arguments must share one dimension")
    d = x - x2
    return float(np.exp(-gamma * (d @ d)))


def rbf_gram(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    """Kernel matrix K[i, j] = exp(-gamma * ||a_i - b_j||^2)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[1] != b.shape[1]:
        raise ValueError("kernel arguments must share one dimension")
    sq = (a**2).sum(axis=1)[:, None] + (b**2).sum(axis=1)[None, :] - 2.0 * (a @ b.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


def train_smo(
    p: SvmProblem, tol: float = DEFAULT_TOL, max_passes: int = DEFAULT_MAX_PASSES
) -> SvmModel:
    """Solve the soft-margin dual by sequential minimal optimization.

    The working pair is chosen by deterministic scans (largest error gap
    first, then index order), so identical problems yield identical models.
    The bias is recomputed from the KKT conditions at the end, averaged over
    unbounded support vectors.
    """
    x, y, c = p.x, p.y, p.c
    n = y.size
    k = rbf_gram(x, x, p.gamma)
    alpha = np.zeros(n)
    state = {"b": 0.0}
    err = -y.copy()  # f(x_i) - y_i with alpha = 0, b = 0
    eps = 1e-12

    def take_step(i: int, j: int) -> bool:
        if i == j:
            return False
        ai, aj = alpha[i], alpha[j]
        yi, yj = y[i], y[j]
        if yi * yj > 0:
            lo, hi = max(0.0, ai + aj - c), min(c, ai + aj)
        else:
            lo, hi = max(0.0, aj - ai), min(c, c + aj - ai)
        if hi - lo < eps:
            return False
        eta = k[i, i] + k[j, j] - 2.0 * k[i, j]
        if eta <= 0.0:
            return False
        aj_new = float(np.clip(aj + yj * (err[i] - err[j]) / eta, lo, hi))
        if abs(aj_new - aj) < eps * (aj_new + aj + eps):
            return False
        ai_new = ai + yi * yj * (aj - aj_new)
        b = state["b"]
        b1 = b - err[i] - yi * (ai_new - ai) * k[i, i] - yj * (aj_new - aj) * k[i, j]
        b2 = b - err[j] - yi * (ai_new - ai) * k[i, j] - yj * (aj_new - aj) * k[j, j]
        if 0.0 < ai_new < c:
            b_new = b1
        elif 0.0 < aj_new < c:
            b_new = b2
        else:
            b_new = (b1 + b2) / 2.0
        err[:] = err + yi * (ai_new - ai) * k[i] + yj * (aj_new - aj) * k[j] + (b_new - b)
        alpha[i], alpha[j] = ai_new, aj_new
        state["b"] = b_new
        return True

    def examine(i: int) -> bool:
        r = err[i] * y[i]
        if not ((r < -tol and alpha[i] < c) or (r > tol and alpha[i] > 0.0)):
            return False
        nonbound = np.flatnonzero((alpha > 0.0) & (alpha < c))
        if nonbound.size > 1:
            j = int(nonbound[np.argmax(np.abs(err[nonbound] - err[i]))])
            if take_step(i, j):
                return True
        for j in nonbound:
            if take_step(i, int(j)):
                return True
        for j in range(n):
            if take_step(i, j):
                return True
        return False

    converged = False
    examine_all = True
    for _ in range(max_passes):
        if examine_all:
            # guard against numeric drift in the incremental error cache
            err[:] = k @ (alpha * y) + state["b"] - y
            indices = range(n)
        else:
            indices = np.flatnonzero((alpha > 0.0) & (alpha < c))
        changed = sum(examine(int(i)) for i in indices)
        if examine_all:
            if changed == 0:
                converged = True
                break
            examine_all = False
        elif changed == 0:
            examine_all = True
    if not converged:
        warnings.warn(
            f"SMO did not reach KKT tolerance {tol} within {max_passes} passes",
            RuntimeWarning,
            stacklevel=2,
        )

    g = k @ (alpha * y)
    free = (alpha > ALPHA_PRUNE) & (alpha < c * (1.0 - 1e-9))
    if free.any():
        bias = float(np.mean(y[free] - g[free]))
    else:
        lowers, uppers = [], []
        for i in range(n):
            bound = y[i] - g[i]
            at_zero = alpha[i] <= ALPHA_PRUNE
            if (at_zero and y[i] > 0) or (not at_zero and y[i] < 0):
                lowers.append(bound)
            else:
                uppers.append(bound)
        if lowers and uppers:
            bias = (max(lowers) + min(uppers)) / 2.0
        else:
            bias = state["b"]

    keep = alpha > ALPHA_PRUNE
    return SvmModel(
        x[keep].copy(),
        (alpha * y)[keep],
        bias,
        p.gamma,
        converged,
    )


def decision_values(m: SvmModel, xs: np.ndarray) -> np.ndarray:
    """Pre-sign decision values for a batch of points (rows)."""
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    if xs.shape[1] != m.support_vectors.shape[1]:
        raise ValueError("point dimension does not match support vectors")
    return rbf_gram(xs, m.support_vectors, m.gamma) @ m.coefficients + m.bias


def decision_value(m: SvmModel, x: np.ndarray) -> float:
    return float(decision_values(m, x)[0])


def predict(m: SvmModel, x: np.ndarray) -> int:
    """Sign of the decision value; an exact zero maps to +1."""
    return 1 if decision_value(m, x) >= 0.0 else -1
