"""Two-sample discrepancies driving the coherence penalty.

Three interchangeable kinds: summed multi-bandwidth Gaussian MMD (biased
V-statistic), debiased entropic transport divergence, and the energy
distance. Each exposes a plain value and an analytic gradient with
respect to the first cloud's points; `taped_discrepancy` records that
gradient on the active tape so the training loss can differentiate
through the penalty without unrolling kernel or fixed-point internals.

Hyperparameters left unset are resolved once against a reference target
batch (median-distance bandwidths, mean-cost epsilon) and then frozen so
the objective is stationary across training iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist, pdist
from scipy.special import logsumexp

from .exceptions import ConvergenceError, DimensionError, ValidationError
from .measures import EmpiricalMeasure
from .numerics import Rng, Tensor, custom_op

_KINDS = ("mmd", "sinkhorn", "energy")


@dataclass
class DiscrepancySpec:
    """Choice of discrepancy and its (possibly deferred) hyperparameters."""

    kind: str = "mmd"
    bandwidths: Optional[Sequence[float]] = None
    epsilon: Optional[float] = None
    max_iter: int = 500
    tol: float = 1e-9
    debiased: bool = True

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValidationError(f"unknown discrepancy '{self.kind}' (known: {_KINDS})")
        if self.bandwidths is not None:
            bw = tuple(float(b) for b in self.bandwidths)
            if not bw or any(b <= 0.0 for b in bw):
                raise ValidationError("bandwidths must be positive")
            self.bandwidths = bw
        if self.epsilon is not None and self.epsilon <= 0.0:
            raise ValidationError(f"epsilon must be > 0, got {self.epsilon}")

    def resolve(self, target) -> "DiscrepancySpec":
        """Fill deferred hyperparameters from a reference batch and freeze them."""
        y = _points(target)
        out = self
        if self.kind == "mmd" and self.bandwidths is None:
            m = _median_distance(y)
            out = replace(out, bandwidths=(0.25 * m, m, 4.0 * m))
        if self.kind == "sinkhorn" and self.epsilon is None:
            sq = pdist(y, "sqeuclidean")
            eps = 0.05 * float(np.mean(sq)) if sq.size else 1.0
            out = replace(out, epsilon=max(eps, 1e-12))
        return out


def _points(x) -> np.ndarray:
    if isinstance(x, EmpiricalMeasure):
        return x.points
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x, dtype=np.float64)


def _median_distance(y) -> float:
    d = pdist(y) if y.shape[0] > 1 else np.array([])
    m = float(np.median(d)) if d.size else 0.0
    return m if m > 0.0 else 1.0


def _check_dims(x, y):
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
        raise DimensionError(f"clouds must share a dimension; got {x.shape}, {y.shape}")


# ---------------------------------------------------------------- mmd


def _mmd2_terms(x, y, bandwidths):
    sq_xx = cdist(x, x, "sqeuclidean")
    sq_xy = cdist(x, y, "sqeuclidean")
    sq_yy = cdist(y, y, "sqeuclidean")
    n, m = x.shape[0], y.shape[0]
    value = 0.0
    grad = np.zeros_like(x)
    for sigma in bandwidths:
        s2 = sigma * sigma
        kxx = np.exp(-sq_xx / (2.0 * s2))
        kxy = np.exp(-sq_xy / (2.0 * s2))
        kyy = np.exp(-sq_yy / (2.0 * s2))
        value += kxx.mean() - 2.0 * kxy.mean() + kyy.mean()
        # d/dx of the V-statistic: both xx slots, one xy slot
        gxx = (kxx.sum(axis=1)[:, None] * x - kxx @ x) * (-2.0 / (n * n * s2))
        gxy = (kxy.sum(axis=1)[:, None] * x - kxy @ y) * (2.0 / (n * m * s2))
        grad += gxx + gxy
    return value, grad


def mmd2(spec: DiscrepancySpec, a, b) -> float:
    """Biased squared MMD summed over the bandwidth list."""
    x, y = _points(a), _points(b)
    _check_dims(x, y)
    rspec = spec.resolve(y)
    value, _ = _mmd2_terms(x, y, rspec.bandwidths)
    return value


def mmd2_unbiased(spec: DiscrepancySpec, a, b) -> float:
    """U-statistic variant, reporting only (may go slightly negative)."""
    x, y = _points(a), _points(b)
    _check_dims(x, y)
    n, m = x.shape[0], y.shape[0]
    if n < 2 or m < 2:
        raise ValidationError("unbiased estimator needs at least 2 points per cloud")
    rspec = spec.resolve(y)
    sq_xx = cdist(x, x, "sqeuclidean")
    sq_xy = cdist(x, y, "sqeuclidean")
    sq_yy = cdist(y, y, "sqeuclidean")
    value = 0.0
    for sigma in rspec.bandwidths:
        s2 = sigma * sigma
        kxx = np.exp(-sq_xx / (2.0 * s2))
        kyy = np.exp(-sq_yy / (2.0 * s2))
        kxy = np.exp(-sq_xy / (2.0 * s2))
        value += (kxx.sum() - n) / (n * (n - 1))
        value += (kyy.sum() - m) / (m * (m - 1))
        value -= 2.0 * kxy.mean()
    return value


# ---------------------------------------------------------------- sinkhorn


def _eps_schedule(eps, cost):
    start = max(eps, float(np.mean(cost)))
    levels = []
    e = start
    while e > eps:
        levels.append(e)
        e /= 2.0
    levels.append(eps)
    return levels


def _sinkhorn_potentials(cost, eps, max_iter, tol, symmetric=False):
    """Log-domain fixed point with a halving epsilon warm start.

    Returns (f, g) at the target eps; raises ConvergenceError (carrying
    the last residual) if the iteration budget runs out first. For the
    symmetric self-transport terms the two potentials coincide and the
    averaged update f <- (f + T(f))/2 replaces the alternating one,
    which would otherwise creep toward the fixed point.
    """
    n, m = cost.shape
    log_a = -np.log(n)
    log_b = -np.log(m)
    f = np.zeros(n)
    g = np.zeros(m)
    levels = _eps_schedule(eps, cost)

    def double_update(e, f, g):
        fn = -e * (logsumexp((g[None, :] - cost) / e, axis=1) + log_b)
        gn = -e * (logsumexp((fn[:, None] - cost) / e, axis=0) + log_a)
        return fn, gn

    def averaged_update(e, f, _g):
        fn = 0.5 * (f - e * (logsumexp((f[None, :] - cost) / e, axis=1) + log_b))
        return fn, fn

    update = averaged_update if symmetric else double_update
    used = 0
    for e in levels[:-1]:
        if used >= max_iter:
            break
        f, g = update(e, f, g)
        used += 1
    # converged when the potentials or the dual value stop moving; near-tied
    # assignments at tiny eps let the value settle long before the potentials
    residual = np.inf
    value = f.mean() + g.mean()
    while used < max_iter:
        fn, gn = update(eps, f, g)
        vn = fn.mean() + gn.mean()
        shift = max(np.max(np.abs(fn - f)), np.max(np.abs(gn - g)))
        residual = min(shift, abs(vn - value))
        f, g, value = fn, gn, vn
        used += 1
        if residual < tol:
            return f, g
    raise ConvergenceError(
        f"entropic fixed point not converged after {max_iter} iterations",
        residual=float(residual),
    )


def _ot_eps(x, y, eps, max_iter, tol, symmetric=False):
    """Entropic OT dual value and coupling for squared-Euclidean cost."""
    cost = cdist(x, y, "sqeuclidean")
    f, g = _sinkhorn_potentials(cost, eps, max_iter, tol, symmetric=symmetric)
    n, m = cost.shape
    value = float(f.mean() + g.mean())
    plan = np.exp((f[:, None] + g[None, :] - cost) / eps) / (n * m)
    return value, plan


def _ot_grad_cross(plan, x, y):
    # envelope derivative of sum_ij plan_ij |x_i - y_j|^2 in x
    return 2.0 * (plan.sum(axis=1)[:, None] * x - plan @ y)


def _ot_grad_self(plan, x):
    # both slots of OT(x, x) move with x
    r = plan.sum(axis=1)[:, None]
    c = plan.sum(axis=0)[:, None]
    return 2.0 * ((r + c) * x - (plan + plan.T) @ x)


def _sinkhorn_terms(x, y, spec):
    value_xy, plan_xy = _ot_eps(x, y, spec.epsilon, spec.max_iter, spec.tol)
    grad = _ot_grad_cross(plan_xy, x, y)
    value = value_xy
    if spec.debiased:
        value_xx, plan_xx = _ot_eps(
            x, x, spec.epsilon, spec.max_iter, spec.tol, symmetric=True
        )
        value_yy, _ = _ot_eps(
            y, y, spec.epsilon, spec.max_iter, spec.tol, symmetric=True
        )
        value -= 0.5 * (value_xx + value_yy)
        grad -= 0.5 * _ot_grad_self(plan_xx, x)
    return value, grad


def sinkhorn_div(spec: DiscrepancySpec, a, b) -> float:
    """Debiased entropic transport divergence (plain OT_eps if debiased=False)."""
    x, y = _points(a), _points(b)
    _check_dims(x, y)
    rspec = spec.resolve(y)
    if np.array_equal(x, y) and rspec.debiased:
        return 0.0  # the three terms cancel exactly
    value, _ = _sinkhorn_terms(x, y, rspec)
    return value


# ---------------------------------------------------------------- energy


def _energy_terms(x, y):
    n, m = x.shape[0], y.shape[0]
    d_xy = cdist(x, y)
    d_xx = cdist(x, x)
    d_yy = cdist(y, y)
    value = 2.0 * d_xy.mean() - d_xx.mean() - d_yy.mean()

    def unit_diffs(diff, dist):
        safe = np.where(dist > 0.0, dist, 1.0)
        return diff / safe[..., None]

    u_xy = unit_diffs(x[:, None, :] - y[None, :, :], d_xy)
    u_xx = unit_diffs(x[:, None, :] - x[None, :, :], d_xx)
    grad = (2.0 / (n * m)) * u_xy.sum(axis=1) - (2.0 / (n * n)) * u_xx.sum(axis=1)
    return value, grad


def energy_distance(spec: DiscrepancySpec, a, b) -> float:
    x, y = _points(a), _points(b)
    _check_dims(x, y)
    value, _ = _energy_terms(x, y)
    return value


# ---------------------------------------------------------------- dispatch


def _terms(spec, x, y):
    if spec.kind == "mmd":
        return _mmd2_terms(x, y, spec.bandwidths)
    if spec.kind == "sinkhorn":
        return _sinkhorn_terms(x, y, spec)
    return _energy_terms(x, y)


def discrepancy_value(spec: DiscrepancySpec, a, b) -> float:
    """Value of the configured discrepancy between two clouds."""
    x, y = _points(a), _points(b)
    _check_dims(x, y)
    value, _ = _terms(spec.resolve(y), x, y)
    return value


def taped_discrepancy(spec: DiscrepancySpec, a: Tensor, b) -> Tensor:
    """Scalar discrepancy recorded on the active tape.

    Differentiable in the points of `a` only; `b` is treated as fixed
    data. `spec` must already be resolved (concrete bandwidths/epsilon)
    so repeated calls share one objective.
    """
    y = _points(b)
    _check_dims(a.data, y)
    value, grad_x = _terms(spec, a.data, y)
    return custom_op(np.float64(value), (a,), lambda g: (g * grad_x,))


def permutation_threshold(
    spec: DiscrepancySpec, a, b, n_perm: int, level: float, rng: Optional[Rng] = None
) -> float:
    """Null quantile of the discrepancy under pooled relabelings.

    Shuffles the pooled points `n_perm` times, splits each shuffle back
    into the original sizes, and returns the `level` quantile of the
    resulting discrepancy values (level=1.0 gives the maximum). An
    observed value above this threshold rejects "same distribution" at
    about the 1-level significance.
    """
    if n_perm < 100:
        raise ValidationError(f"need n_perm >= 100 for a stable quantile, got {n_perm}")
    if not 0.0 < level <= 1.0:
        raise ValidationError(f"level must lie in (0, 1], got {level}")
    x, y = _points(a), _points(b)
    _check_dims(x, y)
    rspec = spec.resolve(y)
    pooled = np.vstack([x, y])
    n = x.shape[0]
    rng = rng if rng is not None else Rng(0)
    values = np.empty(n_perm)
    for t in range(n_perm):
        order = rng.permutation(pooled.shape[0])
        values[t], _ = _terms(rspec, pooled[order[:n]], pooled[order[n:]])
    values.sort()
    idx = min(n_perm - 1, max(0, int(np.ceil(level * n_perm)) - 1))
    return float(values[idx])
