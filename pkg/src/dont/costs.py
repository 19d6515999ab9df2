"""Ground costs, trajectory kinetic cost, and the sparse coordinate mask.

The cost family is separable: c(x, y) = sum_i c_i |x_i - y_i|^p with
p >= 1 and non-negative coordinate weights c_i. With p > 1 and all
weights positive the induced h(x - y) is strictly convex, which is the
regime where the learned map has a unique optimal form; zero weights
deliberately void uniqueness along the masked coordinates, and that is
exactly what the masked translation experiments exploit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import DimensionError, MaskError, ValidationError
from .measures import EmpiricalMeasure


@dataclass
class CostSpec:
    """Separable transport cost: power p and optional coordinate weights."""

    p: float = 2.0
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        self.p = float(self.p)
        if self.p < 1.0:
            raise ValidationError(f"cost power must satisfy p >= 1, got {self.p}")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
            if w.size == 0 or np.any(w < 0.0) or not np.any(w > 0.0):
                raise ValidationError(
                    "cost weights must be non-negative with at least one positive entry"
                )
            self.weights = w

    def resolve_weights(self, d: int) -> np.ndarray:
        """Concrete weight vector for dimension d (unit weights by default)."""
        if self.weights is None:
            return np.ones(d)
        if self.weights.shape[0] != d:
            raise DimensionError(
                f"cost weights have length {self.weights.shape[0]}, data has dim {d}"
            )
        return self.weights


def ground_cost(spec: CostSpec, x, y) -> float:
    """Static cost sum_i c_i |x_i - y_i|^p between two points."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise DimensionError(f"points have different dimensions: {x.shape} vs {y.shape}")
    w = spec.resolve_weights(x.shape[0])
    return float(np.sum(w * np.abs(x - y) ** spec.p))


def pairwise_cost(spec: CostSpec, xs, ys) -> np.ndarray:
    """(N, M) matrix of ground costs between two clouds."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.ndim != 2 or ys.ndim != 2 or xs.shape[1] != ys.shape[1]:
        raise DimensionError(f"clouds must be (N, d), (M, d); got {xs.shape}, {ys.shape}")
    w = spec.resolve_weights(xs.shape[1])
    diff = np.abs(xs[:, None, :] - ys[None, :, :]) ** spec.p
    return np.einsum("nmd,d->nm", diff, w)


def dynamic_cost(traj, spec: CostSpec) -> float:
    """Discrete kinetic cost of a recorded trajectory.

    (dt / N) * sum_{k<K} sum_x sum_i c_i |v(phi^x_k)_i|^p, i.e. the sum
    of per-step weighted p-powers of the velocities, averaged over
    samples and scaled by the step size. Unit weights and p=2 give the
    plain squared-velocity path energy.
    """
    v = np.asarray(traj.velocities, dtype=np.float64)
    if v.ndim != 3 or v.shape[1] == 0:
        raise ValidationError("trajectory has no recorded steps")
    n, _, d = v.shape
    w = spec.resolve_weights(d)
    return traj.dt * float(np.einsum("nkd,d->", np.abs(v) ** spec.p, w)) / n


def endpoint_cost(traj, spec: CostSpec) -> float:
    """Mean ground cost between trajectory start and end points.

    Lower-bounds `dynamic_cost` for dt = 1/K by convexity of the
    weighted p-th power; the gap closes only for straight constant-speed
    paths.
    """
    start = traj.positions[:, 0, :]
    end = traj.positions[:, -1, :]
    w = spec.resolve_weights(start.shape[1])
    return float(np.mean(np.abs(end - start) ** spec.p @ w))


@dataclass
class MaskReport:
    """Outcome of the sparse-classifier masking procedure."""

    weights: np.ndarray
    selected: np.ndarray  # coordinate indices with |w| above threshold
    cost_weights: np.ndarray  # 0 on selected coordinates, 1 elsewhere
    attribute: str
    l1_strength: float
    threshold: float = field(default=1e-6)


def _logistic_prox_fit(x, y, l1_strength, iters=2000, step=0.1):
    # proximal gradient on mean logistic loss; bias carries no penalty
    n, d = x.shape
    w = np.zeros(d)
    b = 0.0
    shrink = l1_strength * step
    for _ in range(iters):
        z = y * (x @ w + b)
        # -sigmoid(-z) * y, numerically stable in both tails
        s = np.where(z >= 0, np.exp(-z) / (1 + np.exp(-z)), 1 / (1 + np.exp(z)))
        gw = -(x.T @ (s * y)) / n
        gb = -np.mean(s * y)
        w = w - step * gw
        w = np.sign(w) * np.maximum(np.abs(w) - shrink, 0.0)
        b = b - step * gb
    return w, b


def fit_sparse_mask(
    data: EmpiricalMeasure, l1_strength: float, attribute: str = "position"
) -> MaskReport:
    """Mask coordinates that predict a binary attribute.

    Fits an L1-penalized logistic classifier of `attribute` on the
    points, then zeroes the cost weight of every coordinate whose
    classifier weight survived the shrinkage. Transport along those
    coordinates becomes free, so the learned map may change the
    attribute at no cost while still paying for everything else.
    """
    if l1_strength <= 0.0:
        raise MaskError("l1_strength must be > 0; an unpenalized fit selects everything")
    labels = data.label(attribute)
    classes = np.unique(labels)
    if classes.shape[0] != 2:
        raise MaskError(
            f"attribute '{attribute}' must take exactly two values, got {classes.tolist()}"
        )
    y = np.where(labels == classes[0], -1.0, 1.0)
    w, _ = _logistic_prox_fit(data.points, y, l1_strength)
    selected = np.flatnonzero(np.abs(w) > 1e-6)
    cost_weights = np.ones(data.dim)
    cost_weights[selected] = 0.0
    if not np.any(cost_weights > 0.0):
        raise MaskError("classifier selected every coordinate; mask would zero the cost")
    return MaskReport(
        weights=w,
        selected=selected,
        cost_weights=cost_weights,
        attribute=attribute,
        l1_strength=float(l1_strength),
    )
