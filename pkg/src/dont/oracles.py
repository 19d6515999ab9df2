"""Ground-truth transport solvers used to audit the learned flows.

Three independent routes to the optimal cost: the 1-D monotone
rearrangement, the Gaussian closed form, and exact assignment on
empirical clouds. They deliberately share no code with the training
stack so they can serve as oracles for it.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .costs import CostSpec, pairwise_cost
from .exceptions import NotPsdError, ValidationError
from .measures import EmpiricalMeasure
from .numerics import psd_inv_sqrt, psd_sqrt

_ASSIGN_LIMIT = 1024


@dataclass
class OracleResult:
    """Optimal cost plus a description of the attaining map.

    Affine solutions carry (matrix, source_mean, target_mean) with
    T(x) = target_mean + matrix @ (x - source_mean); sample-level
    solutions carry the pairing permutation and the matched targets.
    """

    cost: float
    matrix: Optional[np.ndarray] = None
    source_mean: Optional[np.ndarray] = None
    target_mean: Optional[np.ndarray] = None
    pairing: Optional[np.ndarray] = None
    paired_targets: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Evaluate the optimal map on points.

        Affine results accept any batch; pairing results are defined only
        on the cloud they were solved for, in its original order.
        """
        pts = np.asarray(points, dtype=np.float64)
        if self.matrix is not None:
            return self.target_mean + (pts - self.source_mean) @ self.matrix.T
        if self.paired_targets is not None:
            if pts.shape != self.paired_targets.shape:
                raise ValidationError(
                    "pairing oracle is defined on its own cloud: "
                    f"got shape {pts.shape}, solved for {self.paired_targets.shape}"
                )
            return self.paired_targets.copy()
        raise ValidationError("oracle result carries no map")

    def to_dict(self) -> dict:
        out = {"cost": self.cost, "diagnostics": dict(self.diagnostics)}
        for name in ("matrix", "source_mean", "target_mean", "pairing"):
            val = getattr(self, name)
            if val is not None:
                out[name] = np.asarray(val).tolist()
        return out


def _points_1d(measure) -> np.ndarray:
    pts = measure.points if isinstance(measure, EmpiricalMeasure) else np.asarray(measure, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[1] != 1:
        raise ValidationError(f"1-D oracle needs scalar samples, got dim {pts.shape[1]}")
    return pts


def ot_1d(alpha, beta, p: float = 2.0) -> OracleResult:
    """Monotone rearrangement: pair i-th order statistics of both clouds.

    Optimal for any convex power p >= 1 on the line. Requires equal
    counts; resample to a common size first if needed.
    """
    if p < 1:
        raise ValidationError(f"power must be >= 1, got {p}")
    x = _points_1d(alpha)[:, 0]
    y = _points_1d(beta)[:, 0]
    if x.shape[0] != y.shape[0]:
        raise ValidationError(
            f"equal sample counts required ({x.shape[0]} vs {y.shape[0]}); resample first"
        )
    ix = np.argsort(x, kind="stable")
    iy = np.argsort(y, kind="stable")
    cost = float(np.mean(np.abs(x[ix] - y[iy]) ** p))
    pairing = np.empty_like(ix)
    pairing[ix] = iy
    return OracleResult(
        cost=cost,
        pairing=pairing,
        paired_targets=y[pairing][:, None],
        diagnostics={"n": int(x.shape[0]), "p": float(p)},
    )


def _check_gaussian(mean, cov, side: str):
    m = np.asarray(mean, dtype=np.float64).reshape(-1)
    c = np.asarray(cov, dtype=np.float64)
    if c.shape != (m.shape[0], m.shape[0]):
        raise ValidationError(f"{side} covariance shape {c.shape} does not match mean dim {m.shape[0]}")
    if not np.allclose(c, c.T, atol=1e-10):
        raise NotPsdError(f"{side} covariance is not symmetric")
    if float(np.linalg.eigvalsh(c)[0]) <= 1e-12:
        raise NotPsdError(f"{side} covariance is not positive definite")
    return m, c


def ot_gaussian(mean_a, cov_a, mean_b, cov_b) -> OracleResult:
    """Closed-form quadratic-cost transport between Gaussians.

    T(x) = m_b + A(x - m_a) with
    A = Sa^{-1/2} (Sa^{1/2} Sb Sa^{1/2})^{1/2} Sa^{-1/2}, and cost
    |m_a - m_b|^2 + tr(Sa + Sb - 2 (Sa^{1/2} Sb Sa^{1/2})^{1/2}).
    """
    ma, ca = _check_gaussian(mean_a, cov_a, "source")
    mb, cb = _check_gaussian(mean_b, cov_b, "target")
    if ma.shape[0] != mb.shape[0]:
        raise ValidationError("source and target dimension differ")
    root_a = psd_sqrt(ca)
    inv_root_a = psd_inv_sqrt(ca)
    mid = psd_sqrt(root_a @ cb @ root_a)
    matrix = inv_root_a @ mid @ inv_root_a
    cost = float(np.sum((ma - mb) ** 2) + np.trace(ca) + np.trace(cb) - 2.0 * np.trace(mid))
    return OracleResult(
        cost=max(cost, 0.0),  # clip eigensolver dust on identical inputs
        matrix=matrix,
        source_mean=ma,
        target_mean=mb,
        diagnostics={"d": int(ma.shape[0])},
    )


def ot_exact(alpha, beta, cost: CostSpec = None) -> OracleResult:
    """Optimal assignment between equal-count clouds (Hungarian solve)."""
    spec = cost if cost is not None else CostSpec()
    x = alpha.points if isinstance(alpha, EmpiricalMeasure) else np.asarray(alpha, dtype=np.float64)
    y = beta.points if isinstance(beta, EmpiricalMeasure) else np.asarray(beta, dtype=np.float64)
    if x.shape[0] != y.shape[0]:
        raise ValidationError(f"equal sample counts required ({x.shape[0]} vs {y.shape[0]})")
    if x.shape[0] > _ASSIGN_LIMIT:
        raise ValidationError(f"assignment oracle capped at {_ASSIGN_LIMIT} points, got {x.shape[0]}")
    matrix = pairwise_cost(spec, x, y)
    rows, cols = linear_sum_assignment(matrix)
    value = float(matrix[rows, cols].mean())
    pairing = np.empty(x.shape[0], dtype=np.int64)
    pairing[rows] = cols
    return OracleResult(
        cost=value,
        pairing=pairing,
        paired_targets=y[pairing],
        diagnostics={"n": int(x.shape[0]), "p": float(spec.p)},
    )


def mccann(oracle_map: OracleResult, alpha: EmpiricalMeasure, t: float) -> EmpiricalMeasure:
    """Geodesic marginal ((1-t) id + t T)#alpha at time t."""
    if not 0.0 <= t <= 1.0:
        raise ValidationError(f"interpolation time {t} outside [0, 1]")
    moved = oracle_map.apply(alpha.points)
    pts = (1.0 - t) * alpha.points + t * moved
    return EmpiricalMeasure(pts, labels={k: v.copy() for k, v in alpha.labels.items()})


@dataclass
class IllPosedMap:
    """A coherent invertible transport that is optimal only at theta = 0.

    Composes: whiten the source Gaussian, rotate by theta, then color to
    the target Gaussian. Every theta satisfies push-forward coherence and
    exact invertibility; the quadratic transport cost grows with theta.
    """

    theta: float
    source_mean: np.ndarray
    target_mean: np.ndarray
    source_inv_root: np.ndarray
    target_root: np.ndarray
    matrix: np.ndarray
    inverse_matrix: np.ndarray

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return self.target_mean + (pts - self.source_mean) @ self.matrix.T

    def inverse(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return self.source_mean + (pts - self.target_mean) @ self.inverse_matrix.T

    def sample_cost(self, points: np.ndarray, p: float = 2.0) -> float:
        """Mean ground cost sum_i |x_i - T(x_i)|^p over the given samples."""
        pts = np.asarray(points, dtype=np.float64)
        return float(np.mean(np.sum(np.abs(pts - self.apply(pts)) ** p, axis=1)))


def illposed_construct(alpha_spec, beta_spec, theta: float) -> IllPosedMap:
    """Build T_theta = color_beta . rotate(theta) . whiten_alpha in 2-D.

    alpha_spec and beta_spec are (mean, cov) pairs of 2-D Gaussians.
    """
    ma, ca = _check_gaussian(alpha_spec[0], alpha_spec[1], "source")
    mb, cb = _check_gaussian(beta_spec[0], beta_spec[1], "target")
    if ma.shape[0] != 2 or mb.shape[0] != 2:
        raise ValidationError("rotation family is built for 2-D Gaussians")
    rot = np.array(
        [[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]
    )
    inv_root_a = psd_inv_sqrt(ca)
    root_b = psd_sqrt(cb)
    matrix = root_b @ rot @ inv_root_a
    inverse_matrix = psd_sqrt(ca) @ rot.T @ psd_inv_sqrt(cb)
    return IllPosedMap(
        theta=float(theta),
        source_mean=ma,
        target_mean=mb,
        source_inv_root=inv_root_a,
        target_root=root_b,
        matrix=matrix,
        inverse_matrix=inverse_matrix,
    )
