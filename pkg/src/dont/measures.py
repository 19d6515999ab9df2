"""Empirical measures and the deterministic toy-dataset generators.

An `EmpiricalMeasure` is a uniformly weighted cloud of N points in R^d
with optional per-point integer tags (cluster id, class, position).
Tags exist only so evaluations can check semantics after the fact; the
training path never reads them.

Every generator is a pure function of a `DatasetSpec`, seed included:
calling it twice yields byte-identical clouds.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ValidationError
from .numerics import Rng, psd_sqrt


class EmpiricalMeasure:
    """Uniform empirical measure (1/N)·Σ δ_{x_i} over an (N, d) cloud."""

    def __init__(self, points, labels=None):
        points = np.asarray(points, dtype=np.float64)
        if points.ndim == 1:
            points = points[:, None]
        if points.ndim != 2 or points.shape[0] < 1:
            raise ValidationError(f"points must be (N, d) with N >= 1, got {points.shape}")
        if not np.all(np.isfinite(points)):
            raise ValidationError("points contain non-finite coordinates")
        self.points = np.ascontiguousarray(points)
        self.labels = {}
        if labels:
            for name, values in labels.items():
                values = np.asarray(values)
                if values.shape != (self.n,):
                    raise ValidationError(
                        f"label '{name}' has shape {values.shape}, expected ({self.n},)"
                    )
                self.labels[name] = values.astype(np.int64)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def label(self, name: str):
        if name not in self.labels:
            raise KeyError(f"measure has no label '{name}' (has {sorted(self.labels)})")
        return self.labels[name]

    def save_csv(self, path) -> None:
        """Write `x0,...,x{d-1}[,label_*]` rows, floats at 17 significant digits."""
        header = [f"x{j}" for j in range(self.dim)]
        names = sorted(self.labels)
        header += [f"label_{name}" for name in names]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i in range(self.n):
                row = [format(v, ".17g") for v in self.points[i]]
                row += [str(int(self.labels[name][i])) for name in names]
                w.writerow(row)

    @classmethod
    def load_csv(cls, path) -> "EmpiricalMeasure":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header:
                raise ValidationError(f"{path}: empty CSV")
            coord_cols = [h for h in header if h.startswith("x")]
            label_cols = [h for h in header if h.startswith("label_")]
            if [f"x{j}" for j in range(len(coord_cols))] != coord_cols or (
                len(coord_cols) + len(label_cols) != len(header)
            ):
                raise ValidationError(f"{path}: malformed header {header}")
            rows = list(reader)
        if not rows:
            raise ValidationError(f"{path}: no data rows")
        d = len(coord_cols)
        points = np.array([[float(r[j]) for j in range(d)] for r in rows])
        labels = {
            col[len("label_"):]: np.array([int(r[d + k]) for r in rows])
            for k, col in enumerate(label_cols)
        }
        return cls(points, labels=labels or None)

    def __repr__(self):
        tags = f", labels={sorted(self.labels)}" if self.labels else ""
        return f"EmpiricalMeasure(n={self.n}, dim={self.dim}{tags})"


@dataclass
class DatasetSpec:
    """Recipe for one generated (source, target) pair of clouds."""

    name: str
    n: int
    seed: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 2:
            raise ValidationError(f"dataset needs n >= 2 points, got {self.n}")
        if self.name not in GENERATORS:
            raise ValidationError(
                f"unknown generator '{self.name}' (known: {sorted(GENERATORS)})"
            )


def make_dataset(spec: DatasetSpec):
    """Dispatch to the named generator; returns (source, target)."""
    return GENERATORS[spec.name](spec)


def _param(spec, key, default):
    return spec.params.get(key, default)


def _strict_pd_root(cov, name):
    cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    w = np.linalg.eigvalsh((cov + cov.T) / 2.0)
    if w.min() <= 0.0:
        raise ValidationError(f"{name} covariance must be strictly positive definite")
    return psd_sqrt(cov, name=name)


def gen_gaussian(spec: DatasetSpec):
    """Two independent Gaussian clouds with configurable moments.

    params: mean_a, cov_a, mean_b, cov_b (covariances symmetric PD; scalars
    accepted in one dimension).
    """
    mean_a = np.atleast_1d(np.asarray(_param(spec, "mean_a", [0.0]), dtype=np.float64))
    d = mean_a.shape[0]
    mean_b = np.atleast_1d(
        np.asarray(_param(spec, "mean_b", np.zeros(d)), dtype=np.float64)
    )
    if mean_b.shape[0] != d:
        raise ValidationError("mean_a and mean_b must share a dimension")
    root_a = _strict_pd_root(_param(spec, "cov_a", np.eye(d)), "cov_a")
    root_b = _strict_pd_root(_param(spec, "cov_b", np.eye(d)), "cov_b")
    if root_a.shape != (d, d) or root_b.shape != (d, d):
        raise ValidationError("covariance shape does not match mean dimension")
    rng = Rng(spec.seed)
    za = rng.derive(0).standard_normal((spec.n, d))
    zb = rng.derive(1).standard_normal((spec.n, d))
    return (
        EmpiricalMeasure(mean_a + za @ root_a),
        EmpiricalMeasure(mean_b + zb @ root_b),
    )


def _ring_centers(k, radius, center):
    angles = 2.0 * np.pi * np.arange(k) / k
    return center + radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def gen_shift_rotate(spec: DatasetSpec):
    """Cluster mixture and its shifted (optionally rotated) twin.

    Source clusters sit on a ring; target cluster centers are the source
    centers rotated by `angle` about the ring center, then shifted. Noise
    is drawn fresh for each domain, so targets are paired with sources by
    index only through their cluster, not their noise.

    params: clusters (default 3), radius (1.0), center ((0,0)), noise
    (0.1), shift ((4,0)), angle (0.0, radians in [0, 2π)).
    """
    k = int(_param(spec, "clusters", 3))
    radius = float(_param(spec, "radius", 1.0))
    center = np.asarray(_param(spec, "center", [0.0, 0.0]), dtype=np.float64)
    noise = float(_param(spec, "noise", 0.1))
    shift = np.asarray(_param(spec, "shift", [4.0, 0.0]), dtype=np.float64)
    theta = float(_param(spec, "angle", 0.0))
    if k < 1:
        raise ValidationError("clusters must be >= 1")
    if noise <= 0.0:
        raise ValidationError("noise scale must be > 0")
    if not 0.0 <= theta < 2.0 * np.pi:
        raise ValidationError(f"angle must lie in [0, 2*pi), got {theta}")

    cluster = np.arange(spec.n) % k
    centers_a = _ring_centers(k, radius, center)
    rot = np.array(
        [[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]
    )
    centers_b = (centers_a - center) @ rot.T + center + shift

    rng = Rng(spec.seed)
    pts_a = centers_a[cluster] + noise * rng.derive(0).standard_normal((spec.n, 2))
    pts_b = centers_b[cluster] + noise * rng.derive(1).standard_normal((spec.n, 2))
    tags = {"cluster": cluster}
    return EmpiricalMeasure(pts_a, labels=tags), EmpiricalMeasure(pts_b, labels=tags)


def gen_digit_swap_analog(spec: DatasetSpec):
    """2-D stand-in for the class-position swap task.

    Coordinate 0 is "position" (±2), coordinate 1 is "class" (±1).
    Source clusters: (-2,-1) and (+2,+1); target clusters: (+2,-1) and
    (-2,+1). Under the plain quadratic cost the cheap move flips class
    (squared distance 4 vs 16 for flipping position); masking coordinate 0
    makes the position flip free.

    params: noise (0.05). Requires even n.
    """
    noise = float(_param(spec, "noise", 0.05))
    if noise <= 0.0:
        raise ValidationError("noise scale must be > 0")
    if spec.n % 2 != 0:
        raise ValidationError("digit-swap generator needs even n")
    half = spec.n // 2
    # class tag c in {0,1}; source positions -2 for c=0, +2 for c=1
    cls = np.repeat([0, 1], half)
    sign = np.where(cls == 0, -1.0, 1.0)
    centers_a = np.stack([2.0 * sign, sign], axis=1)
    centers_b = np.stack([-2.0 * sign, sign], axis=1)  # position flipped

    rng = Rng(spec.seed)
    pts_a = centers_a + noise * rng.derive(0).standard_normal((spec.n, 2))
    pts_b = centers_b + noise * rng.derive(1).standard_normal((spec.n, 2))
    labels_a = {"class": cls, "position": (centers_a[:, 0] > 0).astype(int)}
    labels_b = {"class": cls, "position": (centers_b[:, 0] > 0).astype(int)}
    return EmpiricalMeasure(pts_a, labels=labels_a), EmpiricalMeasure(pts_b, labels=labels_b)


def gen_1d_pair(spec: DatasetSpec):
    """One-dimensional Gaussian pair with independent moments.

    params: mean_a (0), std_a (1), mean_b (3), std_b (0.5); stds must be
    positive.
    """
    m_a = float(_param(spec, "mean_a", 0.0))
    s_a = float(_param(spec, "std_a", 1.0))
    m_b = float(_param(spec, "mean_b", 3.0))
    s_b = float(_param(spec, "std_b", 0.5))
    if s_a <= 0.0 or s_b <= 0.0:
        raise ValidationError("standard deviations must be > 0")
    rng = Rng(spec.seed)
    xa = m_a + s_a * rng.derive(0).standard_normal((spec.n, 1))
    xb = m_b + s_b * rng.derive(1).standard_normal((spec.n, 1))
    return EmpiricalMeasure(xa), EmpiricalMeasure(xb)


GENERATORS = {
    "gaussian": gen_gaussian,
    "shift_rotate": gen_shift_rotate,
    "digit_swap": gen_digit_swap_analog,
    "pair_1d": gen_1d_pair,
}
