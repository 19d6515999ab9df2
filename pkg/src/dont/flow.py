"""The transport model: K per-step velocity nets and Euler integration.

A point x is carried to its image by K explicit Euler steps
phi_{k+1} = phi_k + dt * v_k(phi_k) with dt = 1/K, each step owning an
independent two-layer tanh network v_k(z) = W2 tanh(W1 z + b1) + b2.
Inversion iterates the same updates backwards (y -> y - dt * v_k(y)),
which is exact only in the dt -> 0 limit; an optional fixed-point solve
inverts each Euler step to machine precision instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .costs import CostSpec
from .exceptions import ConvergenceError, DimensionError, DivergenceError, ValidationError
from .measures import EmpiricalMeasure
from .numerics import Rng, Tensor, matmul, tanh

_BLOWUP = 1e6


@dataclass
class VelocityStep:
    """Parameters of one step's velocity field v(z) = W2 tanh(W1 z + b1) + b2."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        for name in ("W1", "b1", "W2", "b2"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"step parameter {name} has non-finite entries")
            setattr(self, name, arr)
        h, d = self.W1.shape
        if self.b1.shape != (h,) or self.W2.shape != (d, h) or self.b2.shape != (d,):
            raise ValidationError(
                f"inconsistent step shapes: W1 {self.W1.shape}, b1 {self.b1.shape}, "
                f"W2 {self.W2.shape}, b2 {self.b2.shape}"
            )

    def velocity(self, z: np.ndarray) -> np.ndarray:
        return np.tanh(z @ self.W1.T + self.b1) @ self.W2.T + self.b2


@dataclass
class FlowModel:
    """K velocity steps sharing one ambient dimension; dt * K = 1 exactly."""

    steps: List[VelocityStep]
    gain: float = 0.0

    def __post_init__(self):
        if not self.steps:
            raise ValidationError("a flow needs at least one step")
        d = self.steps[0].W2.shape[0]
        for k, s in enumerate(self.steps):
            if s.W1.shape[1] != d or s.W2.shape[0] != d:
                raise ValidationError(f"step {k} has dimension {s.W1.shape[1]}, expected {d}")

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    @property
    def dt(self) -> float:
        return 1.0 / len(self.steps)

    @property
    def dim(self) -> int:
        return self.steps[0].W2.shape[0]

    @property
    def hidden(self) -> int:
        return self.steps[0].W1.shape[0]

    def parameter_arrays(self):
        for s in self.steps:
            yield from (s.W1, s.b1, s.W2, s.b2)


@dataclass
class Trajectory:
    """Recorded flow of one batch: every position and velocity along the way."""

    positions: np.ndarray  # (N, K+1, d)
    velocities: np.ndarray  # (N, K, d)
    dt: float = field(default=0.0)

    def __post_init__(self):
        n, kp1, d = self.positions.shape
        if self.velocities.shape != (n, kp1 - 1, d):
            raise ValidationError(
                f"positions {self.positions.shape} and velocities "
                f"{self.velocities.shape} disagree"
            )
        if self.dt <= 0.0:
            self.dt = 1.0 / (kp1 - 1)


def init(d: int, n_steps: int, hidden: int, gain: float, rng: Rng) -> FlowModel:
    """Fresh model: weights N(0, gain^2 / fan_in), biases zero."""
    if d < 1 or n_steps < 1 or hidden < 1:
        raise ValidationError("d, n_steps and hidden must all be >= 1")
    if gain <= 0.0:
        raise ValidationError(f"init gain must be > 0, got {gain}")
    steps = []
    for k in range(n_steps):
        r = rng.derive(k)
        steps.append(
            VelocityStep(
                W1=r.normal(0.0, gain / np.sqrt(d), (hidden, d)),
                b1=np.zeros(hidden),
                W2=r.normal(0.0, gain / np.sqrt(hidden), (d, hidden)),
                b2=np.zeros(d),
            )
        )
    return FlowModel(steps=steps, gain=float(gain))


def _batch_points(batch) -> np.ndarray:
    pts = batch.points if isinstance(batch, EmpiricalMeasure) else np.asarray(batch, float)
    if pts.ndim != 2:
        raise DimensionError(f"batch must be (N, d), got shape {pts.shape}")
    return pts


def _check_dim(model: FlowModel, pts: np.ndarray):
    if pts.shape[1] != model.dim:
        raise DimensionError(f"batch dim {pts.shape[1]} does not match model dim {model.dim}")


def _guard(z: np.ndarray, step: int, direction: str):
    if not np.all(np.isfinite(z)) or np.max(np.abs(z)) > _BLOWUP:
        raise DivergenceError(
            f"{direction} pass diverged (|coordinate| > {_BLOWUP:g})", step=step
        )


def _wrap_like(batch, pts: np.ndarray):
    if isinstance(batch, EmpiricalMeasure):
        return EmpiricalMeasure(pts, labels=batch.labels)
    return pts


def forward(model: FlowModel, batch, record: bool = False):
    """Transport a batch through all K Euler steps.

    Returns the output batch, or (output, Trajectory) when `record` is
    set. Labels on an EmpiricalMeasure input are carried through to the
    output unchanged.
    """
    pts = _batch_points(batch)
    _check_dim(model, pts)
    dt = model.dt
    z = pts
    positions = [z] if record else None
    velocities = [] if record else None
    for k, step in enumerate(model.steps):
        v = step.velocity(z)
        z = z + dt * v
        _guard(z, k, "forward")
        if record:
            positions.append(z)
            velocities.append(v)
    out = _wrap_like(batch, z)
    if not record:
        return out
    traj = Trajectory(
        positions=np.stack(positions, axis=1),
        velocities=np.stack(velocities, axis=1),
        dt=dt,
    )
    return out, traj


def reverse(model: FlowModel, batch):
    """Explicit reverse integration y -> y - dt * v_k(y), steps in reverse.

    First-order inverse of `forward`: the residual shrinks like dt as K
    grows. Use `exact_inverse` when the round trip must close tightly.
    """
    pts = _batch_points(batch)
    _check_dim(model, pts)
    dt = model.dt
    z = pts
    for k in range(model.n_steps - 1, -1, -1):
        z = z - dt * model.steps[k].velocity(z)
        _guard(z, k, "reverse")
    return _wrap_like(batch, z)


def _newton_invert_step(step: VelocityStep, y, dt: float, max_iter: int, tol: float):
    # solve z + dt * v(z) = y per point; Newton because the plain Picard
    # map diverges once dt * Lip(v) >= 1, which trained nets reach at small K
    d = y.shape[1]
    eye = np.eye(d)
    z = y - dt * step.velocity(y)  # explicit update as warm start
    res = z + dt * step.velocity(z) - y
    res_norm = float(np.max(np.abs(res)))
    for _ in range(max_iter):
        if res_norm < tol:
            return z
        act = np.tanh(z @ step.W1.T + step.b1)
        jac = eye + dt * np.einsum("dh,nh,he->nde", step.W2, 1.0 - act**2, step.W1)
        delta = np.linalg.solve(jac, res[:, :, None])[:, :, 0]
        scale = 1.0
        for _ in range(20):  # backtrack when a full step overshoots
            zn = z - scale * delta
            rn = zn + dt * step.velocity(zn) - y
            rn_norm = float(np.max(np.abs(rn)))
            if rn_norm < res_norm or not np.isfinite(rn_norm):
                break
            scale *= 0.5
        z, res, res_norm = zn, rn, rn_norm
    if res_norm < tol:
        return z
    raise ConvergenceError(
        f"inverse Newton solve stalled above tol {tol:g}", residual=res_norm
    )


def exact_inverse(model: FlowModel, batch, max_iter: int = 50, tol: float = 1e-10):
    """Invert each Euler step by a damped Newton solve.

    Solves z + dt * v_k(z) = y for every step in reverse order, so
    forward(exact_inverse(y)) returns y to near machine precision at any K.
    """
    pts = _batch_points(batch)
    _check_dim(model, pts)
    dt = model.dt
    z = pts
    for k in range(model.n_steps - 1, -1, -1):
        try:
            z = _newton_invert_step(model.steps[k], z, dt, max_iter, tol)
        except ConvergenceError as err:
            raise ConvergenceError(
                f"step {k} {err.args[0]}", residual=err.residual
            ) from None
        _guard(z, k, "inverse")
    return _wrap_like(batch, z)


def interpolate(model: FlowModel, batch, k: int):
    """Batch position after k of the K steps (k=0 is the input itself)."""
    if not 0 <= k <= model.n_steps:
        raise ValidationError(f"step index {k} outside [0, {model.n_steps}]")
    pts = _batch_points(batch)
    _check_dim(model, pts)
    z = pts
    for j in range(k):
        z = z + model.dt * model.steps[j].velocity(z)
        _guard(z, j, "forward")
    return _wrap_like(batch, z)


# ------------------------------------------------------------- taped pass


class TapedSteps:
    """Model parameters wrapped as tape leaves.

    Wrapping is alias-preserving (the arrays are already contiguous
    float64), so in-place optimizer writes through `leaves()` update the
    underlying FlowModel directly.
    """

    def __init__(self, model: FlowModel):
        self.tensors = [
            {"W1": Tensor(s.W1), "b1": Tensor(s.b1), "W2": Tensor(s.W2), "b2": Tensor(s.b2)}
            for s in model.steps
        ]
        self.dt = model.dt
        for t, s in zip(self.tensors, model.steps):
            assert t["W1"].data is s.W1  # alias, not copy

    def leaves(self):
        out = []
        for t in self.tensors:
            out.extend([t["W1"], t["b1"], t["W2"], t["b2"]])
        return out


def taped_velocity(step_tensors, z: Tensor) -> Tensor:
    h = tanh(matmul(z, step_tensors["W1"].T) + step_tensors["b1"])
    return matmul(h, step_tensors["W2"].T) + step_tensors["b2"]


def taped_forward(taped: TapedSteps, x: Tensor):
    """Differentiable forward pass; returns (output, per-step velocities)."""
    z = x
    velocities = []
    for k, t in enumerate(taped.tensors):
        v = taped_velocity(t, z)
        z = z + taped.dt * v
        _guard(z.data, k, "forward")
        velocities.append(v)
    return z, velocities


# ------------------------------------------------------------- checkpoints


def save_checkpoint(
    model: FlowModel,
    path,
    cost_spec: Optional[CostSpec] = None,
    seed: Optional[int] = None,
    train_meta: Optional[dict] = None,
) -> None:
    """Serialize the model (plus its training context) as JSON.

    Floats are written with `repr` semantics, so a reloaded model
    reproduces forward outputs bit-exactly.
    """
    cost_spec = cost_spec if cost_spec is not None else CostSpec()
    payload = {
        "format_version": 1,
        "d": model.dim,
        "K": model.n_steps,
        "hidden": model.hidden,
        "gain": model.gain,
        "p": cost_spec.p,
        "cost_weights": None if cost_spec.weights is None else cost_spec.weights.tolist(),
        "steps": [
            {
                "W1": s.W1.tolist(),
                "b1": s.b1.tolist(),
                "W2": s.W2.tolist(),
                "b2": s.b2.tolist(),
            }
            for s in model.steps
        ],
        "seed": seed,
        "train_meta": train_meta,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path):
    """Inverse of save_checkpoint: (model, cost_spec, seed, train_meta)."""
    with open(path) as fh:
        payload = json.load(fh)
    version = payload.get("format_version")
    if version != 1:
        raise ValidationError(f"unsupported checkpoint format_version {version!r}")
    steps = [
        VelocityStep(
            W1=np.array(s["W1"], dtype=np.float64),
            b1=np.array(s["b1"], dtype=np.float64),
            W2=np.array(s["W2"], dtype=np.float64),
            b2=np.array(s["b2"], dtype=np.float64),
        )
        for s in payload["steps"]
    ]
    model = FlowModel(steps=steps, gain=float(payload.get("gain", 0.0)))
    if model.dim != payload["d"] or model.n_steps != payload["K"]:
        raise ValidationError("checkpoint header disagrees with stored step shapes")
    if model.hidden != payload["hidden"]:
        raise ValidationError("checkpoint hidden width disagrees with stored shapes")
    weights = payload.get("cost_weights")
    cost_spec = CostSpec(
        p=payload["p"], weights=None if weights is None else np.array(weights)
    )
    return model, cost_spec, payload.get("seed"), payload.get("train_meta")
