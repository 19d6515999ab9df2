"""Penalized training loop and the cycle-consistency baseline.

Each iteration samples minibatches of both domains (without replacement
per epoch), pushes the source batch through the flow with the tape
recording, and descends L = C_d + (1/lambda_i) * D(transported, target)
with Adam. The multiplier lambda decays linearly to a positive floor, so
the coherence penalty weight 1/lambda grows as training proceeds and the
kinetic term dominates early while feasibility dominates late.

The baseline trains two flows tied by cycle-consistency terms and *no*
transport cost; it exists to show what inductive bias alone does and
does not buy.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .costs import CostSpec, dynamic_cost, endpoint_cost
from .discrepancy import DiscrepancySpec, discrepancy_value, taped_discrepancy
from .exceptions import DivergenceError, ValidationError
from .flow import FlowModel, TapedSteps, forward, init, taped_forward
from .measures import EmpiricalMeasure
from .numerics import Rng, Tape, Tensor, abs_power, tensor_sum


@dataclass
class LambdaSchedule:
    """Linearly decaying multiplier lambda_i = max(lambda0 - i*decay, floor).

    With decay left unset it is derived at training time so the floor is
    reached exactly at the final iteration.
    """

    lambda0: float = 1.0
    floor: float = 1e-3
    decay: Optional[float] = None

    def __post_init__(self):
        if self.floor <= 0.0:
            raise ValidationError("lambda floor must be > 0 (1/lambda must stay finite)")
        if self.lambda0 < self.floor:
            raise ValidationError("lambda0 must be >= floor")
        if self.decay is not None and self.decay < 0.0:
            raise ValidationError("decay must be >= 0")

    def for_iterations(self, m: int) -> "LambdaSchedule":
        """Concrete schedule for m iterations (fills a derived decay)."""
        if self.decay is not None:
            return self
        d = (self.lambda0 - self.floor) / max(m - 1, 1)
        return LambdaSchedule(self.lambda0, self.floor, d)

    def value(self, i: int) -> float:
        if self.decay is None:
            raise ValidationError("schedule has no decay; call for_iterations first")
        return max(self.lambda0 - i * self.decay, self.floor)


@dataclass
class TrainConfig:
    iterations: int = 5000
    batch_size: int = 256
    learning_rate: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    eval_every: int = 250

    def __post_init__(self):
        if self.iterations < 0:
            raise ValidationError("iterations must be >= 0")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.learning_rate <= 0.0:
            raise ValidationError("learning_rate must be > 0")
        if self.eval_every < 1:
            raise ValidationError("eval_every must be >= 1")
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise ValidationError("Adam moments must lie in [0, 1)")


@dataclass
class EvalRow:
    iteration: int
    lam: float
    penalty_weight: float
    dynamic_cost: float
    discrepancy: float
    total_loss: float
    wall_ms: float


@dataclass
class TrainReport:
    """Per-eval metric rows plus the frozen discrepancy hyperparameters.

    `wall_ms` lives only in memory: the CSV written to disk must be
    byte-identical across repeated runs, and wall time is not.
    """

    rows: List[EvalRow] = field(default_factory=list)
    resolved_disc: Optional[DiscrepancySpec] = None

    CSV_COLUMNS = (
        "iteration",
        "lambda",
        "penalty_weight",
        "dynamic_cost",
        "discrepancy",
        "total_loss",
    )

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(self.CSV_COLUMNS) + "\n")
            for r in self.rows:
                vals = (
                    format(r.iteration, "d"),
                    format(r.lam, ".17g"),
                    format(r.penalty_weight, ".17g"),
                    format(r.dynamic_cost, ".17g"),
                    format(r.discrepancy, ".17g"),
                    format(r.total_loss, ".17g"),
                )
                fh.write(",".join(vals) + "\n")

    def metric_table(self) -> np.ndarray:
        """(rows, 6) array of the CSV columns, for equality comparisons."""
        return np.array(
            [
                [r.iteration, r.lam, r.penalty_weight, r.dynamic_cost, r.discrepancy, r.total_loss]
                for r in self.rows
            ]
        )


class Adam:
    """Stock Adam with bias correction, updating parameters in place."""

    def __init__(self, leaves, lr, beta1, beta2, eps):
        self.leaves = list(leaves)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.leaves]
        self.v = [np.zeros_like(p.data) for p in self.leaves]

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for i, leaf in enumerate(self.leaves):
            g = grads[leaf].data
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * (g * g)
            mhat = self.m[i] / c1
            vhat = self.v[i] / c2
            leaf.data[...] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


class _EpochSampler:
    """Without-replacement minibatches; reshuffles each epoch, drops tails."""

    def __init__(self, pool: np.ndarray, batch: int, rng: Rng):
        self.pool = pool
        self.batch = min(batch, pool.shape[0])
        self.rng = rng
        self.queue = []

    def next(self) -> np.ndarray:
        if len(self.queue) < self.batch:
            self.queue = list(self.rng.permutation(self.pool.shape[0]))
        idx = [self.queue.pop() for _ in range(self.batch)]
        return self.pool[idx]


def _split_eval(points: np.ndarray, batch: int, rng: Rng):
    """Pick the fixed evaluation batch, held out when the cloud is large.

    With n >= 2*batch the eval batch is removed from the training pool;
    otherwise the whole cloud serves as both (holding out would starve
    the minibatches).
    """
    n = points.shape[0]
    if n >= 2 * batch:
        perm = rng.permutation(n)
        return points[perm[:batch]], points[perm[batch:]]
    return points, points


def _taped_kinetic(velocities, weights_row, power, dt, n):
    total = None
    for v in velocities:
        term = tensor_sum(abs_power(v, power) * weights_row)
        total = term if total is None else total + term
    return total * (dt / n)


def _eval_metrics(model, eval_x, eval_y, cost_spec, disc, lam, started):
    out, traj = forward(model, eval_x, record=True)
    cd = dynamic_cost(traj, cost_spec)
    # Jensen chain: kinetic cost dominates the straight-line endpoint cost
    assert cd >= endpoint_cost(traj, cost_spec) - 1e-9
    disc_val = discrepancy_value(disc, out, eval_y)
    total = cd + (1.0 / lam) * disc_val
    wall = (time.perf_counter() - started) * 1000.0
    return EvalRow(0, lam, 1.0 / lam, cd, disc_val, total, wall)


def train(
    model: FlowModel,
    alpha: EmpiricalMeasure,
    beta: EmpiricalMeasure,
    cost_spec: CostSpec,
    disc: DiscrepancySpec,
    sched: LambdaSchedule,
    cfg: TrainConfig,
    on_eval=None,
):
    """Optimize the model in place; returns (model, TrainReport).

    Metrics are reported on a fixed evaluation batch (held out from the
    minibatch pool when the clouds are large enough) at iteration 0,
    every `eval_every` updates, and after the last update. Runs of zero
    iterations return an empty report. Divergence surfaces as a
    DivergenceError carrying the iteration index; plateaus do not.
    """
    if alpha.dim != beta.dim or alpha.dim != model.dim:
        raise ValidationError(
            f"dimension mismatch: model {model.dim}, source {alpha.dim}, target {beta.dim}"
        )
    if cfg.batch_size > min(alpha.n, beta.n):
        raise ValidationError(
            f"batch_size {cfg.batch_size} exceeds cloud size {min(alpha.n, beta.n)}"
        )
    report = TrainReport()
    m_iters = cfg.iterations
    if m_iters == 0:
        report.resolved_disc = disc.resolve(beta.points)
        return model, report

    started = time.perf_counter()
    sched = sched.for_iterations(m_iters)
    rng = Rng(cfg.seed, stream=5)
    eval_x, pool_x = _split_eval(alpha.points, cfg.batch_size, rng.derive(2))
    eval_y, pool_y = _split_eval(beta.points, cfg.batch_size, rng.derive(3))
    disc = disc.resolve(eval_y)  # freeze bandwidths/epsilon against the target
    report.resolved_disc = disc

    sampler_x = _EpochSampler(pool_x, cfg.batch_size, rng.derive(0))
    sampler_y = _EpochSampler(pool_y, cfg.batch_size, rng.derive(1))

    taped = TapedSteps(model)
    leaves = taped.leaves()
    opt = Adam(leaves, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
    weights_row = Tensor(cost_spec.resolve_weights(model.dim))

    def record(iteration, lam):
        try:
            row = _eval_metrics(model, eval_x, eval_y, cost_spec, disc, lam, started)
        except DivergenceError as err:
            err.iteration = iteration
            raise
        row.iteration = iteration
        report.rows.append(row)
        if on_eval is not None:
            on_eval(iteration, model, report)

    record(0, sched.value(0))
    for i in range(m_iters):
        lam = sched.value(i)
        xb = sampler_x.next()
        yb = sampler_y.next()
        try:
            with Tape() as tape:
                out, vels = taped_forward(taped, Tensor(xb))
                cd = _taped_kinetic(vels, weights_row, cost_spec.p, taped.dt, xb.shape[0])
                pen = taped_discrepancy(disc, out, yb)
                loss = cd + pen * (1.0 / lam)
                grads = tape.gradient(loss, leaves)
        except DivergenceError as err:
            err.iteration = i
            raise
        opt.step(grads)
        done = i + 1
        if done % cfg.eval_every == 0 or done == m_iters:
            record(done, sched.value(done))
    return model, report


def train_cycle_baseline(
    alpha: EmpiricalMeasure,
    beta: EmpiricalMeasure,
    cfg: TrainConfig,
    n_steps: int = 8,
    hidden: int = 64,
    gain: float = 0.01,
    disc: Optional[DiscrepancySpec] = None,
    cycle_gamma: float = 10.0,
):
    """Train forward/backward flows with cycle consistency and no cost term.

    Loss: D(T#a, b) + D(S#b, a) + gamma * (L1 cycle residuals both ways).
    Returns (T, S, TrainReport); report rows reuse the training schema
    with lambda and penalty weight pinned to 0, dynamic_cost tracking T's
    kinetic cost (reported, never optimized), and discrepancy tracking
    D(T#eval_a, eval_b).
    """
    if alpha.dim != beta.dim:
        raise ValidationError("source and target dimension differ")
    disc = disc if disc is not None else DiscrepancySpec()
    report = TrainReport()
    started = time.perf_counter()
    rng = Rng(cfg.seed, stream=6)
    model_t = init(alpha.dim, n_steps, hidden, gain, rng.derive(20))
    model_s = init(alpha.dim, n_steps, hidden, gain, rng.derive(21))
    if cfg.iterations == 0:
        report.resolved_disc = disc.resolve(beta.points)
        return model_t, model_s, report

    eval_x, pool_x = _split_eval(alpha.points, cfg.batch_size, rng.derive(2))
    eval_y, pool_y = _split_eval(beta.points, cfg.batch_size, rng.derive(3))
    disc_ab = disc.resolve(eval_y)
    disc_ba = disc.resolve(eval_x)
    report.resolved_disc = disc_ab

    sampler_x = _EpochSampler(pool_x, cfg.batch_size, rng.derive(0))
    sampler_y = _EpochSampler(pool_y, cfg.batch_size, rng.derive(1))

    taped_t = TapedSteps(model_t)
    taped_s = TapedSteps(model_s)
    leaves = taped_t.leaves() + taped_s.leaves()
    opt = Adam(leaves, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
    cost_spec = CostSpec()  # reporting only

    def record(iteration):
        try:
            row = _eval_metrics(model_t, eval_x, eval_y, cost_spec, disc_ab, 1.0, started)
        except DivergenceError as err:
            err.iteration = iteration
            raise
        row.iteration = iteration
        row.lam = 0.0
        row.penalty_weight = 0.0
        row.total_loss = row.discrepancy + discrepancy_value(
            disc_ba, forward(model_s, eval_y), eval_x
        )
        report.rows.append(row)

    record(0)
    for i in range(cfg.iterations):
        xb = sampler_x.next()
        yb = sampler_y.next()
        n = xb.shape[0]
        try:
            with Tape() as tape:
                xt = Tensor(xb)
                yt = Tensor(yb)
                tx, _ = taped_forward(taped_t, xt)
                sy, _ = taped_forward(taped_s, yt)
                stx, _ = taped_forward(taped_s, tx)
                tsy, _ = taped_forward(taped_t, sy)
                loss = taped_discrepancy(disc_ab, tx, yb) + taped_discrepancy(
                    disc_ba, sy, xb
                )
                cyc = tensor_sum(abs_power(stx - xt, 1.0)) * (1.0 / n) + tensor_sum(
                    abs_power(tsy - yt, 1.0)
                ) * (1.0 / yb.shape[0])
                loss = loss + cyc * cycle_gamma
                grads = tape.gradient(loss, leaves)
        except DivergenceError as err:
            err.iteration = i
            raise
        opt.step(grads)
        done = i + 1
        if done % cfg.eval_every == 0 or done == cfg.iterations:
            record(done)
    return model_t, model_s, report
