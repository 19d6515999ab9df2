"""Experiment runners behind the CLI: train, score, sweep, demos.

Every artifact (CSV, JSON, SVG) is written with fixed formatting and no
environment-dependent content, so identical configs reproduce identical
bytes.
"""

import dataclasses
import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .costs import CostSpec, dynamic_cost, fit_sparse_mask, pairwise_cost
from .discrepancy import DiscrepancySpec, discrepancy_value, permutation_threshold
from .exceptions import ConfigError, DivergenceError, ValidationError
from .flow import exact_inverse, forward, init, load_checkpoint, reverse, save_checkpoint
from .measures import EmpiricalMeasure, make_dataset
from .numerics import Rng
from .oracles import illposed_construct, mccann, ot_1d, ot_exact
from .svg import SvgCanvas, data_range
from .training import train, train_cycle_baseline

_SRC_COLOR = "#8a8a8a"
_OUT_COLOR = "#e06c00"
_TGT_COLOR = "#1f6fb5"
_ORACLE_COLOR = "#2c9e4b"


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.17g" % float(value)


def write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_json(path, obj):
    with open(path, "w", newline="\n") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=1))
        fh.write("\n")


def _as_2d(points: np.ndarray, ranks: np.ndarray = None) -> np.ndarray:
    """Plot coordinates: 1-D clouds are spread vertically by source rank."""
    if points.shape[1] >= 2:
        return points[:, :2]
    if ranks is None:
        order = np.argsort(points[:, 0], kind="stable")
        ranks = np.empty(points.shape[0], dtype=np.int64)
        ranks[order] = np.arange(points.shape[0])
    spread = ranks / max(points.shape[0] - 1, 1)
    return np.column_stack([points[:, 0], spread])


def _resolve_cost(config: ExperimentConfig, alpha, beta):
    """Config cost, optionally with weights learned by the sparse mask."""
    if config.mask_from is None:
        return config.cost, None
    name = config.mask_from
    pooled = EmpiricalMeasure(
        np.vstack([alpha.points, beta.points]),
        labels={name: np.concatenate([alpha.label(name), beta.label(name)])},
    )
    mask = fit_sparse_mask(pooled, config.l1_strength, attribute=name)
    spec = CostSpec(p=config.cost.p, weights=tuple(mask.cost_weights))
    return spec, mask


def _train_flow(config: ExperimentConfig, alpha, beta, cost_spec, out_dir: Path):
    model = init(
        alpha.dim,
        config.flow_steps,
        config.flow_hidden,
        config.flow_gain,
        Rng(config.train.seed, stream=1),
    )
    meta = {"config_hash": config.config_hash, "dataset": config.dataset.name}

    def checkpoint(iteration, live_model, report):
        save_checkpoint(
            live_model,
            out_dir / "checkpoint.json",
            cost_spec=cost_spec,
            seed=config.train.seed,
            train_meta=dict(meta, iteration=iteration),
        )

    model, report = train(
        model,
        alpha,
        beta,
        cost_spec,
        config.disc,
        config.schedule,
        config.train,
        on_eval=checkpoint,
    )
    return model, report


def _subsample(points: np.ndarray, cap: int, rng: Rng) -> np.ndarray:
    if points.shape[0] <= cap:
        return points
    idx = np.sort(rng.permutation(points.shape[0])[:cap])
    return points[idx]


def _coherence(config, resolved_disc, out_pts, tgt_pts):
    rng = Rng(config.train.seed, stream=8)
    a = _subsample(out_pts, 512, rng.derive(0))
    b = _subsample(tgt_pts, 512, rng.derive(1))
    value = discrepancy_value(resolved_disc, a, b)
    threshold = permutation_threshold(
        resolved_disc, a, b, 200, 0.99, rng=Rng(config.train.seed, stream=7)
    )
    return {
        "discrepancy": value,
        "threshold": threshold,
        "passed": bool(value < threshold),
    }


def _cluster_centroids(measure, name: str):
    labels = measure.label(name)
    values = np.unique(labels)
    cents = np.stack([measure.points[labels == v].mean(axis=0) for v in values])
    return values, cents


def _semantic_scores(config, alpha, beta, out_pts, cost_spec, coherent: bool):
    """Cluster-agreement scores; None when the dataset carries no labels."""
    scores = {}
    if "cluster" in alpha.labels and "cluster" in beta.labels:
        oracle = ot_exact(alpha, beta, cost_spec)
        designated = beta.label("cluster")[oracle.pairing]
        values, cents = _cluster_centroids(beta, "cluster")
        nearest = np.argmin(
            np.sum((out_pts[:, None, :] - cents[None, :, :]) ** 2, axis=2), axis=1
        )
        predicted = values[nearest]
        scores["semantic_score"] = float(np.mean(predicted == designated))
    elif "class" in alpha.labels and "position" in alpha.labels:
        key = beta.label("class") * 2 + beta.label("position")
        values = np.unique(key)
        cents = np.stack([beta.points[key == v].mean(axis=0) for v in values])
        nearest = np.argmin(
            np.sum((out_pts[:, None, :] - cents[None, :, :]) ** 2, axis=2), axis=1
        )
        hit = values[nearest]
        pred_class, pred_pos = hit // 2, hit % 2
        scores["class_swap_rate"] = float(np.mean(pred_class != alpha.label("class")))
        scores["position_swap_rate"] = float(
            np.mean(pred_pos != alpha.label("position"))
        )
        main = "position_swap_rate" if config.mask_from else "class_swap_rate"
        scores["semantic_score"] = scores[main]
    else:
        scores["semantic_score"] = None
    if not coherent and scores["semantic_score"] is not None:
        # feasibility gates semantics: an incoherent map scores zero
        scores["semantic_score"] = 0.0
    return scores


def _oracle_cost(alpha, beta, cost_spec):
    if alpha.n != beta.n or alpha.n > 1024:
        return None
    return ot_exact(alpha, beta, cost_spec).cost


def _scatter_svg(path, alpha, beta, out_pts, title: str):
    src2 = _as_2d(alpha.points)
    # 1-D outputs inherit the source point's rank so pairing segments stay level
    src_ranks = np.argsort(np.argsort(alpha.points[:, 0], kind="stable"))
    out2 = _as_2d(out_pts, ranks=src_ranks)
    tgt2 = _as_2d(beta.points)
    xr, yr = data_range([src2, out2, tgt2])
    canvas = SvgCanvas(640, 480, xr, yr, title=title)
    for i in range(min(src2.shape[0], 200)):
        canvas.segment(src2[i], out2[i], "#bbbbbb", width=0.5, opacity=0.5)
    canvas.scatter(src2, _SRC_COLOR, radius=2.0, opacity=0.8)
    canvas.scatter(tgt2, _TGT_COLOR, radius=2.0, opacity=0.8)
    canvas.scatter(out2, _OUT_COLOR, radius=2.0, opacity=0.8)
    canvas.legend([("source", _SRC_COLOR), ("target", _TGT_COLOR), ("output", _OUT_COLOR)])
    canvas.write(path)


def _trajectories_svg(path, traj, title: str):
    pos = traj.positions
    n_show = min(pos.shape[0], 60)
    k_steps = pos.shape[1] - 1
    if pos.shape[2] == 1:
        t = np.arange(k_steps + 1) / max(k_steps, 1)
        paths = [np.column_stack([t, pos[i, :, 0]]) for i in range(n_show)]
    else:
        paths = [pos[i, :, :2] for i in range(n_show)]
    xr, yr = data_range([p for p in paths])
    canvas = SvgCanvas(640, 480, xr, yr, title=title)
    for p in paths:
        canvas.polyline(p, _OUT_COLOR, width=0.8, opacity=0.45)
    starts = np.stack([p[0] for p in paths])
    ends = np.stack([p[-1] for p in paths])
    canvas.scatter(starts, _SRC_COLOR, radius=2.0)
    canvas.scatter(ends, _TGT_COLOR, radius=2.0)
    canvas.legend([("start", _SRC_COLOR), ("end", _TGT_COLOR)])
    canvas.write(path)


def run_experiment(config: ExperimentConfig, out_dir=None) -> dict:
    """Train per config, score against oracle/labels, write artifacts."""
    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    alpha, beta = make_dataset(config.dataset)
    cost_spec, mask = _resolve_cost(config, alpha, beta)

    scores = {"status": "ok", "config_hash": config.config_hash}
    if mask is not None:
        scores["mask"] = {
            "attribute": mask.attribute,
            "selected": [int(i) for i in mask.selected],
            "cost_weights": [float(w) for w in mask.cost_weights],
        }
    try:
        model, report = _train_flow(config, alpha, beta, cost_spec, out)
    except DivergenceError as err:
        scores["status"] = "diverged"
        scores["diverged_at"] = err.iteration
        write_json(out / "scores.json", scores)
        raise

    report.write_csv(out / "metrics.csv")
    out_m, traj = forward(model, alpha, record=True)
    cd = dynamic_cost(traj, cost_spec)

    coherence = _coherence(config, report.resolved_disc, out_m.points, beta.points)
    scores["coherence"] = coherence
    scores.update(
        _semantic_scores(config, alpha, beta, out_m.points, cost_spec, coherence["passed"])
    )
    oracle_cost = _oracle_cost(alpha, beta, cost_spec)
    scores["dynamic_cost"] = cd
    scores["oracle_cost"] = oracle_cost
    scores["cost_ratio"] = (
        cd / oracle_cost if oracle_cost is not None and oracle_cost > 1e-6 else None
    )
    write_json(out / "scores.json", scores)
    _scatter_svg(out / "scatter.svg", alpha, beta, out_m.points, config.dataset.name)
    _trajectories_svg(out / "trajectories.svg", traj, config.dataset.name + " flow")
    return scores


def run_eval(config: ExperimentConfig, out_dir=None, exact: bool = False) -> dict:
    """Score an existing checkpoint against freshly generated data."""
    out = Path(out_dir if out_dir is not None else config.out_dir)
    ckpt = out / "checkpoint.json"
    if not ckpt.is_file():
        raise ConfigError(f"no checkpoint at {ckpt}; run the train subcommand first")
    model, cost_spec, _, _ = load_checkpoint(ckpt)
    if cost_spec is None:
        cost_spec = config.cost
    alpha, beta = make_dataset(config.dataset)
    if alpha.dim != model.dim:
        raise ConfigError(
            f"checkpoint dimension {model.dim} does not match dataset dimension {alpha.dim}"
        )
    out_m, traj = forward(model, alpha, record=True)
    disc = config.disc.resolve(beta.points)
    back = exact_inverse(model, out_m) if exact else reverse(model, out_m)
    result = {
        "config_hash": config.config_hash,
        "dynamic_cost": dynamic_cost(traj, cost_spec),
        "discrepancy": discrepancy_value(disc, out_m.points, beta.points),
        "round_trip_mse": float(
            np.mean(np.sum((back.points - alpha.points) ** 2, axis=1))
        ),
        "inverse_mode": "exact" if exact else "explicit",
    }
    write_json(out / "eval.json", result)
    return result


def _pairing_loss(out_pts, targets, cost_spec) -> float:
    """Mean ground cost between flow outputs and oracle-designated targets."""
    diff = np.abs(out_pts - targets) ** cost_spec.p
    weights = cost_spec.resolve_weights(out_pts.shape[1])
    return float(np.einsum("nd,d->", diff, weights) / out_pts.shape[0])


def _flow_cost(model, alpha, cost_spec) -> float:
    _, traj = forward(model, alpha, record=True)
    return dynamic_cost(traj, cost_spec)


def _sweep_one(config, alpha, beta, cost_spec, targets, gain, seed):
    """All sweep rows for one (gain, seed): both methods, both stages."""
    cfg = dataclasses.replace(config.train, seed=seed)
    rows = []

    model0 = init(alpha.dim, config.flow_steps, config.flow_hidden, gain, Rng(seed, stream=1))
    rows.append((gain, seed, "dont", "pairing_loss", "init",
                 _pairing_loss(forward(model0, alpha).points, targets, cost_spec)))
    rows.append((gain, seed, "dont", "transport_cost", "init",
                 _flow_cost(model0, alpha, cost_spec)))
    model, _ = train(model0, alpha, beta, cost_spec, config.disc, config.schedule, cfg)
    rows.append((gain, seed, "dont", "pairing_loss", "final",
                 _pairing_loss(forward(model, alpha).points, targets, cost_spec)))
    rows.append((gain, seed, "dont", "transport_cost", "final",
                 _flow_cost(model, alpha, cost_spec)))

    base_kw = dict(
        n_steps=config.flow_steps,
        hidden=config.flow_hidden,
        gain=gain,
        disc=config.disc,
        cycle_gamma=config.sweep.baseline_gamma,
    )
    t_init, _, _ = train_cycle_baseline(alpha, beta, dataclasses.replace(cfg, iterations=0), **base_kw)
    rows.append((gain, seed, "cycle_baseline", "pairing_loss", "init",
                 _pairing_loss(forward(t_init, alpha).points, targets, cost_spec)))
    rows.append((gain, seed, "cycle_baseline", "transport_cost", "init",
                 _flow_cost(t_init, alpha, cost_spec)))
    t_fin, _, _ = train_cycle_baseline(alpha, beta, cfg, **base_kw)
    rows.append((gain, seed, "cycle_baseline", "pairing_loss", "final",
                 _pairing_loss(forward(t_fin, alpha).points, targets, cost_spec)))
    rows.append((gain, seed, "cycle_baseline", "transport_cost", "final",
                 _flow_cost(t_fin, alpha, cost_spec)))
    return rows


def run_gain_sweep(config: ExperimentConfig, out_dir=None, jobs: int = 1) -> list:
    """Gain x seed grid over both methods; writes long-format sweep.csv."""
    if config.sweep is None:
        raise ConfigError("sweep subcommand needs a [sweep] section")
    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    alpha, beta = make_dataset(config.dataset)
    cost_spec, _ = _resolve_cost(config, alpha, beta)
    oracle = ot_exact(alpha, beta, cost_spec)
    targets = oracle.paired_targets

    grid = [(g, s) for g in config.sweep.gains for s in config.sweep.seeds]
    if jobs <= 1:
        chunks = [
            _sweep_one(config, alpha, beta, cost_spec, targets, g, s) for g, s in grid
        ]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(_sweep_one, config, alpha, beta, cost_spec, targets, g, s)
                for g, s in grid
            ]
            chunks = [f.result() for f in futures]  # run-index order
    rows = [row for chunk in chunks for row in chunk]
    write_csv(
        out / "sweep.csv", ["gain", "seed", "method", "metric", "stage", "value"], rows
    )
    return rows


def run_1d_dynamics(config: ExperimentConfig, out_dir=None) -> dict:
    """Train a 1-D flow and compare per-step marginals with the geodesic."""
    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    alpha, beta = make_dataset(config.dataset)
    if alpha.dim != 1:
        raise ConfigError("dynamics subcommand needs a 1-D dataset")
    cost_spec, _ = _resolve_cost(config, alpha, beta)

    scores = {"status": "ok", "config_hash": config.config_hash}
    try:
        model, report = _train_flow(config, alpha, beta, cost_spec, out)
    except DivergenceError as err:
        scores["status"] = "diverged"
        scores["diverged_at"] = err.iteration
        write_json(out / "scores.json", scores)
        raise
    report.write_csv(out / "metrics.csv")

    out_m, traj = forward(model, alpha, record=True)
    oracle = ot_1d(alpha.points, beta.points)
    k_steps = model.n_steps
    rows = []
    deviations = []
    hists = []
    all_vals = [alpha.points[:, 0], beta.points[:, 0], out_m.points[:, 0]]
    for k in range(k_steps + 1):
        t = k / k_steps
        flow_k = traj.positions[:, k, 0]
        geo_k = mccann(oracle, alpha, t).points[:, 0]
        rows.append(
            (k, t, flow_k.mean(), flow_k.std(), geo_k.mean(), geo_k.std())
        )
        deviations.append(abs(flow_k.mean() - geo_k.mean()))
        hists.append((flow_k, geo_k))
        all_vals.extend([flow_k, geo_k])
    write_csv(
        out / "dynamics.csv",
        ["step", "t", "mean_flow", "std_flow", "mean_mccann", "std_mccann"],
        rows,
    )

    lo = min(float(v.min()) for v in all_vals)
    hi = max(float(v.max()) for v in all_vals)
    edges = np.linspace(lo, hi, config.dynamics_bins + 1)
    canvas = SvgCanvas(
        640,
        120 * (k_steps + 1) + 80,
        (lo, hi),
        (0.0, float(k_steps + 1)),
        title="per-step marginals: flow vs geodesic",
    )
    for k, (flow_k, geo_k) in enumerate(hists):
        base = float(k_steps - k)
        hf, _ = np.histogram(flow_k, bins=edges, density=True)
        hg, _ = np.histogram(geo_k, bins=edges, density=True)
        peak = max(hf.max(), hg.max(), 1e-9)
        canvas.bars(edges, 0.85 * hg / peak, _ORACLE_COLOR, opacity=0.45, y_base=base)
        canvas.bars(edges, 0.85 * hf / peak, _OUT_COLOR, opacity=0.45, y_base=base)
        canvas.text(lo, base + 0.55, "k=%d" % k)
    canvas.legend([("flow", _OUT_COLOR), ("geodesic", _ORACLE_COLOR)])
    canvas.write(out / "dynamics.svg")

    delta_m = abs(float(beta.points.mean() - alpha.points.mean()))
    scores["max_mean_deviation"] = float(max(deviations))
    scores["mean_shift"] = delta_m
    scores["dynamic_cost"] = dynamic_cost(traj, cost_spec)
    scores["oracle_cost"] = oracle.cost
    scores["cost_ratio"] = (
        scores["dynamic_cost"] / oracle.cost if oracle.cost > 1e-6 else None
    )
    coherence = _coherence(config, report.resolved_disc, out_m.points, beta.points)
    scores["coherence"] = coherence
    scores["semantic_score"] = None
    write_json(out / "scores.json", scores)
    return scores


def _expected_affine_cost(tmap, mean, cov) -> float:
    """E|x - T(x)|^2 for x ~ N(mean, cov) under the affine map T."""
    shift = mean - (tmap.target_mean + (mean - tmap.source_mean) @ tmap.matrix.T)
    lin = np.eye(2) - tmap.matrix
    return float(shift @ shift + np.trace(lin @ cov @ lin.T))


def run_illposed_demo(config: ExperimentConfig, out_dir=None) -> dict:
    """Sweep rotation angles; every map is coherent, only one is cheap."""
    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if config.dataset.name != "gaussian":
        raise ConfigError("illposed subcommand needs the gaussian dataset family")
    alpha, beta = make_dataset(config.dataset)
    sub = config.illposed
    if alpha.n < sub.subsample:
        raise ConfigError("illposed subsample exceeds dataset size")

    params = config.dataset.params
    d = alpha.dim
    mean_a = np.asarray(params.get("mean_a", np.zeros(d)), dtype=np.float64)
    mean_b = np.asarray(params.get("mean_b", np.zeros(d)), dtype=np.float64)
    cov_a = np.asarray(params.get("cov_a", np.eye(d)), dtype=np.float64)
    cov_b = np.asarray(params.get("cov_b", np.eye(d)), dtype=np.float64)

    grid = np.linspace(0.0, 2.0 * np.pi, sub.points, endpoint=False)
    rng = Rng(config.train.seed, stream=9)
    idx_x = np.sort(rng.derive(0).permutation(alpha.n)[: sub.subsample])
    idx_y = np.sort(rng.derive(1).permutation(beta.n)[: sub.subsample])
    disc = DiscrepancySpec(kind="energy").resolve(beta.points[idx_y])

    rows = []
    costs = []
    all_coherent = True
    for j, theta in enumerate(grid):
        tmap = illposed_construct((mean_a, cov_a), (mean_b, cov_b), float(theta))
        moved = tmap.apply(alpha.points)
        per_point = np.sum(np.abs(alpha.points - moved) ** 2, axis=1)
        cost = float(per_point.mean())
        band = 3.0 * float(per_point.std()) / np.sqrt(alpha.n)
        expected = _expected_affine_cost(tmap, mean_a, cov_a)
        value = discrepancy_value(disc, moved[idx_x], beta.points[idx_y])
        threshold = permutation_threshold(
            disc,
            moved[idx_x],
            beta.points[idx_y],
            sub.n_perm,
            sub.level,
            rng=Rng(config.train.seed, stream=7).derive(j),
        )
        coherent = bool(value < threshold)
        all_coherent = all_coherent and coherent
        costs.append(cost)
        rows.append(
            (theta, cost, expected, band, value, threshold, int(coherent))
        )
    write_csv(
        out / "illposed.csv",
        ["theta", "cost", "expected", "band", "discrepancy", "threshold", "coherent"],
        rows,
    )

    curve = np.column_stack([grid, np.array(costs)])
    expected_curve = np.column_stack([grid, np.array([r[2] for r in rows])])
    xr, yr = data_range([curve, expected_curve])
    canvas = SvgCanvas(640, 480, xr, yr, title="transport cost across coherent maps")
    canvas.polyline(expected_curve, _ORACLE_COLOR, width=1.5, opacity=0.9)
    canvas.polyline(curve, _OUT_COLOR, width=1.5, opacity=0.9)
    canvas.scatter(curve, _OUT_COLOR, radius=3.0)
    canvas.legend([("sampled", _OUT_COLOR), ("expected", _ORACLE_COLOR)])
    canvas.write(out / "illposed.svg")

    scores = {
        "status": "ok",
        "config_hash": config.config_hash,
        "all_coherent": all_coherent,
        "min_cost_theta": float(grid[int(np.argmin(costs))]),
        "costs": [float(c) for c in costs],
    }
    write_json(out / "scores.json", scores)
    return scores


def run_plot(config: ExperimentConfig, out_dir=None) -> list:
    """Redraw the scatter/trajectory SVGs from a saved checkpoint."""
    out = Path(out_dir if out_dir is not None else config.out_dir)
    ckpt = out / "checkpoint.json"
    if not ckpt.is_file():
        raise ConfigError(f"no checkpoint at {ckpt}; run the train subcommand first")
    model, _, _, _ = load_checkpoint(ckpt)
    alpha, beta = make_dataset(config.dataset)
    if alpha.dim != model.dim:
        raise ConfigError(
            f"checkpoint dimension {model.dim} does not match dataset dimension {alpha.dim}"
        )
    out_m, traj = forward(model, alpha, record=True)
    _scatter_svg(out / "scatter.svg", alpha, beta, out_m.points, config.dataset.name)
    _trajectories_svg(out / "trajectories.svg", traj, config.dataset.name + " flow")
    return [str(out / "scatter.svg"), str(out / "trajectories.svg")]


def oracle_for_config(config: ExperimentConfig) -> dict:
    """Ground-truth result for the config's dataset, as a JSON-able dict."""
    alpha, beta = make_dataset(config.dataset)
    cost_spec, _ = _resolve_cost(config, alpha, beta)
    if alpha.dim == 1:
        res = ot_1d(alpha.points, beta.points, p=cost_spec.p)
    else:
        res = ot_exact(alpha, beta, cost_spec)
    out = res.to_dict()
    out["dataset"] = config.dataset.name
    return out
