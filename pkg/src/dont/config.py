"""Config files for the CLI: TOML (or JSON) with a strict schema.

Unknown keys anywhere in the document are rejected so typos fail loudly
before any training starts. The effective config (after CLI overrides)
is hashed into scores.json for provenance.
"""

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover - py310 path
    import tomli as tomllib

from .costs import CostSpec
from .discrepancy import DiscrepancySpec
from .exceptions import ConfigError
from .measures import DatasetSpec, GENERATORS
from .training import LambdaSchedule, TrainConfig

_DATASET_PARAMS = {
    "gaussian": {"mean_a", "cov_a", "mean_b", "cov_b"},
    "shift_rotate": {"clusters", "radius", "center", "noise", "shift", "angle"},
    "digit_swap": {"noise"},
    "pair_1d": {"mean_a", "std_a", "mean_b", "std_b"},
}

_SCHEMA = {
    "dataset": {"name", "n", "seed", "params"},
    "flow": {"n_steps", "hidden", "gain"},
    "cost": {"p", "weights", "mask_from", "l1_strength"},
    "discrepancy": {"kind", "bandwidths", "epsilon", "max_iter", "tol", "debiased"},
    "train": {
        "iterations",
        "batch_size",
        "learning_rate",
        "beta1",
        "beta2",
        "adam_eps",
        "seed",
        "eval_every",
        "lambda0",
        "lambda_floor",
    },
    "output": {"dir"},
    "sweep": {"gains", "seeds", "baseline_gamma"},
    "dynamics": {"bins"},
    "illposed": {"points", "subsample", "n_perm", "level"},
}
_TOP_SCALARS = {"seeds"}


@dataclass
class SweepSection:
    gains: list
    seeds: list
    baseline_gamma: float = 10.0


@dataclass
class IllposedSection:
    points: int = 12
    subsample: int = 256
    n_perm: int = 200
    level: float = 0.99


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec
    flow_steps: int
    flow_hidden: int
    flow_gain: float
    cost: CostSpec
    mask_from: Optional[str]
    l1_strength: float
    disc: DiscrepancySpec
    train: TrainConfig
    schedule: LambdaSchedule
    out_dir: str
    seeds: list
    sweep: Optional[SweepSection]
    dynamics_bins: int
    illposed: IllposedSection
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def config_hash(self) -> str:
        # the output directory is plumbing, not science: exclude it so the
        # same experiment rendered into two directories hashes identically
        doc = {k: v for k, v in self.raw.items() if k != "output"}
        canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _require(table: dict, section: str, allowed: set):
    if not isinstance(table, dict):
        raise ConfigError(f"section [{section}] must be a table")
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(
            f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}"
        )


def _typed(table: dict, key: str, types, default, section: str):
    if key not in table:
        return default
    val = table[key]
    if types is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if types is int and isinstance(val, bool):
        raise ConfigError(f"[{section}] {key} must be an integer")
    if not isinstance(val, types):
        raise ConfigError(f"[{section}] {key} has the wrong type")
    return val


def _int_list(val, what: str):
    if not isinstance(val, list) or not all(
        isinstance(v, int) and not isinstance(v, bool) for v in val
    ):
        raise ConfigError(f"{what} must be a list of integers")
    return list(val)


def _float_list(val, what: str):
    if not isinstance(val, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in val
    ):
        raise ConfigError(f"{what} must be a list of numbers")
    return [float(v) for v in val]


def parse_config(doc: dict) -> ExperimentConfig:
    """Validate a parsed document and build the typed config."""
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a table")
    unknown = set(doc) - set(_SCHEMA) - _TOP_SCALARS
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")

    if "dataset" not in doc:
        raise ConfigError("missing required [dataset] section")
    ds = doc["dataset"]
    _require(ds, "dataset", _SCHEMA["dataset"])
    name = _typed(ds, "name", str, None, "dataset")
    if name is None:
        raise ConfigError("[dataset] name is required")
    if name not in GENERATORS:
        raise ConfigError(
            f"unknown dataset '{name}'; choose from {sorted(GENERATORS)}"
        )
    n = _typed(ds, "n", int, None, "dataset")
    if n is None:
        raise ConfigError("[dataset] n is required")
    params = ds.get("params", {})
    _require(params, "dataset.params", _DATASET_PARAMS[name])
    try:
        dataset = DatasetSpec(name, n, _typed(ds, "seed", int, 0, "dataset"), dict(params))
    except Exception as err:
        raise ConfigError(f"invalid dataset: {err}") from None

    fl = doc.get("flow", {})
    _require(fl, "flow", _SCHEMA["flow"])
    flow_steps = _typed(fl, "n_steps", int, 8, "flow")
    flow_hidden = _typed(fl, "hidden", int, 64, "flow")
    flow_gain = _typed(fl, "gain", float, 0.01, "flow")
    if flow_steps < 1 or flow_hidden < 1 or flow_gain <= 0:
        raise ConfigError("[flow] n_steps, hidden must be >= 1 and gain > 0")

    co = doc.get("cost", {})
    _require(co, "cost", _SCHEMA["cost"])
    weights = co.get("weights")
    mask_from = _typed(co, "mask_from", str, None, "cost")
    if weights is not None and mask_from is not None:
        raise ConfigError("[cost] weights and mask_from are mutually exclusive")
    if weights is not None:
        weights = tuple(_float_list(weights, "[cost] weights"))
    try:
        cost = CostSpec(p=_typed(co, "p", float, 2.0, "cost"), weights=weights)
    except Exception as err:
        raise ConfigError(f"invalid cost: {err}") from None
    l1_strength = _typed(co, "l1_strength", float, 0.1, "cost")

    di = doc.get("discrepancy", {})
    _require(di, "discrepancy", _SCHEMA["discrepancy"])
    bandwidths = di.get("bandwidths")
    if bandwidths is not None:
        bandwidths = tuple(_float_list(bandwidths, "[discrepancy] bandwidths"))
    try:
        disc = DiscrepancySpec(
            kind=_typed(di, "kind", str, "mmd", "discrepancy"),
            bandwidths=bandwidths,
            epsilon=_typed(di, "epsilon", float, None, "discrepancy"),
            max_iter=_typed(di, "max_iter", int, 500, "discrepancy"),
            tol=_typed(di, "tol", float, 1e-9, "discrepancy"),
            debiased=_typed(di, "debiased", bool, True, "discrepancy"),
        )
    except Exception as err:
        raise ConfigError(f"invalid discrepancy: {err}") from None

    tr = doc.get("train", {})
    _require(tr, "train", _SCHEMA["train"])
    try:
        train = TrainConfig(
            iterations=_typed(tr, "iterations", int, 5000, "train"),
            batch_size=_typed(tr, "batch_size", int, 256, "train"),
            learning_rate=_typed(tr, "learning_rate", float, 1e-3, "train"),
            beta1=_typed(tr, "beta1", float, 0.5, "train"),
            beta2=_typed(tr, "beta2", float, 0.999, "train"),
            adam_eps=_typed(tr, "adam_eps", float, 1e-8, "train"),
            seed=_typed(tr, "seed", int, 0, "train"),
            eval_every=_typed(tr, "eval_every", int, 250, "train"),
        )
        schedule = LambdaSchedule(
            lambda0=_typed(tr, "lambda0", float, 1.0, "train"),
            floor=_typed(tr, "lambda_floor", float, 1e-3, "train"),
        )
    except Exception as err:
        raise ConfigError(f"invalid train section: {err}") from None

    out = doc.get("output", {})
    _require(out, "output", _SCHEMA["output"])
    out_dir = _typed(out, "dir", str, "out", "output")

    seeds = _int_list(doc.get("seeds", []), "seeds")

    sweep = None
    if "sweep" in doc:
        sw = doc["sweep"]
        _require(sw, "sweep", _SCHEMA["sweep"])
        gains = _float_list(sw.get("gains", []), "[sweep] gains")
        sweep_seeds = _int_list(sw.get("seeds", seeds), "[sweep] seeds")
        if len(gains) < 2:
            raise ConfigError("[sweep] needs at least 2 gains")
        if len(sweep_seeds) < 3:
            raise ConfigError("[sweep] needs at least 3 seeds")
        sweep = SweepSection(
            gains=gains,
            seeds=sweep_seeds,
            baseline_gamma=_typed(sw, "baseline_gamma", float, 10.0, "sweep"),
        )

    dy = doc.get("dynamics", {})
    _require(dy, "dynamics", _SCHEMA["dynamics"])
    dynamics_bins = _typed(dy, "bins", int, 24, "dynamics")

    il = doc.get("illposed", {})
    _require(il, "illposed", _SCHEMA["illposed"])
    illposed = IllposedSection(
        points=_typed(il, "points", int, 12, "illposed"),
        subsample=_typed(il, "subsample", int, 256, "illposed"),
        n_perm=_typed(il, "n_perm", int, 200, "illposed"),
        level=_typed(il, "level", float, 0.99, "illposed"),
    )
    if illposed.points < 2 or illposed.subsample < 2:
        raise ConfigError("[illposed] grid or subsample is too small")

    return ExperimentConfig(
        dataset=dataset,
        flow_steps=flow_steps,
        flow_hidden=flow_hidden,
        flow_gain=flow_gain,
        cost=cost,
        mask_from=mask_from,
        l1_strength=l1_strength,
        disc=disc,
        train=train,
        schedule=schedule,
        out_dir=out_dir,
        seeds=seeds,
        sweep=sweep,
        dynamics_bins=dynamics_bins,
        illposed=illposed,
        raw=doc,
    )


def load_config(path, seed: Optional[int] = None, out: Optional[str] = None) -> ExperimentConfig:
    """Read TOML (default) or JSON (.json) and apply CLI overrides."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        if p.suffix.lower() == ".json":
            doc = json.loads(p.read_text())
        else:
            with open(p, "rb") as fh:
                doc = tomllib.load(fh)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as err:
        raise ConfigError(f"cannot parse {p.name}: {err}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a table")
    if seed is not None:
        doc.setdefault("dataset", {})["seed"] = seed
        doc.setdefault("train", {})["seed"] = seed
    if out is not None:
        doc.setdefault("output", {})["dir"] = out
    return parse_config(doc)
