"""Experiment configuration: a JSON tree validated against ``schema.json``.

Missing keys are filled from per-benchmark defaults; :func:`resolve` returns
the fully populated tree that every command echoes next to its outputs.
"""

from __future__ import annotations

import copy
import json
from dataclasses import fields
from importlib import resources
from pathlib import Path

import jsonschema

from .cpinn import TrainConfig
from .exceptions import ConfigError
from .network import NetSpec
from .pde import make_problem
from .rp import HARD, RpConfig, equispaced_taps

# Heat wants many short alternations (long phases let NetU and NetG settle
# on a wrong split of the dynamics); the wave problem does best with long
# phases.  Both were picked from reproduced runs.
TRAIN_DEFAULTS = {
    "Heat1D": {"max_outer_iters": 2000, "inner_iters_u": 10, "inner_iters_g": 10, "tol_loss": 1e-12, "tol_stall": 1e-12},
    "Wave1D": {"max_outer_iters": 50, "inner_iters_u": 500, "inner_iters_g": 500, "tol_loss": 1e-6, "tol_stall": 1e-8},
}
RP_TRAIN_DEFAULTS = {
    "Heat1D": {"max_outer_iters": 200, "inner_iters_u": 10, "inner_iters_g": 10, "tol_loss": 1e-12, "tol_stall": 1e-12},
    "Wave1D": {"max_outer_iters": 10, "inner_iters_u": 500, "inner_iters_g": 500, "tol_loss": 1e-6, "tol_stall": 1e-8},
}
SNAPSHOTS = {"Heat1D": [3.0, 7.0], "Wave1D": [2.0, 4.0]}
SAMPLING = {
    "Heat1D": {"seed": 0, "n_boundary": 130, "n_collocation": 20, "noise_std": 0.0},
    "Wave1D": {"seed": 0, "n_boundary": 170, "n_interior": 40, "noise_std": 0.0},
}


def _schema():
    return json.loads(resources.files("cpinn_rp").joinpath("schema.json").read_text())


def _train_dict(cfg: TrainConfig):
    return {f.name: getattr(cfg, f.name) for f in fields(TrainConfig)}


def defaults(kind="Heat1D"):
    if kind not in TRAIN_DEFAULTS:
        raise ConfigError(f"unknown problem kind {kind!r}; expected one of {tuple(TRAIN_DEFAULTS)}")
    problem = make_problem(kind)
    return {
        "problem": {"kind": kind, "a": 1.0, "L": problem.L, "T": problem.T,
                    "stationary_source": not problem.source_time_dependent},
        "networks": {
            role: {"hidden_layers": spec.hidden_layers, "hidden_width": spec.hidden_width, "seed": spec.seed}
            for role, spec in (("NetU", NetSpec.default("NetU", 0)), ("NetG", NetSpec.default("NetG", 1)),
                               ("NetU-RP", NetSpec.default("NetU-RP", 2)))
        },
        "train": _train_dict(TrainConfig(**TRAIN_DEFAULTS[kind])),
        "rp_train": _train_dict(TrainConfig(**RP_TRAIN_DEFAULTS[kind])),
        "rp": {"tap_points": list(equispaced_taps(problem.L)), "delay": None, "sensor_availability": None, "depth": 1},
        "sampling": dict(SAMPLING[kind]),
        "grid": {"nx": 201, "nt": 201},
        "snapshots": list(SNAPSHOTS[kind]),
        "soft_sensor": {"n_samples": 4096, "train_fraction": 0.01, "masked": 4, "n_collocation": 100, "noise_std": 0.0},
        "output_dir": "out",
    }


def _merge(base, over):
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def validate(tree):
    try:
        jsonschema.validate(tree, _schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config {where}: {exc.message}") from None


def resolve(tree=None):
    """Validate a (partial) config tree and fill every default."""
    tree = tree or {}
    validate(tree)
    kind = tree.get("problem", {}).get("kind", "Heat1D")
    full = _merge(defaults(kind), tree)
    validate(full)
    # build the typed objects once so bad combinations fail here, not mid-run
    problem_of(full)
    train_config(full)
    train_config(full, "rp_train")
    rp_config(full)
    return full


def load(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        tree = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return resolve(tree)


def dump(tree, path):
    Path(path).write_text(json.dumps(tree, indent=2, sort_keys=True) + "\n")


def apply_override(tree, assignment):
    """Apply ``a.b.c=value`` (value parsed as JSON, else taken as a string)."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} needs the form key.path=value")
    key, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = tree
    parts = key.strip().split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key}: {p} is not a section")
    node[parts[-1]] = value
    return tree


# typed views -------------------------------------------------------------

def problem_of(tree):
    p = tree["problem"]
    return make_problem(p["kind"], p["a"], p["L"], p["T"], p.get("stationary_source"))


def net_spec(tree, role, input_dim=2):
    n = tree["networks"][role]
    return NetSpec(role, n["hidden_layers"], n["hidden_width"], input_dim, n["seed"])


def train_config(tree, section="train"):
    return TrainConfig(**tree[section])


def rp_config(tree, grid_dt=None):
    r = tree["rp"]
    problem = problem_of(tree)
    delay = r["delay"]
    if delay is None:
        nt = tree["grid"]["nt"]
        delay = grid_dt if grid_dt is not None else problem.T / (nt - 1)
    cfg = RpConfig(tuple(r["tap_points"]), delay, tuple(r["sensor_availability"] or ()), r["depth"])
    cfg.check(problem)
    return cfg


def hard_taps(rp_cfg):
    return [i for i, flag in enumerate(rp_cfg.sensor_availability) if flag == HARD]
