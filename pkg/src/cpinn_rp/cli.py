"""``cpinn-rp`` command line: generate, train, train-rp, eval, soft-sensor, report.

Every command reads a JSON config (``--config``, optional), applies
``--set key.path=value`` overrides, writes the resolved config next to its
outputs and exits 0 on success, 2 on config errors, 3 on data errors and 4
when training diverges.  ``CPINN_RP_THREADS`` caps BLAS worker threads.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import config as C
from . import network
from .cpinn import DIVERGED, TrainReport, hierarchical_train
from .exceptions import ConfigError, CpinnError, DataError
from .metrics import evaluate, snapshot_eval, write_report
from .rp import (load_sensors, masked_sensor_experiment, predict, save_sensors, synthetic_series,
                 train_netu_rp)
from .sampling import load_dataset, make_grid, sample, save_dataset, write_csv

log = logging.getLogger("cpinn_rp")

THREADS_ENV = "CPINN_RP_THREADS"

DATA_DIR = "data"
CKPT = {"NetU": "netu.ckpt", "NetG": "netg.ckpt", "NetU-RP": "netu_rp.ckpt", "NetG-RP": "netg_rp.ckpt"}


class Run:
    """Resolved config plus the output paths a command reads and writes."""

    def __init__(self, tree):
        self.tree = tree
        self.out = Path(tree["output_dir"])
        self.problem = C.problem_of(tree)

    @property
    def data_dir(self):
        return self.out / DATA_DIR

    def ckpt(self, role):
        return self.out / CKPT[role]

    def echo(self, command):
        self.out.mkdir(parents=True, exist_ok=True)
        C.dump(self.tree, self.out / f"config.{command}.json")

    def grid(self):
        g = self.tree["grid"]
        return make_grid(self.problem, g["nx"], g["nt"])

    def load_net(self, role):
        path = self.ckpt(role)
        if not path.exists():
            raise DataError(f"missing checkpoint {path}; run the training command first")
        return network.load(path)


# commands ----------------------------------------------------------------

def cmd_generate(run: Run, args):
    s = dict(run.tree["sampling"])
    seed = s.pop("seed")
    if run.problem.kind == "Heat1D":
        s.pop("n_interior", None)
    else:
        s.pop("n_collocation", None)
    ds = sample(run.problem, seed, **s)
    save_dataset(ds, run.data_dir)
    g = run.tree["grid"]
    manifest = {"kind": run.problem.kind, "L": run.problem.L, "T": run.problem.T, "nx": g["nx"], "nt": g["nt"]}
    (run.data_dir / "grid.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(ds.d_b)} boundary/initial rows, {len(ds.d_i)} interior rows, "
          f"{len(ds.extra_collocation)} collocation points to {run.data_dir}")
    return 0


def _write_train_outputs(run, report, name):
    report.write(run.out / f"{name}.jsonl", include_wall=True)
    if report.status == DIVERGED:
        print(f"training diverged: {report.message}", file=sys.stderr)
        return 4
    last = report.records[-1] if report.records else None
    if last is not None:
        print(f"{report.status} after {last.k} outer iterations: mse_dn={last.mse_dn:.3e} "
              f"mse_pn={last.mse_pn:.3e} total={last.total:.3e}")
    else:
        print("no training iterations run; wrote initial networks")
    return 0


def cmd_train(run: Run, args):
    ds = load_dataset(run.data_dir)
    specs = {"NetU": C.net_spec(run.tree, "NetU"), "NetG": C.net_spec(run.tree, "NetG")}
    net_u, net_g, report = hierarchical_train(run.problem, ds, specs, C.train_config(run.tree))
    network.save(net_u, run.ckpt("NetU"))
    network.save(net_g, run.ckpt("NetG"))
    return _write_train_outputs(run, report, "train_report")


def _sensors_for(run, rp_cfg, sensor_dir):
    hard = C.hard_taps(rp_cfg)
    if not hard:
        return {}
    if sensor_dir is None:
        raise DataError("hard_sensor taps need --sensors DIR")
    by_x = {round(s.x, 9): s for s in load_sensors(sensor_dir)}
    out = {}
    for i in hard:
        s = by_x.get(round(rp_cfg.tap_points[i], 9))
        if s is None:
            raise DataError(f"no sensor file for tap at x={rp_cfg.tap_points[i]:g}")
        out[i] = s
    return out


def cmd_train_rp(run: Run, args):
    net_u = run.load_net("NetU")
    net_g = run.load_net("NetG")
    ds = load_dataset(run.data_dir)
    rp_cfg = C.rp_config(run.tree)
    sensors = _sensors_for(run, rp_cfg, args.sensors)
    seed = run.tree["networks"]["NetU-RP"]["seed"]
    net_rp, net_g_rp, report = train_netu_rp(net_u, net_g, ds, run.problem, rp_cfg,
                                             C.train_config(run.tree, "rp_train"), sensors, seed)
    network.save(net_rp, run.ckpt("NetU-RP"))
    network.save(net_g_rp, run.ckpt("NetG-RP"))
    (run.out / "rp_config.json").write_text(json.dumps(rp_cfg.as_dict(), indent=2, sort_keys=True) + "\n")
    return _write_train_outputs(run, report, "rp_report")


def _field(run, args):
    """Evaluation function (x, t) -> u_hat for the requested model."""
    net_u = run.load_net("NetU")
    if args.model == "cpinn":
        return lambda x, t: network.forward(net_u, np.column_stack([x, t]))
    net_rp = run.load_net("NetU-RP")
    rp_cfg = C.rp_config(run.tree)
    sensors = _sensors_for(run, rp_cfg, getattr(args, "sensors", None))
    return lambda x, t: predict(net_rp, rp_cfg, sensors, net_u, np.column_stack([x, t]), run.problem)


def cmd_eval(run: Run, args):
    if run.problem.exact_u is None:
        raise DataError("evaluation needs the exact solution, which exists only for the default constants")
    field = _field(run, args)
    grid = run.grid()
    pred = field(grid.x, grid.t)
    results = [snapshot_eval(field, run.problem.exact_u, t, run.tree["grid"]["nx"], run.problem.L, run.problem.T)
               for t in run.tree["snapshots"]]
    results.append(evaluate(pred, run.problem.exact_u(grid.x, grid.t), f"[0,{run.problem.L:.6g}]x[0,{run.problem.T:g}]"))
    suffix = "" if args.model == "cpinn" else "_rp"
    write_report(run.out / f"eval{suffix}.csv", results)
    write_csv(run.out / f"prediction{suffix}.csv", np.column_stack([grid.x, grid.t, pred]), ("x", "t", "u_hat"))
    for r in results:
        print(f"{r.scope:>24}  rmse={r.rmse:.6e}  cc={r.cc:.7f}")
    return 0


def cmd_soft_sensor(run: Run, args):
    ss = run.tree["soft_sensor"]
    masked = ss["masked"] if args.masked is None else args.masked
    if args.sensors:
        series = load_sensors(args.sensors)
    else:
        taps = run.tree["rp"]["tap_points"]
        series = synthetic_series(run.problem, taps, ss["n_samples"], ss["noise_std"], run.tree["sampling"]["seed"])
        save_sensors(run.out / "sensors", series)
    masked_idx = None if not masked else masked - 1
    specs = {"NetU": C.net_spec(run.tree, "NetU"), "NetG": C.net_spec(run.tree, "NetG")}
    result = masked_sensor_experiment(
        run.problem, masked_idx=masked_idx, cfg=C.train_config(run.tree),
        rp_train=C.train_config(run.tree, "rp_train"), series=series, train_fraction=ss["train_fraction"],
        delay=run.tree["rp"]["delay"], seed=run.tree["sampling"]["seed"], specs=specs,
        n_boundary=run.tree["sampling"]["n_boundary"], n_collocation=ss["n_collocation"],
    )
    result.write(run.out / "soft_sensor.csv")
    for row in result.rows()[1:]:
        print("  ".join(row))
    return 0


def cmd_report(run: Run, args):
    """Per-iteration loss table (wall time dropped so reruns compare equal)."""
    written = []
    for name in ("train_report", "rp_report"):
        src = run.out / f"{name}.jsonl"
        if not src.exists():
            continue
        records = TrainReport.read(src)
        dst = run.out / f"{name}.csv"
        with open(dst, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "mse_dn", "mse_pn", "total"])
            for r in records:
                w.writerow([r["k"], repr(float(r["mse_dn"])), repr(float(r["mse_pn"])), repr(float(r["total"]))])
        written.append(dst)
        if records:
            last = records[-1]
            print(f"{name}: {len(records)} iterations, final total {last['total']:.6e}")
    if not written:
        raise DataError(f"no training reports under {run.out}")
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "train-rp": cmd_train_rp,
    "eval": cmd_eval,
    "soft-sensor": cmd_soft_sensor,
    "report": cmd_report,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="cpinn-rp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file (defaults fill anything missing)")
        p.add_argument("--kind", choices=("Heat1D", "Wave1D"), help="benchmark when no config file is given")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key, e.g. train.max_outer_iters=10")
        if name in ("train", "soft-sensor"):
            p.add_argument("--max-outer-iters", type=int)
        if name in ("train-rp", "eval", "soft-sensor"):
            p.add_argument("--sensors", help="directory with manifest.csv and per-sensor t,u files")
        if name == "eval":
            p.add_argument("--model", choices=("cpinn", "rp"), default="cpinn")
        if name == "soft-sensor":
            p.add_argument("--masked", type=int, help="1-based sensor to withhold; 0 masks none")
    return parser


def _tree_from_args(args):
    tree = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            tree = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    if args.kind:
        tree.setdefault("problem", {})["kind"] = args.kind
    for assignment in args.set:
        C.apply_override(tree, assignment)
    if args.out:
        tree["output_dir"] = args.out
    if getattr(args, "max_outer_iters", None) is not None:
        tree.setdefault("train", {})["max_outer_iters"] = args.max_outer_iters
    return C.resolve(tree)


def _thread_limit():
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1")
    return n


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        limit = _thread_limit()
        run = Run(_tree_from_args(args))
        run.echo(args.command)
        if limit is None:
            return COMMANDS[args.command](run, args)
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=limit):
            return COMMANDS[args.command](run, args)
    except CpinnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
