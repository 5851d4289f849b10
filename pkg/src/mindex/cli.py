"""Command-line entry point: simulate | ode | sweep | theory.

Configs are flat ``key = value`` text files with dotted keys (two levels max),
overridable with repeated ``--set KEY=VALUE`` flags. All real numbers are
serialized with 17 significant digits so outputs round-trip exactly; manifests
carry the config hash and timestamps, wall times go to a ``.timings`` sidecar so
data files stay byte-identical across reruns.

Exit codes: 0 success, 1 runtime failure, 2 config error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .activations import ActivationSpec, erf_scaled, hermite, tanh_act, tanh_of_product
from .engine import (
    TrainConfig,
    init_student,
    orthonormal_teacher,
    run,
    student_from_overlaps,
)
from .experiments import SweepSpec, classify_region, fit_scaling, optimal_delta, \
    predicted_time_exponent, run_sweep, OutsideRegion
from .ode import ScalingRegime, SufficientStats, glm_stats, integrate, \
    integrate_full_process
from .streams import stream

SCHEMA_VERSION = 1
FLOAT_FMT = "%.17g"


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Config parsing


def parse_config_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or key.count(".") > 1:
            raise ConfigError(f"{source}:{lineno}: bad key {key!r} (max two levels)")
        out[key] = value
    return out


def load_config(path, overrides) -> dict:
    config = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {path}")
        config.update(parse_config_text(p.read_text(), str(path)))
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set needs KEY=VALUE, got {item!r}")
        key, value = (part.strip() for part in item.split("=", 1))
        config[key] = value
    return config


def config_hash(config: dict) -> str:
    blob = "\n".join(f"{k}={config[k]}" for k in sorted(config))
    return hashlib.sha256(blob.encode()).hexdigest()


class ConfigView:
    """Typed access with key-level diagnostics."""

    def __init__(self, data: dict):
        self.data = dict(data)
        self.used = set()

    def _get(self, key, default):
        self.used.add(key)
        if key in self.data:
            return self.data[key]
        if default is _REQUIRED:
            raise ConfigError(f"missing required config key {key!r}")
        return default

    def str(self, key, default=None):
        val = self._get(key, default)
        return val if val is None else str(val)

    def float(self, key, default=None):
        val = self._get(key, default)
        if val is None:
            return None
        try:
            return float(val)
        except (TypeError, ValueError):
            raise ConfigError(f"config key {key!r}: expected a number, got {val!r}")

    def int(self, key, default=None):
        val = self._get(key, default)
        if val is None:
            return None
        try:
            return int(float(val))
        except (TypeError, ValueError):
            raise ConfigError(f"config key {key!r}: expected an integer, got {val!r}")

    def bool(self, key, default=False):
        val = self._get(key, default)
        if isinstance(val, bool):
            return val
        if str(val).lower() in ("1", "true", "yes", "on"):
            return True
        if str(val).lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"config key {key!r}: expected a boolean, got {val!r}")

    def floats(self, key, default=None):
        val = self._get(key, default)
        if val is None:
            return None
        if isinstance(val, (list, tuple)):
            return tuple(float(v) for v in val)
        try:
            return tuple(float(v) for v in str(val).split(",") if v.strip())
        except ValueError:
            raise ConfigError(f"config key {key!r}: expected comma-separated numbers")


class _Required:
    pass


_REQUIRED = _Required()


def activation_from(view: ConfigView) -> ActivationSpec:
    kind = view.str("activation.kind", "hermite")
    if kind == "hermite":
        return hermite(view.int("activation.degree", 2))
    if kind == "erf_scaled":
        return erf_scaled()
    if kind == "tanh":
        return tanh_act()
    if kind == "tanh_of_product":
        return tanh_of_product(view.int("activation.degree", 3))
    raise ConfigError(f"unknown activation.kind {kind!r}")


def regime_from(view: ConfigView) -> ScalingRegime:
    try:
        return ScalingRegime(
            gamma0=view.float("regime.gamma0", 1.0),
            delta=view.float("regime.delta", _REQUIRED),
            n0=view.float("regime.n0", 1.0),
            mu=view.float("regime.mu", _REQUIRED),
            d=view.int("regime.d", _REQUIRED),
        )
    except ValueError as exc:
        raise ConfigError(f"regime: {exc}")


def resolve_seed(args, view: ConfigView) -> int:
    if args.seed is not None:
        return args.seed
    if "seed" in view.data:
        return view.int("seed")
    env = os.environ.get("MINDEX_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"MINDEX_SEED must be an integer, got {env!r}")
    return 0


# ---------------------------------------------------------------------------
# Serialization


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return FLOAT_FMT % value
    return str(value)


def write_csv(path: Path, header: list, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def write_manifest(path: Path, subcommand: str, config: dict, seed: int,
                   outputs: list, started: float, extra: dict = None) -> None:
    lines = {
        "artifact_version": __version__,
        "subcommand": subcommand,
        "config_hash": config_hash(config),
        "master_seed": str(seed),
        "schema_version": str(SCHEMA_VERSION),
        "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(started)),
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
        "outputs": ";".join(str(o) for o in outputs),
    }
    for key, value in (extra or {}).items():
        lines[key] = fmt(value)
    with open(path, "w") as fh:
        for key in sorted(lines):
            fh.write(f"{key}={lines[key]}\n")


def write_timings(path: Path, timings: dict) -> None:
    with open(path, "w") as fh:
        for key in sorted(timings):
            fh.write(f"{key}={fmt(timings[key])}\n")


# ---------------------------------------------------------------------------
# Subcommands


def cmd_simulate(args) -> int:
    view = ConfigView(load_config(args.config, args.set))
    act = activation_from(view)
    regime = regime_from(view)
    seed = resolve_seed(args, view)
    p = view.int("model.p", 1)
    k = view.int("model.k", 1)
    noise_var = view.float("noise.var", 0.0)
    try:
        config = TrainConfig(
            loss=view.str("train.loss", "square"),
            update=view.str("train.update", "projected"),
            regime=regime,
            t_max=view.int("train.t_max", 1000),
            eta=view.float("train.eta", 0.5),
            init=view.str("train.init", "cold"),
            record_stride=view.int("train.record_stride", 1),
            seed=seed,
            run_index=view.int("train.run_index", 0),
            adaptive=view.bool("train.adaptive", False),
            switch_fraction=view.float("train.switch_fraction", 0.6),
            lr_decay=view.float("train.lr_decay", 0.995),
            test_risk=view.str("train.test_risk", "analytic"),
            engine=view.str("train.engine", "auto"),
        )
    except ValueError as exc:
        raise ConfigError(f"train: {exc}")
    started = time.time()
    teacher = orthonormal_teacher(k, regime.d, act, noise_var)
    rng = stream(seed, config.run_index, 2**61)
    student = init_student(p, regime.d, config.init, teacher, rng, act)
    traj = run(teacher, student, config)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "trajectory.csv"
    pairs = traj.M.shape[1:] if traj.M.size else (0, 0)
    header = ["t", "overlap_fro"]
    header += [f"m_{j+1}{r+1}" for j in range(pairs[0]) for r in range(pairs[1])]
    header += [f"q_{j+1}{j+1}" for j in range(p)]
    header += ["risk", "risk_stderr", "gamma"]
    rows = []
    for i in range(len(traj.t)):
        row = [traj.t[i], traj.overlap_fro[i]]
        row += list(traj.M[i].ravel()) if traj.M.size else []
        row += list(traj.q_diag[i])
        row += [traj.risk[i], traj.risk_stderr[i], traj.gamma[i]]
        rows.append(row)
    write_csv(csv_path, header, rows)
    summary_path = out / "summary.txt"
    with open(summary_path, "w") as fh:
        fh.write(f"t_eta_plus={'' if traj.t_eta_plus is None else traj.t_eta_plus}\n")
        fh.write(f"censored={1 if traj.censored else 0}\n")
        fh.write(f"samples_used={traj.samples_used}\n")
    write_timings(out / "trajectory.timings", {"wall_time": traj.wall_time})
    write_manifest(out / "manifest.txt", "simulate", view.data, seed,
                   [csv_path, summary_path], started,
                   extra={"d": regime.d, "n_b": regime.n_b, "gamma": regime.gamma})
    return 0


def _initial_stats(view: ConfigView, act: ActivationSpec, p: int, k: int) -> SufficientStats:
    m0 = view.floats("init.m0", "0.0")
    if len(m0) == 1 and p == k == 1:
        return glm_stats(m0[0], act, q=view.float("init.q", 1.0))
    if len(m0) != p * k:
        raise ConfigError(f"init.m0 needs {p * k} comma-separated entries")
    M = np.array(m0).reshape(p, k)
    q = view.floats("init.q", None)
    if q is None:
        Q = np.eye(p)
    elif len(q) == p * p:
        Q = np.array(q).reshape(p, p)
    else:
        raise ConfigError(f"init.q needs {p * p} entries")
    return SufficientStats(Q=Q, M=M, P=np.eye(k), a=np.ones(p), a_star=np.ones(k), act=act)


def cmd_ode(args) -> int:
    view = ConfigView(load_config(args.config, args.set))
    act = activation_from(view)
    regime = regime_from(view)
    seed = resolve_seed(args, view)
    p = view.int("model.p", 1)
    k = view.int("model.k", 1)
    noise_var = view.float("noise.var", 0.0)
    mode = view.str("ode.mode", "asymptotic")
    stride = view.int("ode.record_stride", 1)
    stats0 = _initial_stats(view, act, p, k)
    started = time.time()
    t0 = time.perf_counter()
    if mode == "asymptotic":
        traj = integrate(
            stats0, regime, noise_var,
            tau_max=view.float("ode.tau_max", 5.0),
            method=view.str("ode.method", "rk4"),
            step=view.float("ode.step", None),
            record_stride=stride,
        )
        if not regime.flag_population and not regime.flag_hd_noise:
            print("warning: no dynamical term active; emitting frozen dynamics",
                  file=sys.stderr)
    elif mode == "full_process":
        steps = view.int("ode.steps", None)
        if steps is None:
            steps = max(1, int(round(view.float("ode.tau_max", 5.0) / regime.dtau)))
        traj = integrate_full_process(stats0, regime, noise_var, steps, stride)
    else:
        raise ConfigError(f"unknown ode.mode {mode!r}")
    wall = time.perf_counter() - t0

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "ode.csv"
    header = ["tau"]
    header += [f"m_{j+1}{r+1}" for j in range(p) for r in range(k)]
    header += [f"q_{j+1}{l+1}" for j in range(p) for l in range(p)]
    header += ["risk"]
    rows = []
    for i in range(len(traj.taus)):
        rows.append([traj.taus[i], *traj.Ms[i].ravel(), *traj.Qs[i].ravel(), traj.risks[i]])
    write_csv(csv_path, header, rows)
    write_timings(out / "ode.timings", {"wall_time": wall})
    write_manifest(out / "manifest.txt", "ode", view.data, seed, [csv_path], started,
                   extra={"d": regime.d, "n_b": regime.n_b, "gamma": regime.gamma})
    return 0


def _sweep_record_key(rec: dict) -> tuple:
    return (rec["d"], rec["delta"], rec["mu"], rec["seed_index"])


def cmd_sweep(args) -> int:
    view = ConfigView(load_config(args.config, args.set))
    act = activation_from(view)
    seed = resolve_seed(args, view)
    try:
        spec = SweepSpec(
            activation=act,
            loss=view.str("sweep.loss", "square"),
            update=view.str("sweep.update", "projected"),
            deltas=view.floats("sweep.deltas", _REQUIRED),
            mus=view.floats("sweep.mus", _REQUIRED),
            ds=tuple(int(v) for v in view.floats("sweep.ds", _REQUIRED)),
            seeds_per_cell=view.int("sweep.seeds", 5),
            gamma0=view.float("regime.gamma0", 1.0),
            n0=view.float("regime.n0", 1.0),
            noise_var=view.float("noise.var", 0.0),
            eta=view.float("sweep.eta", 0.5),
            init=view.str("sweep.init", "cold"),
            t_max_rule=view.str("sweep.t_max_rule", None),
            master_seed=seed,
            engine=view.str("sweep.engine", "auto"),
            ell=view.int("sweep.ell", None),
        )
    except ValueError as exc:
        raise ConfigError(f"sweep: {exc}")
    started = time.time()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records_path = out / "records.jsonl"

    done = set()
    existing = []
    if args.resume and records_path.exists():
        for line in records_path.read_text().splitlines():
            rec = json.loads(line)
            done.add(_sweep_record_key(rec))
            existing.append(rec)

    t0 = time.perf_counter()
    records = run_sweep_filtered(spec, args.jobs, done)
    wall = time.perf_counter() - t0

    dicts = existing + [record_to_dict(r) for r in records]
    dicts.sort(key=_sweep_record_key)
    with open(records_path, "w") as fh:
        for rec in dicts:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")

    fits_path = out / "fits.jsonl"
    from .experiments import SweepRecord

    recs = [dict_to_record(r) for r in dicts]
    fits = []
    for model in ("log-log", "lin-log"):
        try:
            fit = fit_scaling(recs, model)
            fits.append({
                "schema_version": SCHEMA_VERSION, "kind": "fit", "model": model,
                "slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2,
                "ds": list(fit.ds), "medians": list(fit.medians),
            })
        except ValueError:
            pass
    with open(fits_path, "w") as fh:
        for fit in fits:
            fh.write(json.dumps(fit, sort_keys=True) + "\n")

    write_timings(out / "sweep.timings", {"wall_time": wall})
    write_manifest(out / "manifest.txt", "sweep", view.data, seed,
                   [records_path, fits_path], started)
    failures = [r for r in dicts if r.get("error")]
    if failures and len(failures) == len(dicts):
        print("all sweep cells failed", file=sys.stderr)
        return 1
    return 0


def run_sweep_filtered(spec: SweepSpec, jobs, done: set):
    if not done:
        return run_sweep(spec, jobs or 1)
    from .experiments import run_cell

    tasks = [
        (delta, mu, d, s)
        for (delta, mu, d) in spec.cells()
        for s in range(spec.seeds_per_cell)
        if (d, delta, mu, s) not in done
    ]
    return [run_cell(spec, *task) for task in tasks]


def record_to_dict(rec) -> dict:
    out = asdict(rec)
    # wall times go to the .timings sidecar; data files must be byte-identical
    # across reruns with the same seed
    out["wall_time"] = 0.0
    out["schema_version"] = SCHEMA_VERSION
    out["kind"] = "sweep_record"
    return out


def dict_to_record(data: dict):
    from .experiments import SweepRecord

    fields = {k: data[k] for k in (
        "delta", "mu", "d", "seed_index", "t_eta_plus", "censored",
        "final_overlap", "final_risk", "region", "wall_time",
    )}
    fields["error"] = data.get("error")
    return SweepRecord(**fields)


def _parse_grid(text: str) -> np.ndarray:
    try:
        lo, hi, num = text.split(":")
        return np.linspace(float(lo), float(hi), int(num))
    except ValueError:
        raise ConfigError(f"grid spec must be lo:hi:n, got {text!r}")


def cmd_theory(args) -> int:
    if args.ell < 1:
        raise ConfigError("--ell must be >= 1")
    loss = args.loss
    if args.grid:
        deltas = _parse_grid(args.delta_grid)
        mus = _parse_grid(args.mu_grid)
    else:
        if args.delta is None or args.mu is None:
            raise ConfigError("need --delta and --mu (or --grid)")
        deltas = np.array([args.delta])
        mus = np.array([args.mu])
    header = ["ell", "delta", "mu", "loss", "region", "optimal_delta", "theta", "log_factor"]
    rows = []
    for delta in deltas:
        for mu in mus:
            region = classify_region(args.ell, float(delta), float(mu), loss)
            try:
                theta, logf = predicted_time_exponent(args.ell, float(delta), float(mu), loss)
                theta_s, logf_s = theta, 1 if logf else 0
            except OutsideRegion:
                theta_s, logf_s = "", ""
            rows.append([args.ell, float(delta), float(mu), loss, region,
                         optimal_delta(args.ell, float(mu), loss), theta_s, logf_s])
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "theory.csv", header, rows)
        write_manifest(out / "manifest.txt", "theory", {
            "ell": str(args.ell), "loss": loss,
            "delta_grid": args.delta_grid or "", "mu_grid": args.mu_grid or "",
        }, 0, [out / "theory.csv"], time.time())
    else:
        print(",".join(header))
        for row in rows:
            print(",".join(fmt(v) for v in row))
    return 0


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mindex")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", default=None)
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
        sp.add_argument("--out", default="out")
        sp.add_argument("--jobs", type=int, default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--resume", action="store_true")

    for name in ("simulate", "ode", "sweep"):
        common(sub.add_parser(name))
    th = sub.add_parser("theory")
    th.add_argument("--ell", type=int, required=True)
    th.add_argument("--delta", type=float, default=None)
    th.add_argument("--mu", type=float, default=None)
    th.add_argument("--loss", default="square", choices=["square", "correlation"])
    th.add_argument("--grid", action="store_true")
    th.add_argument("--delta-grid", default="-1:2:13")
    th.add_argument("--mu-grid", default="0:3:13")
    th.add_argument("--out", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "simulate": cmd_simulate,
        "ode": cmd_ode,
        "sweep": cmd_sweep,
        "theory": cmd_theory,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
