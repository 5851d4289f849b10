"""Shared fixtures: locate real simulation-side artifacts or synthesize
schema-conforming stand-ins (plain file writing only, no science)."""

from __future__ import annotations

import json
import math
from pathlib import Path

import pytest

ACCEPTANCE_OUT = Path(__file__).resolve().parents[2] / "acceptance_out"


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")


def _write_jsonl(path: Path, dicts):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for d in dicts:
            fh.write(json.dumps(d, sort_keys=True) + "\n")


def _synth_trajectory(path: Path, scale=1.0):
    rows = []
    for t in range(0, 101, 5):
        m = math.tanh(0.03 * t) * scale
        risk = 2.0 * (1 - m * m)
        rows.append([t, abs(m), m, 1.0, risk, 0.01, 0.1])
    _write_csv(path, ["t", "overlap_fro", "m_11", "q_11", "risk",
                      "risk_stderr", "gamma"], rows)


def _synth_ode(path: Path, cols=1):
    header = ["tau"] + [f"m_1{j+1}" for j in range(cols)] + \
        [f"q_1{j+1}" for j in range(cols)] + ["risk"]
    rows = []
    for i in range(60):
        tau = 0.05 * i
        m = math.tanh(0.6 * tau)
        rows.append([tau] + [m] * cols + [1.0] * cols + [2.0 * (1 - m * m)])
    _write_csv(path, header, rows)


def _synth_records(path: Path):
    recs = []
    for d in (128, 256, 512, 1024):
        for s in range(5):
            recs.append({
                "schema_version": 1, "kind": "sweep_record", "delta": 0.0,
                "mu": 1.5, "d": d, "seed_index": s,
                "t_eta_plus": int(7 * d**0.5) + s, "censored": False,
                "final_overlap": 0.9, "final_risk": 0.05,
                "region": "weak_recovery_sgd", "wall_time": 0.0, "error": None,
            })
    _write_jsonl(path, recs)


def _synth_fits(path: Path):
    _write_jsonl(path, [{
        "schema_version": 1, "kind": "fit", "model": "log-log",
        "slope": 0.5, "intercept": math.log(7.0), "r2": 0.99,
        "ds": [128, 256, 512, 1024],
        "medians": [7 * d**0.5 for d in (128, 256, 512, 1024)],
    }])


def _synth_theory(path: Path):
    rows = []
    for i in range(9):
        delta = -1.0 + 0.375 * i
        for j in range(9):
            mu = 0.375 * j
            if mu >= 3.0 and delta <= -1.0:
                region = "one_step"
            elif delta >= 1.5 - mu:
                region = "weak_recovery_sgd"
            elif delta >= 1.5 - mu - 0.5 and mu < 2.0:
                region = "self_interaction"
            else:
                region = "not_correlating"
            rows.append([3, delta, mu, "correlation", region, 0.0, "", ""])
    _write_csv(path, ["ell", "delta", "mu", "loss", "region", "optimal_delta",
                      "theta", "log_factor"], rows)


@pytest.fixture(scope="session")
def artifacts(tmp_path_factory):
    """Mapping of figure-kind inputs to files: real artifacts when the
    simulation side has produced them, synthetic stand-ins otherwise."""
    needed = {
        "theory": ACCEPTANCE_OUT / "theory_correlation" / "theory.csv",
        "traj_a": ACCEPTANCE_OUT / "c4" / "traj_square.csv",
        "traj_b": ACCEPTANCE_OUT / "c4" / "traj_correlation.csv",
        "records": ACCEPTANCE_OUT / "c5" / "records.jsonl",
        "fits": ACCEPTANCE_OUT / "c5" / "fits.jsonl",
        "overlay_sim": ACCEPTANCE_OUT / "c6" / "r1_d250_sim.csv",
        "overlay_ode": ACCEPTANCE_OUT / "c6" / "r1_d250_ode.csv",
        "overlay_meta": ACCEPTANCE_OUT / "c6" / "meta.json",
        "finite_sim": ACCEPTANCE_OUT / "c8" / "sim.csv",
        "finite_map": ACCEPTANCE_OUT / "c8" / "full.csv",
        "finite_ode": ACCEPTANCE_OUT / "c8" / "asym.csv",
        "finite_meta": ACCEPTANCE_OUT / "c8" / "meta.json",
    }
    if all(p.exists() for p in needed.values()):
        return {"real": True, **needed}

    root = tmp_path_factory.mktemp("synth")
    out = {"real": False}
    _synth_theory(root / "theory.csv")
    out["theory"] = root / "theory.csv"
    _synth_trajectory(root / "traj_square.csv", scale=0.2)
    _synth_trajectory(root / "traj_correlation.csv", scale=1.0)
    out["traj_a"] = root / "traj_square.csv"
    out["traj_b"] = root / "traj_correlation.csv"
    _synth_records(root / "records.jsonl")
    _synth_fits(root / "fits.jsonl")
    out["records"] = root / "records.jsonl"
    out["fits"] = root / "fits.jsonl"
    _synth_trajectory(root / "r1_d250_sim.csv")
    _synth_ode(root / "r1_d250_ode.csv", cols=2)
    out["overlay_sim"] = root / "r1_d250_sim.csv"
    out["overlay_ode"] = root / "r1_d250_ode.csv"
    (root / "meta.json").write_text(json.dumps(
        {"r1_d250": {"delta": 0.5, "mu": 0.3, "d": 250, "dtau": 0.03}}))
    out["overlay_meta"] = root / "meta.json"
    _synth_trajectory(root / "sim.csv")
    _synth_ode(root / "full.csv")
    _synth_ode(root / "asym.csv")
    out["finite_sim"] = root / "sim.csv"
    out["finite_map"] = root / "full.csv"
    out["finite_ode"] = root / "asym.csv"
    (root / "meta8.json").write_text(json.dumps({"d": 100, "dtau": 0.03}))
    out["finite_meta"] = root / "meta8.json"
    return out
