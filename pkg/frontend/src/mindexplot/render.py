"""Figure rendering from simulation output files.

:func:`render` is a pure function from a :class:`FigureSpec` plus the files it
references to a matplotlib figure. All quantitative content (trajectories,
fitted slopes, region labels) comes from the input files; this module only
draws.
"""

from __future__ import annotations

import glob as globlib
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import (  # noqa: E402
    SchemaError,
    read_csv,
    read_jsonl,
    read_theory_csv,
    require_columns,
    require_keys,
)

KINDS = ("phase_diagram", "trajectories", "ode_overlay", "scaling_fit", "finite_d")

REGION_COLORS = {
    "not_correlating": "#b0b0b0",
    "self_interaction": "#e4572e",
    "weak_recovery_sgd": "#4c9f70",
    "polylog": "#a1d99b",
    "one_step": "#3b6fb6",
    "dynamics_undefined": "#f0e5d8",
    "critical_line_unaddressed": "#f2c14e",
}


@dataclass
class FigureSpec:
    """Declarative description of one figure.

    ``inputs`` maps a role name (depending on ``kind``) to a list of file
    globs; ``options`` holds styling/axis choices. ``x_scale`` entries in
    options rescale the step axis of simulation files (step index times a
    per-file factor), so ODE and simulation curves can share an axis without
    this package recomputing anything.
    """

    kind: str
    inputs: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    out: str | None = None
    format: str = "png"
    dpi: int = 120
    title: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(
                f"unknown figure kind {self.kind!r}; expected one of {KINDS}"
            )


def _expand(spec: FigureSpec, role: str, required: bool = True) -> list[Path]:
    patterns = spec.inputs.get(role, [])
    if isinstance(patterns, (str, Path)):
        patterns = [patterns]
    paths: list[Path] = []
    for pat in patterns:
        hits = sorted(globlib.glob(str(pat)))
        if not hits and Path(pat).exists():
            hits = [str(pat)]
        paths.extend(Path(h) for h in hits)
    if required and not paths:
        raise SchemaError(
            f"figure kind {spec.kind!r}: no files matched for input role {role!r}"
        )
    return paths


def _x_scale(spec: FigureSpec, path: Path) -> float:
    scales = spec.options.get("x_scale", 1.0)
    if isinstance(scales, dict):
        return float(scales.get(path.name, scales.get(str(path), 1.0)))
    return float(scales)


def _label(path: Path) -> str:
    return path.stem


# ---------------------------------------------------------------------------
# Kind-specific drawing


def _draw_phase_diagram(spec: FigureSpec, ax) -> dict:
    meta_panels = []
    paths = _expand(spec, "theory")
    for path in paths:
        table = read_theory_csv(path)
        mus = np.unique(table["mu"])
        deltas = np.unique(table["delta"])
        grid = np.empty((len(deltas), len(mus)), dtype=object)
        lookup = {}
        for dlt, mu, region in zip(table["delta"], table["mu"], table["region"]):
            i = int(np.argmin(np.abs(deltas - dlt)))
            j = int(np.argmin(np.abs(mus - mu)))
            grid[i, j] = region
            lookup[(i, j)] = region
        if any(v is None for v in grid.ravel()):
            raise SchemaError(f"{path}: (delta, mu) grid is not complete")
        color_idx = {name: k for k, name in enumerate(REGION_COLORS)}
        img = np.vectorize(lambda r: color_idx.get(r, len(color_idx)))(grid)
        cmap = matplotlib.colors.ListedColormap(
            list(REGION_COLORS.values()) + ["#ffffff"]
        )
        ax.pcolormesh(mus, deltas, img, cmap=cmap, vmin=0,
                      vmax=len(color_idx), shading="nearest")
        meta_panels.append({
            "file": str(path),
            "mus": mus,
            "deltas": deltas,
            "grid": grid,
            "loss": table["loss"][0] if table["loss"] else "",
        })
    present = sorted({r for panel in meta_panels for r in panel["grid"].ravel()})
    handles = [plt.Rectangle((0, 0), 1, 1, color=REGION_COLORS.get(r, "#ffffff"))
               for r in present]
    ax.legend(handles, present, loc="upper right", fontsize=7)
    ax.set_xlabel("batch-size exponent mu")
    ax.set_ylabel("learning-rate exponent delta")
    return {"panels": meta_panels}


def _draw_trajectories(spec: FigureSpec, ax) -> dict:
    ycol = spec.options.get("y", "overlap_fro")
    drawn = []
    for path in _expand(spec, "trajectories"):
        table = read_csv(path)
        require_columns(table, path, ("t", ycol))
        x = table["t"] * _x_scale(spec, path)
        ax.plot(x, table[ycol], label=_label(path))
        if ycol == "risk" and "risk_stderr" in table:
            ax.fill_between(x, table[ycol] - table["risk_stderr"],
                            table[ycol] + table["risk_stderr"], alpha=0.2)
        drawn.append(str(path))
    if spec.options.get("logy", ycol == "risk"):
        ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel(ycol)
    ax.legend(fontsize=7)
    return {"files": drawn}


def _draw_ode_overlay(spec: FigureSpec, ax) -> dict:
    ycol = spec.options.get("y", "risk")
    drawn = {"sim": [], "ode": []}
    for path in _expand(spec, "sim"):
        table = read_csv(path)
        require_columns(table, path, ("t", ycol))
        x = table["t"] * _x_scale(spec, path)
        err = table.get("risk_stderr") if ycol == "risk" else None
        if err is not None:
            ax.errorbar(x, table[ycol], yerr=err, fmt="o", ms=3, capsize=2,
                        label=_label(path))
        else:
            ax.plot(x, table[ycol], "o", ms=3, label=_label(path))
        drawn["sim"].append(str(path))
    for path in _expand(spec, "ode"):
        table = read_csv(path)
        require_columns(table, path, ("tau", ycol))
        ax.plot(table["tau"], table[ycol], "-", lw=1.5, label=_label(path))
        drawn["ode"].append(str(path))
    ax.set_xlabel("rescaled time tau")
    ax.set_ylabel(ycol)
    ax.legend(fontsize=6)
    return drawn


_RECORD_KEYS = ("d", "seed_index", "t_eta_plus", "censored")
_FIT_KEYS = ("model", "slope", "intercept", "r2", "ds", "medians")


def _draw_scaling_fit(spec: FigureSpec, ax) -> dict:
    records = []
    for path in _expand(spec, "records"):
        for i, rec in enumerate(read_jsonl(path), start=1):
            require_keys(rec, path, _RECORD_KEYS, i)
            records.append(rec)
    fits = []
    for path in _expand(spec, "fits"):
        for i, fit in enumerate(read_jsonl(path), start=1):
            require_keys(fit, path, _FIT_KEYS, i)
            fits.append(fit)
    model = spec.options.get("model")
    if model is not None:
        fits = [f for f in fits if f["model"] == model]
        if not fits:
            raise SchemaError(f"no fit with model {model!r} in the fits inputs")
    fit = fits[0]

    xs = np.array([r["d"] for r in records if not r["censored"]
                   and r["t_eta_plus"] is not None], dtype=float)
    ys = np.array([r["t_eta_plus"] for r in records if not r["censored"]
                   and r["t_eta_plus"] is not None], dtype=float)
    ax.plot(xs, ys, "o", ms=3, alpha=0.4, label="runs")
    ds = np.array(fit["ds"], dtype=float)
    ax.plot(ds, np.array(fit["medians"], dtype=float), "s", ms=6,
            label="medians")
    dense = np.linspace(np.log(ds.min()), np.log(ds.max()), 100)
    if fit["model"] == "log-log":
        line = np.exp(fit["intercept"] + fit["slope"] * dense)
        ax.set_yscale("log")
    else:
        line = fit["intercept"] + fit["slope"] * dense
    ax.set_xscale("log")
    ax.plot(np.exp(dense), line, "-",
            label=f"{fit['model']} slope {fit['slope']:.3g} (r2 {fit['r2']:.3g})")
    ax.set_xlabel("dimension d")
    ax.set_ylabel("weak-recovery time")
    ax.legend(fontsize=7)
    return {"fit": fit, "n_records": len(records)}


def _draw_finite_d(spec: FigureSpec, ax) -> dict:
    drawn = {}
    for path in _expand(spec, "sim"):
        table = read_csv(path)
        require_columns(table, path, ("t", "risk", "risk_stderr"))
        x = table["t"] * _x_scale(spec, path)
        ax.errorbar(x, table["risk"], yerr=table["risk_stderr"], fmt="o", ms=3,
                    capsize=2, label=f"simulation ({_label(path)})")
        drawn.setdefault("sim", []).append(str(path))
    styles = {"map": ("--", "finite-d map"), "ode": ("-", "asymptotic")}
    for role, (style, label) in styles.items():
        for path in _expand(spec, role):
            table = read_csv(path)
            require_columns(table, path, ("tau", "risk"))
            ax.plot(table["tau"], table["risk"], style, lw=1.5,
                    label=f"{label} ({_label(path)})")
            drawn.setdefault(role, []).append(str(path))
    ax.set_xlabel("rescaled time tau")
    ax.set_ylabel("risk")
    ax.legend(fontsize=7)
    return drawn


_DRAWERS = {
    "phase_diagram": _draw_phase_diagram,
    "trajectories": _draw_trajectories,
    "ode_overlay": _draw_ode_overlay,
    "scaling_fit": _draw_scaling_fit,
    "finite_d": _draw_finite_d,
}


def render(spec: FigureSpec):
    """Draw the figure described by ``spec``; returns (figure, metadata).

    If ``spec.out`` is set the figure is also written there (PNG or SVG,
    deterministic: fixed dpi, no embedded timestamps).
    """
    fig, ax = plt.subplots(figsize=tuple(spec.options.get("figsize", (6, 4))))
    meta = _DRAWERS[spec.kind](spec, ax)
    if spec.title:
        ax.set_title(spec.title)
    fig.tight_layout()
    if spec.out:
        save(fig, spec)
    return fig, meta


def save(fig, spec: FigureSpec) -> Path:
    out = Path(spec.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if spec.format not in ("png", "svg"):
        raise SchemaError(f"unsupported output format {spec.format!r}")
    metadata = {"Date": None} if spec.format == "svg" else None
    fig.savefig(out, format=spec.format, dpi=spec.dpi, metadata=metadata)
    return out
