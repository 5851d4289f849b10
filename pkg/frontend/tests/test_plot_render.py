import json

import matplotlib.pyplot as plt
import numpy as np
import pytest

from mindexplot import FigureSpec, SchemaError, render


def close_all():
    plt.close("all")


def _overlay_scale(artifacts):
    meta = json.loads(artifacts["overlay_meta"].read_text())
    entry = next(iter(meta.values())) if "r1_d250" not in meta else meta["r1_d250"]
    return float(entry["dtau"])


def _finite_scale(artifacts):
    meta = json.loads(artifacts["finite_meta"].read_text())
    return float(meta["dtau"])


def spec_for(kind, artifacts, out):
    if kind == "phase_diagram":
        return FigureSpec(kind, {"theory": [str(artifacts["theory"])]}, out=out)
    if kind == "trajectories":
        return FigureSpec(
            kind,
            {"trajectories": [str(artifacts["traj_a"]), str(artifacts["traj_b"])]},
            options={"y": "overlap_fro"},
            out=out,
        )
    if kind == "ode_overlay":
        return FigureSpec(
            kind,
            {"sim": [str(artifacts["overlay_sim"])],
             "ode": [str(artifacts["overlay_ode"])]},
            options={"x_scale": _overlay_scale(artifacts)},
            out=out,
        )
    if kind == "scaling_fit":
        return FigureSpec(
            kind,
            {"records": [str(artifacts["records"])],
             "fits": [str(artifacts["fits"])]},
            options={"model": "log-log"},
            out=out,
        )
    return FigureSpec(
        "finite_d",
        {"sim": [str(artifacts["finite_sim"])],
         "map": [str(artifacts["finite_map"])],
         "ode": [str(artifacts["finite_ode"])]},
        options={"x_scale": _finite_scale(artifacts)},
        out=out,
    )


@pytest.mark.parametrize("kind", ["phase_diagram", "trajectories", "ode_overlay",
                                  "scaling_fit", "finite_d"])
def test_render_each_kind(kind, artifacts, tmp_path):
    out = tmp_path / f"{kind}.png"
    fig, meta = render(spec_for(kind, artifacts, str(out)))
    assert out.exists() and out.stat().st_size > 1000
    assert len(fig.axes) >= 1
    assert fig.axes[0].has_data()
    assert meta
    close_all()


def test_phase_diagram_region_arrangement(artifacts, tmp_path):
    if not artifacts["real"]:
        pytest.skip("region grid from the simulation side not generated yet")
    fig, meta = render(spec_for("phase_diagram", artifacts,
                                str(tmp_path / "pd.png")))
    panel = meta["panels"][0]
    deltas, mus, grid = panel["deltas"], panel["mus"], panel["grid"]

    def region_at(delta, mu):
        i = int(np.argmin(np.abs(deltas - delta)))
        j = int(np.argmin(np.abs(mus - mu)))
        return grid[i, j]

    # qualitative arrangement for a degree-3 target under correlation loss
    assert region_at(0.0, 1.5) == "weak_recovery_sgd"
    assert region_at(-0.35, 1.85) == "self_interaction"
    assert region_at(-1.0, 3.0) == "one_step"
    assert region_at(-0.5, 0.75) == "not_correlating"
    close_all()


def test_scaling_fit_uses_stored_fit(artifacts, tmp_path):
    # the drawn fit must come from fits.jsonl, not be recomputed
    fig, meta = render(spec_for("scaling_fit", artifacts,
                                str(tmp_path / "sf.png")))
    stored = json.loads(artifacts["fits"].read_text().splitlines()[0])
    assert meta["fit"]["slope"] == stored["slope"]
    assert meta["fit"]["r2"] == stored["r2"]
    close_all()


def test_deterministic_output(artifacts, tmp_path):
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    render(spec_for("trajectories", artifacts, str(a)))
    close_all()
    render(spec_for("trajectories", artifacts, str(b)))
    close_all()
    assert a.read_bytes() == b.read_bytes()


def test_svg_output_has_no_timestamp(artifacts, tmp_path):
    spec = spec_for("trajectories", artifacts, str(tmp_path / "fig.svg"))
    spec.format = "svg"
    render(spec)
    close_all()
    assert "<dc:date>" not in (tmp_path / "fig.svg").read_text()


def test_missing_column_names_file_and_field(artifacts, tmp_path):
    src = artifacts["finite_sim"].read_text().splitlines()
    header = src[0].split(",")
    drop = header.index("risk")
    bad = tmp_path / "bad_sim.csv"
    bad.write_text("\n".join(
        ",".join(v for i, v in enumerate(line.split(",")) if i != drop)
        for line in src) + "\n")
    spec = FigureSpec("finite_d", {"sim": [str(bad)],
                                   "map": [str(artifacts["finite_map"])],
                                   "ode": [str(artifacts["finite_ode"])]})
    with pytest.raises(SchemaError) as err:
        render(spec)
    assert "bad_sim.csv" in str(err.value)
    assert "'risk'" in str(err.value)
    close_all()


def test_missing_record_field_names_file_and_field(artifacts, tmp_path):
    recs = [json.loads(l) for l in artifacts["records"].read_text().splitlines()]
    del recs[0]["d"]
    bad = tmp_path / "bad_records.jsonl"
    bad.write_text("\n".join(json.dumps(r) for r in recs) + "\n")
    spec = FigureSpec("scaling_fit", {"records": [str(bad)],
                                      "fits": [str(artifacts["fits"])]})
    with pytest.raises(SchemaError) as err:
        render(spec)
    assert "bad_records.jsonl" in str(err.value)
    assert "'d'" in str(err.value)
    close_all()


def test_unknown_kind_rejected():
    with pytest.raises(SchemaError):
        FigureSpec("heatmap", {})


def test_no_matching_inputs_rejected(tmp_path):
    spec = FigureSpec("trajectories",
                      {"trajectories": [str(tmp_path / "nope*.csv")]})
    with pytest.raises(SchemaError) as err:
        render(spec)
    assert "trajectories" in str(err.value)
    close_all()
