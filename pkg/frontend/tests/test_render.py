"""Secondary acceptance: render the three figure kinds from primary
artifacts (generated through the sparsemom CLI), verify boundary
overlays and byte-stable re-rendering."""

import json
import subprocess
import sys
from pathlib import Path

import pytest

from spfigures.render import BOUNDARY_LINES, main, render
from spfigures.spec import FigureSpec, SpecError


def run_primary(args, cwd):
    res = subprocess.run(
        [sys.executable, "-m", "sparsemom.cli", *args],
        capture_output=True, text=True, cwd=cwd,
    )
    assert res.returncode == 0, res.stderr
    return res


@pytest.fixture(scope="module")
def artifacts(tmp_path_factory):
    """Criterion-6/7/13-style artifacts produced via the primary CLI."""
    root = tmp_path_factory.mktemp("artifacts")
    compare_dir = root / "compare"
    run_primary(
        ["ls-compare", "--kappa", "0.85", "--sigma", "1.2", "--gamma", "1.15",
         "--eta-star", "0.2", "--d", "100", "300", "--tau-max", "3.0",
         "--n-tau", "50", "--out-dir", str(compare_dir)],
        cwd=root,
    )
    mc_dir = root / "mc"
    run_primary(
        ["ls-mc", "--kappa", "0.85", "--sigma", "1.2", "--gamma", "1.15",
         "--eta-star", "0.2", "--d", "120", "--seeds", "8", "--seed", "7",
         "--max-active-updates", "400", "--out-dir", str(mc_dir)],
        cwd=root,
    )
    ode_dir = root / "ode"
    run_primary(
        ["ls-ode", "--kappa", "0.85", "--sigma", "1.2", "--gamma", "1.15",
         "--eta-star", "0.2", "--d", "120", "--tau-max", "2.0",
         "--n-tau", "60", "--out-dir", str(ode_dir)],
        cwd=root,
    )
    lr_dir = root / "lr"
    run_primary(
        ["lr-heatmap", "--sigma", "1.6", "--kappa", "1.2", "--gamma", "1.0",
         "--r", "2.0", "--d", "2000", "--out-dir", str(lr_dir)],
        cwd=root,
    )
    phase_dir = root / "phase"
    run_primary(
        ["phase-map", "--kappa", "1.2", "--sigma", "1.2", "--gamma", "1.0",
         "--d", "200", "--out-dir", str(phase_dir)],
        cwd=root,
    )
    return root


def render_via_cli(spec_dict, tmp_path, name):
    spec_path = tmp_path / f"{name}.json"
    spec_path.write_text(json.dumps(spec_dict))
    rc = main(["--spec", str(spec_path)])
    assert rc == 0
    return Path(spec_dict["output"])


class TestRiskCurves:
    def test_compare_outputs(self, artifacts, tmp_path):
        spec = {
            "kind": "risk-curves",
            "inputs": {
                "main_ode": [
                    str(artifacts / "compare" / "ls_main_ode_d100.csv"),
                    str(artifacts / "compare" / "ls_main_ode_d300.csv"),
                ],
                "limit_ode": str(artifacts / "compare" / "ls_limit_ode.csv"),
            },
            "output": str(tmp_path / "risk_compare.png"),
            "title": "dense above resonance",
        }
        out = render_via_cli(spec, tmp_path, "risk_compare")
        assert out.exists() and out.stat().st_size > 5000

    def test_mc_overlay(self, artifacts, tmp_path):
        spec = {
            "kind": "risk-curves",
            "inputs": {
                "main_ode": [str(artifacts / "ode" / "ls_main_ode_d120.csv")],
                "mc_ensemble": str(artifacts / "mc" / "ls_mc_d120.csv"),
                "mc_seeds": str(artifacts / "mc" / "ls_mc_d120_seeds.csv"),
            },
            "output": str(tmp_path / "risk_mc.png"),
        }
        out = render_via_cli(spec, tmp_path, "risk_mc")
        assert out.exists() and out.stat().st_size > 5000


class TestPlaneFigures:
    def test_heatmap_with_overlays(self, artifacts, tmp_path):
        spec = FigureSpec(
            kind="heatmap",
            inputs={"lr_heatmap": str(artifacts / "lr" / "lr_heatmap.csv")},
            output=str(tmp_path / "lr_heatmap.png"),
            sigma=1.6,
        )
        summary = render(spec)
        assert set(summary["overlays"]) == set(BOUNDARY_LINES)

    def test_phase_diagram_with_overlays(self, artifacts, tmp_path):
        spec = FigureSpec(
            kind="phase-diagram",
            inputs={"ls_heatmap": str(artifacts / "phase" / "ls_risk_heatmap.csv")},
            output=str(tmp_path / "phase.png"),
            sigma=1.2,
        )
        summary = render(spec)
        assert set(summary["overlays"]) == set(BOUNDARY_LINES)


class TestByteStability:
    def test_re_render_identical(self, artifacts, tmp_path):
        spec = FigureSpec(
            kind="heatmap",
            inputs={"lr_heatmap": str(artifacts / "lr" / "lr_heatmap.csv")},
            output=str(tmp_path / "stable.png"),
            sigma=1.6,
        )
        render(spec)
        first = Path(spec.output).read_bytes()
        render(spec)
        assert Path(spec.output).read_bytes() == first


class TestValidation:
    def test_missing_input(self, tmp_path):
        spec = FigureSpec(
            kind="heatmap", inputs={"lr_heatmap": str(tmp_path / "nope.csv")},
            output=str(tmp_path / "x.png"),
        )
        with pytest.raises(SpecError, match="does not exist"):
            spec.validate()

    def test_wrong_schema_column_message(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("kappa,gamma\n1,2\n")
        spec = FigureSpec(
            kind="heatmap", inputs={"lr_heatmap": str(bad)},
            output=str(tmp_path / "x.png"),
        )
        with pytest.raises(SpecError, match="region_tag"):
            spec.validate()

    def test_empty_csv_no_file_written(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("kappa,gamma,region_tag,floor_value_or_exponent,T_exponent\n")
        out = tmp_path / "nothing.png"
        spec = FigureSpec(
            kind="heatmap", inputs={"lr_heatmap": str(empty)}, output=str(out)
        )
        with pytest.raises(SpecError, match="no data rows"):
            render(spec)
        assert not out.exists()

    def test_unknown_kind(self, tmp_path):
        with pytest.raises(SpecError):
            FigureSpec(kind="pie", inputs={"x": "y"}, output="z").validate()
