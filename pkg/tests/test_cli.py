import xml.etree.ElementTree as ET

import pytest

from ventrc.cli import main
from ventrc.rc_design import load_filterset
from ventrc.sysid import load_frf

# the noisy design-grade fit legitimately stops at the iteration cap
pytestmark = pytest.mark.filterwarnings("ignore::ventrc.errors.FitConvergenceWarning")


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    """One small `ventrc all` run shared by the CLI tests."""
    out = tmp_path_factory.mktemp("pipeline")
    rc = main(["all", "--out-dir", str(out), "--breaths", "8", "--periods", "8",
               "--seed", "0"])
    assert rc == 0
    return out


def test_all_exit_code_and_artifacts(pipeline_dir):
    names = [p.name for p in pipeline_dir.iterdir()]
    for expected in ("frf_adult_peep.csv", "frf_baby_ipap.csv", "frf_mean.csv",
                     "tfit.coeff", "stability_no_q.csv", "stability_report.csv",
                     "rc_adult.filterset", "rc_pediatric.filterset",
                     "rc_baby.filterset"):
        assert expected in names
    for scenario in ("adult", "pediatric", "baby"):
        sub = pipeline_dir / scenario
        assert (sub / f"{scenario}_pid_trace.csv").exists()
        assert (sub / f"{scenario}_rc_breath_norms.csv").exists()
        assert (sub / f"{scenario}_comparison.csv").exists()
        ET.parse(sub / f"{scenario}_rc_pressure.svg")


def test_identify_writes_frf(tmp_path):
    out = tmp_path / "frf.csv"
    rc = main(["identify", "--scenario", "adult", "--level", "peep",
               "--out", str(out), "--bins", "8", "--periods", "3",
               "--discard", "2", "--period-samples", "500"])
    assert rc == 0
    frf = load_frf(out)
    assert 0 < len(frf) <= 8


def test_identify_accepts_cfg_path(tmp_path):
    from ventrc.plant import load_scenario, save_scenario

    scenario, circuit = load_scenario("baby")
    cfg = tmp_path / "custom.cfg"
    save_scenario(scenario, circuit, cfg)
    out = tmp_path / "frf.csv"
    rc = main(["identify", "--scenario", str(cfg), "--level", "ipap",
               "--out", str(out), "--bins", "6", "--periods", "3",
               "--discard", "2", "--period-samples", "500"])
    assert rc == 0 and out.exists()


def test_fit_command(pipeline_dir, tmp_path):
    out = tmp_path / "model.coeff"
    rc = main(["fit", "--order", "4", "--delay", "12",
               "--in", str(pipeline_dir / "frf_mean.csv"), "--out", str(out)])
    assert rc == 0
    from ventrc.lti import load_transfer_function
    tf = load_transfer_function(out)
    assert tf.pure_delay == 12
    assert len(tf.denominator_coeffs) == 5


def test_design_command(pipeline_dir, tmp_path):
    out = tmp_path / "rc.filterset"
    rc = main(["design", "--frf-dir", str(pipeline_dir), "--period-n", "2000",
               "--out", str(out)])
    assert rc == 0
    fs = load_filterset(out)
    assert fs.period_n == 2000
    assert len(fs.q_kernel.taps) == 51


def test_design_fails_loudly_on_high_cutoff(pipeline_dir, tmp_path, capsys):
    rc = main(["design", "--frf-dir", str(pipeline_dir), "--period-n", "2000",
               "--cutoff-hz", "200", "--out", str(tmp_path / "x.filterset")])
    assert rc == 1
    assert "design failed" in capsys.readouterr().err


def test_check_stability_command(pipeline_dir, tmp_path, capsys):
    report = tmp_path / "report.csv"
    rc = main(["check-stability", "--filterset", str(pipeline_dir / "rc_adult.filterset"),
               "--frf-dir", str(pipeline_dir), "--report", str(report)])
    assert rc == 0
    assert "PASS" in capsys.readouterr().out
    assert report.exists()


def test_run_and_compare_commands(pipeline_dir, tmp_path, capsys):
    out_dir = tmp_path / "run"
    rc = main(["run", "--scenario", "baby", "--mode", "rc", "--breaths", "6",
               "--filterset", str(pipeline_dir / "rc_baby.filterset"),
               "--out-dir", str(out_dir)])
    assert rc == 0
    rc = main(["run", "--scenario", "baby", "--mode", "pid", "--breaths", "6",
               "--out-dir", str(out_dir)])
    assert rc == 0
    cmp_out = tmp_path / "cmp.csv"
    rc = main(["compare", "--baseline", str(out_dir / "baby_pid_breath_norms.csv"),
               "--candidate", str(out_dir / "baby_rc_breath_norms.csv"),
               "--out", str(cmp_out)])
    assert rc == 0
    assert "converged ratio" in capsys.readouterr().out
    assert cmp_out.exists()


def test_run_rejects_period_mismatch(pipeline_dir, tmp_path, capsys):
    rc = main(["run", "--scenario", "adult", "--mode", "rc", "--breaths", "2",
               "--filterset", str(pipeline_dir / "rc_baby.filterset"),
               "--out-dir", str(tmp_path)])
    assert rc == 1
    assert "period" in capsys.readouterr().err


def test_unknown_scenario_errors(tmp_path, capsys):
    rc = main(["run", "--scenario", "walrus", "--mode", "pid",
               "--out-dir", str(tmp_path)])
    assert rc == 1
    assert "built-ins" in capsys.readouterr().err
