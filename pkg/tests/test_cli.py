import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import example_path
from qpmforge.cli import main
from qpmforge.spectra import read_jsa

FIG1 = str(example_path("fig1"))
FIG2 = str(example_path("fig2"))
FIG3 = str(example_path("fig3"))
SINGLE = str(example_path("single"))


def modified(tmp_path, source, replace, name="cfg.toml"):
    text = open(source, encoding="utf-8").read()
    for old, new in replace.items():
        assert old in text
        text = text.replace(old, new)
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def run(*argv):
    return main([str(a) for a in argv])


# --- exit codes -------------------------------------------------------------------


def test_infeasible_design_exit_code(tmp_path, capsys):
    cfg = modified(tmp_path, FIG1, {"[0.2, 0.2, 0.2, 0.2, 0.2]": "[0.4, 0.4, 0.4, 0.4, 0.4]"})
    assert run("design", "--config", cfg, "--out-dir", tmp_path / "o", "--no-plots") == 2
    err = capsys.readouterr().err
    assert "slack = -" in err


def test_missing_config(tmp_path):
    assert run("design", "--config", tmp_path / "none.toml", "--out-dir", tmp_path) == 3


def test_config_required(tmp_path):
    assert run("design", "--out-dir", tmp_path) == 3


def test_unknown_config_key(tmp_path, capsys):
    cfg = modified(tmp_path, SINGLE, {"[grid]\n": "[grid]\ncolour = 3\n"})
    assert run("design", "--config", cfg, "--out-dir", tmp_path / "o") == 3
    assert "colour" in capsys.readouterr().err


def test_missing_domain_file(tmp_path):
    assert run("pmf", "--config", SINGLE, "--out-dir", tmp_path, "--domains", tmp_path / "x.txt") == 3


def test_missing_jsa(tmp_path):
    assert run("modes", "--config", SINGLE, "--out-dir", tmp_path) == 3


def test_asymmetric_gamma(tmp_path, capsys):
    g = tmp_path / "g.csv"
    g.write_text("n,m,re_gamma,im_gamma\n0,0,1,0\n0,1,0.5,0\n1,0,0.1,0\n1,1,1,0\n")
    assert run("state", "--config", SINGLE, "--out-dir", tmp_path, "--gamma", g) == 4
    assert "symmetric" in capsys.readouterr().err


def test_bad_threshold(tmp_path):
    with pytest.raises(SystemExit):
        run("modes", "--config", SINGLE, "--out-dir", tmp_path, "--threshold", "1.5")


# --- outputs ----------------------------------------------------------------------


def test_design_outputs_are_deterministic(tmp_path):
    for d in ("a", "b"):
        assert run("design", "--config", FIG1, "--out-dir", tmp_path / d, "--no-plots") == 0
    for name in ("domains.txt", "amplitude_trace.csv", "bias_report.json", "resolved_config.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    report = json.loads((tmp_path / "a" / "bias_report.json").read_text())
    assert report["n_domains"] == 1073
    assert report["final_tracking_error"] <= 2 * report["width_m"] / 0.02


def test_resolved_config_reproduces_run(tmp_path):
    a = tmp_path / "a"
    assert run("jsa", "--config", FIG3, "--out-dir", a, "--grid-size", 400, "--no-plots") == 0
    b = tmp_path / "b"
    assert run("jsa", "--config", a / "resolved_config.json", "--out-dir", b, "--no-plots") == 0
    assert (a / "jsa.qjsa").read_bytes() == (b / "jsa.qjsa").read_bytes()
    assert (a / "peaks_filtered.csv").read_bytes() == (b / "peaks_filtered.csv").read_bytes()


def test_threads_do_not_change_outputs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("design", "--config", FIG1, "--out-dir", a, "--no-plots") == 0
    for d, t in ((a, 1), (b, 4)):
        assert run("pmf", "--config", FIG1, "--out-dir", d, "--domains", a / "domains.txt",
                   "--threads", t, "--no-plots") == 0
    pa = np.loadtxt(a / "pmf.csv", delimiter=",", skiprows=1)
    pb = np.loadtxt(b / "pmf.csv", delimiter=",", skiprows=1)
    assert np.allclose(pa, pb, rtol=1e-12, atol=1e-300)


def test_fig3_modes_before_and_after_filter(tmp_path, capsys):
    out = tmp_path / "o"
    assert run("jsa", "--config", FIG3, "--out-dir", out, "--no-plots") == 0
    assert "jsa: 9 peaks" in capsys.readouterr().out
    assert read_jsa(out / "jsa_filtered.qjsa").metadata["transmitted_fraction"] < 1
    assert run("modes", "--config", FIG3, "--out-dir", out, "--jsa", out / "jsa.qjsa",
               "--threshold", 1e-3, "--no-plots") == 0
    unfiltered = json.loads((out / "modes.json").read_text())
    assert unfiltered["distinct_pairs"] == 6
    assert run("modes", "--config", FIG3, "--out-dir", out, "--no-plots") == 0
    filtered = json.loads((out / "modes.json").read_text())
    assert filtered["filtered_input"]
    assert filtered["distinct_pairs"] == 3
    assert filtered["blocks"] == [[-1, 1]]
    assert filtered["bin_centre_filter_model"]["distinct_pairs"] == 3


def test_fig2_mode_count(tmp_path, capsys):
    out = tmp_path / "o"
    assert run("jsa", "--config", FIG2, "--out-dir", out, "--grid-size", 512, "--no-plots") == 0
    assert run("modes", "--config", FIG2, "--out-dir", out, "--grid-size", 512, "--no-plots") == 0
    assert "distinct pairs: 15" in capsys.readouterr().out


def test_single_peak_pipeline(tmp_path, capsys):
    out = tmp_path / "o"
    assert run("jsa", "--config", SINGLE, "--out-dir", out, "--no-plots") == 0
    assert "jsa: 1 peaks" in capsys.readouterr().out
    assert run("modes", "--config", SINGLE, "--out-dir", out, "--no-plots") == 0
    modes = json.loads((out / "modes.json").read_text())
    assert modes["schmidt_number"] == pytest.approx(1, abs=1e-6)
    assert modes["distinct_pairs"] == 1


def test_zero_gamma_gives_vacuum(tmp_path):
    cfg = modified(tmp_path, FIG3, {"gamma = 0.5": "gamma = 0.0"})
    out = tmp_path / "o"
    g = out / "g.csv"
    out.mkdir()
    g.write_text("n,m,re_gamma,im_gamma\n-1,-1,0,0\n-1,1,1,0\n1,1,0,0\n")
    (out / "g.json").write_text(json.dumps({"labels": [-1, 1], "scale": 0.0}))
    assert run("state", "--config", cfg, "--out-dir", out, "--gamma", g, "--no-plots") == 0
    var = np.loadtxt(out / "variances.csv", delimiter=",", skiprows=1, usecols=(3, 4, 5))
    assert np.array_equal(var, np.full(var.shape, 0.5))
    thss = np.loadtxt(out / "thss.csv", delimiter=",", skiprows=1)
    assert thss.shape == (27, 8)
    assert np.allclose(thss[0, 3:], 0.5, atol=1e-15)


def test_report_writes_figures(tmp_path):
    out = tmp_path / "r"
    assert run("report", "--config", FIG3, "--out-dir", out, "--grid-size", 384) == 0
    for name in ("design.png", "pmf.png", "jsa.png", "jsa_filtered.png", "gamma.png",
                 "singular_values.png", "thss.png", "summary.json", "covariance_block.csv"):
        assert (out / name).stat().st_size > 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["state"]["block_det_2V"] == pytest.approx(1, abs=1e-6)


def test_fig2_state_elimination(tmp_path):
    out = tmp_path / "r"
    assert run("report", "--config", FIG2, "--out-dir", out, "--grid-size", 512, "--no-plots") == 0
    state = json.loads((out / "state.json").read_text())
    assert state["eliminated_cross_block_frobenius"] < 1e-6
    assert state["eliminated_det_2V"] == pytest.approx(1, abs=1e-9)


def test_flags_before_or_after_command(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("--config", SINGLE, "--out-dir", a, "--no-plots", "design") == 0
    assert run("design", "--config", SINGLE, "--out-dir", b, "--no-plots") == 0
    assert (a / "domains.txt").read_bytes() == (b / "domains.txt").read_bytes()
    assert not list(a.glob("*.png"))


def test_json_config(tmp_path):
    out = tmp_path / "o"
    assert run("design", "--config", SINGLE, "--out-dir", out, "--no-plots") == 0
    cfg = tmp_path / "c.json"
    cfg.write_text((out / "resolved_config.json").read_text())
    assert run("design", "--config", cfg, "--out-dir", tmp_path / "p", "--no-plots") == 0


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "qpmforge", "design", "--config", SINGLE,
                          "--out-dir", str(tmp_path), "--no-plots"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "domains:" in res.stdout


def test_bundled_config_by_name(tmp_path):
    assert run("design", "--config", "single", "--out-dir", tmp_path, "--no-plots") == 0
    assert run("design", "--config", "nosuch", "--out-dir", tmp_path, "--no-plots") == 3
