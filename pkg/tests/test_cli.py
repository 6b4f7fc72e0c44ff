import json
import math
import subprocess
import sys

import pytest

from spreadlab.cli import SUBCOMMANDS, format_value, run

QUICK_TOY = ["--seeds", "1", "--n", "200", "--epochs", "2", "--ae-epochs", "2"]


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# manifest ")
    header = lines[1].split(",")
    return header, [dict(zip(header, ln.split(","))) for ln in lines[2:]]


def test_format_value():
    assert format_value(0.1) == "0.10000000000000001"
    assert format_value(3) == "3"
    assert format_value(math.nan) == "nan"
    assert format_value(True) == "1"


def test_closed_forms_values(tmp_path):
    assert run(["closed-forms", "--out", str(tmp_path), "--serial"]) == 0
    header, rows = read_csv(tmp_path / "closed_forms.csv")
    row = rows[0]
    assert float(row["theta_star"]) == pytest.approx(0.225891, abs=2e-4)
    assert float(row["spread_star"]) == pytest.approx(0.223983, abs=2e-4)
    assert float(row["loss_collapsed"]) == pytest.approx(-1.2)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["params"]["alphas"] == [0.7]
    assert manifest["outputs"]["closed_forms.csv"]
    assert (tmp_path / "closed_forms.csv").read_text().splitlines()[0] == f"# manifest {manifest['manifest_hash']}"


def test_outside_window_is_nan(tmp_path):
    assert run(["closed-forms", "--out", str(tmp_path), "--alphas", "0.5"]) == 0
    _, rows = read_csv(tmp_path / "closed_forms.csv")
    assert rows[0]["theta_star"] == "nan"


def test_lf_line_endings(tmp_path):
    run(["c-window", "--out", str(tmp_path), "--taus", "0.5", "--d-max", "4"])
    data = (tmp_path / "c_window.csv").read_bytes()
    assert b"\r" not in data and data.endswith(b"\n")


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# closed forms\nalphas = 0.72, 0.74\ntaus = 0.25\n")
    out = tmp_path / "o"
    assert run(["closed-forms", "--config", str(cfg), "--out", str(out), "--taus", "0.5"]) == 0
    _, rows = read_csv(out / "closed_forms.csv")
    assert [r["alpha"] for r in rows] == [format_value(0.72), format_value(0.74)]
    assert {r["tau"] for r in rows} == {"0.5"}


def test_unknown_config_key_fails(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("alpah = 0.7\n")
    assert run(["closed-forms", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert err.startswith("error: ")
    payload = json.loads(err[len("error: "):])
    assert payload["type"] == "usage" and "alpah" in payload["message"]


def test_bad_value_fails(tmp_path):
    assert run(["closed-forms", "--out", str(tmp_path), "--alphas", "x"]) == 2


def test_unknown_flag_exits_nonzero(tmp_path):
    with pytest.raises(SystemExit) as info:
        run(["closed-forms", "--out", str(tmp_path), "--bogus", "1"])
    assert info.value.code == 2


def test_unwritable_output(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run(["closed-forms", "--out", str(blocker / "sub")]) == 3
    assert '"type": "io"' in capsys.readouterr().err


def test_domain_error_exit(tmp_path, capsys):
    assert run(["k3-check", "--out", str(tmp_path), "--d", "2"]) == 1
    assert "error: " in capsys.readouterr().err


def test_perm_test(tmp_path):
    assert run(["perm-test", "--out", str(tmp_path), "--configs", "3", "--trials", "20"]) == 0
    _, rows = read_csv(tmp_path / "perm_test.csv")
    assert len(rows) == 3
    for r in rows:
        assert float(r["gap_spread_batch"]) <= 1e-10
        assert float(r["gap_asymptotic"]) <= 1e-10
        assert float(r["cross_class_gap"]) > 1e-3


def test_k3_check(tmp_path):
    assert run(["k3-check", "--out", str(tmp_path), "--thetas", "7"]) == 0
    _, rows = read_csv(tmp_path / "k3_check.csv")
    assert max(float(r["abs_diff"]) for r in rows) <= 1e-9


def test_optimize_writes_config(tmp_path):
    assert run(["optimize", "--out", str(tmp_path), "--n-y", "3", "--restarts", "2", "--max-iters", "300", "--serial"]) == 0
    _, rows = read_csv(tmp_path / "optimize.csv")
    assert sum(int(r["best"]) for r in rows) == 1
    assert (tmp_path / "best_config.txt").read_text().startswith("2 2 6\n")


def test_sweep_columns(tmp_path):
    args = ["sweep-alpha", "--out", str(tmp_path), "--alphas", "0.5,0.9", "--n-y", "3", "--restarts", "1",
            "--max-iters", "200", "--serial"]
    assert run(args) == 0
    header, rows = read_csv(tmp_path / "sweep_alpha.csv")
    assert header == "alpha,tau,K,d,n_y,seed,loss,spread,loss_collapsed,loss_uniform,loss_mu_theta_star".split(",")
    assert [r["alpha"] for r in rows] == ["0.5", format_value(0.9)]


@pytest.mark.parametrize("sub,fname", [
    ("toy-train", "toy_train.csv"),
    ("c2f-eval", "c2f_eval.csv"),
    ("lipschitz", "lipschitz.csv"),
    ("recover-subclass", "recover_subclass.csv"),
])
def test_toy_subcommands(tmp_path, sub, fname):
    assert run([sub, "--out", str(tmp_path), "--serial", *QUICK_TOY]) == 0
    _, rows = read_csv(tmp_path / fname)
    assert rows


def test_serial_reruns_identical(tmp_path):
    for name in ("a", "b"):
        assert run(["toy-train", "--out", str(tmp_path / name), "--serial", *QUICK_TOY]) == 0
    assert (tmp_path / "a" / "toy_train.csv").read_bytes() == (tmp_path / "b" / "toy_train.csv").read_bytes()


def test_every_subcommand_has_help():
    for name in SUBCOMMANDS:
        out = subprocess.run([sys.executable, "-m", "spreadlab", name, "--help"], capture_output=True, text=True)
        assert out.returncode == 0 and "--serial" in out.stdout and "default" in out.stdout
