import csv
import math
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from hiddenflow import __version__
from hiddenflow.checkpoint import load_checkpoint
from hiddenflow.cli import main
from hiddenflow.network import initialize


def write(path, text):
    path.write_text(textwrap.dedent(text))
    return path


GEN = """
[run]
seed = 4
[flow]
variant = TaylorGreen2D
re = 10
pec = 10
[solver]
n = 16
dt = 0.05
t_final = 0.5
snapshot_interval = 0.1
[sampling]
count = 120
[network]
hidden_layers = 2
width = 6
[training]
epochs = {epochs}
learning_rates = 1e-3, 1e-4, 1e-5
batch_size = 40
[grid]
hi = 1, 1
shape = 2, 2
times = 0.2
[paths]
dataset = out/data.csv
checkpoint = out/model.bin
log = out/log.csv
predictions = out/pred.csv
predictions_npz = out/pred.npz
report = out/report.csv
"""


@pytest.fixture
def run_dir(tmp_path):
    write(tmp_path / "run.ini", GEN.format(epochs="1, 1, 0"))
    return tmp_path


def rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_generate_count_and_determinism(run_dir):
    cfg = str(run_dir / "run.ini")
    assert main(["generate", "--config", cfg]) == 0
    first = (run_dir / "out/data.csv").read_bytes()
    assert len(rows(run_dir / "out/data.csv")) == 121
    assert main(["generate", "--config", cfg]) == 0
    assert (run_dir / "out/data.csv").read_bytes() == first
    assert main(["generate", "--config", cfg, "--seed", "5"]) == 0
    assert (run_dir / "out/data.csv").read_bytes() != first
    assert (run_dir / "out/data.json").exists()


def test_cfl_violation_exit_code(run_dir, capsys):
    text = (run_dir / "run.ini").read_text().replace("dt = 0.05", "dt = 0.5").replace(
        "snapshot_interval = 0.1", "snapshot_interval = 0.5")
    write(run_dir / "bad.ini", text)
    assert main(["generate", "--config", str(run_dir / "bad.ini")]) == 2
    assert "CFL bound" in capsys.readouterr().err


def test_unknown_key_rejected(run_dir, capsys):
    write(run_dir / "typo.ini", (run_dir / "run.ini").read_text().replace("re = 10", "reynolds = 10"))
    assert main(["generate", "--config", str(run_dir / "typo.ini")]) == 2
    assert "reynolds" in capsys.readouterr().err


def test_missing_input_and_bad_output(run_dir, tmp_path):
    assert main(["train", "--config", str(run_dir / "run.ini")]) == 2
    assert main(["generate", "--config", str(tmp_path / "nope.ini")]) == 2
    blocker = run_dir / "blocked"
    blocker.write_text("file, not a directory")
    write(run_dir / "io.ini", (run_dir / "run.ini").read_text().replace(
        "dataset = out/data.csv", "dataset = blocked/sub/data.csv"))
    assert main(["generate", "--config", str(run_dir / "io.ini")]) == 4


def test_zero_epoch_training(tmp_path):
    write(tmp_path / "run.ini", GEN.format(epochs="0, 0, 0"))
    cfg = str(tmp_path / "run.ini")
    assert main(["generate", "--config", cfg]) == 0
    assert main(["train", "--config", cfg]) == 0
    ck = load_checkpoint(tmp_path / "out/model.bin")
    assert np.array_equal(ck.params.theta, initialize(ck.arch, 4).theta)
    assert len(rows(tmp_path / "out/log.csv")) == 1


def test_train_predict_evaluate(run_dir):
    cfg = str(run_dir / "run.ini")
    assert main(["generate", "--config", cfg]) == 0
    assert main(["train", "--config", cfg]) == 0
    log = rows(run_dir / "out/log.csv")
    assert log[0][:4] == ["epoch", "stage", "lr", "total"] and len(log) == 3
    assert main(["predict", "--config", cfg]) == 0
    pred = rows(run_dir / "out/pred.csv")
    assert pred[0] == ["t", "x", "y", "c", "d", "u", "v", "p"] and len(pred) == 5
    assert main(["evaluate", "--config", cfg]) == 0
    report = rows(run_dir / "out/report.csv")
    assert report[0] == ["t", "field", "rel_l2", "aligned"]
    assert {r[1] for r in report[1:]} == {"u", "v", "p"}


def test_resume_mismatch_exit_code(run_dir):
    cfg = str(run_dir / "run.ini")
    assert main(["generate", "--config", cfg]) == 0
    assert main(["train", "--config", cfg]) == 0
    write(run_dir / "wide.ini", (run_dir / "run.ini").read_text().replace("width = 6", "width = 7"))
    assert main(["train", "--config", str(run_dir / "wide.ini"),
                 "--resume", str(run_dir / "out/model.bin")]) == 2
    assert main(["train", "--config", cfg, "--resume", str(run_dir / "out/model.bin")]) == 0
    assert load_checkpoint(run_dir / "out/model.bin").step == 2 * 3 * 2


def test_evaluate_exact_fixture_is_zero(tmp_path):
    from hiddenflow.datagen import AnalyticFlow

    flow = AnalyticFlow("TaylorGreen2D", 10.0)
    lines = ["t,x,y,c,d,u,v,p"]
    for t in (0.5, 1.0):
        for x in (0.1, 1.3, 2.9):
            for y in (0.4, 2.2):
                f = flow.evaluate(t, x, y)
                lines.append(",".join("%.17g" % v for v in
                                      (t, x, y, 0.5, 0.5, f["u"], f["v"], f["p"])))
    (tmp_path / "exact.csv").write_text("\n".join(lines) + "\n")
    write(tmp_path / "ev.ini", """
        [flow]
        re = 10
        [paths]
        predictions = exact.csv
        report = report.csv
        """)
    assert main(["evaluate", "--config", str(tmp_path / "ev.ini")]) == 0
    vals = [float(r[2]) for r in rows(tmp_path / "report.csv")[1:]]
    assert len(vals) == 6 and all(v == 0.0 for v in vals)


def test_forces_on_linear_pressure(tmp_path):
    write(tmp_path / "f.ini", """
        [flow]
        re = 1
        [field]
        source = expression
        p = -x
        [surface]
        shape = circle
        points = 256
        [grid]
        times = 0
        [paths]
        forces = forces.csv
        """)
    assert main(["forces", "--config", str(tmp_path / "f.ini")]) == 0
    (t, fl, fd), = [tuple(map(float, r)) for r in rows(tmp_path / "forces.csv")[1:]]
    assert abs(fd - math.pi) < 1e-3 and abs(fl) < 1e-10


def test_wss_on_couette(tmp_path):
    write(tmp_path / "w.ini", """
        [flow]
        re = 1
        [field]
        source = expression
        u = y
        [wall]
        start = 0, 0
        end = 2, 0
        normal = 0, 1
        points = 9
        [grid]
        times = 0, 1
        [paths]
        wss = wss.csv
        """)
    assert main(["wss", "--config", str(tmp_path / "w.ini"), "--threads", "1"]) == 0
    data = rows(tmp_path / "wss.csv")
    assert data[0] == ["t", "x", "y", "taux", "tauy", "wss"] and len(data) == 19
    assert all(abs(float(r[5]) - 1.0) < 1e-12 for r in data[1:])


def test_bad_expression(tmp_path):
    write(tmp_path / "f.ini", """
        [field]
        source = expression
        p = -q
        [paths]
        forces = forces.csv
        """)
    assert main(["forces", "--config", str(tmp_path / "f.ini")]) == 2


def test_help_and_version():
    out = subprocess.run([sys.executable, "-m", "hiddenflow.cli", "--help"],
                         capture_output=True, text=True, check=True).stdout
    for name in ("generate", "train", "predict", "evaluate", "forces", "wss"):
        assert name in out
    out = subprocess.run([sys.executable, "-m", "hiddenflow.cli", "--version"],
                         capture_output=True, text=True, check=True).stdout
    assert __version__ in out


def test_divergence_exit_code_keeps_checkpoint(run_dir, capsys):
    # an absurd second-stage rate overflows the weights within a few steps
    text = GEN.format(epochs="1, 5, 0").replace("learning_rates = 1e-3, 1e-4, 1e-5",
                                                 "learning_rates = 1e-3, 1e300, 1e-5")
    cfg = write(run_dir / "run.ini", text)
    assert main(["generate", "--config", str(cfg)]) == 0
    assert main(["train", "--config", str(cfg)]) == 3
    assert "diverged" in capsys.readouterr().err.lower()
    # the checkpoint from the completed first stage survives
    assert load_checkpoint(run_dir / "out/model.bin").params.count > 0
