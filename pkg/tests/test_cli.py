import subprocess
import sys

import pytest

from stam.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from stam.evaluation import read_report

FIVE_PROTOTYPES = """\
seed = 3
settle_iterations = 0
frame_height = 4
frame_width = 4
layer1.capacity = 16
layer1.theta_new = 0.5
layer1.theta_merge = 0.2
synth.classes = 5
synth.sigma = 0.05
synth.per_class = 400
synth.min_separation = 1.0
schedule.per_phase_count = 2000
"""

MNIST_SHAPED = """\
seed = 0
settle_iterations = 0
layer1.capacity = 8
layer1.theta_new = 2.0
layer1.theta_merge = 0.5
synth.classes = 3
synth.sigma = 0.02
synth.per_class = 20
synth.min_separation = 4.0
schedule.per_phase_count = 60
eval.test_per_class = 5
"""


@pytest.fixture
def cfg_file(tmp_path):
    def write(text, name="run.cfg"):
        path = tmp_path / name
        path.write_text(text)
        return str(path)

    return write


def test_train_eval_inspect(cfg_file, tmp_path):
    cfg = cfg_file(FIVE_PROTOTYPES)
    ckpt = str(tmp_path / "run.ckpt")
    report = tmp_path / "report.csv"
    assert main(["train", "--config", cfg, "--checkpoint-out", ckpt]) == EXIT_OK
    assert main(["eval", "--checkpoint", ckpt, "--config", cfg, "--report", str(report)]) == EXIT_OK
    metrics = read_report(report.read_text())
    assert metrics[("all", "purity")] >= 0.99
    assert metrics[("0", "accuracy_per_phase")] >= 0.99
    assert metrics[("all", "centroid_counts[L1F0]")] == 5
    pgm_dir = tmp_path / "pgm"
    assert main(["inspect", "--checkpoint", ckpt, "--centroids-pgm", str(pgm_dir)]) == EXIT_OK
    assert len(list(pgm_dir.glob("L1_F000_c*.pgm"))) == 5
    assert (pgm_dir / "L1_F000_c0000.pgm").read_bytes().startswith(b"P5\n4 4\n255\n")


def test_inspect_784_dim_unit_gives_28x28_pgm(cfg_file, tmp_path):
    cfg = cfg_file(MNIST_SHAPED)
    ckpt = str(tmp_path / "m.ckpt")
    assert main(["train", "--config", cfg, "--checkpoint-out", ckpt]) == EXIT_OK
    out = tmp_path / "pgm"
    assert main(["inspect", "--checkpoint", ckpt, "--centroids-pgm", str(out)]) == EXIT_OK
    raw = (out / "L1_F000_c0000.pgm").read_bytes()
    header = b"P5\n28 28\n255\n"
    assert raw[: len(header)] == header
    assert len(raw) == len(header) + 784


def test_gen_data_then_train_from_idx(cfg_file, tmp_path):
    synth_cfg = cfg_file(MNIST_SHAPED)
    data_dir = tmp_path / "idx"
    assert main(["gen-data", "--config", synth_cfg, "--out", str(data_dir)]) == EXIT_OK
    assert sorted(p.name for p in data_dir.iterdir()) == [
        "t10k-images-idx3-ubyte",
        "t10k-labels-idx1-ubyte",
        "train-images-idx3-ubyte",
        "train-labels-idx1-ubyte",
    ]
    idx_cfg = cfg_file(
        MNIST_SHAPED
        + "data.source = idx\n"
        + "data.train_images = idx/train-images-idx3-ubyte\n"
        + "data.train_labels = idx/train-labels-idx1-ubyte\n"
        + "data.test_images = idx/t10k-images-idx3-ubyte\n"
        + "data.test_labels = idx/t10k-labels-idx1-ubyte\n",
        "idx.cfg",
    )
    ckpt = str(tmp_path / "idx.ckpt")
    report = tmp_path / "idx.csv"
    assert main(["train", "--config", idx_cfg, "--checkpoint-out", ckpt]) == EXIT_OK
    assert main(["eval", "--checkpoint", ckpt, "--config", idx_cfg, "--report", str(report)]) == EXIT_OK
    assert read_report(report.read_text())[("all", "purity")] == 1.0


def test_resume_with_checkpoint_in_matches_single_run(cfg_file, tmp_path):
    cfg = cfg_file(FIVE_PROTOTYPES)
    a, b, full = (str(tmp_path / n) for n in ("a.ckpt", "b.ckpt", "full.ckpt"))
    assert main(["train", "--config", cfg, "--checkpoint-out", a, "--max-items", "700"]) == EXIT_OK
    assert main(["train", "--config", cfg, "--checkpoint-in", a, "--checkpoint-out", b]) == EXIT_OK
    assert main(["train", "--config", cfg, "--checkpoint-out", full]) == EXIT_OK
    assert open(b, "rb").read() == open(full, "rb").read()


def test_unknown_subcommand_is_usage_error(capsys):
    assert main(["bogus"]) == EXIT_USAGE
    assert "usage error" in capsys.readouterr().err


def test_missing_required_option_is_usage_error():
    assert main(["train", "--config", "x.cfg"]) == EXIT_USAGE


def test_invalid_config_is_data_error(cfg_file, tmp_path, capsys):
    cfg = cfg_file("layer1.theta_new = 0.2\nlayer1.theta_merge = 0.3\n")
    assert main(["train", "--config", cfg, "--checkpoint-out", str(tmp_path / "x")]) == EXIT_DATA
    assert "theta_merge" in capsys.readouterr().err


def test_parse_error_reports_line(cfg_file, tmp_path, capsys):
    cfg = cfg_file("seed = 1\nwhat = 2\n")
    assert main(["train", "--config", cfg, "--checkpoint-out", str(tmp_path / "x")]) == EXIT_DATA
    assert "line 2" in capsys.readouterr().err


def test_missing_file_is_data_error(tmp_path):
    assert main(["inspect", "--checkpoint", str(tmp_path / "none"), "--centroids-pgm", str(tmp_path)]) == EXIT_DATA


def test_checkpoint_config_mismatch_rejected(cfg_file, tmp_path):
    cfg = cfg_file(FIVE_PROTOTYPES)
    other = cfg_file(FIVE_PROTOTYPES.replace("seed = 3", "seed = 4"), "other.cfg")
    ckpt = str(tmp_path / "c.ckpt")
    assert main(["train", "--config", cfg, "--checkpoint-out", ckpt, "--max-items", "10"]) == EXIT_OK
    assert main(["eval", "--checkpoint", ckpt, "--config", other, "--report", str(tmp_path / "r")]) == EXIT_DATA


def test_two_identical_runs_are_bit_identical(cfg_file, tmp_path):
    cfg = cfg_file(FIVE_PROTOTYPES)
    outputs = []
    for name in ("one", "two"):
        ckpt = tmp_path / f"{name}.ckpt"
        report = tmp_path / f"{name}.csv"
        main(["train", "--config", cfg, "--checkpoint-out", str(ckpt)])
        main(["eval", "--checkpoint", str(ckpt), "--config", cfg, "--report", str(report)])
        outputs.append((ckpt.read_bytes(), report.read_bytes()))
    assert outputs[0] == outputs[1]


def test_module_entry_point(cfg_file):
    proc = subprocess.run([sys.executable, "-m", "stam", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "gen-data" in proc.stdout
