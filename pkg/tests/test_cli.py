import csv
import shutil

import numpy as np
import pytest

from semrb.cli import main
from semrb.io import load_reduced_model, read_manifest, read_matrix

SMALL = """\
p = 4                 # polynomial order
n_snapshots = 6
n_verification = 3
n_max = 8
timing_dimension = 5
timing_repeats = 3
"""


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "small.cfg"
    cfg.write_text(SMALL + f"output_dir = {root / 'archive'}\n")
    assert main(["offline", "--config", str(cfg)]) == 0
    return root, cfg, root / "archive"


def test_offline_archive_layout(run, capsys):
    _, _, arch = run
    man = read_manifest(arch / "manifest.txt")
    assert int(man["N_delta"]) == 1496 and int(man["Q"]) == 18
    assert 1 <= int(man["N"]) <= int(man["N_stored"]) <= 6
    model, _ = load_reduced_model(arch)
    assert model.adv.shape == (6,) + (model.N,) * 3


def test_offline_is_deterministic(run, tmp_path):
    root, cfg, arch = run
    assert main(["offline", "--config", str(cfg), "--archive", str(tmp_path / "again")]) == 0
    assert (tmp_path / "again" / "manifest.txt").read_text() == (arch / "manifest.txt").read_text()
    for name in ("stokes", "adv"):
        assert (tmp_path / "again" / "reduced" / f"{name}.mat").read_bytes() == \
            (arch / "reduced" / f"{name}.mat").read_bytes()


def test_online_summary(run, capsys):
    _, _, arch = run
    assert main(["online", "--archive", str(arch), "--mu", "1.0", "--N", "6"]) == 0
    first = capsys.readouterr().out
    assert "True" in first
    assert main(["online", "--archive", str(arch), "--mu", "1.0", "--N", "6"]) == 0
    assert capsys.readouterr().out == first


def test_online_dump_field(run, tmp_path):
    _, _, arch = run
    out = tmp_path / "field.mat"
    assert main(["online", "--archive", str(arch), "--mu", "2.0", "--dump-field", str(out)]) == 0
    assert read_matrix(out).shape == (1496, 1)


def test_online_without_full_order_files(run, tmp_path):
    _, _, arch = run
    copy = tmp_path / "reduced_only"
    shutil.copytree(arch, copy)
    shutil.rmtree(copy / "full")
    assert main(["online", "--archive", str(copy), "--mu", "0.5"]) == 0


@pytest.mark.parametrize("argv, message", [
    (["online", "--mu", "3.5"], "outside admissible range"),
    (["online", "--mu", "1.0", "--archive", "/nonexistent/archive"], "no archive"),
])
def test_online_errors(run, capsys, argv, message):
    _, _, arch = run
    if "--archive" not in argv:
        argv = argv + ["--archive", str(arch)]
    assert main(argv) != 0
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and message in err[0]


def test_missing_config(capsys):
    assert main(["offline", "--config", "/nonexistent.cfg"]) != 0


def test_study_outputs(run, tmp_path, capsys):
    _, cfg, arch = run
    out = tmp_path / "study"
    assert main(["study", "--config", str(cfg), "--archive", str(arch), "--out", str(out)]) == 0
    stdout = capsys.readouterr().out
    assert "speedup" in stdout and "max_rel_error" in stdout
    with open(out / "pod_energy.csv") as fh:
        rows = list(csv.DictReader(fh))
    s = np.array([float(r["singular_value"]) for r in rows])
    assert np.all(np.diff(s) < 0)
    with open(out / "errors_vs_N.csv") as fh:
        errs = list(csv.DictReader(fh))
    assert [int(r["N"]) for r in errs] == list(range(1, len(errs) + 1))
    with open(out / "timing.csv") as fh:
        timing = {r["quantity"]: float(r["value"]) for r in csv.DictReader(fh)}
    assert timing["speedup"] == pytest.approx(timing["fom_step_seconds"] / timing["rom_step_seconds"])


def test_study_rejects_mismatched_config(run, tmp_path, capsys):
    _, _, arch = run
    cfg = tmp_path / "other.cfg"
    cfg.write_text(SMALL.replace("p = 4", "p = 5"))
    assert main(["study", "--config", str(cfg), "--archive", str(arch)]) != 0
    assert "does not match" in capsys.readouterr().err


def test_single_snapshot(tmp_path):
    cfg = tmp_path / "one.cfg"
    cfg.write_text(SMALL.replace("n_snapshots = 6", "n_snapshots = 1")
                   + f"output_dir = {tmp_path / 'a'}\n")
    assert main(["offline", "--config", str(cfg)]) == 0
    assert read_manifest(tmp_path / "a" / "manifest.txt")["N"] == "1"
    assert main(["study", "--config", str(cfg), "--archive", str(tmp_path / "a")]) == 0
