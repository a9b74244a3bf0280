"""End-to-end command-line runs on a small dataset, including exit codes
and byte-stable outputs."""

import os
import subprocess
import sys

import pytest

from cbx.cli import main
from cbx.dataio import blob_path, load_dataset, load_model
from cbx.imageio import decode_ppm


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """One small generated dataset and trained model shared by CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    data = str(root / "data")
    model = str(root / "model.json")
    assert main(["gen", "--out", data, "--seed", "3", "--samples", "120"]) == 0
    assert main(["train", "--data", data, "--regime", "independent",
                 "--sigmoid", "true", "--epochs", "2", "--seed", "1",
                 "--out", model]) == 0
    return {"root": root, "data": data, "model": model}


class TestGen:
    def test_writes_both_splits(self, workdir):
        data = workdir["data"]
        train = load_dataset(os.path.join(data, "train.json"))
        test = load_dataset(os.path.join(data, "test.json"))
        assert len(train) == 96 and len(test) == 24

    def test_rerun_is_byte_identical(self, workdir, tmp_path):
        other = str(tmp_path / "data2")
        assert main(["gen", "--out", other, "--seed", "3", "--samples", "120"]) == 0
        for name in ("train.json", "test.json"):
            a = open(os.path.join(workdir["data"], name), "rb").read()
            b = open(os.path.join(other, name), "rb").read()
            assert a == b
            a = open(blob_path(os.path.join(workdir["data"], name)), "rb").read()
            b = open(blob_path(os.path.join(other, name)), "rb").read()
            assert a == b


class TestTrain:
    def test_model_loads_back(self, workdir):
        model = load_model(workdir["model"])
        assert model.n_concepts == 12 and model.n_classes == 8

    def test_missing_data_dir_is_data_error(self, tmp_path):
        rc = main(["train", "--data", str(tmp_path / "nope"), "--regime",
                   "independent", "--sigmoid", "true",
                   "--out", str(tmp_path / "m.json")])
        assert rc == 3


class TestAttribute:
    def test_concept_target_writes_ppm_and_csv(self, workdir, tmp_path):
        out = str(tmp_path / "map.ppm")
        csv = str(tmp_path / "map.csv")
        rc = main(["attribute", "--model", workdir["model"], "--data",
                   workdir["data"], "--sample", "0", "--target", "concept:0",
                   "--method", "lrp", "--out", out, "--csv", csv])
        assert rc == 0
        img = decode_ppm(open(out, "rb").read())
        assert img.shape == (64, 64, 3)
        rows = open(csv).read().strip().split("\n")
        assert len(rows) == 64 and len(rows[0].split(",")) == 64

    def test_class_target_emits_sign_pattern(self, workdir, tmp_path, capsys):
        out = str(tmp_path / "strip.ppm")
        rc = main(["attribute", "--model", workdir["model"], "--data",
                   workdir["data"], "--sample", "0", "--target", "class:1",
                   "--method", "lrp", "--out", out])
        assert rc == 0
        printed = capsys.readouterr().out
        assert "sign_pattern" in printed
        for key in ("present_pos", "present_neg", "absent_pos", "absent_neg", "zero"):
            assert key in printed
        counts = dict(tok.split("=") for tok in
                      printed.splitlines()[0].split()[1:])
        assert sum(int(v) for v in counts.values()) == 12

    def test_each_method_runs(self, workdir, tmp_path):
        for method in ("lrp", "grad", "ig"):
            out = str(tmp_path / f"{method}.ppm")
            rc = main(["attribute", "--model", workdir["model"], "--data",
                       workdir["data"], "--sample", "1", "--target", "concept:3",
                       "--method", method, "--steps", "8", "--out", out])
            assert rc == 0

    def test_pgm_magnitude_map(self, workdir, tmp_path):
        out = str(tmp_path / "map.ppm")
        pgm = str(tmp_path / "map.pgm")
        rc = main(["attribute", "--model", workdir["model"], "--data",
                   workdir["data"], "--sample", "0", "--target", "concept:0",
                   "--method", "grad", "--out", out, "--pgm", pgm])
        assert rc == 0
        data = open(pgm, "rb").read()
        assert data.startswith(b"P5\n64 64\n255\n")
        assert len(data) == len(b"P5\n64 64\n255\n") + 64 * 64

    def test_smoothgrad_flag(self, workdir, tmp_path):
        out = str(tmp_path / "sg.ppm")
        rc = main(["attribute", "--model", workdir["model"], "--data",
                   workdir["data"], "--sample", "0", "--target", "concept:0",
                   "--method", "grad", "--smoothgrad", "3", "0.1",
                   "--seed", "5", "--out", out])
        assert rc == 0

    def test_bad_target_is_usage_error(self, workdir, tmp_path):
        rc = main(["attribute", "--model", workdir["model"], "--data",
                   workdir["data"], "--sample", "0", "--target", "pixel:0",
                   "--method", "lrp", "--out", str(tmp_path / "x.ppm")])
        assert rc == 2

    def test_out_of_range_sample_is_data_error(self, workdir, tmp_path):
        rc = main(["attribute", "--model", workdir["model"], "--data",
                   workdir["data"], "--sample", "9999", "--target", "concept:0",
                   "--method", "lrp", "--out", str(tmp_path / "x.ppm")])
        assert rc == 3


class TestPointing:
    def test_emits_csv_with_expected_columns(self, workdir, tmp_path):
        out = str(tmp_path / "pointing.csv")
        rc = main(["pointing", "--model", workdir["model"], "--data",
                   workdir["data"], "--methods", "lrp,grad,ig",
                   "--map", "0=0,1=1,2=2", "--limit", "6", "--steps", "4",
                   "--out", out])
        assert rc == 0
        lines = open(out).read().strip().split("\n")
        assert lines[0] == "method,part_id,n_samples,n_skipped,mean_distance,shortest10_mean"
        methods = {line.split(",")[0] for line in lines[1:]}
        assert methods == {"lrp", "grad", "ig"}

    def test_concept_names_accepted_in_map(self, workdir, tmp_path):
        out = str(tmp_path / "pointing2.csv")
        rc = main(["pointing", "--model", workdir["model"], "--data",
                   workdir["data"], "--methods", "grad",
                   "--map", "has_circle=circle", "--limit", "4", "--out", out])
        assert rc == 0

    def test_unknown_method_is_usage_error(self, workdir, tmp_path):
        rc = main(["pointing", "--model", workdir["model"], "--data",
                   workdir["data"], "--methods", "occlusion",
                   "--map", "0=0", "--out", str(tmp_path / "x.csv")])
        assert rc == 2


class TestContrib:
    def test_report_sums_to_hundred(self, workdir, tmp_path):
        out = str(tmp_path / "contrib.csv")
        rc = main(["contrib", "--model", workdir["model"], "--data",
                   workdir["data"], "--sample", "2", "--out", out])
        assert rc == 0
        lines = open(out).read().strip().split("\n")
        assert lines[0].split(",")[0] == "concept_id"
        # six significant digits per cell: the printed sum carries rounding
        total = sum(float(line.split(",")[4]) for line in lines[1:])
        assert abs(total - 100.0) < 1e-3 or total == 0.0

    def test_explicit_class_target(self, workdir, tmp_path):
        out = str(tmp_path / "contrib3.csv")
        rc = main(["contrib", "--model", workdir["model"], "--data",
                   workdir["data"], "--sample", "0", "--target", "class:3",
                   "--out", out])
        assert rc == 0


class TestIntervene:
    def test_empty_equivalent_override_keeps_probs(self, workdir, tmp_path):
        out = str(tmp_path / "iv.csv")
        rc = main(["intervene", "--model", workdir["model"], "--data",
                   workdir["data"], "--sample", "0", "--set", "0=1,5=0",
                   "--out", out])
        assert rc == 0
        lines = open(out).read().strip().split("\n")
        assert lines[0] == "class_id,class_name,old_prob,new_prob,delta"
        assert len(lines) == 1 + 8

    def test_bad_concept_name_is_usage_error(self, workdir, tmp_path):
        rc = main(["intervene", "--model", workdir["model"], "--data",
                   workdir["data"], "--sample", "0", "--set", "has_wings=1",
                   "--out", str(tmp_path / "x.csv")])
        assert rc == 2


class TestExitCodes:
    def test_unknown_subcommand_is_usage_error(self):
        assert main(["frobnicate"]) == 2

    def test_missing_required_flag_is_usage_error(self):
        assert main(["gen", "--out", "/tmp/nowhere"]) == 2

    def test_console_script_entry_point(self, workdir):
        proc = subprocess.run(
            [sys.executable, "-m", "cbx.cli", "gen", "--out",
             str(workdir["root"] / "sub"), "--seed", "1", "--samples", "5"],
            capture_output=True, text=True)
        assert proc.returncode == 0
        assert "wrote 4 train / 1 test" in proc.stdout
