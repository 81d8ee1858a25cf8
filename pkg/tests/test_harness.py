import math
from dataclasses import replace

import numpy as np
import pytest

from causaltransport import harness
from causaltransport.cli import CHECK_FAILED, EXIT_CODES, main
from causaltransport.config import ExperimentConfig, load_config, parse_config
from causaltransport.datasets import Split
from causaltransport.errors import ConfigError
from causaltransport.harness import (
    MetricsRecord,
    emit_report,
    read_metrics,
    run_experiment,
    sweep_nj,
    verify_propositions,
    verify_theorem,
    worst_group_accuracy,
)
from causaltransport.scmio import load_scm
from causaltransport.transport import witness_gaps

TINY = """
kind = cmnist
seeds = 0,1
ni = 3
nj = 8
dataset.n_train = 400
dataset.n_val = 100
dataset.n_ood = 100
train.epochs = 2
vae.epochs = 1
vae.hidden = 32
readout.train_eval_size = 100
"""


def tiny(**changes):
    return replace(parse_config(TINY), **changes)


class TestConfig:
    def test_defaults(self):
        cfg = parse_config("kind = cmnist")
        assert (cfg.ni, cfg.nj) == (10, 256)
        assert cfg.methods == ("erm", "ablation", "ours")
        assert cfg.dataset.kind == "cmnist" and cfg.dataset.rho_train == 0.95

    def test_waterbird_dataset_implied(self):
        cfg = parse_config("kind = waterbird\ndataset.n_train = 100")
        assert cfg.dataset.kind == "waterbird" and cfg.dataset.n_classes == 2 and cfg.dataset.n_train == 100

    def test_values_and_comments(self):
        cfg = parse_config("kind = sweep-nj  # sweep\nseeds = 3, 4\nnj_values = 1,2\nreadout.hidden = 32,16\n"
                           "dataset.rho_ood = flipped\nreadout.partner = same-instance")
        assert cfg.seeds == (3, 4) and cfg.nj_values == (1, 2) and cfg.readout.hidden == (32, 16)
        assert cfg.readout.partner == "same-instance"

    def test_dump_roundtrip(self):
        cfg = parse_config(TINY)
        again = parse_config(cfg.dumps())
        assert again == cfg and again.hash() == cfg.hash()

    def test_hash_ignores_output_dir(self):
        assert tiny(out="a").hash() == tiny(out="b").hash()
        assert tiny(nj=9).hash() != tiny().hash()

    @pytest.mark.parametrize("text", [
        "kind = nope", "ni = 0", "bogus = 1", "dataset.colour = red", "train.lr = fast", "nj_values = 4,1",
        "methods = erm,magic", "weird.section = 1", "no equals sign", "representation = features",
        "dataset.rho_train = 2", "readout.partner = random",
    ])
    def test_invalid(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "none.cfg")


def test_worst_group_accuracy():
    labels = np.array([0, 0, 1, 1, 1])
    attrs = np.array([0, 1, 0, 1, 1])
    split = Split("t", np.zeros((5, 1, 1, 3)), labels, attrs, np.arange(5))
    assert worst_group_accuracy(np.array([0, 1, 1, 1, 0]), split) == 0.0
    assert worst_group_accuracy(labels, split) == 1.0
    assert worst_group_accuracy(np.array([0, 0, 1, 1, 0]), split) == 0.5


@pytest.fixture(scope="module")
def tiny_record():
    return run_experiment(tiny())


class TestRun:
    def test_three_rows_per_seed(self, tiny_record):
        assert [(r["seed"], r["method"]) for r in tiny_record.rows] == [
            (s, m) for s in (0, 1) for m in ("erm", "ablation", "ours")]
        for r in tiny_record.rows:
            assert r["status"] == "ok"
            for k in ("train_acc", "id_acc", "ood_acc", "worst_group_ood"):
                assert 0.0 <= r[k] <= 1.0
        ours = [r for r in tiny_record.rows if r["method"] == "ours"]
        assert all((r["n_i"], r["n_j"]) == (3, 8) for r in ours)

    def test_aggregate_is_median(self, tiny_record):
        vals = [r["ood_acc"] for r in tiny_record.rows if r["method"] == "erm"]
        assert tiny_record.median("erm", "ood_acc") == float(np.median(vals))

    def test_report_files(self, tiny_record, tmp_path):
        paths = emit_report(tiny_record, tmp_path / "out")
        lines = paths["metrics"].read_text().splitlines()
        assert lines[0].split(",") == harness.METRIC_FIELDS and len(lines) == 7
        assert all(line.startswith(tiny_record.config_hash) for line in lines[1:])
        md = paths["report"].read_text()
        assert "| ERM |" in md and "| Ours |" in md and tiny_record.config_hash in md and "[0, 1]" in md
        assert parse_config(paths["config"].read_text()).hash() == tiny_record.config_hash
        back = read_metrics(paths["metrics"])
        assert back.aggregate() == tiny_record.aggregate()

    def test_single_record_report(self, tmp_path):
        rec = MetricsRecord("cmnist", "h", (0,), [dict(seed=0, method="erm", n_i=0, n_j=0, train_acc=1.0,
                                                       id_acc=1.0, ood_acc=0.5, worst_group_ood=0.0, status="ok")])
        paths = emit_report(rec, tmp_path)
        assert len(paths["metrics"].read_text().splitlines()) == 2
        assert paths["report"].read_text().count("| ERM |") == 1

    def test_unwritable_output(self, tiny_record, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(ConfigError):
            emit_report(tiny_record, blocker / "sub")

    def test_rerun_is_byte_identical(self, tiny_record, tmp_path):
        again = run_experiment(tiny())
        a = emit_report(tiny_record, tmp_path / "a")
        b = emit_report(again, tmp_path / "b")
        for key in ("metrics", "summary", "report", "config"):
            assert a[key].read_bytes() == b[key].read_bytes()

    def test_partial_failure_recorded(self, monkeypatch):
        real = harness.train_seed

        def flaky(cfg, seed):
            if seed == 1:
                raise ConfigError("boom")
            return real(cfg, seed)

        monkeypatch.setattr(harness, "train_seed", flaky)
        rec = run_experiment(tiny())
        assert [r["status"] for r in rec.rows if r["seed"] == 0] == ["ok"] * 3
        failed = [r for r in rec.rows if r["seed"] == 1]
        assert len(failed) == 3 and all(r["status"].startswith("failed") for r in failed)
        assert all(math.isnan(r["ood_acc"]) for r in failed)
        assert "Failures" in harness.markdown_summary(rec)

    def test_fairness_budget_enforced(self):
        rec = run_experiment(replace(tiny(seeds=(0,)), readout=replace(tiny().readout, param_budget=1000)))
        assert all("budget" in r["status"] for r in rec.rows)

    def test_wrong_kind(self):
        with pytest.raises(ConfigError):
            run_experiment(tiny(kind="verify-props"))

    def test_feature_representation(self, tmp_path):
        cfg = tiny(seeds=(0,))
        rng = np.random.default_rng(0)
        for split, n in (("train", 400), ("val", 100), ("ood", 100)):
            np.save(tmp_path / f"{split}.npy", rng.normal(size=(n, 5)))
        cfg = replace(cfg, representation="features",
                      features={s: str(tmp_path / f"{s}.npy") for s in ("train", "val", "ood")}).validate()
        rec = run_experiment(cfg)
        assert all(r["status"] == "ok" for r in rec.rows)
        np.save(tmp_path / "ood.npy", rng.normal(size=(7, 5)))
        rec = run_experiment(cfg)
        assert all("expected 100 rows" in r["status"] for r in rec.rows)


class TestSweep:
    def test_single_value_matches_run(self, tiny_record):
        curve = sweep_nj(tiny(), nj_values=[8])
        assert len(curve.curve()) == 1
        run_ood = [r["ood_acc"] for r in tiny_record.rows if r["method"] == "ours"]
        assert [r["ood_acc"] for r in curve.rows] == run_ood

    def test_curve_rows(self, tmp_path):
        rec = sweep_nj(tiny(seeds=(0,)), nj_values=[1, 4, 2000])
        assert [c["n_j"] for c in rec.curve()] == [1, 4, 2000]
        paths = emit_report(rec, tmp_path)
        lines = paths["curve"].read_text().splitlines()
        assert lines[0] == "config_hash,seeds,n_j,median_ood,min_ood,max_ood" and len(lines) == 4

    def test_descending_grid_rejected(self):
        with pytest.raises(ConfigError):
            sweep_nj(tiny(), nj_values=[4, 1])


class TestVerifiers:
    def test_propositions(self, tmp_path):
        report = verify_propositions(ExperimentConfig(kind="verify-props"), tmp_path)
        assert report["passed"]
        values = {r["check"]: r for r in report["rows"]}
        assert float(values["bow pair association gap"]["value"]) == pytest.approx(0.8, abs=1e-12)
        assert values["corrupted pair control flagged"]["passed"]
        a, b = load_scm(tmp_path / "witness_a.scm"), load_scm(tmp_path / "witness_b.scm")
        joint_tv, do_gap = witness_gaps(a, b)
        assert joint_tv <= 1e-9 and do_gap >= 0.1
        assert (tmp_path / "props.csv").read_text().startswith("check,value,threshold,passed")
        assert "| bow pair association gap |" in (tmp_path / "props.md").read_text()

    def test_random_suite_size_echoed(self):
        cfg = parse_config("kind = verify-props\nprops.random_pairs = 7")
        report = verify_propositions(cfg)
        assert any("random pairs (7)" in r["check"] for r in report["rows"])

    def test_budget_exhaustion_reported(self):
        cfg = parse_config("kind = verify-props\nprops.witness_budget = 1\nprops.random_pairs = 2")
        report = verify_propositions(cfg)
        assert not report["passed"]
        assert any("budget exhausted" in r["value"] for r in report["rows"])

    def test_theorem(self, tmp_path):
        cfg = parse_config("kind = verify-theorem\ntheorem.n_scms = 20")
        report = verify_theorem(cfg, tmp_path)
        assert report["passed"] and report["max_tv"] <= 1e-10 and len(report["per_scm"]) == 20
        assert len((tmp_path / "theorem.csv").read_text().splitlines()) == 21


class TestCli:
    def test_verify_props(self, tmp_path, capsys):
        assert main(["verify-props", "--out", str(tmp_path)]) == 0
        assert "pass  bow pair association gap" in capsys.readouterr().out

    def test_failed_check_exit(self, tmp_path):
        cfg = tmp_path / "p.cfg"
        cfg.write_text("kind = verify-props\nprops.witness_budget = 1\nprops.random_pairs = 2\n")
        assert main(["verify-props", "--config", str(cfg), "--out", str(tmp_path / "o")]) == CHECK_FAILED

    def test_verify_theorem(self, tmp_path):
        cfg = tmp_path / "t.cfg"
        cfg.write_text("kind = verify-theorem\ntheorem.n_scms = 5\n")
        assert main(["verify-theorem", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0

    def test_config_error_exit_code(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "missing.cfg")]) == EXIT_CODES["config"]

    def test_run_method_and_seeds(self, tmp_path, capsys):
        cfg = tmp_path / "c.cfg"
        cfg.write_text(TINY)
        out = tmp_path / "o"
        assert main(["run", "--config", str(cfg), "--seed", "5", "--seed", "6", "--method", "erm",
                     "--out", str(out)]) == 0
        rows = (out / "metrics.csv").read_text().splitlines()[1:]
        assert [r.split(",")[1:3] for r in rows] == [["5", "erm"], ["6", "erm"]]
        capsys.readouterr()
        assert main(["report", "--out", str(out)]) == 0
        assert "| ERM |" in capsys.readouterr().out

    def test_sweep(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text(TINY + "nj_values = 1,2\n")
        assert main(["sweep-nj", "--config", str(cfg), "--seed", "0", "--out", str(tmp_path / "o")]) == 0
        assert len((tmp_path / "o" / "nj_curve.csv").read_text().splitlines()) == 3

    def test_threads_match_sequential(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text(TINY)
        main(["run", "--config", str(cfg), "--out", str(tmp_path / "a")])
        main(["run", "--config", str(cfg), "--threads", "2", "--out", str(tmp_path / "b")])
        assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()
