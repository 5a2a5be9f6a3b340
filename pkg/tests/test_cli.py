import json

import numpy as np
import pytest

from assl.cli import CONFIG_DEFAULTS, build_parser, main
from assl.data import load_dataset


def run_cli(*argv):
    return main(list(argv))


def base_config(tmp_path, **overrides):
    cfg = {
        "classes": 3,
        "joints": 2,
        "raw_frames": 12,
        "per_class": 12,
        "test_per_class": 4,
        "noise_scale": 0.05,
        "labels_fraction": 0.25,
        "hidden": 4,
        "frames": 8,
        "k": 3,
        "batch_labeled": 4,
        "batch_unlabeled": 4,
        "epochs": 1,
        "out_dir": str(tmp_path / "run"),
    }
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return path


class TestGenData:
    def test_writes_loadable_file_with_expected_counts(self, tmp_path, capsys):
        out = tmp_path / "data.jsonl"
        code = run_cli(
            "gen-data", "--out", str(out), "--classes", "4", "--per-class", "5",
            "--joints", "3", "--raw-frames", "10",
        )
        assert code == 0
        info = json.loads(capsys.readouterr().out)
        assert info["samples"] == 20
        assert info["classes"] == 4
        corpus = load_dataset(out)
        assert len(corpus) == 20
        assert sorted({s.label for s in corpus}) == [0, 1, 2, 3]

    def test_missing_out_flag_exits_2(self, capsys):
        assert run_cli("gen-data", "--classes", "4") == 2
        assert "usage" in capsys.readouterr().err

    def test_bad_flag_value_exits_2(self, tmp_path):
        out = tmp_path / "d.jsonl"
        assert run_cli("gen-data", "--out", str(out), "--classes", "1") == 2

    def test_deterministic_given_seed(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        for out in (a, b):
            assert run_cli("gen-data", "--out", str(out), "--classes", "2",
                           "--per-class", "3", "--data-seed", "7") == 0
        assert a.read_bytes() == b.read_bytes()


class TestConfigResolution:
    def test_unknown_config_key_rejected(self, tmp_path, capsys):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"epoch": 3}), encoding="utf-8")
        assert run_cli("train", "--config", str(path)) == 2
        assert "epoch" in capsys.readouterr().err

    def test_wrong_type_rejected(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"epochs": "ten"}), encoding="utf-8")
        assert run_cli("train", "--config", str(path)) == 2

    def test_flag_overrides_config_file(self, tmp_path, capsys):
        cfg = base_config(tmp_path, strategy="supervised_only", labels_fraction=0.5)
        code = run_cli("train", "--config", str(cfg), "--labels-fraction", "0.25")
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["fraction"] == 0.25
        assert summary["strategy"] == "supervised_only"

    def test_help_documents_defaults(self, capsys):
        parser = build_parser()
        with pytest.raises(SystemExit):
            parser.parse_args(["train", "--help"])
        text = capsys.readouterr().out
        assert "--lr " in text or "--lr\n" in text.replace("  ", " ")
        assert "0.0005" in text
        assert "--hidden" in text and "512" in text
        assert "--mask-fraction" in text and "0.2" in text

    def test_every_config_key_has_a_train_or_gen_flag(self, capsys):
        parser = build_parser()
        with pytest.raises(SystemExit):
            parser.parse_args(["train", "--help"])
        text = capsys.readouterr().out
        covered = set(CONFIG_DEFAULTS)
        for key in covered:
            flag = "--" + key.replace("_", "-")
            assert flag in text, f"missing help entry for {flag}"

    def test_unknown_strategy_exits_2_listing_names(self, tmp_path, capsys):
        cfg = base_config(tmp_path)
        assert run_cli("train", "--config", str(cfg), "--strategy", "magic") == 2
        err = capsys.readouterr().err
        assert "assl" in err and "supervised_only" in err


class TestTrain:
    def test_artifacts_and_summary(self, tmp_path, capsys):
        cfg = base_config(tmp_path, strategy="assl", epochs=2)
        assert run_cli("train", "--config", str(cfg)) == 0
        out = tmp_path / "run"
        assert (out / "metrics.csv").exists()
        assert (out / "checkpoint.npz").exists()
        assert (out / "checkpoint.npz.json").exists()
        assert (out / "curves.png").exists()
        summary = json.loads((out / "summary.json").read_text())
        assert summary["strategy"] == "assl"
        assert summary["seed"] == 0
        assert 0.0 <= summary["best_accuracy"] <= 1.0
        echoed = json.loads(capsys.readouterr().out)
        assert echoed == summary

    def test_deterministic_metrics_csv(self, tmp_path):
        outs = []
        for name in ("one", "two"):
            out_dir = tmp_path / name
            cfg = base_config(tmp_path, out_dir=str(out_dir))
            assert run_cli("train", "--config", str(cfg)) == 0
            outs.append((out_dir / "metrics.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_train_on_dataset_file(self, tmp_path):
        data = tmp_path / "d.jsonl"
        test = tmp_path / "t.jsonl"
        assert run_cli("gen-data", "--out", str(data), "--classes", "3",
                       "--per-class", "12", "--joints", "2", "--raw-frames", "12") == 0
        assert run_cli("gen-data", "--out", str(test), "--classes", "3",
                       "--per-class", "4", "--joints", "2", "--raw-frames", "12",
                       "--data-seed", "9") == 0
        cfg = base_config(tmp_path, data=str(data), test_data=str(test),
                          strategy="supervised_only")
        assert run_cli("train", "--config", str(cfg)) == 0

    def test_missing_data_file_exits_1(self, tmp_path):
        cfg = base_config(tmp_path, data=str(tmp_path / "absent.jsonl"))
        assert run_cli("train", "--config", str(cfg)) == 1

    def test_dump_neighbors_flag(self, tmp_path):
        cfg = base_config(tmp_path)
        assert run_cli("train", "--config", str(cfg), "--dump-neighbors") == 0
        assert (tmp_path / "run" / "neighbors.csv").exists()


class TestEval:
    def test_eval_round_trip(self, tmp_path, capsys):
        cfg = base_config(tmp_path, strategy="supervised_only")
        assert run_cli("train", "--config", str(cfg)) == 0
        data = tmp_path / "eval.jsonl"
        assert run_cli("gen-data", "--out", str(data), "--classes", "3",
                       "--per-class", "4", "--joints", "2", "--raw-frames", "12") == 0
        capsys.readouterr()
        code = run_cli("eval", "--checkpoint", str(tmp_path / "run" / "checkpoint.npz"),
                       "--data", str(data))
        assert code == 0
        info = json.loads(capsys.readouterr().out)
        assert info["samples"] == 12
        assert 0.0 <= info["accuracy"] <= 1.0

    def test_missing_checkpoint_exits_1(self, tmp_path):
        data = tmp_path / "d.jsonl"
        run_cli("gen-data", "--out", str(data), "--classes", "2", "--per-class", "2")
        assert run_cli("eval", "--checkpoint", str(tmp_path / "nope.npz"),
                       "--data", str(data)) == 1

    def test_corrupt_checkpoint_exits_1(self, tmp_path, capsys):
        cfg = base_config(tmp_path, strategy="supervised_only")
        assert run_cli("train", "--config", str(cfg)) == 0
        sidecar = tmp_path / "run" / "checkpoint.npz.json"
        sidecar.write_text("{not json", encoding="utf-8")
        data = tmp_path / "d.jsonl"
        run_cli("gen-data", "--out", str(data), "--classes", "3",
                "--per-class", "2", "--joints", "2", "--raw-frames", "12")
        capsys.readouterr()
        assert run_cli("eval", "--checkpoint", str(tmp_path / "run" / "checkpoint.npz"),
                       "--data", str(data)) == 1


class TestAblate:
    def test_two_variant_table_with_plots(self, tmp_path, capsys):
        cfg = base_config(tmp_path, epochs=1)
        code = run_cli("ablate", "--config", str(cfg),
                       "--variants", "supervised_only,assl", "--seeds", "2", "--ks", "1,2")
        assert code == 0
        out = tmp_path / "run"
        table = (out / "ablation.csv").read_text().splitlines()
        assert table[0] == "variant,seeds,mean_acc,std_acc,accuracies"
        assert len(table) == 3
        assert (out / "ksweep.csv").exists()
        assert (out / "ksweep.png").exists()
        assert (out / "neighbor_quality.png").exists()

        # table means equal recomputation from the per-seed summary files
        for line in table[1:]:
            variant, seeds, mean_acc, _, _ = line.split(",")
            per_seed = []
            for seed in range(int(seeds)):
                summary = json.loads(
                    (out / "runs" / f"{variant}-seed{seed}" / "summary.json").read_text()
                )
                per_seed.append(summary["best_accuracy"])
            assert float(mean_acc) == float(np.mean(per_seed))

    def test_invalid_variant_exits_2_listing_names(self, tmp_path, capsys):
        cfg = base_config(tmp_path)
        assert run_cli("ablate", "--config", str(cfg), "--variants", "sup,nope") == 2
        err = capsys.readouterr().err
        assert "nope" in err and "assl" in err

    def test_bad_ks_exits_2(self, tmp_path):
        cfg = base_config(tmp_path)
        assert run_cli("ablate", "--config", str(cfg), "--variants", "sup",
                       "--ks", "1,x") == 2


class TestExportEmbeddings:
    def test_export_from_checkpoint(self, tmp_path, capsys):
        cfg = base_config(tmp_path, strategy="supervised_only")
        assert run_cli("train", "--config", str(cfg)) == 0
        out = tmp_path / "emb.tsv"
        capsys.readouterr()
        code = run_cli("export-embeddings",
                       "--checkpoint", str(tmp_path / "run" / "checkpoint.npz"),
                       "--out", str(out), "--config", str(cfg))
        assert code == 0
        info = json.loads(capsys.readouterr().out)
        lines = out.read_text().splitlines()
        assert len(lines) == info["rows"] + 1
        assert len(lines[0].split("\t")) == 3 + info["dims"]

    def test_missing_checkpoint_exits_1(self, tmp_path):
        cfg = base_config(tmp_path)
        assert run_cli("export-embeddings", "--checkpoint", str(tmp_path / "no.npz"),
                       "--out", str(tmp_path / "e.tsv"), "--config", str(cfg)) == 1


class TestTopLevel:
    def test_no_command_prints_help(self, capsys):
        assert run_cli() == 2
        assert "usage" in capsys.readouterr().out

    def test_unknown_command_exits_2(self, capsys):
        assert run_cli("frobnicate") == 2
