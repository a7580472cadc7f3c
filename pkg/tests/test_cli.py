import json
import os

import numpy as np
import pytest

from layoutpref.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_VALIDATION, main

TINY = dict(count=2, small="25,30", large="36,48", size=32)


def run_tiny_pipeline(data, split_seed=0, regime="m+hp", train_flags=()):
    """Fast full pipeline on a small corpus; asserts each stage exits 0."""
    steps = [
        ["gen-graphs", "--data", data, "--count-per-family", str(TINY["count"]), "--seed", "1",
         "--small-range", TINY["small"], "--large-range", TINY["large"]],
        ["layout", "--data", data, "--seed", "1", "--workers", "1"],
        ["metrics", "--data", data, "--workers", "1"],
        ["label-metric", "--data", data],
        ["synth-votes", "--data", data, "--seed", "2"],
        ["label-hp", "--data", data],
        ["rasterize", "--data", data, "--size", str(TINY["size"]), "--workers", "1"],
        ["train", "--data", data, "--regime", regime, "--split-seed", str(split_seed),
         "--epochs-pretrain", "2", "--epochs-finetune", "2", "--image-size", str(TINY["size"]),
         "--channels", "2,4", "--feature-dim", "8", "--split-ratio", "0.7", *train_flags],
    ]
    for argv in steps:
        assert main(argv) == EXIT_OK, f"step failed: {argv}"
    tag = f"{regime.replace('+', '_')}-split{split_seed}"
    model = os.path.join(data, "models", f"{tag}.params")
    assert main(["evaluate", "--data", data, "--model", model, "--split-seed", str(split_seed)]) == EXIT_OK
    assert main(["report", "--data", data]) == EXIT_OK
    return model


class TestPipeline:
    def test_tiny_pipeline_end_to_end(self, tmp_path, capsys):
        data = str(tmp_path / "data")
        model = run_tiny_pipeline(data)
        assert os.path.isfile(model)
        report = os.path.join(data, "reports", "report.txt")
        assert os.path.isfile(report)
        text = open(report).read()
        assert "Accuracy by graph type" in text
        # training log has one pretrain -> finetune switch
        log_path = model.replace(".params", ".log.jsonl")
        phases = [json.loads(line)["phase"] for line in open(log_path)]
        assert phases == ["pretrain"] * 2 + ["finetune"] * 2

    def test_predict_subcommand(self, tmp_path, capsys):
        data = str(tmp_path / "data")
        model = run_tiny_pipeline(data)
        images = sorted(
            os.path.join(data, "images", n)
            for n in os.listdir(os.path.join(data, "images"))
            if n.endswith(".png")
        )
        assert main(["predict", model, images[0], images[1]]) == EXIT_OK
        out = capsys.readouterr().out
        assert "score=" in out and "label=" in out

    def test_missing_stage_inputs(self, tmp_path):
        data = str(tmp_path / "data")
        assert main(["layout", "--data", data]) == EXIT_VALIDATION
        assert main(["metrics", "--data", data]) == EXIT_VALIDATION
        assert main(["report", "--data", data]) == EXIT_VALIDATION

    def test_stale_input_detection(self, tmp_path):
        data = str(tmp_path / "data")
        assert main(["gen-graphs", "--data", data, "--count-per-family", "1", "--seed", "0",
                     "--small-range", "25,30", "--large-range", "36,48"]) == EXIT_OK
        # tamper with a generated graph behind the manifest's back
        graphs = sorted(os.listdir(os.path.join(data, "graphs")))
        target = os.path.join(data, "graphs", [g for g in graphs if g.endswith(".txt")][0])
        with open(target, "a") as fh:
            fh.write("# tampered\n")
        assert main(["layout", "--data", data]) == EXIT_VALIDATION

    def test_pairs_changed_after_training_rejected(self, tmp_path):
        data = str(tmp_path / "data")
        model = run_tiny_pipeline(data)
        # regenerating votes with another seed rewrites hp.jsonl, so the
        # trained model's recorded split universe no longer matches
        assert main(["synth-votes", "--data", data, "--seed", "99"]) == EXIT_OK
        assert main(["label-hp", "--data", data]) == EXIT_OK
        assert main(["evaluate", "--data", data, "--model", model, "--split-seed", "0"]) == EXIT_VALIDATION

    def test_usage_errors(self, capsys):
        assert main([]) == EXIT_USAGE
        assert main(["train"]) == EXIT_USAGE  # --regime required
        assert main(["no-such-command"]) == EXIT_USAGE

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == EXIT_OK
        assert main(["train", "--help"]) == EXIT_OK
