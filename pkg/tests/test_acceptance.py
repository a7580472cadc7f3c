"""Acceptance gate: one test per criterion, each printing a pass/fail line
and enforcing its runtime budget.

The end-to-end ablation (P6) generates a 60-graph corpus, labels all layout
pairs by metrics, synthesizes noisy participant votes from a hidden oracle,
trains the three regimes over five 7:3 graph splits at image size 64, and
checks chance-beating accuracy plus the expected orderings. It runs in
roughly 45 minutes on two CPU cores.
"""

import hashlib
import json
import math
import os
import random
import time
from contextlib import contextmanager
from datetime import datetime, timezone
from fractions import Fraction

import numpy as np
import pytest

from helpers_grad import check_gradients
from layoutpref import pipeline
from layoutpref.cli import EXIT_OK, main
from layoutpref.errors import ContaminationError
from layoutpref.graphs import (
    GraphFamily,
    SizeClass,
    generate_graph,
    make_graph,
    shortest_path_matrix,
)
from layoutpref.labeling import (
    LabeledPair,
    PairSource,
    Vote,
    label_from_metrics,
    label_from_votes,
    load_pairs,
)
from layoutpref.layouts import layout_random
from layoutpref.metrics import QualityMetrics, count_crossings, shape_metric, stress
from layoutpref.neural import Conv, Dense, Flatten, MaxPool, NetworkSpec, ReLU, Sigmoid
from layoutpref.siamese import Regime, TrainConfig, evaluate, load_model, make_split, predict, train
from layoutpref.stats import (
    Alternative,
    CellStat,
    format_cell,
    format_percent,
    size_class_rollup,
    wilcoxon_signed_rank,
)

TS = datetime(2024, 6, 1, tzinfo=timezone.utc)


@contextmanager
def criterion(code: str, description: str, budget_seconds: float):
    start = time.time()
    try:
        yield
    except BaseException:
        print(f"[{code}] {description}: FAIL ({time.time() - start:.1f}s)")
        raise
    elapsed = time.time() - start
    status = "PASS" if elapsed <= budget_seconds else f"FAIL (over {budget_seconds}s budget)"
    print(f"[{code}] {description}: {status} ({elapsed:.1f}s)")
    assert elapsed <= budget_seconds, f"{code} exceeded its {budget_seconds}s budget"


# ---------------------------------------------------------------------------
# P1: labeling oracle equivalence
# ---------------------------------------------------------------------------

def oracle_vote_label(votes):
    j, k = votes[0].pair
    mean = sum(Fraction(v.score) if v.preferred == j else -Fraction(v.score) for v in votes) / len(votes)
    return 0 if mean > 0 else 1 if mean < 0 else None


def test_p1_labeling_oracle_equivalence():
    with criterion("P1", "vote labeling matches the exact-summation oracle", 5.0):
        rng = random.Random(1001)
        for _ in range(1000):
            pair = (0, 1)
            n = rng.randint(1, 9)
            votes = [
                Vote("g", pair, f"p{i}", rng.choice(pair), rng.randint(0, 5), TS)
                for i in range(n)
            ]
            got = label_from_votes(votes)
            assert (got.label if got is not None else None) == oracle_vote_label(votes)
        # worked vote fixture: scores 1 against, 4 and 3 in favour -> label 0
        fixture = [
            Vote("g7", (0, 1), "p1", 1, 1, TS),
            Vote("g7", (0, 1), "p2", 0, 4, TS),
            Vote("g7", (0, 1), "p3", 0, 3, TS),
        ]
        assert label_from_votes(fixture).label == 0


# ---------------------------------------------------------------------------
# P2: metric-label antisymmetry and scale freedom
# ---------------------------------------------------------------------------

def test_p2_metric_label_antisymmetry_and_scale_freedom():
    with criterion("P2", "metric labels: swap flips, monotone rescaling is invisible", 5.0):
        rng = random.Random(1002)
        for _ in range(1000):
            a = QualityMetrics("g", 0, rng.choice([0.1, 0.5, 0.9]), rng.randint(0, 4), rng.choice([0.2, 0.4, 0.8]))
            b = QualityMetrics("g", 1, rng.choice([0.1, 0.5, 0.9]), rng.randint(0, 4), rng.choice([0.2, 0.4, 0.8]))
            fwd = label_from_metrics(a, b)
            swapped = label_from_metrics(
                QualityMetrics("g", 0, b.shape_score, b.crossing_count, b.stress_score),
                QualityMetrics("g", 1, a.shape_score, a.crossing_count, a.stress_score),
            )
            if fwd is None:
                assert swapped is None
            else:
                assert swapped is not None and swapped.label == 1 - fwd.label
            scaled = label_from_metrics(
                QualityMetrics("g", 0, math.exp(a.shape_score), 3 * a.crossing_count, a.stress_score**3),
                QualityMetrics("g", 1, math.exp(b.shape_score), 3 * b.crossing_count, b.stress_score**3),
            )
            assert (fwd.label if fwd else None) == (scaled.label if scaled else None)


# ---------------------------------------------------------------------------
# P3: geometry oracles
# ---------------------------------------------------------------------------

def test_p3_geometry_oracles():
    from test_metrics import oracle_crossings, oracle_stress_grid

    with criterion("P3", "crossings exact, stress similarity-invariant, shape fixtures", 60.0):
        rng = random.Random(1003)
        # 200 random layouts with |E| <= 40 against the rational brute force
        checked = 0
        trial = 0
        while checked < 200:
            trial += 1
            family = rng.choice([GraphFamily.SPARSE, GraphFamily.BICONNECTED])
            v = rng.randint(8, 20) if family == GraphFamily.SPARSE else rng.randint(8, 13)
            g = generate_graph(family, v, trial)
            if g.edge_count > 40:
                continue
            layout = layout_random(g, trial)
            assert count_crossings(g, layout) == oracle_crossings(g, layout)
            checked += 1

        # stress: similarity invariance within 1e-9 relative
        g = generate_graph(GraphFamily.SPARSE, 24, 7)
        dist = shortest_path_matrix(g)
        layout = layout_random(g, 7)
        base = stress(g, dist, layout)
        theta = math.radians(123.0)
        rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
        from layoutpref.layouts import Layout, LayoutEngine

        moved = Layout(g.id, LayoutEngine.RANDOM, (layout.positions @ rot.T) * 3.25 + 11.0, 0)
        assert abs(stress(g, dist, moved) - base) <= 1e-9 * base

        # closed-form optimal scale vs dense grid search
        p3 = make_graph("p3", 3, [(0, 1), (1, 2)], GraphFamily.SPARSE)
        d3 = shortest_path_matrix(p3)
        right_angle = Layout("p3", LayoutEngine.RANDOM, np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]), 0)
        expected, alpha_grid = oracle_stress_grid(p3, d3, right_angle)
        assert stress(p3, d3, right_angle) == pytest.approx(expected, abs=1e-10)
        iu = np.triu_indices(3, k=1)
        dd = d3.astype(float)[iu]
        eu = np.sqrt(((right_angle.positions[iu[0]] - right_angle.positions[iu[1]]) ** 2).sum(-1))
        alpha_closed = float((eu / dd).sum()) / float((eu**2 / dd**2).sum())
        assert abs(alpha_closed - alpha_grid) < 1e-5

        # shape metric fixtures
        collinear = Layout("p3", LayoutEngine.RANDOM, np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]), 0)
        assert shape_metric(p3, collinear) == 1.0
        k5 = make_graph("k5", 5, [(i, j) for i in range(5) for j in range(i + 1, 5)], GraphFamily.BICONNECTED)
        for seed in range(3):
            assert shape_metric(k5, layout_random(k5, seed)) < 1.0


# ---------------------------------------------------------------------------
# P4: gradient correctness
# ---------------------------------------------------------------------------

def test_p4_gradient_correctness():
    with criterion("P4", "finite-difference agreement for every layer type", 60.0):
        specs = [
            NetworkSpec((2, 5, 5), (Conv(3, 3, stride=1, padding=1),), 1),
            NetworkSpec((2, 6, 6), (Conv(2, 3, stride=2, padding=0),), 2),
            NetworkSpec((2, 4, 4), (ReLU(),), 3),
            NetworkSpec((2, 6, 6), (MaxPool(2, 2),), 4),
            NetworkSpec((2, 3, 3), (Flatten(), Dense(4)), 5),
            NetworkSpec((1, 3, 3), (Flatten(), Dense(3), Sigmoid()), 6),
            NetworkSpec((1, 6, 6), (Conv(2, 3, stride=1, padding=1), ReLU(), MaxPool(2, 2), Flatten(), Dense(3)), 7),
        ]
        for spec in specs:
            assert check_gradients(spec) < 1e-5


# ---------------------------------------------------------------------------
# P5: overfit check
# ---------------------------------------------------------------------------

def test_p5_overfit_check():
    with criterion("P5", "vote regime reaches 100% training accuracy on 20 pairs", 600.0):
        rng = np.random.default_rng(1005)
        gids = [f"g{i}" for i in range(2)]
        images = {(g, i): rng.random((3, 32, 32)) for g in gids for i in range(5)}
        pairs = []
        for g in gids:
            utility = rng.permutation(5)
            for j in range(5):
                for k in range(j + 1, 5):
                    pairs.append(LabeledPair(g, (j, k), 0 if utility[j] > utility[k] else 1, PairSource.HUMAN))
        assert len(pairs) == 20
        split = make_split(gids, 0.6, 0, cv_folds=2)
        cfg = TrainConfig(
            regime=Regime.HUMAN,
            epochs_pretrain=200,
            epochs_finetune=1,
            lr_pretrain=1e-3,
            batch_size=8,
            image_size=32,
            seed=0,
            channels=(8, 16),
            feature_dim=32,
        )
        model, _ = train([], pairs, images, split, cfg)
        correct = 0
        for p in pairs:
            _, label = predict(model, images[(p.graph_id, p.pair[0])], images[(p.graph_id, p.pair[1])])
            correct += label == p.label
        assert correct == len(pairs), f"training accuracy {correct}/{len(pairs)}"


# ---------------------------------------------------------------------------
# P6: synthetic end-to-end ablation
# ---------------------------------------------------------------------------

P6_CORPUS_SEED = 7
P6_VOTE_SEED = 13
P6_SPLIT_SEEDS = (101, 102, 103, 104, 105)
P6_SMALL_RANGE = (25, 80)
P6_LARGE_RANGE = (300, 420)


def _p6_config(regime: Regime, seed: int) -> TrainConfig:
    return TrainConfig(
        regime=regime,
        epochs_pretrain=15,
        epochs_finetune=15,
        lr_pretrain=1e-3,
        lr_finetune=1e-4,
        batch_size=16,
        image_size=64,
        seed=seed,
        channels=(8, 16, 32),
        feature_dim=64,
    )


def test_p6_synthetic_end_to_end_ablation(tmp_path):
    with criterion("P6", "three-regime ablation over five 7:3 splits", 4 * 3600.0):
        data = str(tmp_path / "study")
        pipeline.stage_gen_graphs(data, 15, seed=P6_CORPUS_SEED, small_range=P6_SMALL_RANGE, large_range=P6_LARGE_RANGE)
        pipeline.stage_layout(data, seed=P6_CORPUS_SEED, workers=2)
        pipeline.stage_metrics(data, workers=2)
        pipeline.stage_label_metric(data)
        pipeline.stage_synth_votes(data, seed=P6_VOTE_SEED, flip_probability=0.15, votes_per_pair=1)
        pipeline.stage_label_hp(data)
        pipeline.stage_rasterize(data, size=64, workers=2)

        overall: dict[str, list[float]] = {r.value: [] for r in Regime}
        by_class: dict[str, dict[str, list[float]]] = {r.value: {"small": [], "large": []} for r in Regime}
        small_families = {"sparse", "biconnected"}
        for split_seed in P6_SPLIT_SEEDS:
            for regime in Regime:
                model_path = pipeline.stage_train(data, _p6_config(regime, split_seed), split_seed)
                eval_path = pipeline.stage_evaluate(data, model_path, split_seed)
                with open(eval_path, "r", encoding="utf-8") as fh:
                    doc = json.load(fh)
                overall[regime.value].append(doc["accuracy"])
                small = [c["accuracy"] for f, c in doc["per_family"].items() if f in small_families]
                large = [c["accuracy"] for f, c in doc["per_family"].items() if f not in small_families]
                if small:
                    by_class[regime.value]["small"].append(float(np.mean(small)))
                if large:
                    by_class[regime.value]["large"].append(float(np.mean(large)))
        pipeline.stage_report(data)

        means = {r: float(np.mean(vals)) for r, vals in overall.items()}
        print(f"[P6] mean accuracy per regime over {len(P6_SPLIT_SEEDS)} splits: "
              + ", ".join(f"{r}={means[r]:.4f}" for r in ("m", "hp", "m+hp")))
        large_mhp = float(np.mean(by_class["m+hp"]["large"]))
        small_mhp = float(np.mean(by_class["m+hp"]["small"]))
        print(f"[P6] m+hp size-class accuracy: large={large_mhp:.4f} small={small_mhp:.4f}")

        failures = []
        chance_ok = all(mean > 0.55 for mean in means.values())
        print(f"[P6]   subcriterion 1 (every regime mean > 0.55): {'PASS' if chance_ok else 'FAIL'}")
        if not chance_ok:
            failures.append(
                "chance bar missed: " + ", ".join(f"{r}={means[r]:.4f}" for r in means)
            )
        ordering_ok = means["m+hp"] >= means["hp"] >= means["m"]
        print(f"[P6]   subcriterion 2 (m+hp >= hp >= m): {'PASS' if ordering_ok else 'FAIL'}")
        if not ordering_ok:
            failures.append(
                "regime ordering m+hp >= hp >= m does not hold: "
                + ", ".join(f"{r}={means[r]:.4f}" for r in ("m", "hp", "m+hp"))
            )
        size_ok = large_mhp >= small_mhp
        print(f"[P6]   subcriterion 3 (large >= small): {'PASS' if size_ok else 'FAIL'}")
        if not size_ok:
            failures.append(f"large-family accuracy {large_mhp:.4f} below small-family {small_mhp:.4f}")
        assert not failures, "; ".join(failures)


# ---------------------------------------------------------------------------
# P7: signed-rank correctness
# ---------------------------------------------------------------------------

def test_p7_wilcoxon_correctness():
    from test_stats import oracle_wilcoxon

    with criterion("P7", "exact enumeration matches 2^n brute force; approximation near", 30.0):
        rng = np.random.default_rng(1007)
        for n in range(5, 11):
            for _ in range(100):
                d = rng.integers(-6, 7, size=n).astype(float)
                if np.count_nonzero(d) < 5:
                    continue
                y = np.zeros(n)
                for alt in Alternative:
                    res = wilcoxon_signed_rank(d, y, alt, method="exact")
                    assert res.p_value == pytest.approx(oracle_wilcoxon(d, y, alt), abs=1e-12)
        # all-positive differences: one-sided p is exactly 2^-n
        for n in range(5, 13):
            x = np.arange(1.0, n + 1.0)
            res = wilcoxon_signed_rank(x, np.zeros(n), Alternative.GREATER, method="exact")
            assert res.p_value == pytest.approx(2.0**-n, abs=0)
        # approximation within 0.02 of exact on continuous data
        for n in range(5, 13):
            for _ in range(25):
                d = rng.normal(size=n)
                d[d == 0] = 1.0
                y = np.zeros(n)
                for alt in Alternative:
                    exact = wilcoxon_signed_rank(d, y, alt, method="exact").p_value
                    approx = wilcoxon_signed_rank(d, y, alt, method="approx").p_value
                    assert abs(exact - approx) < 0.02


# ---------------------------------------------------------------------------
# P8: report parity on reference accuracy values
# ---------------------------------------------------------------------------

def test_p8_report_parity():
    with criterion("P8", "reference accuracies reproduce the cell strings and roll-ups", 1.0):
        assert format_cell(0.8655, 0.0320) == "(86.55 ± 3.20) %"
        assert format_cell(0.98, 0.0447) == "(98.00 ± 4.47) %"
        assert format_cell(0.5657, 0.0312) == "(56.57 ± 3.12) %"
        cells = {
            (GraphFamily.SPARSE, "m+hp"): CellStat(0.6214, 0.0259, 5),
            (GraphFamily.BICONNECTED, "m+hp"): CellStat(0.6540, 0.0371, 5),
            (GraphFamily.MESH, "m+hp"): CellStat(0.8655, 0.0320, 5),
            (GraphFamily.SCALEFREE, "m+hp"): CellStat(0.9800, 0.0447, 5),
        }
        rollup = size_class_rollup(cells, "m+hp")
        assert format_percent(rollup[SizeClass.LARGE]) == "92.28%"
        assert format_percent(rollup[SizeClass.SMALL]) == "63.77%"


# ---------------------------------------------------------------------------
# P9: determinism and leakage
# ---------------------------------------------------------------------------

def _run_tiny_pipeline(data: str) -> None:
    steps = [
        ["gen-graphs", "--data", data, "--count-per-family", "2", "--seed", "3",
         "--small-range", "25,30", "--large-range", "36,48"],
        ["layout", "--data", data, "--seed", "3", "--workers", "2"],
        ["metrics", "--data", data, "--workers", "2"],
        ["label-metric", "--data", data],
        ["synth-votes", "--data", data, "--seed", "4"],
        ["label-hp", "--data", data],
        ["rasterize", "--data", data, "--size", "32", "--workers", "2"],
        ["train", "--data", data, "--regime", "m+hp", "--split-seed", "5",
         "--epochs-pretrain", "2", "--epochs-finetune", "2", "--image-size", "32",
         "--channels", "2,4", "--feature-dim", "8"],
    ]
    for argv in steps:
        assert main(argv) == EXIT_OK, f"stage failed: {argv}"
    model = os.path.join(data, "models", "m_hp-split5.params")
    assert main(["evaluate", "--data", data, "--model", model, "--split-seed", "5"]) == EXIT_OK
    assert main(["report", "--data", data]) == EXIT_OK


def _tree_digest(root: str) -> dict:
    out = {}
    for dirpath, _, filenames in os.walk(root):
        for name in filenames:
            full = os.path.join(dirpath, name)
            rel = os.path.relpath(full, root)
            with open(full, "rb") as fh:
                out[rel] = hashlib.sha256(fh.read()).hexdigest()
    return out


def test_p9_determinism_and_leakage(tmp_path, capsys):
    with criterion("P9", "tiny pipeline bit-reproducible; train-graph pairs hard-fail", 900.0):
        dir_a = str(tmp_path / "a")
        dir_b = str(tmp_path / "b")
        _run_tiny_pipeline(dir_a)
        _run_tiny_pipeline(dir_b)
        digests_a = _tree_digest(dir_a)
        digests_b = _tree_digest(dir_b)
        assert digests_a == digests_b, "pipeline reruns diverged"

        # leakage: inject a training-graph pair into an evaluation call
        hp_pairs = load_pairs(os.path.join(dir_a, "pairs", "hp.jsonl"))
        metric_pairs = load_pairs(os.path.join(dir_a, "pairs", "metric.jsonl"))
        model = load_model(os.path.join(dir_a, "models", "m_hp-split5.params"))
        images = pipeline.load_image_store(dir_a, 32)
        split = pipeline.study_split(hp_pairs, metric_pairs, 0.7, 5, cv_folds=2)
        train_pair = [p for p in hp_pairs if p.graph_id in set(split.train_graph_ids)][:1]
        test_pairs = [p for p in hp_pairs if p.graph_id in set(split.test_graph_ids)]
        with pytest.raises(ContaminationError):
            evaluate(model, test_pairs + train_pair, images, split)
