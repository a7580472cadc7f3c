"""Pipeline stages over a data directory.

Layout on disk:

    data/
      graphs/    <graph_id>.txt
      layouts/   <graph_id>__<index>.json
      metrics/   metrics.jsonl
      pairs/     metric.jsonl, hp.jsonl
      votes/     votes.jsonl
      images/    <graph_id>__<index>.png
      models/    <regime>-split<seed>.params (+ .log.jsonl)
      reports/   eval-<regime>-split<seed>.json, report.txt

Every stage writes a `.manifest.json` recording a digest of its config, its
consumed inputs, and its outputs; consumers recompute input digests so a
stale or hand-edited artifact fails loudly instead of silently skewing a
run. Manifests carry no timestamps: a repeated run is byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict

import numpy as np

from .errors import StageInputError, ValidationError
from .graphs import (
    DEFAULT_SIZE_RANGE,
    GraphFamily,
    SizeClass,
    generate_graph,
    load_graph,
    save_graph,
    shortest_path_matrix,
)
from .labeling import (
    build_metric_dataset,
    build_vote_dataset,
    load_pairs,
    load_votes,
    save_pairs,
    save_votes,
)
from .layouts import layout_suite, load_layout, save_layout
from .metrics import load_metrics, metrics_for, save_metrics
from .raster import RasterStyle, load_png, rasterize, save_png
from .siamese import (
    Regime,
    SplitPlan,
    TrainConfig,
    evaluate,
    load_model,
    make_split,
    save_model,
    train,
)
from .stats import (
    RunRecord,
    build_report,
    render_accuracy_table,
    render_significance_table,
)
from .synth import synthesize_votes

MANIFEST_NAME = ".manifest.json"

GRAPHS_DIR = "graphs"
LAYOUTS_DIR = "layouts"
METRICS_DIR = "metrics"
PAIRS_DIR = "pairs"
VOTES_DIR = "votes"
IMAGES_DIR = "images"
MODELS_DIR = "models"
REPORTS_DIR = "reports"


def _digest_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _digest_tree(paths) -> dict[str, str]:
    return {os.path.basename(str(p)): _digest_file(p) for p in sorted(map(str, paths))}


def write_manifest(stage_dir, stage: str, config: dict, inputs: dict[str, str], outputs) -> None:
    doc = {
        "stage": stage,
        "config": config,
        "inputs": inputs,
        "outputs": _digest_tree(outputs),
    }
    with open(os.path.join(str(stage_dir), MANIFEST_NAME), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def check_inputs(data_dir, *paths) -> dict[str, str]:
    """Require inputs to exist and match their producer's recorded digests.

    Returns {relative path: digest} for the consuming stage's manifest, so
    manifests are byte-identical across data directory locations.
    """
    digests: dict[str, str] = {}
    for path in map(str, paths):
        if not os.path.exists(path):
            raise StageInputError(f"missing input artifact: {path} (run the producing stage first)")
        digest = _digest_file(path)
        digests[os.path.relpath(path, str(data_dir))] = digest
        manifest_path = os.path.join(os.path.dirname(path), MANIFEST_NAME)
        if os.path.exists(manifest_path):
            with open(manifest_path, "r", encoding="utf-8") as fh:
                recorded = json.load(fh).get("outputs", {})
            name = os.path.basename(path)
            if name in recorded and recorded[name] != digest:
                raise StageInputError(
                    f"stale input artifact: {path} changed since its stage ran (digest mismatch)"
                )
    return digests


def _dir(data_dir, name) -> str:
    path = os.path.join(str(data_dir), name)
    os.makedirs(path, exist_ok=True)
    return path


def _list_files(directory, suffix) -> list[str]:
    if not os.path.isdir(directory):
        return []
    return sorted(
        os.path.join(directory, n) for n in os.listdir(directory) if n.endswith(suffix)
    )


# ---------------------------------------------------------------------------
# gen-graphs
# ---------------------------------------------------------------------------

def _mesh_dims_in_range(rng: random.Random, lo: int, hi: int) -> int:
    for _ in range(1000):
        r = rng.randint(max(2, int(math.isqrt(lo)) - 3), max(3, int(math.isqrt(hi)) + 3))
        c_lo = max(2, -(-lo // r))
        c_hi = hi // r
        if c_lo <= c_hi:
            return r * rng.randint(c_lo, c_hi)
    raise ValidationError(f"cannot factor a mesh size within [{lo}, {hi}]")


def stage_gen_graphs(
    data_dir,
    count_per_family: int,
    seed: int,
    small_range: tuple[int, int] | None = None,
    large_range: tuple[int, int] | None = None,
) -> list[str]:
    """Generate count_per_family graphs of each family; returns file paths."""
    small = small_range or DEFAULT_SIZE_RANGE[SizeClass.SMALL]
    large = large_range or DEFAULT_SIZE_RANGE[SizeClass.LARGE]
    out_dir = _dir(data_dir, GRAPHS_DIR)
    rng = random.Random(f"gen:{seed}")
    paths = []
    for family in GraphFamily:
        lo, hi = small if family in (GraphFamily.SPARSE, GraphFamily.BICONNECTED) else large
        for i in range(count_per_family):
            if family == GraphFamily.MESH:
                v = _mesh_dims_in_range(rng, lo, hi)
            elif family == GraphFamily.SCALEFREE:
                v = rng.randint(max(lo, 9), hi)
            else:
                v = rng.randint(max(lo, 5), hi)
            g = generate_graph(family, v, seed * 1000 + i)
            path = os.path.join(out_dir, f"{g.id}.txt")
            save_graph(g, path)
            paths.append(path)
    write_manifest(
        out_dir,
        "gen-graphs",
        {
            "count_per_family": count_per_family,
            "seed": seed,
            "small_range": list(small),
            "large_range": list(large),
        },
        {},
        paths,
    )
    return paths


# ---------------------------------------------------------------------------
# layout
# ---------------------------------------------------------------------------

def _layout_task(args) -> list[str]:
    graph_path, out_dir, seed = args
    g = load_graph(graph_path)
    dist = shortest_path_matrix(g)
    written = []
    for layout in layout_suite(g, seed, dist):
        path = os.path.join(out_dir, f"{g.id}__{layout.layout_index}.json")
        save_layout(layout, path)
        written.append(path)
    return written


def _run_tasks(task, args_list, workers: int):
    if workers <= 1:
        return [task(args) for args in args_list]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, args_list))


def stage_layout(data_dir, seed: int, workers: int = 1) -> list[str]:
    graphs = _list_files(os.path.join(str(data_dir), GRAPHS_DIR), ".txt")
    if not graphs:
        raise StageInputError("missing input artifacts: graphs/*.txt (run gen-graphs first)")
    inputs = check_inputs(data_dir, *graphs)
    out_dir = _dir(data_dir, LAYOUTS_DIR)
    results = _run_tasks(_layout_task, [(p, out_dir, seed) for p in graphs], workers)
    paths = [p for chunk in results for p in chunk]
    write_manifest(out_dir, "layout", {"seed": seed}, inputs, paths)
    return paths


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def _metrics_task(args) -> list[dict]:
    graph_path, layout_paths = args
    g = load_graph(graph_path)
    dist = shortest_path_matrix(g)
    out = []
    for lp in layout_paths:
        layout = load_layout(lp)
        out.append(asdict(metrics_for(g, dist, layout)))
    return out


def stage_metrics(data_dir, workers: int = 1) -> str:
    graphs = _list_files(os.path.join(str(data_dir), GRAPHS_DIR), ".txt")
    layouts = _list_files(os.path.join(str(data_dir), LAYOUTS_DIR), ".json")
    if not graphs or not layouts:
        raise StageInputError("missing input artifacts: graphs and layouts stages must run first")
    inputs = check_inputs(data_dir, *graphs, *layouts)
    by_graph: dict[str, list[str]] = {}
    for lp in layouts:
        gid = os.path.basename(lp)[: -len(".json")].rsplit("__", 1)[0]
        by_graph.setdefault(gid, []).append(lp)
    args_list = []
    for gp in graphs:
        gid = os.path.basename(gp)[: -len(".txt")]
        args_list.append((gp, sorted(by_graph.get(gid, []))))
    results = _run_tasks(_metrics_task, args_list, workers)
    from .metrics import QualityMetrics

    records = [QualityMetrics(**doc) for chunk in results for doc in chunk]
    records.sort(key=lambda m: (m.graph_id, m.layout_index))
    out_dir = _dir(data_dir, METRICS_DIR)
    path = os.path.join(out_dir, "metrics.jsonl")
    save_metrics(records, path)
    write_manifest(out_dir, "metrics", {}, inputs, [path])
    return path


# ---------------------------------------------------------------------------
# labels and votes
# ---------------------------------------------------------------------------

def stage_label_metric(data_dir) -> str:
    metrics_path = os.path.join(str(data_dir), METRICS_DIR, "metrics.jsonl")
    inputs = check_inputs(data_dir, metrics_path)
    pairs = build_metric_dataset(load_metrics(metrics_path))
    out_dir = _dir(data_dir, PAIRS_DIR)
    path = os.path.join(out_dir, "metric.jsonl")
    save_pairs(pairs, path)
    manifest_inputs = dict(inputs)
    hp_path = os.path.join(out_dir, "hp.jsonl")
    outputs = [path] + ([hp_path] if os.path.exists(hp_path) else [])
    write_manifest(out_dir, "label-metric", {}, manifest_inputs, outputs)
    return path


def stage_synth_votes(data_dir, seed: int, flip_probability: float = 0.15, votes_per_pair: int = 1) -> str:
    metric_path = os.path.join(str(data_dir), PAIRS_DIR, "metric.jsonl")
    inputs = check_inputs(data_dir, metric_path)
    votes = synthesize_votes(load_pairs(metric_path), seed, flip_probability, votes_per_pair)
    out_dir = _dir(data_dir, VOTES_DIR)
    path = os.path.join(out_dir, "votes.jsonl")
    save_votes(votes, path)
    write_manifest(
        out_dir,
        "synth-votes",
        {"seed": seed, "flip_probability": flip_probability, "votes_per_pair": votes_per_pair},
        inputs,
        [path],
    )
    return path


def stage_label_hp(data_dir) -> str:
    votes_path = os.path.join(str(data_dir), VOTES_DIR, "votes.jsonl")
    inputs = check_inputs(data_dir, votes_path)
    labeled, discarded = build_vote_dataset(load_votes(votes_path))
    out_dir = _dir(data_dir, PAIRS_DIR)
    path = os.path.join(out_dir, "hp.jsonl")
    save_pairs(labeled, path)
    metric_path = os.path.join(out_dir, "metric.jsonl")
    outputs = [path] + ([metric_path] if os.path.exists(metric_path) else [])
    write_manifest(out_dir, "label-hp", {"discarded": discarded}, inputs, outputs)
    return path


# ---------------------------------------------------------------------------
# rasterize
# ---------------------------------------------------------------------------

def _raster_task(args) -> list[str]:
    graph_path, layout_paths, out_dir, size = args
    g = load_graph(graph_path)
    style = RasterStyle(size=size)
    written = []
    for lp in layout_paths:
        layout = load_layout(lp)
        img = rasterize(layout, g, style)
        path = os.path.join(out_dir, f"{g.id}__{layout.layout_index}.png")
        save_png(img, path)
        written.append(path)
    return written


def stage_rasterize(data_dir, size: int = 64, workers: int = 1) -> list[str]:
    graphs = _list_files(os.path.join(str(data_dir), GRAPHS_DIR), ".txt")
    layouts = _list_files(os.path.join(str(data_dir), LAYOUTS_DIR), ".json")
    if not graphs or not layouts:
        raise StageInputError("missing input artifacts: graphs and layouts stages must run first")
    inputs = check_inputs(data_dir, *graphs, *layouts)
    by_graph: dict[str, list[str]] = {}
    for lp in layouts:
        gid = os.path.basename(lp)[: -len(".json")].rsplit("__", 1)[0]
        by_graph.setdefault(gid, []).append(lp)
    out_dir = _dir(data_dir, IMAGES_DIR)
    args_list = []
    for gp in graphs:
        gid = os.path.basename(gp)[: -len(".txt")]
        args_list.append((gp, sorted(by_graph.get(gid, [])), out_dir, size))
    results = _run_tasks(_raster_task, args_list, workers)
    paths = [p for chunk in results for p in chunk]
    write_manifest(out_dir, "rasterize", {"size": size}, inputs, paths)
    return paths


# ---------------------------------------------------------------------------
# train / evaluate / report
# ---------------------------------------------------------------------------

def load_image_store(data_dir, image_size: int) -> dict[tuple[str, int], np.ndarray]:
    image_dir = os.path.join(str(data_dir), IMAGES_DIR)
    paths = _list_files(image_dir, ".png")
    if not paths:
        raise StageInputError("missing input artifacts: images/*.png (run rasterize first)")
    store: dict[tuple[str, int], np.ndarray] = {}
    for path in paths:
        stem = os.path.basename(path)[: -len(".png")]
        gid, idx = stem.rsplit("__", 1)
        img = load_png(path)
        if img.width != image_size or img.height != image_size:
            raise ValidationError(
                f"{path}: image is {img.width}x{img.height}, expected {image_size}x{image_size}"
            )
        store[(gid, int(idx))] = np.ascontiguousarray(img.pixels.transpose(2, 0, 1))
    return store


def study_split(hp_pairs, metric_pairs, ratio: float, seed: int, cv_folds: int) -> SplitPlan:
    """Graph-level split over the vote-labeled graphs; graphs that only have
    metric pairs always land on the training side (they are never tested)."""
    hp_ids = sorted({p.graph_id for p in hp_pairs})
    base = make_split(hp_ids, ratio, seed, cv_folds)
    extras = sorted({p.graph_id for p in metric_pairs} - set(hp_ids))
    if not extras:
        return base
    folds = [list(f) for f in base.folds]
    for i, gid in enumerate(extras):
        folds[i % len(folds)].append(gid)
    return SplitPlan(
        train_graph_ids=tuple(list(base.train_graph_ids) + extras),
        test_graph_ids=base.test_graph_ids,
        folds=tuple(tuple(f) for f in folds),
    )


def stage_train(data_dir, cfg: TrainConfig, split_seed: int) -> str:
    pairs_dir = os.path.join(str(data_dir), PAIRS_DIR)
    metric_path = os.path.join(pairs_dir, "metric.jsonl")
    hp_path = os.path.join(pairs_dir, "hp.jsonl")
    needed = []
    if cfg.regime in (Regime.METRIC, Regime.COMBINED):
        needed.append(metric_path)
    if cfg.regime in (Regime.HUMAN, Regime.COMBINED):
        needed.append(hp_path)
    # the split is defined over vote-labeled graphs, so hp pairs are needed
    # to reproduce it even for the metric-only regime
    if hp_path not in needed and os.path.exists(hp_path):
        needed.append(hp_path)
    inputs = check_inputs(data_dir, *needed)
    metric_pairs = load_pairs(metric_path) if os.path.exists(metric_path) else []
    hp_pairs = load_pairs(hp_path) if os.path.exists(hp_path) else []
    images = load_image_store(data_dir, cfg.image_size)
    split = study_split(hp_pairs, metric_pairs, cfg.split_ratio, split_seed, cfg.cv_folds)
    model, log = train(metric_pairs, hp_pairs, images, split, cfg)
    out_dir = _dir(data_dir, MODELS_DIR)
    tag = f"{cfg.regime.value.replace('+', '_')}-split{split_seed}"
    model_path = os.path.join(out_dir, f"{tag}.params")
    save_model(
        model_path,
        model,
        extra={
            "split_seed": split_seed,
            "config": {
                "epochs_pretrain": cfg.epochs_pretrain,
                "epochs_finetune": cfg.epochs_finetune,
                "lr_pretrain": cfg.lr_pretrain,
                "lr_finetune": cfg.lr_finetune,
                "batch_size": cfg.batch_size,
                "image_size": cfg.image_size,
                "seed": cfg.seed,
                "join": cfg.join.value,
                "split_ratio": cfg.split_ratio,
                "channels": list(cfg.channels),
                "feature_dim": cfg.feature_dim,
            },
            "data_digests": {os.path.basename(k): v for k, v in inputs.items()},
        },
    )
    log_path = os.path.join(out_dir, f"{tag}.log.jsonl")
    with open(log_path, "w", encoding="utf-8") as fh:
        for rec in log:
            fh.write(json.dumps(asdict(rec)) + "\n")
    existing = [p for p in _list_files(out_dir, ".params") + _list_files(out_dir, ".log.jsonl")]
    write_manifest(out_dir, "train", {"tag": tag}, inputs, existing)
    return model_path


def stage_evaluate(data_dir, model_path, split_seed: int) -> str:
    pairs_dir = os.path.join(str(data_dir), PAIRS_DIR)
    hp_path = os.path.join(pairs_dir, "hp.jsonl")
    metric_path = os.path.join(pairs_dir, "metric.jsonl")
    inputs = check_inputs(data_dir, model_path, hp_path)
    model = load_model(model_path)
    extra_digests = _model_extra(model_path).get("data_digests", {})
    for path in (hp_path, metric_path):
        name = os.path.basename(path)
        if name in extra_digests and os.path.exists(path):
            if _digest_file(path) != extra_digests[name]:
                raise StageInputError(
                    f"stale input artifact: {path} changed after the model was trained; "
                    "retrain or restore the original pair files"
                )
    hp_pairs = load_pairs(hp_path)
    metric_pairs = load_pairs(metric_path) if os.path.exists(metric_path) else []
    images = load_image_store(data_dir, model.image_size)
    extra = _model_extra(model_path)
    ratio = extra.get("config", {}).get("split_ratio", 0.7)
    # fold layout does not affect train/test membership, so any legal fold
    # count reproduces the training split's test side
    split = study_split(hp_pairs, metric_pairs, ratio, split_seed, cv_folds=2)
    test_pairs = [p for p in hp_pairs if p.graph_id in set(split.test_graph_ids)]
    accuracy, predictions = evaluate(model, test_pairs, images, split)
    families = _family_by_graph(data_dir)
    per_family: dict[str, list[int]] = {}
    for rec in predictions:
        fam = families.get(rec["graph_id"], "unknown")
        per_family.setdefault(fam, []).append(int(rec["predicted"] == rec["truth"]))
    out_dir = _dir(data_dir, REPORTS_DIR)
    tag = os.path.basename(str(model_path))[: -len(".params")]
    path = os.path.join(out_dir, f"eval-{tag}.json")
    doc = {
        "regime": model.regime,
        "split_seed": split_seed,
        "accuracy": accuracy,
        "pair_count": len(test_pairs),
        "per_family": {
            fam: {"accuracy": float(np.mean(vals)), "pairs": len(vals)}
            for fam, vals in sorted(per_family.items())
        },
        "predictions": predictions,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")
    existing = _list_files(out_dir, ".json")
    write_manifest(out_dir, "evaluate", {"tag": tag}, inputs, existing)
    return path


def _model_extra(model_path) -> dict:
    with open(model_path, "rb") as fh:
        header = json.loads(fh.readline())
    return header.get("extra", {})


def _family_by_graph(data_dir) -> dict[str, str]:
    out = {}
    for path in _list_files(os.path.join(str(data_dir), GRAPHS_DIR), ".txt"):
        g = load_graph(path)
        out[g.id] = g.family.value
    return out


def stage_report(data_dir) -> str:
    reports_dir = os.path.join(str(data_dir), REPORTS_DIR)
    eval_paths = [p for p in _list_files(reports_dir, ".json") if os.path.basename(p).startswith("eval-")]
    if not eval_paths:
        raise StageInputError("missing input artifacts: reports/eval-*.json (run evaluate first)")
    inputs = check_inputs(data_dir, *eval_paths)
    runs: list[RunRecord] = []
    paired: dict[str, dict[tuple[int, str], float]] = {}
    for path in eval_paths:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        regime = doc["regime"]
        for fam_name, cell in doc["per_family"].items():
            try:
                family = GraphFamily(fam_name)
            except ValueError:
                continue
            runs.append(RunRecord(family=family, regime=regime, accuracy=cell["accuracy"]))
            paired.setdefault(regime, {})[(doc["split_seed"], fam_name)] = cell["accuracy"]
    regimes = sorted(paired)
    common = None
    for regime in regimes:
        keys = set(paired[regime])
        common = keys if common is None else common & keys
    accuracies = None
    if common and len(regimes) >= 2:
        ordered = sorted(common)
        accuracies = {r: [paired[r][k] for k in ordered] for r in regimes}
    try:
        report = build_report(runs, accuracies)
        skip_note = None
    except ValidationError as exc:
        report = build_report(runs, None)
        skip_note = str(exc)
    lines = ["Accuracy by graph type", "", render_accuracy_table(report.cells), ""]
    if report.significance:
        lines += [
            "Significance (signed-rank, paired over split x type)",
            "",
            render_significance_table(report.significance),
            "",
        ]
    elif skip_note:
        lines += [f"Significance tests skipped: {skip_note}", ""]
    path = os.path.join(reports_dir, "report.txt")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines))
    write_manifest(reports_dir, "report", {}, inputs, eval_paths + [path])
    return path
