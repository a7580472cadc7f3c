"""Twin-CNN preference model and its training regimes.

One shared extractor embeds both images of a pair ("twin" = weight tying,
a single parameter set); the two feature vectors are joined (elementwise
subtraction by default, concatenation as an ablation) and mapped through a
single dense unit and a sigmoid to a preference score in [0, 1]. Score
<= 0.5 predicts the first presented image.

Three regimes: metric labels only ("m"), vote labels only ("hp"), and
metric pretraining followed by vote fine-tuning ("m+hp").
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import (
    ContaminationError,
    ParameterError,
    StructuralError,
    TrainingError,
    ValidationError,
)
from .labeling import LabeledPair, augment_with_swaps
from .neural import (
    AdamHyper,
    AdamState,
    Conv,
    Dense,
    Flatten,
    MaxPool,
    NetworkSpec,
    ReLU,
    adam_step,
    backward,
    bce_loss_batch,
    feature_dim,
    forward,
    init_params,
    load_params,
    save_params,
)

ImageStore = dict[tuple[str, int], np.ndarray]  # (graph_id, layout_index) -> (c, h, w)


class JoinMode(str, Enum):
    SUBTRACT = "subtract"
    CONCAT = "concat"


class Regime(str, Enum):
    METRIC = "m"
    HUMAN = "hp"
    COMBINED = "m+hp"


@dataclass
class TrainConfig:
    regime: Regime = Regime.COMBINED
    epochs_pretrain: int = 30
    epochs_finetune: int = 30
    lr_pretrain: float = 1e-3
    lr_finetune: float = 1e-4
    batch_size: int = 16
    image_size: int = 64
    seed: int = 0
    join: JoinMode = JoinMode.SUBTRACT
    split_ratio: float = 0.7
    cv_folds: int = 5
    channels: tuple[int, ...] = (16, 32, 64)
    feature_dim: int = 128

    def __post_init__(self):
        if self.epochs_pretrain <= 0 or self.epochs_finetune <= 0:
            raise ParameterError("epoch counts must be positive")
        if not 0.0 < self.split_ratio < 1.0:
            raise ParameterError(f"split ratio must be in (0,1), got {self.split_ratio}")
        if self.cv_folds < 2:
            raise ParameterError(f"cv_folds must be >= 2, got {self.cv_folds}")
        if self.batch_size < 1:
            raise ParameterError("batch_size must be >= 1")


@dataclass(frozen=True)
class SplitPlan:
    train_graph_ids: tuple[str, ...]
    test_graph_ids: tuple[str, ...]
    folds: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        overlap = set(self.train_graph_ids) & set(self.test_graph_ids)
        if overlap:
            raise ValidationError(f"train/test overlap: {sorted(overlap)}")
        fold_union = set()
        for f in self.folds:
            fold_union.update(f)
        if self.folds and fold_union != set(self.train_graph_ids):
            raise ValidationError("folds must exactly cover the training graphs")


def make_split(
    graph_ids,
    ratio: float = 0.7,
    seed: int = 0,
    cv_folds: int = 5,
    labeled_pairs: list[LabeledPair] | None = None,
) -> SplitPlan:
    """Graph-level split: pairs always follow their graph's side."""
    if not 0.0 < ratio < 1.0:
        raise ParameterError(f"ratio must be in (0,1), got {ratio}")
    ids = sorted(set(graph_ids))
    if labeled_pairs is not None:
        with_pairs = {p.graph_id for p in labeled_pairs}
        ids = [g for g in ids if g in with_pairs]
    if not ids:
        raise ValidationError("no graphs to split")
    rng = np.random.default_rng(seed)
    order = [ids[i] for i in rng.permutation(len(ids))]
    n_train = math.ceil(ratio * len(order))
    train = order[:n_train]
    test = order[n_train:]
    if len(train) < cv_folds:
        raise ValidationError(f"{len(train)} training graphs cannot fill {cv_folds} folds")
    folds: list[list[str]] = [[] for _ in range(cv_folds)]
    for i, gid in enumerate(train):
        folds[i % cv_folds].append(gid)
    return SplitPlan(
        train_graph_ids=tuple(train),
        test_graph_ids=tuple(test),
        folds=tuple(tuple(f) for f in folds),
    )


def default_extractor_spec(
    image_size: int = 64,
    seed: int = 0,
    channels: tuple[int, ...] = (16, 32, 64),
    feature: int = 128,
) -> NetworkSpec:
    """Stacked 3x3 conv blocks with halving pools, then one dense summary."""
    layers: list = []
    for ch in channels:
        layers.extend([Conv(ch, 3, stride=1, padding=1), ReLU(), MaxPool(2, 2)])
    layers.extend([Flatten(), Dense(feature)])
    return NetworkSpec(input_shape=(3, image_size, image_size), layers=tuple(layers), init_seed=seed)


@dataclass
class SiameseModel:
    extractor_spec: NetworkSpec
    extractor_params: list[dict]
    join: JoinMode
    head_w: np.ndarray  # (join_dim, 1)
    head_b: np.ndarray  # (1,)
    regime: str = ""

    @property
    def image_size(self) -> int:
        return self.extractor_spec.input_shape[1]


def new_model(
    image_size: int = 64,
    seed: int = 0,
    join: JoinMode = JoinMode.SUBTRACT,
    channels: tuple[int, ...] = (16, 32, 64),
    feature: int = 128,
) -> SiameseModel:
    spec = default_extractor_spec(image_size, seed, channels, feature)
    params = init_params(spec)
    d = feature_dim(spec)
    join_dim = d if join == JoinMode.SUBTRACT else 2 * d
    # zero head: every pair starts at score 0.5, so training begins at the
    # balanced-BCE baseline of ln 2 and identical images stay at 0.5
    head_w = np.zeros((join_dim, 1))
    head_b = np.zeros(1)
    return SiameseModel(spec, params, join, head_w, head_b)


def _score_batch(model: SiameseModel, xa: np.ndarray, xb: np.ndarray):
    fa, cache_a = forward(model.extractor_spec, model.extractor_params, xa)
    fb, cache_b = forward(model.extractor_spec, model.extractor_params, xb)
    if model.join == JoinMode.SUBTRACT:
        joined = fa - fb
    else:
        joined = np.concatenate([fa, fb], axis=1)
    z = joined @ model.head_w + model.head_b
    score = 0.5 * (1.0 + np.tanh(0.5 * z))
    return score[:, 0], (cache_a, cache_b, joined, score)


def _backward_batch(model: SiameseModel, caches, dz: np.ndarray):
    """Gradients for a batch given d(loss)/d(pre-sigmoid logit)."""
    cache_a, cache_b, joined, _ = caches
    head_dw = joined.T @ dz
    head_db = dz.sum(axis=0)
    djoined = dz @ model.head_w.T
    if model.join == JoinMode.SUBTRACT:
        dfa, dfb = djoined, -djoined
    else:
        d = djoined.shape[1] // 2
        dfa, dfb = djoined[:, :d], djoined[:, d:]
    grads_a, _ = backward(model.extractor_spec, model.extractor_params, cache_a, dfa)
    grads_b, _ = backward(model.extractor_spec, model.extractor_params, cache_b, dfb)
    # weight tying: both twins accumulate into the single parameter set
    total = []
    for ga, gb in zip(grads_a, grads_b):
        total.append({k: ga[k] + gb[k] for k in ga})
    return total, head_dw, head_db


def predict(model: SiameseModel, img_a, img_b) -> tuple[float, int]:
    """Preference score for the ordered image pair; score <= 0.5 -> label 0
    (the first image is preferred)."""
    xa = _as_batch(img_a)
    xb = _as_batch(img_b)
    if xa.shape != xb.shape:
        raise StructuralError(f"image shapes differ: {xa.shape} vs {xb.shape}")
    scores, _ = _score_batch(model, xa, xb)
    score = float(scores[0])
    return score, (0 if score <= 0.5 else 1)


def _as_batch(img) -> np.ndarray:
    if hasattr(img, "to_chw"):
        arr = img.to_chw()
    else:
        arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[None]
    return arr


def _pair_tensors(pairs: list[LabeledPair], images: ImageStore):
    xa = []
    xb = []
    y = []
    for p in pairs:
        a, b = p.presented
        try:
            xa.append(images[(p.graph_id, a)])
            xb.append(images[(p.graph_id, b)])
        except KeyError as exc:
            raise ValidationError(f"missing image for {p.graph_id} layout {exc}")
        # swap_pair flips label together with presentation order, so the
        # stored label is always relative to the presented order
        y.append(p.label)
    return np.stack(xa), np.stack(xb), np.array(y, dtype=np.float64)


@dataclass
class EpochRecord:
    phase: str
    epoch: int
    mean_loss: float
    val_accuracy: float | None = None


def _filter_to(pairs: list[LabeledPair], graph_ids) -> list[LabeledPair]:
    allowed = set(graph_ids)
    return [p for p in pairs if p.graph_id in allowed]


def _train_phase(
    model: SiameseModel,
    pairs: list[LabeledPair],
    images: ImageStore,
    epochs: int,
    lr: float,
    batch_size: int,
    rng: np.random.Generator,
    phase: str,
    log: list[EpochRecord],
    val_pairs: list[LabeledPair] | None,
) -> None:
    samples = augment_with_swaps(sorted(pairs, key=lambda p: (p.graph_id, p.pair, p.flipped)))
    all_params = model.extractor_params + [{"w": model.head_w, "b": model.head_b}]
    state = AdamState(all_params)
    hyper = AdamHyper(lr=lr)
    for epoch in range(epochs):
        order = rng.permutation(len(samples))
        total_loss = 0.0
        for start in range(0, len(order), batch_size):
            batch = [samples[i] for i in order[start : start + batch_size]]
            xa, xb, y = _pair_tensors(batch, images)
            scores, caches = _score_batch(model, xa, xb)
            loss, _ = bce_loss_batch(scores, y)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss in phase {phase}, epoch {epoch}, batch {start // batch_size}")
            # d(mean BCE)/d(logit) for a sigmoid output
            dz = ((scores - y) / len(batch))[:, None]
            ext_grads, head_dw, head_db = _backward_batch(model, caches, dz)
            adam_step(all_params, ext_grads + [{"w": head_dw, "b": head_db}], state, hyper)
            total_loss += loss * len(batch)
        record = EpochRecord(phase=phase, epoch=epoch, mean_loss=total_loss / len(samples))
        if val_pairs:
            record.val_accuracy = _accuracy(model, val_pairs, images)
        log.append(record)


def _accuracy(model: SiameseModel, pairs: list[LabeledPair], images: ImageStore) -> float:
    xa, xb, y = _pair_tensors(pairs, images)
    scores, _ = _score_batch(model, xa, xb)
    predicted = (scores > 0.5).astype(int)
    return float((predicted == y).mean())


def train(
    metric_pairs: list[LabeledPair],
    hp_pairs: list[LabeledPair],
    images: ImageStore,
    split: SplitPlan,
    cfg: TrainConfig,
    val_pairs: list[LabeledPair] | None = None,
) -> tuple[SiameseModel, list[EpochRecord]]:
    """Train one model under cfg.regime on the training side of the split.

    Metric pairs are usable for training only, so both datasets are filtered
    to the split's training graphs before any batch is formed.
    """
    metric_train = _filter_to(metric_pairs, split.train_graph_ids)
    hp_train = _filter_to(hp_pairs, split.train_graph_ids)

    phases: list[tuple[str, list[LabeledPair], float, int]] = []
    if cfg.regime == Regime.METRIC:
        phases.append(("train", metric_train, cfg.lr_pretrain, cfg.epochs_pretrain))
    elif cfg.regime == Regime.HUMAN:
        phases.append(("train", hp_train, cfg.lr_pretrain, cfg.epochs_pretrain))
    else:
        phases.append(("pretrain", metric_train, cfg.lr_pretrain, cfg.epochs_pretrain))
        phases.append(("finetune", hp_train, cfg.lr_finetune, cfg.epochs_finetune))
    for phase, pairs, _, _ in phases:
        if not pairs:
            raise ValidationError(f"regime {cfg.regime.value}: no training pairs for phase {phase!r}")

    model = new_model(cfg.image_size, cfg.seed, cfg.join, cfg.channels, cfg.feature_dim)
    model.regime = cfg.regime.value
    log: list[EpochRecord] = []
    for phase_idx, (phase, pairs, lr, epochs) in enumerate(phases):
        rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), 1000 + phase_idx]))
        _train_phase(model, pairs, images, epochs, lr, cfg.batch_size, rng, phase, log, val_pairs)
    return model, log


def evaluate(
    model: SiameseModel,
    pairs: list[LabeledPair],
    images: ImageStore,
    split: SplitPlan,
) -> tuple[float, list[dict]]:
    """Accuracy over held-out pairs; hard-fails on any training-graph pair."""
    if not pairs:
        raise ValidationError("no pairs to evaluate")
    train_set = set(split.train_graph_ids)
    test_set = set(split.test_graph_ids)
    for p in pairs:
        if p.graph_id in train_set:
            raise ContaminationError(f"pair {p.graph_id}{p.pair} belongs to a training graph")
        if p.graph_id not in test_set:
            raise ContaminationError(f"pair {p.graph_id}{p.pair} is not in the test split")
    xa, xb, y = _pair_tensors(pairs, images)
    scores, _ = _score_batch(model, xa, xb)
    predictions = []
    correct = 0
    for p, score in zip(pairs, scores):
        label = 0 if score <= 0.5 else 1
        correct += int(label == p.label)
        predictions.append(
            {
                "graph_id": p.graph_id,
                "j": p.pair[0],
                "k": p.pair[1],
                "score": float(score),
                "predicted": label,
                "truth": p.label,
            }
        )
    return correct / len(pairs), predictions


@dataclass
class CVResult:
    candidates: list[dict]
    fold_accuracies: list[list[float]]
    mean_accuracies: list[float]
    best_index: int

    @property
    def best(self) -> dict:
        return self.candidates[self.best_index]


def cross_validate(
    metric_pairs: list[LabeledPair],
    hp_pairs: list[LabeledPair],
    images: ImageStore,
    split: SplitPlan,
    cfg: TrainConfig,
    candidates: list[dict] | None = None,
) -> CVResult:
    """Rotate each fold out as validation, train on the rest, and pick the
    candidate setting with the best mean held-out accuracy (ties: lowest
    learning rate, then smallest model)."""
    if candidates is None:
        candidates = [{"lr_pretrain": 1e-3}, {"lr_pretrain": 1e-4}]
    folds = split.folds
    if len(folds) < 2:
        raise ValidationError("cross-validation needs at least 2 folds")
    fold_accs: list[list[float]] = []
    means: list[float] = []
    for cand in candidates:
        cand_cfg = replace(cfg, **cand)
        accs: list[float] = []
        for i in range(len(folds)):
            held = folds[i]
            rest = tuple(g for j, f in enumerate(folds) for g in f if j != i)
            sub_split = SplitPlan(train_graph_ids=rest, test_graph_ids=tuple(held), folds=(rest,))
            model, _ = train(metric_pairs, hp_pairs, images, sub_split, cand_cfg)
            val = _filter_to(hp_pairs, held)
            if not val:
                val = _filter_to(metric_pairs, held)
            if not val:
                raise ValidationError(f"fold {i} has no pairs to validate on")
            acc, _ = evaluate(model, val, images, sub_split)
            accs.append(acc)
        fold_accs.append(accs)
        means.append(float(np.mean(accs)))

    def sort_key(idx):
        cand = candidates[idx]
        size = cand.get("feature_dim", cfg.feature_dim) * sum(cand.get("channels", cfg.channels))
        return (-means[idx], cand.get("lr_pretrain", cfg.lr_pretrain), size)

    best = min(range(len(candidates)), key=sort_key)
    return CVResult(candidates=candidates, fold_accuracies=fold_accs, mean_accuracies=means, best_index=best)


# ---------------------------------------------------------------------------
# model persistence
# ---------------------------------------------------------------------------

def _spec_doc(spec: NetworkSpec) -> dict:
    return {
        "input_shape": list(spec.input_shape),
        "init_seed": spec.init_seed,
        "layers": [
            [type(l).__name__] + [getattr(l, f) for f in l.__dataclass_fields__]
            for l in spec.layers
        ],
    }


def _spec_from_doc(doc: dict) -> NetworkSpec:
    ctor = {"Conv": Conv, "ReLU": ReLU, "MaxPool": MaxPool, "Flatten": Flatten, "Dense": Dense}
    layers = []
    for entry in doc["layers"]:
        name, *args = entry
        layers.append(ctor[name](*args))
    return NetworkSpec(tuple(doc["input_shape"]), tuple(layers), doc["init_seed"])


def save_model(path, model: SiameseModel, extra: dict | None = None) -> None:
    all_params = model.extractor_params + [{"w": model.head_w, "b": model.head_b}]
    meta = {
        "extractor": _spec_doc(model.extractor_spec),
        "join": model.join.value,
        "regime": model.regime,
    }
    if extra:
        meta.update(extra)
    save_params(path, model.extractor_spec, all_params, extra=meta)


def load_model(path) -> SiameseModel:
    import json as _json

    with open(path, "rb") as fh:
        header = _json.loads(fh.readline())
    spec = _spec_from_doc(header["extra"]["extractor"])
    all_params, extra = load_params(path, spec)
    head = all_params[-1]
    return SiameseModel(
        extractor_spec=spec,
        extractor_params=all_params[:-1],
        join=JoinMode(extra["join"]),
        head_w=head["w"],
        head_b=head["b"],
        regime=extra.get("regime", ""),
    )
