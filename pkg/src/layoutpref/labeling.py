"""Binary labels for ordered layout pairs.

Two sources: participant votes aggregated by signed-score majority, and
quality metrics aggregated by majority over three per-metric comparisons.
Label 0 means the lower-indexed layout of the pair is preferred, 1 the
higher-indexed one. Ties are discarded (returned as None), never guessed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from itertools import combinations

from .errors import ParseError, ValidationError
from .metrics import QualityMetrics

SCORE_MIN = 0
SCORE_MAX = 5


class PairSource(str, Enum):
    HUMAN = "hp"
    METRIC = "metric"


@dataclass(frozen=True)
class Vote:
    """One participant's preference for one ordered layout pair."""

    graph_id: str
    pair: tuple[int, int]  # (j, k) with j < k
    participant_id: str
    preferred: int  # one of pair
    score: int  # 0..5; 0 expresses "no preference"
    timestamp: datetime

    def __post_init__(self):
        j, k = self.pair
        if not j < k:
            raise ValidationError(f"vote pair must be ordered j < k, got {self.pair}")
        if self.preferred not in (j, k):
            raise ValidationError(f"preferred layout {self.preferred} not in pair {self.pair}")
        if not isinstance(self.score, int) or not SCORE_MIN <= self.score <= SCORE_MAX:
            raise ValidationError(f"score must be an integer in [0, 5], got {self.score!r}")


@dataclass(frozen=True)
class LabeledPair:
    """Ordered layout pair with a binary label and its provenance.

    The pair is always stored canonically as (j, k) with j < k; `flipped`
    records that the pair should be presented in reversed image order (used
    by training-time swap augmentation).
    """

    graph_id: str
    pair: tuple[int, int]
    label: int
    source: PairSource
    support: tuple[tuple[str, object], ...] = field(default_factory=tuple)
    flipped: bool = False

    def __post_init__(self):
        j, k = self.pair
        if not j < k:
            raise ValidationError(f"pair must be ordered j < k, got {self.pair}")
        if self.label not in (0, 1):
            raise ValidationError(f"label must be 0 or 1, got {self.label!r}")
        object.__setattr__(self, "support", tuple(sorted(self.support)))

    @property
    def presented(self) -> tuple[int, int]:
        j, k = self.pair
        return (k, j) if self.flipped else (j, k)

    @property
    def canonical_label(self) -> int:
        """Label relative to the canonical (j, k) order."""
        return 1 - self.label if self.flipped else self.label

    def support_dict(self) -> dict:
        return dict(self.support)


def label_from_votes(votes: list[Vote]) -> LabeledPair | None:
    """Signed-score majority vote over one pair's votes.

    Each vote weighs +score toward the lower-indexed layout when that layout
    is preferred and -score otherwise; the pair is discarded (None) when the
    weights cancel exactly. Integer arithmetic throughout, so the sign of the
    mean weight is exact.
    """
    if not votes:
        raise ValidationError("label_from_votes requires at least one vote")
    graph_id = votes[0].graph_id
    pair = votes[0].pair
    for v in votes:
        if v.graph_id != graph_id or v.pair != pair:
            raise ValidationError(
                f"mixed votes: expected {(graph_id, pair)}, got {(v.graph_id, v.pair)}"
            )
    j, k = pair
    total = sum(v.score if v.preferred == j else -v.score for v in votes)
    n = len(votes)
    if total == 0:
        return None
    return LabeledPair(
        graph_id=graph_id,
        pair=pair,
        label=0 if total > 0 else 1,
        source=PairSource.HUMAN,
        support=(("votes", n), ("mean_weighted_score", total / n)),
    )


def _compare(better_when_higher: bool, a: float, b: float) -> int | None:
    if a == b:
        return None
    if better_when_higher:
        return 0 if a > b else 1
    return 0 if a < b else 1


def label_from_metrics(mj: QualityMetrics, mk: QualityMetrics) -> LabeledPair | None:
    """Majority vote over the three per-metric comparisons.

    Higher shape score is better; fewer crossings and lower stress are
    better. Equal values discard that metric's vote; an empty or tied
    majority discards the pair.
    """
    if mj.graph_id != mk.graph_id:
        raise ValidationError(f"metrics from different graphs: {mj.graph_id} vs {mk.graph_id}")
    if not mj.layout_index < mk.layout_index:
        raise ValidationError(
            f"layout indices must be ordered j < k, got {(mj.layout_index, mk.layout_index)}"
        )
    shape_vote = _compare(True, mj.shape_score, mk.shape_score)
    crossing_vote = _compare(False, mj.crossing_count, mk.crossing_count)
    stress_vote = _compare(False, mj.stress_score, mk.stress_score)
    cast = [v for v in (shape_vote, crossing_vote, stress_vote) if v is not None]
    zeros = cast.count(0)
    ones = cast.count(1)
    if zeros == ones:
        return None
    return LabeledPair(
        graph_id=mj.graph_id,
        pair=(mj.layout_index, mk.layout_index),
        label=0 if zeros > ones else 1,
        source=PairSource.METRIC,
        support=(("shape", shape_vote), ("crossings", crossing_vote), ("stress", stress_vote)),
    )


def build_metric_dataset(metrics: list[QualityMetrics], layouts_per_graph: int = 5) -> list[LabeledPair]:
    """Metric labels for all layout pairs of every graph; ties drop out."""
    by_graph: dict[str, dict[int, QualityMetrics]] = {}
    for m in metrics:
        slot = by_graph.setdefault(m.graph_id, {})
        if m.layout_index in slot:
            raise ValidationError(f"duplicate metrics for {m.graph_id}[{m.layout_index}]")
        slot[m.layout_index] = m
    out: list[LabeledPair] = []
    for graph_id in sorted(by_graph):
        slot = by_graph[graph_id]
        if sorted(slot) != list(range(layouts_per_graph)):
            raise ValidationError(
                f"graph {graph_id} has layout indices {sorted(slot)}, expected 0..{layouts_per_graph - 1}"
            )
        for j, k in combinations(range(layouts_per_graph), 2):
            pair = label_from_metrics(slot[j], slot[k])
            if pair is not None:
                out.append(pair)
    return out


def swap_pair(p: LabeledPair) -> LabeledPair:
    """The same pair presented in reversed image order with the label flipped."""
    return replace(p, label=1 - p.label, flipped=not p.flipped)


def augment_with_swaps(pairs: list[LabeledPair]) -> list[LabeledPair]:
    """Each pair plus its swap; the result is exactly 50% label 0."""
    out: list[LabeledPair] = []
    for p in pairs:
        out.append(p)
        out.append(swap_pair(p))
    return out


# ---------------------------------------------------------------------------
# line-delimited I/O
# ---------------------------------------------------------------------------

def vote_to_json(v: Vote) -> str:
    return json.dumps(
        {
            "graph_id": v.graph_id,
            "j": v.pair[0],
            "k": v.pair[1],
            "participant_id": v.participant_id,
            "preferred": v.preferred,
            "score": v.score,
            "timestamp": v.timestamp.astimezone(timezone.utc).isoformat(),
        }
    )


def vote_from_json(doc: dict) -> Vote:
    return Vote(
        graph_id=doc["graph_id"],
        pair=(int(doc["j"]), int(doc["k"])),
        participant_id=doc["participant_id"],
        preferred=int(doc["preferred"]),
        score=int(doc["score"]),
        timestamp=datetime.fromisoformat(doc["timestamp"]),
    )


def save_votes(votes: list[Vote], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in votes:
            fh.write(vote_to_json(v) + "\n")


def load_votes(path) -> list[Vote]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(vote_from_json(json.loads(line)))
            except (KeyError, ValueError, ValidationError, json.JSONDecodeError) as exc:
                raise ParseError(f"bad vote record: {exc}", str(path), lineno)
    return out


def pair_to_json(p: LabeledPair) -> str:
    return json.dumps(
        {
            "graph_id": p.graph_id,
            "j": p.pair[0],
            "k": p.pair[1],
            "label": p.label,
            "source": p.source.value,
            "support": dict(p.support),
        }
    )


def pair_from_json(doc: dict) -> LabeledPair:
    return LabeledPair(
        graph_id=doc["graph_id"],
        pair=(int(doc["j"]), int(doc["k"])),
        label=int(doc["label"]),
        source=PairSource(doc["source"]),
        support=tuple(sorted(doc.get("support", {}).items())),
    )


def save_pairs(pairs: list[LabeledPair], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(pair_to_json(p) + "\n")


def load_pairs(path) -> list[LabeledPair]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(pair_from_json(json.loads(line)))
            except (KeyError, ValueError, ValidationError, json.JSONDecodeError) as exc:
                raise ParseError(f"bad pair record: {exc}", str(path), lineno)
    return out


def group_votes(votes: list[Vote]) -> dict[tuple[str, tuple[int, int]], list[Vote]]:
    groups: dict[tuple[str, tuple[int, int]], list[Vote]] = {}
    for v in votes:
        groups.setdefault((v.graph_id, v.pair), []).append(v)
    return groups


def build_vote_dataset(votes: list[Vote]) -> tuple[list[LabeledPair], int]:
    """Label every voted pair; returns (labeled pairs, discard count)."""
    groups = group_votes(votes)
    labeled: list[LabeledPair] = []
    discarded = 0
    for key in sorted(groups):
        pair = label_from_votes(groups[key])
        if pair is None:
            discarded += 1
        else:
            labeled.append(pair)
    return labeled, discarded
