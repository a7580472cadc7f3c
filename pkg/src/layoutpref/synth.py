"""Synthetic participant votes for end-to-end runs without human subjects.

A hidden oracle prefers whichever layout the metric-majority label picks,
flips that choice with a fixed probability per vote, and rates with a
uniform score. Timestamps are derived from the seed so generated vote logs
are byte-stable.
"""

from __future__ import annotations

import random
from datetime import datetime, timedelta, timezone

from .errors import ParameterError
from .labeling import LabeledPair, Vote

SYNTH_EPOCH = datetime(2024, 1, 1, tzinfo=timezone.utc)


def synthesize_votes(
    metric_pairs: list[LabeledPair],
    seed: int,
    flip_probability: float = 0.15,
    votes_per_pair: int = 1,
    score_range: tuple[int, int] = (1, 5),
) -> list[Vote]:
    """One or more votes per metric-labeled pair from the hidden oracle."""
    if not 0.0 <= flip_probability <= 1.0:
        raise ParameterError(f"flip probability must be in [0,1], got {flip_probability}")
    if votes_per_pair < 1:
        raise ParameterError("votes_per_pair must be >= 1")
    lo, hi = score_range
    if not 0 <= lo <= hi <= 5:
        raise ParameterError(f"score range must satisfy 0 <= lo <= hi <= 5, got {score_range}")
    rng = random.Random(f"votes:{seed}")
    votes: list[Vote] = []
    ordered = sorted(metric_pairs, key=lambda p: (p.graph_id, p.pair))
    for i, pair in enumerate(ordered):
        j, k = pair.pair
        oracle_pick = j if pair.label == 0 else k
        for v in range(votes_per_pair):
            pick = oracle_pick
            if rng.random() < flip_probability:
                pick = j + k - pick
            votes.append(
                Vote(
                    graph_id=pair.graph_id,
                    pair=pair.pair,
                    participant_id=f"synth-{v}",
                    preferred=pick,
                    score=rng.randint(lo, hi),
                    timestamp=SYNTH_EPOCH + timedelta(seconds=i * votes_per_pair + v),
                )
            )
    return votes
