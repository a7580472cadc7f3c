"""Accuracy aggregation across runs and Wilcoxon signed-rank comparisons.

The signed-rank test is self-contained: average ranks for tied absolute
differences, exact null enumeration for small samples (a subset-sum count
over doubled ranks), and a tie-corrected normal approximation with
continuity correction otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum

import numpy as np

from .errors import ValidationError
from .graphs import GraphFamily, SizeClass

EXACT_LIMIT = 12  # exact enumeration up to this many nonzero differences


class InsufficientDataError(ValidationError):
    """Too few nonzero paired differences for the test."""


class ZeroPolicy(str, Enum):
    DROP = "drop"  # discard zero differences (common convention)
    INCLUDE = "include"  # rank zeros too, then drop their ranks (Pratt)


class Alternative(str, Enum):
    TWO_SIDED = "two-sided"
    GREATER = "greater"  # x tends to exceed y
    LESS = "less"


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # min(W+, W-)
    w_plus: float
    w_minus: float
    n: int  # nonzero differences used
    p_value: float
    method: str  # "exact" or "approx"
    alternative: Alternative


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _exact_cdf_counts(double_ranks: list[int]) -> np.ndarray:
    """counts[s] = number of sign assignments with doubled W+ equal to s."""
    total = sum(double_ranks)
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in double_ranks:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: len(counts) - r]
        counts = counts + shifted
    return counts


def _phi(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def wilcoxon_signed_rank(
    x,
    y,
    alternative: Alternative = Alternative.TWO_SIDED,
    zero_policy: ZeroPolicy = ZeroPolicy.DROP,
    method: str = "auto",
) -> WilcoxonResult:
    """Paired signed-rank test on d = x - y.

    `alternative=GREATER` asks whether x tends to exceed y (small W- gives
    small p). Exact enumeration over the 2^n sign assignments is used for
    n <= 12 unless `method` forces a path.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError(f"paired samples must be equal-length vectors, got {x.shape} and {y.shape}")
    d = x - y
    if zero_policy == ZeroPolicy.DROP:
        d = d[d != 0.0]
        if len(d) < 5:
            raise InsufficientDataError(
                f"need >= 5 nonzero differences after dropping zeros, have {len(d)}"
            )
        ranks = _average_ranks(np.abs(d))
        nonzero = np.ones(len(d), dtype=bool)
    else:
        if np.count_nonzero(d) < 5:
            raise InsufficientDataError(
                f"need >= 5 nonzero differences, have {np.count_nonzero(d)}"
            )
        ranks = _average_ranks(np.abs(d))
        nonzero = d != 0.0
    n = int(np.count_nonzero(nonzero))
    w_plus = float(ranks[(d > 0.0)].sum())
    w_minus = float(ranks[(d < 0.0)].sum())
    statistic = min(w_plus, w_minus)

    if method == "auto":
        method = "exact" if n <= EXACT_LIMIT else "approx"
    if method not in ("exact", "approx"):
        raise ValidationError(f"unknown method {method!r}")

    if method == "exact":
        double_ranks = [int(round(2.0 * r)) for r in ranks[nonzero]]
        counts = _exact_cdf_counts(double_ranks)
        total = counts.sum()  # 2^n
        dw_plus = int(round(2.0 * w_plus))

        def p_le(w):  # P(W+ <= w) on the doubled scale
            return counts[: w + 1].sum() / total

        def p_ge(w):
            return counts[w:].sum() / total

        if alternative == Alternative.GREATER:
            # small W- supports x > y; P(W- <= obs) = P(W+ >= obs+)
            p = p_ge(dw_plus)
        elif alternative == Alternative.LESS:
            p = p_le(dw_plus)
        else:
            p = min(1.0, 2.0 * min(p_le(dw_plus), p_ge(dw_plus)))
    else:
        used_ranks = ranks[nonzero]
        mu = used_ranks.sum() / 2.0
        var = float((used_ranks**2).sum()) / 4.0
        sigma = math.sqrt(var)
        if sigma == 0.0:
            raise InsufficientDataError("zero variance in signed ranks")
        # fourth-cumulant (Edgeworth) correction; the null is symmetric, so
        # the third-cumulant term vanishes
        gamma2 = (-float((used_ranks**4).sum()) / 8.0) / (var * var)

        def _cdf(z: float) -> float:
            base = _phi(z)
            if abs(z) > 3.0:  # the polynomial term misbehaves in the far tails
                return base
            pdf = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
            value = base - pdf * gamma2 / 24.0 * (z**3 - 3.0 * z)
            return min(1.0, max(1e-300, value))

        def p_le_cc(w):  # with continuity correction
            return _cdf((w - mu + 0.5) / sigma)

        def p_ge_cc(w):
            return _cdf(-(w - mu - 0.5) / sigma)

        if alternative == Alternative.GREATER:
            p = p_ge_cc(w_plus)
        elif alternative == Alternative.LESS:
            p = p_le_cc(w_plus)
        else:
            p = min(1.0, 2.0 * min(p_le_cc(w_plus), p_ge_cc(w_plus)))
    p = min(1.0, max(p, 0.0))
    return WilcoxonResult(
        statistic=statistic,
        w_plus=w_plus,
        w_minus=w_minus,
        n=n,
        p_value=p,
        method=method,
        alternative=alternative,
    )


# ---------------------------------------------------------------------------
# accuracy aggregation
# ---------------------------------------------------------------------------

FAMILY_DISPLAY = {
    GraphFamily.SPARSE: "sparse",
    GraphFamily.BICONNECTED: "biconnected",
    GraphFamily.MESH: "mesh",
    GraphFamily.SCALEFREE: "large scale-free",
}

REGIME_DISPLAY = {"m": "M", "hp": "HP", "m+hp": "M+HP"}

SIZE_CLASS_FAMILIES = {
    SizeClass.SMALL: (GraphFamily.SPARSE, GraphFamily.BICONNECTED),
    SizeClass.LARGE: (GraphFamily.MESH, GraphFamily.SCALEFREE),
}


@dataclass(frozen=True)
class RunRecord:
    family: GraphFamily
    regime: str  # "m" | "hp" | "m+hp"
    accuracy: float

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValidationError(f"accuracy must be in [0,1], got {self.accuracy}")


@dataclass(frozen=True)
class CellStat:
    mean: float
    std: float | None  # sample (n-1) deviation; None when n < 2
    count: int


def aggregate(runs: list[RunRecord]) -> dict[tuple[GraphFamily, str], CellStat]:
    """Per-(family, regime) mean and sample standard deviation."""
    cells: dict[tuple[GraphFamily, str], list[float]] = {}
    for run in runs:
        cells.setdefault((run.family, run.regime), []).append(run.accuracy)
    out: dict[tuple[GraphFamily, str], CellStat] = {}
    for key, values in cells.items():
        mean = float(np.mean(values))
        std = float(np.std(values, ddof=1)) if len(values) >= 2 else None
        out[key] = CellStat(mean=mean, std=std, count=len(values))
    return out


def size_class_rollup(cells: dict[tuple[GraphFamily, str], CellStat], regime: str) -> dict[SizeClass, float]:
    """Unweighted mean of the family means within each size class."""
    out: dict[SizeClass, float] = {}
    for size_class, families in SIZE_CLASS_FAMILIES.items():
        means = [cells[(fam, regime)].mean for fam in families if (fam, regime) in cells]
        if len(means) == len(families):
            out[size_class] = float(np.mean(means))
    return out


def _round_half_up(value: float, places: int = 2) -> Decimal:
    # kill binary noise first (0.92275 as a float is 92.27499...), then
    # round half away from zero, the usual convention for report tables
    cleaned = Decimal(repr(round(value, places + 8)))
    return cleaned.quantize(Decimal(10) ** -places, rounding=ROUND_HALF_UP)


def format_cell(mean: float, std: float | None) -> str:
    """Accuracy cell as e.g. '(86.55 ± 3.20) %'; bare mean when std is absent."""
    if std is None:
        return f"{_round_half_up(mean * 100.0)} %"
    return f"({_round_half_up(mean * 100.0)} ± {_round_half_up(std * 100.0)}) %"


def format_percent(value: float) -> str:
    return f"{_round_half_up(value * 100.0)}%"


DEFAULT_COMPARISONS = (("m+hp", "m"), ("m+hp", "hp"), ("hp", "m"))


@dataclass(frozen=True)
class ComparisonRow:
    first: str
    second: str
    p_one_sided: float
    p_two_sided: float
    n: int

    @property
    def label(self) -> str:
        return f"{REGIME_DISPLAY[self.first]} vs {REGIME_DISPLAY[self.second]}"


def compare_regimes(
    accuracies: dict[str, list[float]],
    comparisons=DEFAULT_COMPARISONS,
    zero_policy: ZeroPolicy = ZeroPolicy.DROP,
) -> list[ComparisonRow]:
    """Signed-rank comparisons over paired per-run accuracies.

    The one-sided alternative asks whether the first regime of each row
    exceeds the second.
    """
    rows: list[ComparisonRow] = []
    lengths = {name: len(values) for name, values in accuracies.items()}
    for first, second in comparisons:
        if first not in accuracies or second not in accuracies:
            raise ValidationError(f"missing accuracies for comparison {first} vs {second}")
        if lengths[first] != lengths[second]:
            raise ValidationError(
                f"unpaired samples: {first} has {lengths[first]} runs, {second} has {lengths[second]}"
            )
        one = wilcoxon_signed_rank(
            accuracies[first], accuracies[second], Alternative.GREATER, zero_policy
        )
        two = wilcoxon_signed_rank(
            accuracies[first], accuracies[second], Alternative.TWO_SIDED, zero_policy
        )
        rows.append(
            ComparisonRow(
                first=first,
                second=second,
                p_one_sided=one.p_value,
                p_two_sided=two.p_value,
                n=one.n,
            )
        )
    return rows


# ---------------------------------------------------------------------------
# report rendering
# ---------------------------------------------------------------------------

FAMILY_ORDER = (GraphFamily.SPARSE, GraphFamily.BICONNECTED, GraphFamily.MESH, GraphFamily.SCALEFREE)
REGIME_ORDER = ("m", "hp", "m+hp")


@dataclass(frozen=True)
class EvalReport:
    """Aggregated accuracies, size-class roll-ups, and regime comparisons."""

    cells: dict[tuple[GraphFamily, str], CellStat]
    rollups: dict[str, dict[SizeClass, float]]
    significance: list[ComparisonRow]


def build_report(
    runs: list[RunRecord],
    paired_accuracies: dict[str, list[float]] | None = None,
) -> EvalReport:
    cells = aggregate(runs)
    regimes = sorted({r.regime for r in runs})
    rollups = {regime: size_class_rollup(cells, regime) for regime in regimes}
    significance: list[ComparisonRow] = []
    if paired_accuracies:
        comparisons = [
            c for c in DEFAULT_COMPARISONS if c[0] in paired_accuracies and c[1] in paired_accuracies
        ]
        if comparisons:
            significance = compare_regimes(paired_accuracies, comparisons)
    return EvalReport(cells=cells, rollups=rollups, significance=significance)


def render_accuracy_table(cells: dict[tuple[GraphFamily, str], CellStat]) -> str:
    headers = ["Type"] + [REGIME_DISPLAY[r] for r in REGIME_ORDER]
    rows = [headers]
    for family in FAMILY_ORDER:
        row = [FAMILY_DISPLAY[family]]
        for regime in REGIME_ORDER:
            stat = cells.get((family, regime))
            row.append(format_cell(stat.mean, stat.std) if stat else "-")
        rows.append(row)
    for size_class in (SizeClass.SMALL, SizeClass.LARGE):
        row = [f"{size_class.value} (mean)"]
        for regime in REGIME_ORDER:
            rollup = size_class_rollup(cells, regime)
            row.append(format_percent(rollup[size_class]) if size_class in rollup else "-")
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(headers))]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[c]) for c, cell in enumerate(row)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * widths[c] for c in range(len(headers))))
    return "\n".join(lines)


def render_significance_table(rows: list[ComparisonRow]) -> str:
    lines = ["Comparison    p-value (one-sided)   p-value (two-sided)"]
    lines.append("-" * len(lines[0]))
    for row in rows:
        lines.append(f"{row.label:<13} {row.p_one_sided:<21.8f} {row.p_two_sided:.8f}")
    return "\n".join(lines)
