"""Confusion-based scores, per-phenomenon and per-category reports, OOV
tallies, and correlation helpers.

Tokens of the well-structured utterance are positive instances; speech-
specific tokens are negative. A matched input token (exact or modified)
counts as kept. Corpus metrics are micro-averaged over summed counts;
undefined ratios are reported as None, never as 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .align import Alignment
from .probe_dataset import ProbeDataset, turn_tokens
from .speech_filter import PHENOMENON_NAMES

CATEGORY_MEMBERS: dict[str, tuple[str, ...]] = {
    "core arguments": ("ccomp", "iobj", "nsubj", "obj", "xcomp"),
    "non-core dependents": ("advcl", "advmod", "discourse:interj", "expl", "obl", "vocative"),
    "nominal dependents": ("acl", "amod", "appos", "nmod", "nummod"),
    "function words": ("aux", "case", "cop", "det", "mark"),
    "other dependents": ("cc", "conj", "dep", "fixed", "flat", "list", "orphan",
                         "parataxis", "punct", "root"),
}

# Labels whose subtype, not base, decides the category.
SUBTYPED_CATEGORY = {"discourse:interj": "non-core dependents"}

OOV_SAMPLE_CAP = 50


@dataclass(frozen=True, slots=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.tn + other.tn, self.fn + other.fn)


@dataclass(slots=True)
class MetricsReport:
    accuracy: float | None = None
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    tnr: float | None = None
    cpt: float | None = None
    gold_cpt: float | None = None
    oov_total: int | None = None


@dataclass(frozen=True, slots=True)
class PhenomenonRow:
    tokens_total: int
    tokens_filtered: int

    @property
    def ratio(self) -> float | None:
        if self.tokens_total == 0:
            return None
        return 100.0 * self.tokens_filtered / self.tokens_total


@dataclass(slots=True)
class PhenomenonReport:
    rows: dict[str, PhenomenonRow]
    headline: tuple[str, ...] = PHENOMENON_NAMES


@dataclass(frozen=True, slots=True)
class CategoryRow:
    missing: int
    gold_total: int
    member_count: int
    per_deprel: dict[str, int]

    @property
    def avg(self) -> float:
        return self.missing / self.member_count

    @property
    def ratio(self) -> float | None:
        if self.gold_total == 0:
            return None
        return 100.0 * self.missing / self.gold_total


@dataclass(slots=True)
class CategoryOmissionReport:
    rows: dict[str, CategoryRow]


@dataclass(slots=True)
class OOVReport:
    total: int = 0
    modified_match: int = 0
    pure_insertion: int = 0
    samples: dict[str, list[str]] = field(default_factory=lambda: {
        "modified-match": [], "pure-insertion": []})


def score_turn(alignment: Alignment, statuses: list[bool]) -> ConfusionCounts:
    """Count one turn's confusion cells from kept flags and gold statuses."""
    if len(alignment.kept) != len(statuses):
        raise ValueError(f"alignment covers {len(alignment.kept)} tokens, "
                         f"statuses cover {len(statuses)}")
    tp = fp = tn = fn = 0
    for kept, status in zip(alignment.kept, statuses):
        if status and kept:
            tp += 1
        elif status and not kept:
            fn += 1
        elif not status and kept:
            fp += 1
        else:
            tn += 1
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def _ratio(num: int, denom: int) -> float | None:
    return num / denom if denom else None


def harmonic_mean(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def aggregate(counts: list[ConfusionCounts]) -> MetricsReport:
    """Micro-averaged corpus metrics from per-turn confusion counts."""
    total = ConfusionCounts()
    for c in counts:
        total = total + c
    report = MetricsReport()
    report.accuracy = _ratio(total.tp + total.tn, total.total)
    report.precision = _ratio(total.tp, total.tp + total.fp)
    report.recall = _ratio(total.tp, total.tp + total.fn)
    report.tnr = _ratio(total.tn, total.tn + total.fp)
    if report.precision is not None and report.recall is not None:
        report.f1 = harmonic_mean(report.precision, report.recall)
    return report


def macro_scores(counts: list[ConfusionCounts]) -> dict[str, float | None]:
    """Per-turn means of the ratio metrics, skipping undefined turns."""
    out: dict[str, float | None] = {}
    per_turn = [aggregate([c]) for c in counts]
    for name in ("accuracy", "precision", "recall", "f1", "tnr"):
        defined = [getattr(r, name) for r in per_turn if getattr(r, name) is not None]
        out[name] = sum(defined) / len(defined) if defined else None
    return out


def cpt(texts: list[str]) -> float:
    """Mean character count of trimmed turn texts (spaces included)."""
    if not texts:
        return 0.0
    return sum(len(t.strip()) for t in texts) / len(texts)


def phenomenon_ratios(alignments: list[Alignment], dataset: ProbeDataset,
                      task: str = "well-structure") -> PhenomenonReport:
    """Share of gold-flagged tokens each run actually filtered out.

    ``alignments`` must parallel ``dataset.turns()`` order. The task selects
    the headline rows; the well-structure task headlines all three.
    """
    totals = dict.fromkeys(PHENOMENON_NAMES, 0)
    filtered = dict.fromkeys(PHENOMENON_NAMES, 0)
    for (_, _, turn), alignment in zip(dataset.turns(), alignments, strict=True):
        for tok, kept in zip(turn_tokens(turn), alignment.kept, strict=True):
            if tok.speech_type is None:
                continue
            for name in PHENOMENON_NAMES:
                if getattr(tok.speech_type, name):
                    totals[name] += 1
                    if not kept:
                        filtered[name] += 1
    headline = (task,) if task in PHENOMENON_NAMES else PHENOMENON_NAMES
    return PhenomenonReport(
        rows={name: PhenomenonRow(totals[name], filtered[name]) for name in PHENOMENON_NAMES},
        headline=headline,
    )


def deprel_category(deprel: str) -> str:
    if deprel in SUBTYPED_CATEGORY:
        return SUBTYPED_CATEGORY[deprel]
    base = deprel.split(":", 1)[0]
    for category, members in CATEGORY_MEMBERS.items():
        if base in members:
            return category
    return "other dependents"


def category_omissions(alignments: list[Alignment],
                       dataset: ProbeDataset) -> CategoryOmissionReport:
    """Missing status-true tokens grouped by dependency-label category.

    ``avg`` divides a category's missing count by its member-label count;
    ``ratio`` relates it to the gold status-true token count of the category.
    Raw per-label counts are kept so other normalizations can be recomputed.
    """
    missing = dict.fromkeys(CATEGORY_MEMBERS, 0)
    gold_total = dict.fromkeys(CATEGORY_MEMBERS, 0)
    per_deprel: dict[str, dict[str, int]] = {c: {} for c in CATEGORY_MEMBERS}
    for (_, _, turn), alignment in zip(dataset.turns(), alignments, strict=True):
        for tok, kept in zip(turn_tokens(turn), alignment.kept, strict=True):
            if not tok.status:
                continue
            category = deprel_category(tok.dep_type)
            gold_total[category] += 1
            if not kept:
                missing[category] += 1
                bucket = per_deprel[category]
                bucket[tok.dep_type] = bucket.get(tok.dep_type, 0) + 1
    return CategoryOmissionReport(rows={
        category: CategoryRow(
            missing=missing[category],
            gold_total=gold_total[category],
            member_count=len(CATEGORY_MEMBERS[category]),
            per_deprel=per_deprel[category],
        )
        for category in CATEGORY_MEMBERS
    })


def oov_report(alignments: list[Alignment],
               input_token_lists: list[list[str]] | None = None,
               hyp_token_lists: list[list[str]] | None = None) -> OOVReport:
    """Hypothesis tokens absent from the input: modified matches plus pure
    insertions. Token lists, when given, populate capped sample lists."""
    report = OOVReport()
    for idx, alignment in enumerate(alignments):
        for i, j, kind in alignment.matches:
            if kind != "modified":
                continue
            report.modified_match += 1
            if (input_token_lists is not None and hyp_token_lists is not None
                    and len(report.samples["modified-match"]) < OOV_SAMPLE_CAP):
                report.samples["modified-match"].append(
                    f"{input_token_lists[idx][i]} -> {hyp_token_lists[idx][j]}")
        for j in alignment.oov:
            report.pure_insertion += 1
            if (hyp_token_lists is not None
                    and len(report.samples["pure-insertion"]) < OOV_SAMPLE_CAP):
                report.samples["pure-insertion"].append(hyp_token_lists[idx][j])
    report.total = report.modified_match + report.pure_insertion
    return report


def correlation(xs: list[float], ys: list[float]) -> tuple[float | None, float | None]:
    """Sample Pearson and Spearman coefficients; None when a series is constant."""
    if len(xs) != len(ys):
        raise ValueError("series must have equal lengths")
    if len(xs) < 2:
        raise ValueError("need at least two observations")
    pearson = _pearson(xs, ys)
    spearman = _pearson(_average_ranks(xs), _average_ranks(ys))
    return pearson, spearman


def _pearson(xs: list[float], ys: list[float]) -> float | None:
    n = len(xs)
    mean_x = sum(xs) / n
    mean_y = sum(ys) / n
    cov = sum((x - mean_x) * (y - mean_y) for x, y in zip(xs, ys))
    var_x = sum((x - mean_x) ** 2 for x in xs)
    var_y = sum((y - mean_y) ** 2 for y in ys)
    if var_x == 0 or var_y == 0:
        return None
    return cov / (var_x * var_y) ** 0.5


def _average_ranks(values: list[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg_rank = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = avg_rank
        i = j + 1
    return ranks
