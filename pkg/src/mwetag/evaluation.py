"""Scoring of predicted MWE annotations against gold.

Two bases: token-based (fuzzy) credits every correctly predicted token, via
per-sentence intersection of position unions; MWE-based (strict) credits only
instances whose exact token-position set matches. The general MWE score
ignores the category label; per-category scores restrict both sides to one
category first. Seen/unseen partitioning keys instances by the multiset of
their lowercased lemmas against the training corpus. All scores are fractions
in [0,1]; rendering multiplies by 100 with two decimals. Ratios with zero
denominator are defined as 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .corpus import Corpus, Sentence
from .errors import EvaluationError


def f1(p: float, r: float) -> float:
    """Harmonic mean, 0 when both inputs are 0."""
    if not (0.0 <= p <= 1.0 and 0.0 <= r <= 1.0):
        raise ValueError(f"precision/recall must lie in [0,1], got {p}, {r}")
    if p + r == 0.0:
        return 0.0
    return 2.0 * p * r / (p + r)


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


@dataclass(frozen=True)
class BasisScores:
    """P/R/F1 plus the counts they came from, for one matching basis."""

    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int

    @staticmethod
    def from_counts(tp: int, fp: int, fn: int) -> "BasisScores":
        p = _ratio(tp, tp + fp)
        r = _ratio(tp, tp + fn)
        return BasisScores(p, r, f1(p, r), tp, fp, fn)


@dataclass(frozen=True)
class EvalReport:
    token: BasisScores
    mwe: BasisScores
    per_category: dict = field(default_factory=dict)  # category -> EvalReport


@dataclass(frozen=True)
class SeenUnseenPartition:
    """Gold test instances keyed as (sentence index, position set, category),
    split by whether their lemma multiset occurs in training."""

    seen: tuple
    unseen: tuple
    seen_fraction: float


def _check_aligned(gold: Corpus, pred: Corpus):
    if len(gold) != len(pred):
        raise EvaluationError(
            f"corpora differ in sentence count: {len(gold)} vs {len(pred)}"
        )
    for idx, (g, p) in enumerate(zip(gold, pred)):
        if len(g.tokens) != len(p.tokens):
            raise EvaluationError(
                f"sentence {idx + 1}: token counts differ "
                f"({len(g.tokens)} vs {len(p.tokens)})"
            )


def _instances(corpus: Corpus, category: str | None):
    for sent_idx, sentence in enumerate(corpus):
        for inst in sentence.vmwes:
            if category is None or inst.category == category:
                yield sent_idx, inst


def _mwe_counts(gold: Corpus, pred: Corpus, category: str | None):
    gold_keys = {(i, frozenset(inst.token_positions)) for i, inst in _instances(gold, category)}
    pred_keys = {(i, frozenset(inst.token_positions)) for i, inst in _instances(pred, category)}
    tp = len(gold_keys & pred_keys)
    return tp, len(pred_keys) - tp, len(gold_keys) - tp


def _token_counts(gold: Corpus, pred: Corpus, category: str | None):
    tp = pred_total = gold_total = 0
    for g, p in zip(gold, pred):
        g_set = set()
        for inst in g.vmwes:
            if category is None or inst.category == category:
                g_set.update(inst.token_positions)
        p_set = set()
        for inst in p.vmwes:
            if category is None or inst.category == category:
                p_set.update(inst.token_positions)
        tp += len(g_set & p_set)
        pred_total += len(p_set)
        gold_total += len(g_set)
    return tp, pred_total - tp, gold_total - tp


def mwe_scores(gold: Corpus, pred: Corpus, category: str | None = None) -> BasisScores:
    """Strict scores: an instance counts iff its exact position set appears on
    the other side (category ignored unless one is requested)."""
    _check_aligned(gold, pred)
    return BasisScores.from_counts(*_mwe_counts(gold, pred, category))


def token_scores(gold: Corpus, pred: Corpus, category: str | None = None) -> BasisScores:
    """Fuzzy scores over per-sentence unions of annotated token positions."""
    _check_aligned(gold, pred)
    return BasisScores.from_counts(*_token_counts(gold, pred, category))


def per_category_scores(gold: Corpus, pred: Corpus) -> dict[str, EvalReport]:
    _check_aligned(gold, pred)
    categories = {inst.category for _, inst in _instances(gold, None)}
    categories |= {inst.category for _, inst in _instances(pred, None)}
    return {
        cat: EvalReport(
            token=BasisScores.from_counts(*_token_counts(gold, pred, cat)),
            mwe=BasisScores.from_counts(*_mwe_counts(gold, pred, cat)),
        )
        for cat in sorted(categories)
    }


def evaluate(gold: Corpus, pred: Corpus) -> EvalReport:
    """Overall token- and MWE-based scores plus per-category breakdown."""
    _check_aligned(gold, pred)
    return EvalReport(
        token=token_scores(gold, pred),
        mwe=mwe_scores(gold, pred),
        per_category=per_category_scores(gold, pred),
    )


# ---------------------------------------------------------------------------
# seen/unseen


def _lemma_key(sentence: Sentence, positions) -> tuple:
    """Multiset of lowercased lemmas; a placeholder lemma falls back to the
    lowercased form."""
    parts = []
    for pos in positions:
        token = sentence.tokens[pos - 1]
        lemma = token.lemma if token.lemma != "_" else token.form
        parts.append(lemma.lower())
    return tuple(sorted(parts))


def _training_keys(train: Corpus) -> set:
    return {
        _lemma_key(train[i], inst.token_positions)
        for i, inst in _instances(train, None)
    }


def seen_unseen(train: Corpus, gold_test: Corpus, pred: Corpus):
    """Partition gold test instances into seen/unseen by training lemma
    multisets and score each side.

    MWE-based matching within a partition ignores category, like the general
    score. A predicted instance that matches a gold instance inherits that
    instance's partition; an unmatched prediction is assigned by its own
    lemma multiset. Token-basis scores per partition use only the instances
    belonging to (or assigned to) that partition.
    """
    _check_aligned(gold_test, pred)
    train_keys = _training_keys(train)

    gold_by_key: dict[tuple, str] = {}
    seen_refs, unseen_refs = [], []
    for i, inst in _instances(gold_test, None):
        match_key = (i, frozenset(inst.token_positions))
        is_seen = _lemma_key(gold_test[i], inst.token_positions) in train_keys
        gold_by_key[match_key] = "seen" if is_seen else "unseen"
        ref = (i, tuple(inst.token_positions), inst.category)
        (seen_refs if is_seen else unseen_refs).append(ref)

    pred_partition: dict[tuple, list] = {"seen": [], "unseen": []}
    for i, inst in _instances(pred, None):
        match_key = (i, frozenset(inst.token_positions))
        if match_key in gold_by_key:
            side = gold_by_key[match_key]
        else:
            own = _lemma_key(pred[i], inst.token_positions)
            side = "seen" if own in train_keys else "unseen"
        pred_partition[side].append((i, inst))

    def side_report(side: str, gold_refs: list) -> EvalReport:
        gold_keys = {(i, frozenset(positions)) for i, positions, _ in gold_refs}
        pred_keys = {
            (i, frozenset(inst.token_positions)) for i, inst in pred_partition[side]
        }
        tp = len(gold_keys & pred_keys)
        mwe = BasisScores.from_counts(tp, len(pred_keys) - tp, len(gold_keys) - tp)
        g_union: dict[int, set] = {}
        for i, positions, _ in gold_refs:
            g_union.setdefault(i, set()).update(positions)
        p_union: dict[int, set] = {}
        for i, inst in pred_partition[side]:
            p_union.setdefault(i, set()).update(inst.token_positions)
        t_tp = sum(
            len(g_union.get(i, set()) & p_union.get(i, set()))
            for i in g_union.keys() | p_union.keys()
        )
        t_pred = sum(len(s) for s in p_union.values())
        t_gold = sum(len(s) for s in g_union.values())
        token = BasisScores.from_counts(t_tp, t_pred - t_tp, t_gold - t_tp)
        return EvalReport(token=token, mwe=mwe)

    total = len(seen_refs) + len(unseen_refs)
    partition = SeenUnseenPartition(
        seen=tuple(seen_refs),
        unseen=tuple(unseen_refs),
        seen_fraction=_ratio(len(seen_refs), total),
    )
    return partition, side_report("seen", seen_refs), side_report("unseen", unseen_refs)


# ---------------------------------------------------------------------------
# aggregation and rendering


def macro_average(reports: list[EvalReport]) -> EvalReport:
    """Mean of each P/R/F1 field across reports; F1 is averaged directly, not
    recomputed from the averaged P and R. Counts are summed. A category's mean
    runs over the reports that contain it."""
    if not reports:
        raise EvaluationError("cannot macro-average an empty report list")

    def mean_basis(parts: list[BasisScores]) -> BasisScores:
        k = len(parts)
        return BasisScores(
            precision=sum(b.precision for b in parts) / k,
            recall=sum(b.recall for b in parts) / k,
            f1=sum(b.f1 for b in parts) / k,
            tp=sum(b.tp for b in parts),
            fp=sum(b.fp for b in parts),
            fn=sum(b.fn for b in parts),
        )

    categories = sorted({c for r in reports for c in r.per_category})
    per_category = {}
    for cat in categories:
        present = [r.per_category[cat] for r in reports if cat in r.per_category]
        per_category[cat] = EvalReport(
            token=mean_basis([p.token for p in present]),
            mwe=mean_basis([p.mwe for p in present]),
        )
    return EvalReport(
        token=mean_basis([r.token for r in reports]),
        mwe=mean_basis([r.mwe for r in reports]),
        per_category=per_category,
    )


def percent(value: float) -> str:
    return f"{value * 100:.2f}"


def _basis_dict(b: BasisScores) -> dict:
    return {
        "precision": b.precision,
        "recall": b.recall,
        "f1": b.f1,
        "tp": b.tp,
        "fp": b.fp,
        "fn": b.fn,
    }


def report_to_dict(report: EvalReport) -> dict:
    return {
        "token": _basis_dict(report.token),
        "mwe": _basis_dict(report.mwe),
        "per_category": {
            cat: report_to_dict(sub) for cat, sub in report.per_category.items()
        },
    }


def report_to_json(report: EvalReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n"


def format_report(report: EvalReport, title: str = "TOTAL") -> str:
    """Aligned text table: one row per scope, token-based and MWE-based
    P/R/F1 as percentages."""
    rows = [(title, report)] + sorted(report.per_category.items())
    name_width = max(len(name) for name, _ in rows)
    header = (
        f"{'':<{name_width}}  {'token-based':>20}  {'MWE-based':>20}\n"
        f"{'':<{name_width}}  {'P':>6} {'R':>6} {'F1':>6}  {'P':>6} {'R':>6} {'F1':>6}"
    )
    lines = [header]
    for name, rep in rows:
        lines.append(
            f"{name:<{name_width}}  "
            f"{percent(rep.token.precision):>6} {percent(rep.token.recall):>6} "
            f"{percent(rep.token.f1):>6}  "
            f"{percent(rep.mwe.precision):>6} {percent(rep.mwe.recall):>6} "
            f"{percent(rep.mwe.f1):>6}"
        )
    return "\n".join(lines) + "\n"
