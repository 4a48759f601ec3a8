"""Evaluation: token-level P/R/F1, exact-match percentages, and the
construction of the scope test set that makes gold-cue and predicted-cue
runs comparable.

Conventions: metrics are percentages in [0, 100]; precision is NaN when
nothing was predicted positive, recall is NaN when nothing is positive in
gold, and F1 is NaN whenever either of those is. All-O scope predictions
count as (vacuously) continuous and stay out of the continuity
denominator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .labeling import is_continuous


def metric_str(value: float) -> str:
    """Fixed two-decimal rendering; NaN prints as 'NaN'."""
    return "NaN" if math.isnan(value) else f"{value:.2f}"


@dataclass(frozen=True)
class TokenMetrics:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float


def _finish(tp: int, fp: int, fn: int, tn: int) -> TokenMetrics:
    precision = math.nan if tp + fp == 0 else 100.0 * tp / (tp + fp)
    recall = math.nan if tp + fn == 0 else 100.0 * tp / (tp + fn)
    if math.isnan(precision) or math.isnan(recall):
        f1 = math.nan
    elif precision + recall == 0:
        f1 = 0.0
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return TokenMetrics(tp, fp, fn, tn, precision, recall, f1)


def _token_confusion(preds, golds, positive, masks=None) -> TokenMetrics:
    if len(preds) != len(golds):
        raise ValueError(f"{len(preds)} predictions vs {len(golds)} gold sequences")
    if masks is not None and len(masks) != len(preds):
        raise ValueError("masks must align with predictions")
    tp = fp = fn = tn = 0
    for i, (pred, gold) in enumerate(zip(preds, golds)):
        if len(pred) != len(gold):
            raise ValueError(f"instance {i}: {len(pred)} predicted tags vs {len(gold)} gold")
        mask = None if masks is None else masks[i]
        for k in range(len(pred)):
            if mask is not None and not mask[k]:
                continue
            p, g = pred[k] in positive, gold[k] in positive
            if p and g:
                tp += 1
            elif p:
                fp += 1
            elif g:
                fn += 1
            else:
                tn += 1
    return _finish(tp, fp, fn, tn)


def cue_token_metrics(preds, golds, masks=None) -> TokenMetrics:
    """Binary token metrics with {C, MC} as the positive class."""
    return _token_confusion(preds, golds, ("C", "MC"), masks)


def scope_token_metrics(preds, golds, masks=None) -> TokenMetrics:
    """Binary token metrics with in-scope {B, C, A} as the positive class."""
    return _token_confusion(preds, golds, ("B", "C", "A"), masks)


def pecm(preds, golds) -> float:
    """Percentage of negation sentences whose full cue tag sequence matches
    gold exactly; sentences without a gold cue stay out of the denominator."""
    if len(preds) != len(golds):
        raise ValueError(f"{len(preds)} predictions vs {len(golds)} gold sequences")
    hits = total = 0
    for pred, gold in zip(preds, golds):
        if not any(t in ("C", "MC") for t in gold):
            continue
        total += 1
        if list(pred) == list(gold):
            hits += 1
    return math.nan if total == 0 else 100.0 * hits / total


def pcs(preds, golds) -> float:
    """Percentage of gold scopes predicted exactly as an in/out token set;
    sub-label differences inside the scope do not matter."""
    if len(preds) != len(golds):
        raise ValueError(f"{len(preds)} predictions vs {len(golds)} gold sequences")
    hits = total = 0
    for pred, gold in zip(preds, golds):
        gold_set = {k for k, t in enumerate(gold) if t != "O"}
        if not gold_set:
            continue
        total += 1
        pred_set = {k for k, t in enumerate(pred) if t != "O"}
        if pred_set == gold_set:
            hits += 1
    return math.nan if total == 0 else 100.0 * hits / total


def pcp(preds) -> float:
    """Percentage of continuous predictions among predictions with at least
    one in-scope token."""
    hits = total = 0
    for pred in preds:
        if all(t == "O" for t in pred):
            continue
        total += 1
        if is_continuous(list(pred)):
            hits += 1
    return math.nan if total == 0 else 100.0 * hits / total


@dataclass(frozen=True)
class CueReport:
    token: TokenMetrics
    pecm: float

    def kv_lines(self, prefix: str = "cue") -> list[str]:
        t = self.token
        return [
            f"{prefix}.precision={metric_str(t.precision)}",
            f"{prefix}.recall={metric_str(t.recall)}",
            f"{prefix}.f1={metric_str(t.f1)}",
            f"{prefix}.pecm={metric_str(self.pecm)}",
            f"{prefix}.tp={t.tp}",
            f"{prefix}.fp={t.fp}",
            f"{prefix}.fn={t.fn}",
            f"{prefix}.tn={t.tn}",
        ]


@dataclass(frozen=True)
class ScopeReport:
    token: TokenMetrics
    pcs: float
    pcp: float

    def kv_lines(self, prefix: str = "scope") -> list[str]:
        t = self.token
        return [
            f"{prefix}.precision={metric_str(t.precision)}",
            f"{prefix}.recall={metric_str(t.recall)}",
            f"{prefix}.f1={metric_str(t.f1)}",
            f"{prefix}.pcs={metric_str(self.pcs)}",
            f"{prefix}.pcp={metric_str(self.pcp)}",
            f"{prefix}.tp={t.tp}",
            f"{prefix}.fp={t.fp}",
            f"{prefix}.fn={t.fn}",
            f"{prefix}.tn={t.tn}",
        ]


def evaluate_cue(preds, golds, masks=None) -> CueReport:
    return CueReport(cue_token_metrics(preds, golds, masks), pecm(preds, golds))


def evaluate_scope(preds, golds, masks=None) -> ScopeReport:
    return ScopeReport(scope_token_metrics(preds, golds, masks), pcs(preds, golds), pcp(preds))


# ---------------------------------------------------------------------------
# comparable test sets for the second task

@dataclass(frozen=True)
class Task2TestSet:
    """Sentence indices grouped by (gold cue present, predicted cue present).

    The evaluation set is tp + fn + fp: it covers everything either cue
    source marks as negation, so both input conditions are scored on the
    identical sentence list. True negatives never enter. Where a condition
    has no cue to feed in (fp under gold inputs, fn under predicted inputs)
    the scope prediction is fixed to all O.
    """

    tp: tuple[int, ...]
    fn: tuple[int, ...]
    fp: tuple[int, ...]
    tn: tuple[int, ...]

    @property
    def test_indices(self) -> tuple[int, ...]:
        return tuple(sorted(self.tp + self.fn + self.fp))

    def model_indices(self, condition: str) -> frozenset[int]:
        """Indices whose scope comes from the model under this cue input."""
        if condition == "gold":
            return frozenset(self.tp + self.fn)
        if condition == "pred":
            return frozenset(self.tp + self.fp)
        raise ValueError(f"condition must be 'gold' or 'pred', got {condition!r}")

    def empty_indices(self, condition: str) -> frozenset[int]:
        """Indices forced to an all-O prediction under this cue input."""
        return frozenset(self.test_indices) - self.model_indices(condition)


def build_task2_testset(gold_has_cue, pred_has_cue, instances) -> Task2TestSet:
    """Classify instances by sentence-level cue presence in gold vs the cue
    model's output. Lengths must line up; a missing prediction is an error."""
    if not (len(gold_has_cue) == len(pred_has_cue) == len(instances)):
        raise ValueError(
            f"got {len(gold_has_cue)} gold flags, {len(pred_has_cue)} predicted "
            f"flags, {len(instances)} instances"
        )
    groups = {"tp": [], "fn": [], "fp": [], "tn": []}
    for idx, (g, p) in enumerate(zip(gold_has_cue, pred_has_cue)):
        key = ("tp" if p else "fn") if g else ("fp" if p else "tn")
        groups[key].append(idx)
    return Task2TestSet(
        tuple(groups["tp"]), tuple(groups["fn"]), tuple(groups["fp"]), tuple(groups["tn"])
    )
