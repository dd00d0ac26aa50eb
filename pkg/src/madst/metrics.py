"""Joint goal / slot accuracy, per-slot and per-turn breakdowns, domain F1.

Domain F1 is slot-level micro F1 within each domain: a non-none gold value
predicted exactly is a true positive; a non-none prediction that differs from
gold is a false positive; a non-none gold value not reproduced is a false
negative.  Domains with no positives on either side are omitted.
"""
from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .data import DONTCARE, NONE, domain_of, normalize_value

F1_DEFINITION = "slot-level micro F1 over non-none values per domain"


@dataclass
class TurnResult:
    dialogue_id: str
    turn: int
    gold: dict[str, str]
    pred: dict[str, str]

    def __post_init__(self):
        if set(self.gold) != set(self.pred):
            raise ValueError(f"{self.dialogue_id}/{self.turn}: gold and predicted slot sets differ")

    def pairs(self, norm: Optional[Mapping[str, str]] = None):
        for slot in sorted(self.gold):
            yield slot, normalize_value(self.gold[slot], norm), normalize_value(self.pred[slot], norm)


@dataclass
class EvalReport:
    joint_goal: float
    avg_slot: float
    per_slot_acc: dict[str, float]
    per_turn_bucket: dict[int, tuple[float, float]]
    domain_f1: dict[str, float]
    dontcare_acc: Optional[float]
    n_turns: int
    f1_definition: str = F1_DEFINITION
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = asdict(self)
        out["per_turn_bucket"] = {str(k): list(v) for k, v in self.per_turn_bucket.items()}
        return out

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True))

    def save_per_slot_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["slot", "accuracy"])
            for slot, acc in sorted(self.per_slot_acc.items(), key=lambda kv: -kv[1]):
                w.writerow([slot, f"{acc:.6f}"])


def _require(results: Sequence[TurnResult]) -> None:
    if not results:
        raise ValueError("no turn results to evaluate")


def _turn_correct(r: TurnResult, norm) -> tuple[int, int]:
    hits = sum(g == p for _, g, p in r.pairs(norm))
    return hits, len(r.gold)


def joint_goal(results: Sequence[TurnResult], norm=None) -> float:
    _require(results)
    return sum(h == n for h, n in (_turn_correct(r, norm) for r in results)) / len(results)


def avg_slot(results: Sequence[TurnResult], norm=None) -> float:
    _require(results)
    hits = total = 0
    for r in results:
        h, n = _turn_correct(r, norm)
        hits += h
        total += n
    return hits / total


def per_slot_accuracy(results: Sequence[TurnResult], norm=None) -> dict[str, float]:
    _require(results)
    hits, total = defaultdict(int), defaultdict(int)
    for r in results:
        for slot, g, p in r.pairs(norm):
            hits[slot] += g == p
            total[slot] += 1
    return {s: hits[s] / total[s] for s in sorted(total)}


def turn_buckets(results: Sequence[TurnResult], norm=None) -> dict[int, tuple[float, float]]:
    """0-indexed turn -> (joint goal, average slot accuracy) over that bucket."""
    groups: dict[int, list[TurnResult]] = defaultdict(list)
    for r in results:
        groups[r.turn].append(r)
    return {t: (joint_goal(g, norm), avg_slot(g, norm)) for t, g in sorted(groups.items())}


def domain_counts(results: Iterable[TurnResult], norm=None) -> dict[str, tuple[int, int, int]]:
    counts: dict[str, list[int]] = defaultdict(lambda: [0, 0, 0])
    for r in results:
        for slot, g, p in r.pairs(norm):
            c = counts[domain_of(slot)]
            if g != NONE and p == g:
                c[0] += 1
            if p != NONE and p != g:
                c[1] += 1
            if g != NONE and p != g:
                c[2] += 1
    return {d: tuple(c) for d, c in counts.items()}


def domain_f1(results: Sequence[TurnResult], norm=None) -> dict[str, float]:
    out = {}
    for domain, (tp, fp, fn) in sorted(domain_counts(results, norm).items()):
        if tp + fp + fn:
            out[domain] = 2 * tp / (2 * tp + fp + fn)
    return out


def dontcare_accuracy(results: Sequence[TurnResult], norm=None) -> Optional[float]:
    hits = total = 0
    for r in results:
        for _, g, p in r.pairs(norm):
            if g == DONTCARE:
                total += 1
                hits += p == DONTCARE
    return hits / total if total else None


def evaluate_results(results: Sequence[TurnResult], norm=None) -> EvalReport:
    _require(results)
    return EvalReport(
        joint_goal=joint_goal(results, norm),
        avg_slot=avg_slot(results, norm),
        per_slot_acc=per_slot_accuracy(results, norm),
        per_turn_bucket=turn_buckets(results, norm),
        domain_f1=domain_f1(results, norm),
        dontcare_acc=dontcare_accuracy(results, norm),
        n_turns=len(results),
    )
