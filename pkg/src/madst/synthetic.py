"""Template-generated dialogs for smoke tests and desk-scale experiments.

Goals (which slot gets which value at which turn) come from one random stream
and surface wording from another, so ``render_seed`` yields a paraphrased
clone of a corpus that shares every gold state.
"""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .data import DONTCARE, Dialog, SlotCatalog, Turn, load_slot_catalog, slot_tokens

_DAYS = ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"]
_PLACES = ["cambridge", "london", "ely", "norwich", "stevenage", "peterborough"]
_TIMES = ["09:15", "10:30", "11:45", "13:00", "14:20", "17:45", "19:00", "21:30"]

VALUES = {
    "area": ["centre", "north", "south", "east", "west"],
    "pricerange": ["cheap", "moderate", "expensive"],
    "stars": ["2", "3", "4", "5"],
    "internet": ["yes", "no"],
    "parking": ["yes", "no"],
    "book day": _DAYS,
    "day": _DAYS,
    "book people": ["1", "2", "3", "4", "5", "6"],
    "book stay": ["1", "2", "3", "4"],
    "book time": _TIMES,
    "leaveat": _TIMES,
    "arriveby": _TIMES,
    "departure": _PLACES,
    "destination": _PLACES,
    "food": ["italian", "chinese", "indian", "british", "french"],
    "hotel-type": ["hotel", "guest house"],
    "attraction-type": ["museum", "park", "college", "theatre"],
    "hotel-name": ["acorn guest house", "the lensfield", "alpha milton", "city centre north"],
    "restaurant-name": ["the golden curry", "pizza hut", "la mimosa", "the nirala"],
    "attraction-name": ["kettles yard", "the fitzwilliam", "byard art", "all saints church"],
}

OVERFIT_SLOTS = ("hotel-area", "hotel-pricerange", "hotel-stars", "restaurant-area", "restaurant-food",
                 "restaurant-pricerange", "train-day", "train-destination")

_INFORM = ["i want the {slot} to be {value}", "the {slot} should be {value}"]
_DONTCARE = ["any {slot} is fine", "the {slot} does not matter"]
_OPEN = ["i am looking for a {domain}", "i need a {domain}"]
_AGENT = ["what else can i do for you", "anything else", "sure , what else", "noted , go on"]
_SYLL = ["ka", "lo", "vir", "zen", "tor", "mi", "quel", "bra", "dun", "ost", "pel", "yar"]


def slot_values(slot: str) -> list[str]:
    if slot in VALUES:
        return VALUES[slot]
    return VALUES[slot.split("-", 1)[1]]


def _phrase(slot: str) -> str:
    return " ".join(slot_tokens(slot))


def invent_name(rng: np.random.Generator, n_syll: int = 3) -> str:
    """A pronounceable single token that never occurs in the fixed value pools."""
    return "".join(rng.choice(_SYLL, size=n_syll)) + "ia"


def _plan(rng: np.random.Generator, catalog: SlotCatalog, domains: Sequence[str], max_turns: int,
          dontcare_rate: float) -> list[list[tuple[str, str]]]:
    slots = [s for s in catalog if s.split("-", 1)[0] in domains]
    rng.shuffle(slots)
    n_turns = int(rng.integers(1, max_turns + 1))
    k = min(len(slots), int(rng.integers(n_turns, 2 * n_turns + 1)))
    picked = slots[:k]
    plan: list[list[tuple[str, str]]] = [[] for _ in range(n_turns)]
    for i, slot in enumerate(picked):
        value = DONTCARE if rng.random() < dontcare_rate else str(rng.choice(slot_values(slot)))
        plan[i % n_turns if i < n_turns else int(rng.integers(n_turns))].append((slot, value))
    return [p for p in plan if p]


def _render(plan: list[list[tuple[str, str]]], rng: np.random.Generator) -> tuple[list[Turn], list[str]]:
    turns, state, seen_domains = [], {}, []
    for i, mentions in enumerate(plan):
        parts = []
        for slot, value in mentions:
            domain = slot.split("-", 1)[0]
            if domain not in seen_domains:
                seen_domains.append(domain)
                parts.append(str(rng.choice(_OPEN)).format(domain=domain))
            tmpl = _DONTCARE if value == DONTCARE else _INFORM
            parts.append(str(rng.choice(tmpl)).format(slot=_phrase(slot), value=value))
            state[slot] = value
        agent = "" if i == 0 else str(rng.choice(_AGENT))
        turns.append(Turn(agent=agent, user=" . ".join(parts) + " .", state=dict(state)))
    return turns, seen_domains


def synthetic_corpus(n_dialogs: int, catalog: Optional[SlotCatalog] = None, seed: int = 0,
                     render_seed: Optional[int] = None, max_turns: int = 3, max_domains: int = 2,
                     dontcare_rate: float = 0.1, prefix: str = "syn") -> list[Dialog]:
    catalog = catalog or load_slot_catalog()
    goal_rng = np.random.default_rng(seed)
    text_rng = np.random.default_rng(seed + 7919 if render_seed is None else render_seed)
    domains = list(catalog.domains)
    out = []
    for i in range(n_dialogs):
        k = int(goal_rng.integers(1, min(max_domains, len(domains)) + 1))
        chosen = [str(d) for d in goal_rng.choice(domains, size=k, replace=False)]
        plan = _plan(goal_rng, catalog, chosen, max_turns, dontcare_rate)
        turns, seen = _render(plan, text_rng)
        out.append(Dialog(f"{prefix}{i:04d}", seen, turns))
    return out


def overfit_corpus(n_dialogs: int = 20, seed: int = 0) -> tuple[list[Dialog], list[Dialog], SlotCatalog]:
    """Three domains, eight slots; returns (train, paraphrased clone, catalog)."""
    catalog = SlotCatalog(OVERFIT_SLOTS)
    train = synthetic_corpus(n_dialogs, catalog, seed=seed, max_turns=2)
    clone = synthetic_corpus(n_dialogs, catalog, seed=seed, render_seed=seed + 104729, max_turns=2,
                             prefix="clone")
    return train, clone, catalog


COPY_SLOTS = ("hotel-area", "hotel-name")


def copy_corpus(n_dialogs: int, seed: int = 0, prefix: str = "copy",
                exclude: Sequence[str] = ()) -> tuple[list[Dialog], list[str]]:
    """One-turn dialogs asking for an invented hotel name; returns (dialogs, names)."""
    rng = np.random.default_rng(seed)
    dialogs, names, taken = [], [], set(exclude)
    for i in range(n_dialogs):
        name = invent_name(rng)
        while name in taken:
            name = invent_name(rng)
        taken.add(name)
        area = str(rng.choice(VALUES["area"]))
        user = f"i need a hotel called {name} . the hotel area should be {area} ."
        dialogs.append(Dialog(f"{prefix}{i:04d}", ["hotel"],
                              [Turn("", user, {"hotel-name": name, "hotel-area": area})]))
        names.append(name)
    return dialogs, names
