"""Corpus schema, tokenisation, vocabulary, per-turn examples and experimental splits.

Corpus JSON is a list of dialogs::

    {"dialogue_id": str, "domains": [str, ...],
     "turns": [{"agent": str, "user": str, "state": {slot: value},
                "agent_pos"/"agent_ner"/"user_pos"/"user_ner": [tag, ...]  (optional)}]}

``agent`` is the system utterance that precedes ``user`` in the same turn and
is empty on the first turn.  Tag lists, when present, align with
:func:`tokenize` of the corresponding utterance.
"""
from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

log = logging.getLogger(__name__)

NONE = "none"
DONTCARE = "dontcare"
PAD, UNK, START, END, SEP = "<pad>", "<unk>", "<s>", "</s>", "<sep>"
SPECIALS = (PAD, UNK, START, END, NONE, DONTCARE, SEP)
PAD_ID, UNK_ID, START_ID, END_ID, NONE_ID, DONTCARE_ID, SEP_ID = range(len(SPECIALS))

FIVE_DOMAINS = ("attraction", "hotel", "restaurant", "taxi", "train")

_TOKEN_RE = re.compile(r"\d{1,2}:\d{2}|[^\W_]+(?:'[^\W_]+)*")


class CorpusError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercase; split on whitespace and punctuation; clock times stay whole."""
    return _TOKEN_RE.findall(text.lower())


def _resource(name: str) -> dict:
    return json.loads(resources.files("madst").joinpath("resources").joinpath(name).read_text())


@lru_cache(maxsize=None)
def default_normalization() -> dict:
    return _resource("normalization.json")


def load_normalization(path: Optional[str | Path] = None) -> dict:
    mapping = default_normalization() if path is None else json.loads(Path(path).read_text())
    for target in set(mapping.values()):
        if normalize_value(target, mapping) != target:
            raise ValueError(f"normalisation target {target!r} is not a fixed point of the map")
    return dict(mapping)


def normalize_value(value: str, mapping: Optional[Mapping[str, str]] = None) -> str:
    """Canonical slot-value string; idempotent for any validated mapping."""
    mapping = default_normalization() if mapping is None else mapping
    v = " ".join(value.lower().split())
    v = mapping.get(v, v)
    v = " ".join(tokenize(v))
    v = mapping.get(v, v)
    return v or NONE


def load_tag_vocab(path: Optional[str | Path] = None, kind: str = "pos") -> dict[str, int]:
    if path is None:
        return _resource(f"{kind}_tags.json")
    return json.loads(Path(path).read_text())


# ---------------------------------------------------------------- slots

@dataclass(frozen=True)
class SlotCatalog:
    slots: tuple[str, ...]
    version: int = 1

    def __post_init__(self):
        if len(set(self.slots)) != len(self.slots):
            raise ValueError("slot catalog contains duplicates")

    def __len__(self) -> int:
        return len(self.slots)

    def __iter__(self):
        return iter(self.slots)

    def __contains__(self, slot) -> bool:
        return slot in self.slots

    @property
    def domains(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(domain_of(s) for s in self.slots))

    def for_domain(self, domain: str) -> "SlotCatalog":
        return SlotCatalog(tuple(s for s in self.slots if domain_of(s) == domain), self.version)

    def to_json(self) -> dict:
        return {"version": self.version, "domains": list(self.domains), "slots": list(self.slots)}


def domain_of(slot: str) -> str:
    return slot.split("-", 1)[0]


def slot_tokens(slot: str) -> list[str]:
    """``"hotel-book day"`` -> ``["hotel", "book", "day"]``."""
    words = [w for part in slot.split("-") for w in tokenize(part)]
    if not words:
        raise ValueError(f"empty slot name {slot!r}")
    return words


def load_slot_catalog(path: Optional[str | Path] = None) -> SlotCatalog:
    raw = _resource("slot_catalog.json") if path is None else json.loads(Path(path).read_text())
    return SlotCatalog(tuple(raw["slots"]), int(raw.get("version", 1)))


# ---------------------------------------------------------------- dialogs

@dataclass
class Turn:
    agent: str
    user: str
    state: dict[str, str]
    agent_pos: Optional[list[str]] = None
    agent_ner: Optional[list[str]] = None
    user_pos: Optional[list[str]] = None
    user_ner: Optional[list[str]] = None


@dataclass
class Dialog:
    dialogue_id: str
    domains: list[str]
    turns: list[Turn]

    def active_domains(self) -> set[str]:
        """Declared domains plus every domain holding a non-none gold value."""
        found = set(self.domains)
        for turn in self.turns:
            found.update(domain_of(s) for s, v in turn.state.items() if v != NONE)
        return found


_TAG_FIELDS = ("agent_pos", "agent_ner", "user_pos", "user_ner")


def _parse_dialog(raw: Mapping, catalog: SlotCatalog, norm: Mapping[str, str]) -> Optional[Dialog]:
    did = raw.get("dialogue_id") if isinstance(raw, Mapping) else None
    if not isinstance(did, str):
        raise CorpusError(f"dialog {did!r}: field 'dialogue_id' missing or not a string")
    domains = raw.get("domains")
    if not isinstance(domains, list) or not all(isinstance(d, str) for d in domains):
        raise CorpusError(f"dialog {did}: field 'domains' must be a list of strings")
    turns_raw = raw.get("turns")
    if not isinstance(turns_raw, list) or not turns_raw:
        raise CorpusError(f"dialog {did}: field 'turns' must be a non-empty list")
    known = set(catalog.domains)
    kept_domains = [d for d in domains if d in known]
    if domains and not kept_domains:
        log.info("skipping dialog %s: domains %s outside the slot catalog", did, domains)
        return None
    turns = []
    for i, t in enumerate(turns_raw):
        if not isinstance(t, Mapping):
            raise CorpusError(f"dialog {did}: turns[{i}] is not an object")
        user, agent, state_raw = t.get("user"), t.get("agent", ""), t.get("state", {})
        if not isinstance(user, str):
            raise CorpusError(f"dialog {did}: turns[{i}].user missing or not a string")
        if not isinstance(agent, str):
            raise CorpusError(f"dialog {did}: turns[{i}].agent is not a string")
        if not isinstance(state_raw, Mapping):
            raise CorpusError(f"dialog {did}: turns[{i}].state is not an object")
        state = {}
        for slot, value in state_raw.items():
            if slot not in catalog:
                log.warning("dialog %s turn %d: dropping slot %r (not in catalog)", did, i, slot)
                continue
            if not isinstance(value, str):
                raise CorpusError(f"dialog {did}: turns[{i}].state[{slot!r}] is not a string")
            value = normalize_value(value, norm)
            if value != NONE:
                state[slot] = value
        tags = {}
        for name in _TAG_FIELDS:
            tags[name] = t.get(name)
            if tags[name] is None:
                continue
            text = user if name.startswith("user") else agent
            if not isinstance(tags[name], list) or len(tags[name]) != len(tokenize(text)):
                raise CorpusError(f"dialog {did}: turns[{i}].{name} does not align with the tokenised utterance")
        turns.append(Turn(agent=agent, user=user, state=state, **tags))
    return Dialog(did, kept_domains, turns)


def parse_corpus(raw: Sequence, catalog: SlotCatalog, norm: Optional[Mapping[str, str]] = None) -> list[Dialog]:
    if not isinstance(raw, list):
        raise CorpusError("corpus root must be a list of dialogs")
    norm = default_normalization() if norm is None else norm
    dialogs = [_parse_dialog(d, catalog, norm) for d in raw]
    return [d for d in dialogs if d is not None]


def load_corpus(path: str | Path, catalog: SlotCatalog, norm: Optional[Mapping[str, str]] = None) -> list[Dialog]:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{path}: not valid JSON ({exc})") from exc
    return parse_corpus(raw, catalog, norm)


def dialog_to_json(d: Dialog) -> dict:
    turns = []
    for t in d.turns:
        row = {"agent": t.agent, "user": t.user, "state": dict(t.state)}
        for name in _TAG_FIELDS:
            if getattr(t, name) is not None:
                row[name] = list(getattr(t, name))
        turns.append(row)
    return {"dialogue_id": d.dialogue_id, "domains": list(d.domains), "turns": turns}


def dump_corpus(dialogs: Iterable[Dialog], path: str | Path) -> None:
    Path(path).write_text(json.dumps([dialog_to_json(d) for d in dialogs], indent=1))


# ---------------------------------------------------------------- vocabulary

class Vocab:
    def __init__(self, words: Sequence[str]):
        if tuple(words[:len(SPECIALS)]) != SPECIALS:
            raise ValueError("vocabulary must start with the special symbols")
        self.itos = list(words)
        self.stoi = {w: i for i, w in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("vocabulary contains duplicate words")

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, word: str) -> bool:
        return word in self.stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.itos == other.itos

    def id(self, word: str) -> int:
        return self.stoi.get(word, UNK_ID)

    def to_json(self) -> list[str]:
        return list(self.itos)


def build_vocab(dialogs: Sequence[Dialog], min_freq: int = 1, catalog: Optional[SlotCatalog] = None) -> Vocab:
    """Words ordered by frequency (desc) then lexicographically, after fixed specials.

    Slot-name words from ``catalog`` are always included.
    """
    if not dialogs:
        raise ValueError("cannot build a vocabulary from an empty training set")
    counts: Counter = Counter()
    for d in dialogs:
        for t in d.turns:
            counts.update(tokenize(t.agent))
            counts.update(tokenize(t.user))
            for v in t.state.values():
                counts.update(tokenize(v))
    keep = {w for w, c in counts.items() if c >= min_freq}
    if catalog is not None:
        for s in catalog:
            for w in slot_tokens(s):
                keep.add(w)
                counts.setdefault(w, 0)
    keep -= set(SPECIALS)
    words = sorted(keep, key=lambda w: (-counts[w], w))
    return Vocab(list(SPECIALS) + words)


# ---------------------------------------------------------------- examples

@dataclass(frozen=True)
class Token:
    surface: str
    pos_tag: Optional[int] = None
    ner_tag: Optional[int] = None
    turn_index: Optional[int] = None


@dataclass
class Example:
    dialogue_id: str
    turn: int
    history: list[Token]
    state: dict[str, str]
    domains: frozenset = field(default_factory=frozenset)


def _tag_ids(tags: Optional[list[str]], vocab: Optional[Mapping[str, int]], n: int) -> list[Optional[int]]:
    if tags is None or vocab is None:
        return [None] * n
    return [vocab.get(t) for t in tags]


def utterance_tokens(text: str, turn_index: int, pos: Optional[list[str]] = None, ner: Optional[list[str]] = None,
                     pos_vocab: Optional[Mapping[str, int]] = None,
                     ner_vocab: Optional[Mapping[str, int]] = None) -> list[Token]:
    words = tokenize(text)
    pos_ids = _tag_ids(pos, pos_vocab, len(words))
    ner_ids = _tag_ids(ner, ner_vocab, len(words))
    return [Token(w, p, q, turn_index) for w, p, q in zip(words, pos_ids, ner_ids)]


def make_examples(dialogs: Sequence[Dialog], catalog: SlotCatalog,
                  pos_vocab: Optional[Mapping[str, int]] = None,
                  ner_vocab: Optional[Mapping[str, int]] = None) -> list[Example]:
    """One example per user turn; the history is every utterance so far, separator-delimited."""
    out = []
    for d in dialogs:
        history: list[Token] = []
        for i, t in enumerate(d.turns):
            if t.agent.strip():
                history += utterance_tokens(t.agent, i, t.agent_pos, t.agent_ner, pos_vocab, ner_vocab)
                history.append(Token(SEP, turn_index=i))
            history += utterance_tokens(t.user, i, t.user_pos, t.user_ner, pos_vocab, ner_vocab)
            history.append(Token(SEP, turn_index=i))
            state = {s: t.state.get(s, NONE) for s in catalog}
            out.append(Example(d.dialogue_id, i, list(history), state, frozenset(d.active_domains())))
    return out


# ---------------------------------------------------------------- splits

def _check_domain(domain: str) -> None:
    if domain not in FIVE_DOMAINS:
        raise ValueError(f"unknown domain {domain!r}; expected one of {FIVE_DOMAINS}")


def split_zero_shot(dialogs: Sequence[Dialog], target_domain: str) -> tuple[list[Dialog], list[Dialog]]:
    """Train on dialogs without any target-domain content; test on target-only dialogs."""
    _check_domain(target_domain)
    train = [d for d in dialogs if target_domain not in d.active_domains()]
    test = [d for d in dialogs if d.active_domains() == {target_domain}]
    return train, test


def split_single_domain(dialogs: Sequence[Dialog], domain: str) -> list[Dialog]:
    _check_domain(domain)
    return [d for d in dialogs if d.active_domains() == {domain}]
