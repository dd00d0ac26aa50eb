import numpy as np
import pytest

from madst.config import ModelConfig
from madst.data import SPECIALS, SlotCatalog, Vocab, load_slot_catalog
from madst.model import MADST

TINY = dict(hidden=4, static_dim=5, char_dim=3, char_out=4, ctx_dim=3, tag_dim=2, max_turns=4, dropout=0.0,
            ctx_dropout=0.0)


def tiny_config(**overrides) -> ModelConfig:
    return ModelConfig(**{**TINY, **overrides})


def tiny_vocab(words=("i", "need", "a", "hotel", "in", "the", "centre", "cheap", "area", "name",
                      "pricerange", "restaurant", "food", "italian", "junction")) -> Vocab:
    return Vocab(list(SPECIALS) + [w for w in words if w not in SPECIALS])


def tiny_model(catalog=None, seed=0, **overrides) -> MADST:
    catalog = catalog or SlotCatalog(("hotel-area", "hotel-name", "restaurant-food"))
    return MADST(tiny_config(**overrides), tiny_vocab(), catalog, seed=seed)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def catalog():
    return load_slot_catalog()


VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
