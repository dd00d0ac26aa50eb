import numpy as np
import pytest

from madst import autograd as ag
from madst.autograd import Tensor
from madst.config import ModelConfig
from madst.data import Token, make_examples, tokenize, Dialog, Turn
from madst.features import (EmbeddingTables, HashContextualProvider, ZeroProvider, char_compose,
                            char_compose_batch, embed_batch, embed_conversation, embed_slot,
                            load_static_vectors, scalar_mix, slot_name_tokens)
from madst.gradcheck import check_gradients

from conftest import tiny_config, tiny_vocab


def tables_for(cfg, seed=0):
    return EmbeddingTables(cfg, tiny_vocab(), np.random.default_rng(seed))


def toks(text, turn=0):
    return [Token(w, turn_index=turn) for w in tokenize(text)]


def test_all_zero_tables_and_provider_give_zero_vector():
    cfg = tiny_config()
    tables = tables_for(cfg)
    for p in tables.parameters():
        p.data[...] = 0.0
    e = embed_conversation(toks("i need a hotel"), tables, ZeroProvider(cfg.ctx_layers, cfg.ctx_dim))
    assert e.shape == (4, cfg.embed_dim)
    assert np.array_equal(e.data, np.zeros(e.shape))


@pytest.mark.parametrize("ctx_dim", [1, 16, 32])
def test_default_width_is_415_plus_ctx(ctx_dim):
    cfg = ModelConfig(ctx_dim=ctx_dim, hidden=8)
    tables = tables_for(cfg)
    e = embed_conversation(toks("a cheap hotel in the centre at 17:45"), tables,
                           HashContextualProvider(cfg.ctx_layers, ctx_dim))
    assert e.shape[-1] == 415 + ctx_dim


def test_scalar_mix_equal_logits_average_layers():
    cfg = tiny_config(ctx_layers=2, ctx_dim=2)
    tables = tables_for(cfg)
    tables.mix_scale.data[...] = 1.7
    layers = np.array([[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_allclose(scalar_mix(layers, tables).data, 1.7 * np.array([0.5, 0.5]))


def test_provider_is_frozen_and_mix_gradients_match_fd(rng):
    cfg = tiny_config()
    tables = tables_for(cfg)
    tables.mix_logits.data[...] = rng.normal(size=cfg.ctx_layers)
    provider = HashContextualProvider(cfg.ctx_layers, cfg.ctx_dim)
    seq = [toks("i need a cheap hotel")]
    coef = Tensor(rng.normal(size=(1, 5, cfg.embed_dim)))
    loss = lambda: ag.sum_(embed_batch(seq, tables, provider)[0] * coef)
    res = check_gradients(loss, {"mix_logits": tables.mix_logits, "mix_scale": tables.mix_scale}, max_entries=None)
    assert res.max_rel_error < 1e-4
    # the provider exposes no parameters at all, so nothing inside it can receive gradient
    assert not any(isinstance(v, Tensor) for v in vars(provider).values())


def test_freezing_static_vectors():
    cfg = tiny_config(finetune_static=False)
    tables = tables_for(cfg)
    tables.zero_grad()
    e, _ = embed_batch([toks("i need a hotel")], tables, ZeroProvider(cfg.ctx_layers, cfg.ctx_dim))
    ag.sum_(e * e).backward()
    assert np.array_equal(tables.static.grad, np.zeros_like(tables.static.data))
    assert np.abs(tables.chars.grad).sum() > 0


def test_all_embedding_gradients_match_fd(rng):
    cfg = tiny_config()
    tables = tables_for(cfg)
    tokens = [Token("hotel", 3, 1, 0), Token("centre", None, 2, 1), Token("zzz", 0, None, 1)]
    coef = Tensor(rng.normal(size=(1, 3, cfg.embed_dim)))
    provider = HashContextualProvider(cfg.ctx_layers, cfg.ctx_dim)
    res = check_gradients(lambda: ag.sum_(ag.tanh(embed_batch([tokens], tables, provider)[0]) * coef),
                          dict(tables.named_parameters()), max_entries=10)
    assert res.max_rel_error < 1e-4, res


def test_identical_tokens_in_identical_context_embed_identically():
    cfg = tiny_config()
    tables = tables_for(cfg)
    e = embed_conversation(toks("hotel area hotel area hotel"), tables, HashContextualProvider(3, cfg.ctx_dim)).data
    np.testing.assert_array_equal(e[1], e[3])


def test_contextual_slice_depends_on_neighbours():
    p = HashContextualProvider(3, 4)
    a = p(["cheap", "hotel", "please"])
    b = p(["nice", "hotel", "please"])
    np.testing.assert_array_equal(a[0, 1], b[0, 1])
    assert not np.allclose(a[2, 1], b[2, 1])


def test_slot_names():
    cfg = tiny_config()
    tables = tables_for(cfg)
    provider = HashContextualProvider(cfg.ctx_layers, cfg.ctx_dim)
    assert [t.surface for t in slot_name_tokens("hotel-name")] == ["hotel", "name"]
    assert [t.surface for t in slot_name_tokens("hotel-book stay")] == ["hotel", "book", "stay"]
    a = embed_slot("hotel-name", tables, provider)
    assert a.shape == (2, cfg.embed_dim)
    np.testing.assert_array_equal(a.data, embed_slot("hotel-name", tables, provider).data)
    taxi = embed_slot("taxi-leaveat", tables, provider).data
    train = embed_slot("train-leaveat", tables, provider).data
    np.testing.assert_array_equal(taxi[1], train[1])
    assert not np.allclose(taxi[0], train[0])


def test_char_composer_cases(rng):
    cfg = tiny_config()
    tables = tables_for(cfg)
    assert not np.allclose(char_compose("act", tables).data, char_compose("cat", tables).data)
    # a single character is one GRU step on that character's embedding
    single = char_compose("a", tables).data
    step = tables.char_gru(ag.reshape(ag.getitem(tables.chars, np.array([[2]])), (1, 1, cfg.char_dim))).data
    np.testing.assert_allclose(single, step[0, 0])
    batch = char_compose_batch(["a", "hotel", "act"], tables).data
    np.testing.assert_allclose(batch[2], char_compose("act", tables).data)
    tables.chars.data[...] = 0.0
    assert np.array_equal(char_compose("hotel", tables).data, np.zeros(cfg.char_out))
    with pytest.raises(ValueError):
        char_compose("", tables)


def test_tags_and_turns_use_their_rows():
    cfg = tiny_config()
    tables = tables_for(cfg)
    e = embed_conversation([Token("hotel", 2, 3, 1)], tables, ZeroProvider(cfg.ctx_layers, cfg.ctx_dim)).data[0]
    d0 = cfg.static_dim + cfg.char_out + cfg.ctx_dim
    t = cfg.tag_dim
    np.testing.assert_array_equal(e[d0:d0 + t], tables.pos.data[3])
    np.testing.assert_array_equal(e[d0 + t:d0 + 2 * t], tables.ner.data[4])
    np.testing.assert_array_equal(e[d0 + 2 * t:], tables.turn.data[2])
    with pytest.raises(ValueError):
        embed_conversation([Token("hotel", 99)], tables, ZeroProvider(cfg.ctx_layers, cfg.ctx_dim))


def test_mismatched_provider_dim_is_rejected():
    cfg = tiny_config()
    with pytest.raises(ag.ShapeError):
        embed_conversation(toks("hotel"), tables_for(cfg), ZeroProvider(cfg.ctx_layers, cfg.ctx_dim + 1))


def test_load_static_vectors(tmp_path):
    vocab = tiny_vocab()
    path = tmp_path / "vec.txt"
    path.write_text("hotel 1 2 3\nunseen 9 9 9\ncentre 4 5 6\n")
    table = load_static_vectors(path, vocab, 3, np.random.default_rng(0))
    np.testing.assert_array_equal(table[vocab.stoi["hotel"]], [1, 2, 3])
    np.testing.assert_array_equal(table[vocab.stoi["centre"]], [4, 5, 6])
    assert np.array_equal(table[0], np.zeros(3))
    path.write_text("hotel 1 2\n")
    with pytest.raises(ValueError, match="expected 3"):
        load_static_vectors(path, vocab, 3, np.random.default_rng(0))


def test_history_turn_indices_are_non_decreasing(catalog):
    d = Dialog("d", ["hotel"], [Turn("", "hi there", {}), Turn("hello", "a hotel please", {}),
                                Turn("ok", "cheap", {"hotel-pricerange": "cheap"})])
    for ex in make_examples([d], catalog):
        idx = [t.turn_index for t in ex.history]
        assert idx == sorted(idx)
