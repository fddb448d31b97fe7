import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from newscam.archive import ArchiveError, load_archive, read_manifest, save_archive
from newscam.encoder import (
    EncoderConfig,
    EncoderWeights,
    attention_probs,
    embed,
    forward,
    forward_many,
    layer_norm,
    load_weights,
    save_weights,
    tensor_shapes,
)
from newscam.tokenization import EncodedSequence
from oracles import as_lists, loop_encoder

SMALL = EncoderConfig(num_layers=2, hidden=8, num_heads=2, ffn_dim=12, max_positions=16,
                      vocab_size=20)


def dense_weights(config, seed, scale=0.5):
    """Every tensor random, including biases and LayerNorm parameters."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in tensor_shapes(config).items():
        base = 1.0 if name.endswith(".gamma") else 0.0
        tensors[name] = (base + rng.normal(0, scale, size=shape)).astype(np.float32)
    return tensors


def seq(ids, mask=None):
    mask = mask or [1] * len(ids)
    return EncodedSequence(tuple(ids), (0,) * len(ids), tuple(mask))


def test_archive_roundtrip(tmp_path, rng):
    tensors = {"b": rng.standard_normal((3, 4)).astype(np.float32),
               "a": rng.standard_normal(5).astype(np.float32)}
    save_archive(tmp_path / "x.bin", tensors)
    back = load_archive(tmp_path / "x.bin")
    assert set(back) == {"a", "b"}
    for k in tensors:
        np.testing.assert_array_equal(back[k], tensors[k])
    m = read_manifest(tmp_path / "x.bin")
    assert m["a"] == {"dtype": "f32", "shape": [5], "offset": 0, "nbytes": 20}
    assert m["b"]["offset"] == 20


def test_archive_missing_tensor_named(tmp_path):
    save_archive(tmp_path / "x.bin", {"a": np.zeros(2)})
    with pytest.raises(ArchiveError, match="'embeddings.word'"):
        load_archive(tmp_path / "x.bin", ["embeddings.word"])


def test_archive_truncated(tmp_path):
    save_archive(tmp_path / "x.bin", {"a": np.zeros(4)})
    data = (tmp_path / "x.bin").read_bytes()
    (tmp_path / "y.bin").write_bytes(data[:-4])
    with pytest.raises(ArchiveError, match="outside"):
        load_archive(tmp_path / "y.bin")
    (tmp_path / "z.bin").write_bytes(data[:5])
    with pytest.raises(ArchiveError):
        load_archive(tmp_path / "z.bin")


def test_weights_roundtrip_and_validation(tmp_path):
    tensors = dense_weights(SMALL, 0)
    w = EncoderWeights.from_tensors(tensors, SMALL)
    save_weights(tmp_path / "w.bin", w)
    back = load_weights(tmp_path / "w.bin", SMALL)
    np.testing.assert_array_equal(back.layers[1].w_out, w.layers[1].w_out)

    bad = dict(tensors)
    bad["layers.0.attn.q.bias"] = np.array([np.nan] * 8, dtype=np.float32)
    with pytest.raises(ArchiveError, match="non-finite"):
        EncoderWeights.from_tensors(bad, SMALL)
    bad = dict(tensors)
    bad["embeddings.word"] = np.zeros((20, 9), dtype=np.float32)
    with pytest.raises(ArchiveError, match="shape"):
        EncoderWeights.from_tensors(bad, SMALL)
    bad = dict(tensors)
    del bad["layers.1.ffn.ln.beta"]
    with pytest.raises(ArchiveError, match="layers.1.ffn.ln.beta"):
        EncoderWeights.from_tensors(bad, SMALL)


def test_config_infer(tmp_path):
    save_weights(tmp_path / "w.bin", EncoderWeights.from_tensors(dense_weights(SMALL, 1), SMALL))
    assert EncoderConfig.infer(tmp_path / "w.bin", num_heads=2) == SMALL


def test_embed_zero_tables_give_beta():
    t = dense_weights(SMALL, 2)
    for name in ("embeddings.word", "embeddings.position", "embeddings.segment"):
        t[name] = np.zeros_like(t[name])
    w = EncoderWeights.from_tensors(t, SMALL)
    x = embed(seq([1, 2, 3]), w).rows
    np.testing.assert_allclose(x, np.tile(w.emb_beta, (3, 1)), atol=1e-12)


def test_embed_zero_gamma_collapses_to_beta():
    t = dense_weights(SMALL, 3)
    t["embeddings.ln.gamma"] = np.zeros_like(t["embeddings.ln.gamma"])
    w = EncoderWeights.from_tensors(t, SMALL)
    np.testing.assert_array_equal(embed(seq([4, 5]), w).rows, np.tile(w.emb_beta, (2, 1)))


def test_embed_rejects_bad_ids():
    w = EncoderWeights.from_tensors(dense_weights(SMALL, 0), SMALL)
    with pytest.raises(ValueError):
        embed(seq([20]), w)
    with pytest.raises(ValueError):
        embed(seq([1] * 17), w)


@pytest.mark.parametrize("seed", range(3))
def test_forward_matches_loop_oracle(seed):
    tensors = dense_weights(SMALL, seed)
    w = EncoderWeights.from_tensors(tensors, SMALL)
    rng = np.random.default_rng(100 + seed)
    L = int(rng.integers(1, 9))
    ids = rng.integers(0, 20, size=L).tolist()
    mask = [1] * L
    if L > 2:
        mask[-1] = 0
    got = forward(seq(ids, mask), w).rows
    want = loop_encoder(as_lists({k: v.astype(np.float64) for k, v in tensors.items()}),
                        ids, mask, SMALL.num_heads, SMALL.num_layers, SMALL.layernorm_eps)
    np.testing.assert_allclose(got, np.array(want), rtol=0, atol=1e-6)


def test_attention_probs_match_oracle():
    tensors = dense_weights(SMALL, 7)
    w = EncoderWeights.from_tensors(tensors, SMALL)
    ids, mask = [3, 1, 4, 1, 5], [1, 1, 1, 0, 0]
    x = embed(seq(ids, mask), w).rows
    p = attention_probs(x, w.layers[0], mask, SMALL.num_heads)
    _, oracle = loop_encoder(as_lists({k: v.astype(np.float64) for k, v in tensors.items()}),
                             ids, mask, SMALL.num_heads, 1, SMALL.layernorm_eps, return_probs=True)
    np.testing.assert_allclose(p, np.array(oracle[0]), atol=1e-9)


def test_single_token_attends_to_itself():
    w = EncoderWeights.from_tensors(dense_weights(SMALL, 4), SMALL)
    x = embed(seq([7]), w).rows
    np.testing.assert_array_equal(attention_probs(x, w.layers[0], [1], 2), np.ones((2, 1, 1)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 12), st.integers(0, 4))
def test_attention_rows_sum_to_one_and_ignore_masked(seed, n_real, n_pad):
    w = EncoderWeights.from_tensors(dense_weights(SMALL, seed % 5), SMALL)
    rng = np.random.default_rng(seed)
    ids = rng.integers(0, 20, size=n_real + n_pad).tolist()
    mask = [1] * n_real + [0] * n_pad
    x = embed(seq(ids, mask), w).rows
    p = attention_probs(x, w.layers[0], mask, 2)
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(p[:, :, n_real:] < 1e-300)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 10), st.integers(1, 5))
def test_padding_does_not_change_real_positions(seed, n_real, n_pad):
    w = EncoderWeights.from_tensors(dense_weights(SMALL, seed % 5), SMALL)
    rng = np.random.default_rng(seed)
    ids = rng.integers(0, 20, size=n_real).tolist()
    junk = rng.integers(0, 20, size=n_pad).tolist()
    short = forward(seq(ids), w).rows
    long = forward(seq(ids + junk, [1] * n_real + [0] * n_pad), w).rows
    np.testing.assert_allclose(long[:n_real], short, atol=1e-12)


def test_masked_key_values_do_not_matter():
    w = EncoderWeights.from_tensors(dense_weights(SMALL, 5), SMALL)
    mask = [1, 1, 1, 0]
    a = forward(seq([1, 2, 3, 4], mask), w).rows
    b = forward(seq([1, 2, 3, 19], mask), w).rows
    np.testing.assert_allclose(a[:3], b[:3], atol=1e-12)


def test_zero_layers_is_embedding():
    cfg = EncoderConfig(num_layers=0, hidden=8, num_heads=2, ffn_dim=12, max_positions=16,
                        vocab_size=20)
    w = EncoderWeights.from_tensors(dense_weights(cfg, 6), cfg)
    s = seq([1, 2, 3])
    np.testing.assert_array_equal(forward(s, w).rows, embed(s, w).rows)


def test_forward_deterministic_and_parallel_order():
    w = EncoderWeights.from_tensors(dense_weights(SMALL, 8), SMALL)
    seqs = [seq(list(range(1, n + 1))) for n in range(1, 10)]
    serial = forward_many(seqs, w, workers=1)
    parallel = forward_many(seqs, w, workers=4)
    for a, b in zip(serial, parallel):
        np.testing.assert_array_equal(a.rows, b.rows)


def test_layer_norm_statistics(rng):
    x = rng.standard_normal((5, 16)) * 3 + 2
    y = layer_norm(x, np.ones(16), np.zeros(16), 1e-12)
    np.testing.assert_allclose(y.mean(axis=1), 0, atol=1e-12)
    np.testing.assert_allclose(y.var(axis=1), 1, atol=1e-9)


def test_toy_encoder_output_statistics(toy_weights, toy_config):
    out = forward(seq(list(range(4, 14))), toy_weights).rows
    assert out.shape == (10, toy_config.hidden)
    np.testing.assert_allclose(out.mean(axis=1), 0, atol=1e-12)
    np.testing.assert_allclose(out.var(axis=1), 1, atol=1e-9)
