import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dkgccl.encoder import (
    EncoderParams,
    bilevel_features,
    community_level_features,
    dropout_mask,
    init_params,
    load_encoder,
    node_level_features,
    save_encoder,
    substructure_count_expectation,
    substructure_count_monte_carlo,
)
from dkgccl.errors import ParseError
from dkgccl.partition import from_assignment


def test_glorot_bound():
    p = init_params(4, 4, 4, seed=0)
    bound = np.sqrt(6 / 8)
    assert np.all(np.abs(p.W_G) <= bound) and np.all(np.abs(p.W_P) <= bound)


def test_init_determinism():
    a, b = init_params(5, 3, 2, seed=11), init_params(5, 3, 2, seed=11)
    assert np.array_equal(a.W_G, b.W_G) and np.array_equal(a.W_P, b.W_P)
    c = init_params(5, 3, 2, seed=12)
    assert not np.array_equal(a.W_G, c.W_G)


def test_init_rejects_zero_dim():
    with pytest.raises(ValueError):
        init_params(3, 0, 2)


def test_node_features_examples():
    x = np.random.default_rng(0).normal(size=(5, 3))
    assert np.array_equal(node_level_features(x, np.eye(3)), x)
    assert np.all(node_level_features(np.zeros((2, 3)), np.ones((3, 4))) == 0)
    assert node_level_features(np.array([[1.0, 2.0]]), np.array([[1.0, 0.0], [0.0, 2.0]])).tolist() == [[1.0, 4.0]]


def test_node_features_shape_mismatch():
    with pytest.raises(ValueError):
        node_level_features(np.ones((2, 3)), np.ones((4, 2)))


@given(
    arrays(np.float64, (6, 3), elements=st.floats(-10, 10)),
    arrays(np.float64, (6, 3), elements=st.floats(-10, 10)),
    st.floats(-5, 5),
    st.floats(-5, 5),
)
def test_node_features_linear(x1, x2, a, b):
    w = np.random.default_rng(1).normal(size=(3, 2))
    lhs = node_level_features(a * x1 + b * x2, w)
    rhs = a * node_level_features(x1, w) + b * node_level_features(x2, w)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * (1 + np.abs(rhs).max()))


def test_community_features_without_dropout():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(6, 3))
    w = rng.normal(size=(3, 2))
    p = from_assignment([0, 0, 1, 1, 1, 2])
    c, mask = community_level_features(x, w, p, 0.0)
    u = x @ w
    assert np.all(mask == 1.0)
    assert np.allclose(c[0], u[:2].mean(0), atol=1e-15)
    assert np.allclose(c[1], u[2:5].mean(0), atol=1e-15)
    assert np.array_equal(c[2], u[5])  # singleton


def test_community_features_unit_weights_are_sums():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(4, 2))
    p = from_assignment([0, 0, 1, 1], "unit")
    c, _ = community_level_features(x, np.eye(2), p)
    assert np.allclose(c, [x[:2].sum(0), x[2:].sum(0)], atol=1e-15)


def test_dropout_mask_values():
    rng = np.random.default_rng(0)
    m = dropout_mask(rng, (100, 10), 0.3)
    assert set(np.unique(m).tolist()) <= {0.0, 1 / 0.7}
    with pytest.raises(ValueError):
        dropout_mask(rng, (2, 2), 1.0)
    with pytest.raises(ValueError):
        community_level_features(np.ones((2, 2)), np.eye(2), from_assignment([0, 1]), p=1.0,
                                 rng=rng)


def test_inverted_dropout_unbiased():
    rng = np.random.default_rng(42)
    x = rng.normal(size=(4, 3))
    w = rng.normal(size=(3, 5))
    p = from_assignment([0, 0, 0, 0])
    clean, _ = community_level_features(x, w, p, 0.0)
    draws = np.array([community_level_features(x, w, p, 0.5, rng)[0][0] for _ in range(10_000)])
    se = draws.std(axis=0, ddof=1) / np.sqrt(len(draws))
    assert np.all(np.abs(draws.mean(0) - clean[0]) <= 3 * se)


def test_bilevel_features_bundle():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(5, 3))
    params = init_params(3, 4, 2, seed=0)
    p = from_assignment([0, 1, 0, 1, 1])
    bf = bilevel_features(x, params, p, 0.2, rng)
    assert np.array_equal(bf.V, x @ params.W_G)
    c2, _ = community_level_features(x, params.W_P, p, mask=bf.mask)
    assert np.array_equal(bf.C, c2)


def test_substructure_expectation_examples():
    assert substructure_count_expectation(4, 0.5, 2) == 3.0
    assert substructure_count_expectation(7, 0.0, 5) == 0.0
    assert substructure_count_expectation(7, 1.0, 5) == 7.0


def test_substructure_monte_carlo_small():
    est = substructure_count_monte_carlo(16, 0.3, 4, draws=20_000, seed=1)
    assert est == pytest.approx(substructure_count_expectation(16, 0.3, 4), rel=0.02)


def test_checkpoint_roundtrip(tmp_path):
    params = init_params(5, 3, 2, seed=0)
    digest = b"\x01" * 32
    save_encoder(params, tmp_path / "e.bin", digest)
    loaded, d = load_encoder(tmp_path / "e.bin")
    assert d == digest
    assert np.array_equal(loaded.W_G, params.W_G) and np.array_equal(loaded.W_P, params.W_P)
    raw = (tmp_path / "e.bin").read_bytes()
    assert raw[:24] == np.array([5, 3, 2], dtype="<u8").tobytes()
    assert len(raw) == 24 + 8 * (15 + 10) + 36


def test_checkpoint_truncated(tmp_path):
    save_encoder(EncoderParams(np.ones((2, 2)), np.ones((2, 2))), tmp_path / "e.bin")
    raw = (tmp_path / "e.bin").read_bytes()
    (tmp_path / "e.bin").write_bytes(raw[:30])
    with pytest.raises(ParseError):
        load_encoder(tmp_path / "e.bin")
