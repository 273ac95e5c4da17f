"""ABMIL bag pooling: simplex weights, permutation invariance, slide pipeline."""

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from shazam.errors import InvalidArgumentError
from shazam.features import SCALE_ORDER, ScaleLevel, TeacherSpec
from shazam.fusion import FusionConfig, FusionModel
from shazam.mil import AbmilHead, abmil_pool, aggregate_slide

LOW, MID, HIGH = ScaleLevel.LOW, ScaleLevel.MID, ScaleLevel.HIGH

TEACHERS = (
    TeacherSpec(name="a", native_dim=10, depth=24),
    TeacherSpec(name="b", native_dim=14, depth=32),
)


def _bag(n_tiles, dim=16, seed=0):
    rng = np.random.default_rng(seed)
    return torch.tensor(rng.standard_normal((n_tiles, dim)), dtype=torch.float64)


def _head(dim=16, seed=0):
    return AbmilHead(dim, hidden=8, seed=seed).double()


# --------------------------------------------------------------------------
# Pooling basics


def test_pool_weights_live_on_the_simplex():
    with torch.no_grad():
        pooled, weights = abmil_pool(_bag(9), _head())
    assert pooled.shape == (16,)
    assert weights.shape == (9,)
    assert bool((weights > 0).all())
    assert float(weights.sum()) == pytest.approx(1.0, abs=1e-12)


def test_pool_is_the_weighted_sum_of_rows():
    bag = _bag(5)
    pooled, weights = abmil_pool(bag, _head())
    manual = sum(float(weights[j]) * bag[j] for j in range(5))
    np.testing.assert_allclose(pooled.detach().numpy(), manual.detach().numpy(), atol=1e-12)


def test_single_tile_bag_gets_weight_one():
    bag = _bag(1)
    pooled, weights = abmil_pool(bag, _head())
    assert float(weights[0]) == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose(pooled.detach().numpy(), bag[0].numpy(), atol=1e-15)


def test_pool_rejects_empty_and_misshaped_bags():
    head = _head()
    with pytest.raises(InvalidArgumentError):
        abmil_pool(torch.zeros(0, 16), head)
    with pytest.raises(InvalidArgumentError):
        abmil_pool(torch.zeros(3, 2, 16), head)
    with pytest.raises(InvalidArgumentError):
        abmil_pool(torch.zeros(16), head)


def test_head_rejects_nonpositive_dims():
    with pytest.raises(InvalidArgumentError):
        AbmilHead(0)
    with pytest.raises(InvalidArgumentError):
        AbmilHead(8, hidden=0)


# --------------------------------------------------------------------------
# Permutation invariance — a bag is a set


@settings(max_examples=25)
@given(
    n_tiles=st.integers(min_value=1, max_value=20),
    seed=st.integers(min_value=0, max_value=2**31 - 1),
)
def test_pool_is_permutation_invariant(n_tiles, seed):
    bag = _bag(n_tiles, seed=seed)
    head = _head(seed=seed % 100)
    perm = torch.tensor(np.random.default_rng(seed + 1).permutation(n_tiles))
    with torch.no_grad():
        pooled, weights = abmil_pool(bag, head)
        pooled_p, weights_p = abmil_pool(bag[perm], head)
    np.testing.assert_allclose(pooled_p.numpy(), pooled.numpy(), atol=1e-9)
    np.testing.assert_allclose(weights_p.numpy(), weights[perm].numpy(), atol=1e-9)


def test_duplicated_tile_splits_its_weight():
    # Identical rows receive identical scores, so the duplicate pair shares
    # what a single copy would get and the pooled vector is unchanged.
    bag = _bag(4)
    dup = torch.cat([bag, bag[2:3]], dim=0)
    head = _head()
    with torch.no_grad():
        _, weights = abmil_pool(dup, head)
    assert float(weights[2]) == pytest.approx(float(weights[4]), abs=1e-12)


# --------------------------------------------------------------------------
# Slide-level aggregation


def _slide_features(n_tiles=7, seed=5):
    rng = np.random.default_rng(seed)
    return {
        (i, scale): torch.tensor(
            rng.standard_normal((n_tiles, spec.native_dim)), dtype=torch.float32
        )
        for i, spec in enumerate(TEACHERS)
        for scale in SCALE_ORDER
    }


def _slide_model(seed=2, **cfg_overrides):
    kw = dict(embed_dim=8, num_heads=2, num_layers=1, seed=seed)
    kw.update(cfg_overrides)
    cfg = FusionConfig(**kw)
    fusion = FusionModel(TEACHERS, cfg)
    heads = {scale: AbmilHead(cfg.embed_dim, hidden=8, seed=seed, scale=scale) for scale in cfg.scales}
    return fusion, heads


def test_aggregate_slide_shapes():
    fusion, heads = _slide_model()
    embedding, z_by_scale, pooled, gates = aggregate_slide(_slide_features(), fusion, heads)
    assert embedding.shape == (3 * 8,)
    for scale in SCALE_ORDER:
        assert z_by_scale[scale].shape == (8,)
        assert gates[scale].shape == (2,)
        assert float(gates[scale].sum()) == pytest.approx(1.0, abs=1e-6)
    for i in range(2):
        for scale in SCALE_ORDER:
            assert pooled[(i, scale)].shape == (8,)


def test_aggregate_slide_is_tile_order_invariant():
    fusion, heads = _slide_model()
    feats = _slide_features(n_tiles=9)
    perm = torch.tensor(np.random.default_rng(0).permutation(9))
    shuffled = {k: v[perm] for k, v in feats.items()}
    with torch.no_grad():
        a, *_ = aggregate_slide(feats, fusion, heads)
        b, *_ = aggregate_slide(shuffled, fusion, heads)
    np.testing.assert_allclose(a.numpy(), b.numpy(), atol=1e-5)


def test_aggregate_slide_requires_heads_for_active_scales():
    fusion, heads = _slide_model()
    del heads[MID]
    with pytest.raises(InvalidArgumentError, match="MID"):
        aggregate_slide(_slide_features(), fusion, heads)


def test_aggregate_slide_uniform_gate_when_disabled():
    fusion, heads = _slide_model(use_gate=False)
    _, _, _, gates = aggregate_slide(_slide_features(), fusion, heads)
    for g in gates.values():
        assert torch.equal(g, torch.full_like(g, 0.5))


def test_scale_specific_heads_get_distinct_parameters():
    _, heads = _slide_model()
    v_low = heads[LOW].v.weight
    v_mid = heads[MID].v.weight
    assert not torch.equal(v_low, v_mid)
