"""Projection bank, softmax gating, attention student: shapes and symmetries."""

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from shazam.errors import InvalidArgumentError, NumericError
from shazam.features import SCALE_ORDER, ScaleLevel, TeacherSpec
from shazam.fusion import (
    FusionConfig,
    FusionModel,
    GatingNetwork,
    ProjectionBank,
    StudentStack,
    fuse,
    gate,
    project_and_concat,
    student_embed,
)

LOW, MID, HIGH = ScaleLevel.LOW, ScaleLevel.MID, ScaleLevel.HIGH

TEACHERS = (
    TeacherSpec(name="a", native_dim=12, depth=24),
    TeacherSpec(name="b", native_dim=20, depth=32),
    TeacherSpec(name="c", native_dim=8, depth=12),
)


def _features(batch=5, teachers=TEACHERS, scales=SCALE_ORDER, seed=0):
    rng = np.random.default_rng(seed)
    return {
        (i, scale): torch.tensor(
            rng.standard_normal((batch, spec.native_dim)), dtype=torch.float32
        )
        for i, spec in enumerate(teachers)
        for scale in scales
    }


def _small_cfg(**overrides):
    kw = dict(embed_dim=16, num_heads=2, num_layers=2, seed=3)
    kw.update(overrides)
    return FusionConfig(**kw)


# --------------------------------------------------------------------------
# Config validation


def test_config_rejects_indivisible_heads():
    with pytest.raises(InvalidArgumentError):
        FusionConfig(embed_dim=10, num_heads=4)


@pytest.mark.parametrize(
    "scales",
    [(), (MID, LOW), (LOW, LOW, HIGH)],
    ids=["empty", "out-of-order", "duplicate"],
)
def test_config_rejects_bad_scale_tuples(scales):
    with pytest.raises(InvalidArgumentError):
        FusionConfig(scales=scales)


def test_config_accepts_any_ordered_subset():
    for scales in [(LOW,), (MID,), (HIGH,), (LOW, HIGH), (LOW, MID, HIGH)]:
        assert FusionConfig(scales=scales).scales == scales


# --------------------------------------------------------------------------
# Projection bank


def test_projection_shapes_and_concat():
    cfg = _small_cfg()
    bank = ProjectionBank(TEACHERS, cfg)
    feats = _features(batch=5)
    projected = bank.project(feats, MID)
    assert projected.shape == (5, 3, 16)
    flat = project_and_concat(bank, feats, MID)
    assert flat.shape == (5, 48)
    assert torch.equal(flat, projected.reshape(5, -1))


def test_projection_rejects_missing_and_mismatched_features():
    bank = ProjectionBank(TEACHERS, _small_cfg())
    feats = _features()
    del feats[(1, MID)]
    with pytest.raises(InvalidArgumentError, match="'b'"):
        bank.project(feats, MID)
    swapped = _features()
    swapped[(0, LOW)], swapped[(1, LOW)] = swapped[(1, LOW)], swapped[(0, LOW)]
    with pytest.raises(InvalidArgumentError, match="order mismatch"):
        bank.project(swapped, LOW)


def test_projection_rejects_inactive_scale():
    bank = ProjectionBank(TEACHERS, _small_cfg(scales=(LOW, MID)))
    with pytest.raises(InvalidArgumentError):
        bank.project(_features(), HIGH)


def test_same_seed_same_weights_different_seed_different():
    a = ProjectionBank(TEACHERS, _small_cfg(seed=3))
    b = ProjectionBank(TEACHERS, _small_cfg(seed=3))
    c = ProjectionBank(TEACHERS, _small_cfg(seed=4))
    for (ka, pa), (kb, pb) in zip(
        sorted(a.state_dict().items()), sorted(b.state_dict().items())
    ):
        assert ka == kb and torch.equal(pa, pb)
    assert any(
        not torch.equal(pa, pc)
        for pa, pc in zip(a.state_dict().values(), c.state_dict().values())
    )


# --------------------------------------------------------------------------
# Gating


def test_gate_hidden_width_is_factor_times_teachers():
    net = GatingNetwork(3, _small_cfg(), MID)
    assert net.fc1.out_features == 4 * 3
    assert net.fc1.in_features == 3 * 16
    assert net.fc2.out_features == 3


@settings(max_examples=30)
@given(
    batch=st.integers(min_value=1, max_value=7),
    seed=st.integers(min_value=0, max_value=2**31 - 1),
)
def test_gate_outputs_live_on_the_simplex(batch, seed):
    net = GatingNetwork(3, _small_cfg(), LOW)
    rng = np.random.default_rng(seed)
    concat = torch.tensor(rng.standard_normal((batch, 48)) * 10, dtype=torch.float32)
    g = gate(net, concat)
    assert g.shape == (batch, 3)
    assert bool((g >= 0).all())
    np.testing.assert_allclose(g.sum(dim=-1).detach().numpy(), 1.0, atol=1e-6)


def test_gate_rejects_nonfinite_and_wrong_width():
    net = GatingNetwork(3, _small_cfg(), LOW)
    bad = torch.full((2, 48), float("nan"))
    with pytest.raises(NumericError):
        gate(net, bad)
    with pytest.raises(InvalidArgumentError):
        gate(net, torch.zeros(2, 47))


def test_disabled_gate_is_exactly_uniform():
    cfg = _small_cfg(use_gate=False)
    model = FusionModel(TEACHERS, cfg)
    _, _, _, gates = model(_features())
    for g in gates.values():
        assert torch.equal(g, torch.full_like(g, 1.0 / 3.0))


def test_fuse_scales_rows_by_gate_weight():
    projected = torch.arange(24, dtype=torch.float32).reshape(2, 3, 4)
    gates = torch.tensor([[0.5, 0.25, 0.25], [1.0, 0.0, 0.0]])
    fused = fuse(projected, gates)
    assert torch.equal(fused[0, 0], projected[0, 0] * 0.5)
    assert torch.equal(fused[1, 1], torch.zeros(4))
    with pytest.raises(InvalidArgumentError):
        fuse(projected, torch.ones(2, 4))


# --------------------------------------------------------------------------
# Attention stack symmetries


def test_stack_is_permutation_equivariant_over_teachers():
    # No positional encoding on the teacher axis: permuting input rows must
    # permute output rows identically.
    cfg = _small_cfg(num_layers=3)
    stack = StudentStack(cfg).double()
    x = torch.randn(4, 5, 16, generator=torch.Generator().manual_seed(9), dtype=torch.float64)
    perm = torch.tensor([3, 0, 4, 1, 2])
    with torch.no_grad():
        direct = stack(x[:, perm, :])
        permuted = stack(x)[:, perm, :]
    np.testing.assert_allclose(direct.numpy(), permuted.numpy(), atol=1e-12)


def test_stack_output_rows_are_layer_normalized():
    cfg = _small_cfg()
    stack = StudentStack(cfg)
    with torch.no_grad():
        out = stack(torch.randn(3, 4, 16, generator=torch.Generator().manual_seed(1)))
    np.testing.assert_allclose(out.mean(dim=-1).numpy(), 0.0, atol=1e-6)
    np.testing.assert_allclose(out.var(dim=-1, unbiased=False).numpy(), 1.0, atol=1e-4)


def test_stack_rejects_bad_inputs():
    stack = StudentStack(_small_cfg())
    with pytest.raises(InvalidArgumentError):
        stack(torch.zeros(2, 3, 17))
    with pytest.raises(NumericError):
        stack(torch.full((2, 3, 16), float("inf")))


def test_stack_reports_failing_layer_index():
    stack = StudentStack(_small_cfg(num_layers=2))
    with torch.no_grad():
        stack.blocks[1].out.bias.fill_(float("nan"))
    with pytest.raises(NumericError, match="layer 1") as exc:
        with torch.no_grad():
            stack(torch.randn(2, 3, 16, generator=torch.Generator().manual_seed(2)))
    assert exc.value.layer == 1


# --------------------------------------------------------------------------
# Student embedding


def test_student_embed_means_teachers_and_concatenates_scales():
    f = {
        LOW: torch.tensor([[[1.0, 2.0], [3.0, 4.0]]]),
        MID: torch.tensor([[[10.0, 0.0], [0.0, 10.0]]]),
        HIGH: torch.tensor([[[-1.0, -1.0], [1.0, 1.0]]]),
    }
    out = student_embed(f, (LOW, MID, HIGH))
    np.testing.assert_allclose(out.numpy(), [[2.0, 3.0, 5.0, 5.0, 0.0, 0.0]])
    out_low = student_embed(f, (LOW,))
    np.testing.assert_allclose(out_low.numpy(), [[2.0, 3.0]])


def test_student_embed_requires_every_scale():
    with pytest.raises(InvalidArgumentError):
        student_embed({LOW: torch.zeros(1, 2, 4)}, (LOW, MID))
    with pytest.raises(InvalidArgumentError):
        student_embed({}, ())


def test_student_embed_invariant_to_teacher_order():
    x = torch.randn(3, 6, 8, generator=torch.Generator().manual_seed(5))
    perm = torch.randperm(6, generator=torch.Generator().manual_seed(6))
    a = student_embed({LOW: x}, (LOW,))
    b = student_embed({LOW: x[:, perm, :]}, (LOW,))
    np.testing.assert_allclose(a.numpy(), b.numpy(), atol=1e-6)


# --------------------------------------------------------------------------
# End-to-end fusion model


def test_forward_returns_consistent_intermediates():
    cfg = _small_cfg()
    model = FusionModel(TEACHERS, cfg)
    feats = _features(batch=4)
    embedding, z_by_scale, projected, gates = model(feats)
    assert embedding.shape == (4, model.out_dim) == (4, 3 * 16)
    assert set(z_by_scale) == set(SCALE_ORDER)
    assert set(gates) == set(SCALE_ORDER)
    for scale in SCALE_ORDER:
        assert z_by_scale[scale].shape == (4, 16)
        assert gates[scale].shape == (4, 3)
        np.testing.assert_allclose(
            gates[scale].sum(dim=-1).detach().numpy(), 1.0, atol=1e-6
        )
    for i in range(3):
        for scale in SCALE_ORDER:
            assert projected[(i, scale)].shape == (4, 16)
    # The embedding is the scale-ordered concatenation of the z vectors.
    stacked = torch.cat([z_by_scale[s] for s in SCALE_ORDER], dim=-1)
    assert torch.equal(embedding, stacked)


def test_scale_subset_shrinks_output():
    cfg = _small_cfg(scales=(LOW,))
    model = FusionModel(TEACHERS, cfg)
    embedding, z_by_scale, _, gates = model(_features(scales=(LOW,)))
    assert embedding.shape == (5, 16)
    assert list(z_by_scale) == [LOW] and list(gates) == [LOW]


def test_forward_is_deterministic_for_fixed_seed():
    feats = _features(batch=3, seed=21)
    out_a, *_ = FusionModel(TEACHERS, _small_cfg(seed=8))(feats)
    out_b, *_ = FusionModel(TEACHERS, _small_cfg(seed=8))(feats)
    assert torch.equal(out_a, out_b)
