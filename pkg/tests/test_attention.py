"""Attention kernels: baseline softmax, schedule weight, guided variant."""

from __future__ import annotations

import math

import numpy as np
import pytest

from boxguide.attention import WeightSchedule, attention, guided_attention, mask_weight
from boxguide.geometry import BoundingBox
from boxguide.masks import (
    GuidanceEntry,
    GuidanceSet,
    SoftMask,
    build_flat_mask,
    build_soft_mask,
)


def make_mask(additive: np.ndarray, suppress: np.ndarray | None = None) -> SoftMask:
    """SoftMask over a 1-wide grid; rows are cells, columns tokens."""
    cells, tokens = additive.shape
    if suppress is None:
        suppress = np.zeros((cells, tokens), dtype=bool)
    return SoftMask(grid_w=1, grid_h=cells, additive=additive, suppress=suppress)


def schedule(w_prime: float = 0.2, t_max: int = 10) -> WeightSchedule:
    return WeightSchedule(w_prime=w_prime, t_max=t_max)


def test_attention_zero_queries_is_uniform():
    q = np.zeros((3, 4))
    k = np.arange(8.0).reshape(2, 4)
    out = attention(q, k)
    assert np.allclose(out, 0.5)


def test_attention_two_key_hand_value():
    # Logits [ln 2, 0] at d = 1 give exactly [2/3, 1/3].
    q = np.array([[math.log(2.0)]])
    k = np.array([[1.0], [0.0]])
    out = attention(q, k)
    assert out[0] == pytest.approx([2.0 / 3.0, 1.0 / 3.0], abs=1e-12)


def test_attention_single_key_is_one():
    out = attention(np.array([[3.0, -1.0]]), np.array([[0.5, 2.0]]))
    assert out.tolist() == [[1.0]]


def test_attention_rows_are_stochastic():
    rng = np.random.default_rng(7)
    out = attention(rng.standard_normal((40, 6)), rng.standard_normal((5, 6)))
    assert np.allclose(out.sum(axis=1), 1.0, atol=1e-12)
    assert (out >= 0.0).all()


def test_attention_is_shift_invariant():
    # Adding a constant vector to every key shifts each row's logits by a
    # row-constant, which softmax ignores.
    rng = np.random.default_rng(11)
    q = rng.standard_normal((20, 5))
    k = rng.standard_normal((4, 5))
    shift = rng.standard_normal(5)
    assert np.allclose(attention(q, k), attention(q, k + shift), atol=1e-12)


def test_attention_handles_large_logits():
    q = np.full((2, 3), 400.0)
    k = np.full((3, 3), 400.0)
    out = attention(q, k)
    assert np.isfinite(out).all()
    assert np.allclose(out.sum(axis=1), 1.0)


def test_attention_rejects_bad_inputs():
    with pytest.raises(ValueError):
        attention(np.zeros((2, 3)), np.zeros((2, 4)))  # feature mismatch
    with pytest.raises(ValueError):
        attention(np.zeros(3), np.zeros((2, 3)))  # not 2-d
    with pytest.raises(ValueError):
        attention(np.array([[np.nan, 0.0]]), np.zeros((2, 2)))  # non-finite
    with pytest.raises(ValueError):
        attention(np.zeros((2, 3)), np.zeros((0, 3)))  # no keys


def test_schedule_validation():
    with pytest.raises(ValueError):
        WeightSchedule(w_prime=-0.1, t_max=10)
    with pytest.raises(ValueError):
        WeightSchedule(w_prime=0.2, t_max=0)
    with pytest.raises(ValueError):
        schedule().decay(11)
    with pytest.raises(ValueError):
        schedule().decay(-1)


def test_schedule_decay_is_a_linear_ramp():
    ws = schedule(t_max=20)
    assert ws.decay(20) == 1.0
    assert ws.decay(10) == 0.5
    assert ws.decay(0) == 0.0


def test_mask_weight_direct_product():
    logits = np.array([[5.0, 1.0], [0.0, -2.0]])
    assert mask_weight(schedule(w_prime=0.2, t_max=10), 10, logits) == pytest.approx(1.0)
    assert mask_weight(schedule(w_prime=0.2, t_max=10), 5, logits) == pytest.approx(0.5)


def test_mask_weight_zero_cases():
    logits = np.array([[5.0, 1.0]])
    assert mask_weight(schedule(w_prime=0.0), 10, logits) == 0.0
    assert mask_weight(schedule(), 0, logits) == 0.0


def test_mask_weight_clamps_negative_maxima():
    all_negative = np.array([[-5.0, -1.0], [-3.0, -2.0]])
    assert mask_weight(schedule(), 10, all_negative) == 0.0


def test_guided_empty_guidance_is_bit_identical():
    rng = np.random.default_rng(3)
    q = rng.standard_normal((12, 4))
    k = rng.standard_normal((3, 4))
    mask = make_mask(np.zeros((12, 3)))
    assert np.array_equal(guided_attention(q, k, mask, schedule(), 10), attention(q, k))


def test_guided_zero_weight_without_suppression_is_bit_identical():
    rng = np.random.default_rng(4)
    q = rng.standard_normal((10, 4))
    k = rng.standard_normal((3, 4))
    g = GuidanceSet(
        prompt=("a", "b", "c"),
        entries=(GuidanceEntry(box=BoundingBox(0.1, 0.1, 0.9, 0.9), concept=1),),
    )
    flat = build_flat_mask(g, 1, 10, value=0.1)  # additive > 0, no suppression
    out = guided_attention(q, k, flat, schedule(w_prime=0.0), 10)
    assert np.array_equal(out, attention(q, k))


def test_guided_suppressed_entries_are_exactly_zero():
    # Zero logits, two tokens, token 1 suppressed at every cell: each row
    # collapses to [1, 0] with no round-off.
    q = np.zeros((4, 2))
    k = np.zeros((2, 2))
    suppress = np.zeros((4, 2), dtype=bool)
    suppress[:, 1] = True
    mask = make_mask(np.zeros((4, 2)), suppress)
    out = guided_attention(q, k, mask, schedule(), 10)
    assert (out[:, 0] == 1.0).all()
    assert (out[:, 1] == 0.0).all()


def test_guided_additive_hand_value():
    # Cell 0 has zero logits and an additive bump a on token 0 scaled so
    # that w * a / sqrt(d) = ln 2; its row must come out [1/2, 1/4, 1/4].
    # Cell 1 supplies the positive maximum logit the weight adapts to.
    w_prime, peak_logit = 0.5, 10.0
    q = np.array([[0.0], [peak_logit]])
    k = np.array([[1.0], [0.0], [0.0]])
    w = w_prime * 1.0 * peak_logit  # schedule at t = t_max
    additive = np.zeros((2, 3))
    additive[0, 0] = math.log(2.0) / w
    out = guided_attention(q, k, make_mask(additive), schedule(w_prime=w_prime), 10)
    assert out[0] == pytest.approx([0.5, 0.25, 0.25], abs=1e-12)


def test_guided_all_suppressed_row_is_contradictory():
    q = np.zeros((2, 2))
    k = np.zeros((1, 2))
    suppress = np.ones((2, 1), dtype=bool)
    mask = make_mask(np.zeros((2, 1)), suppress)
    with pytest.raises(ValueError, match="contradictory"):
        guided_attention(q, k, mask, schedule(), 10)


def test_guided_rejects_shape_mismatch():
    q = np.zeros((4, 2))
    k = np.zeros((3, 2))
    mask = make_mask(np.zeros((4, 2)))  # 2 tokens vs 3 keys
    with pytest.raises(ValueError, match="does not match"):
        guided_attention(q, k, mask, schedule(), 10)


def test_guided_out_of_box_rows_renormalize_the_baseline():
    # Outside a guided token's box the guided row equals the baseline row
    # with the guided column dropped and the rest renormalized.
    rng = np.random.default_rng(5)
    grid = 6
    q = rng.standard_normal((grid * grid, 4))
    k = rng.standard_normal((3, 4))
    g = GuidanceSet(
        prompt=("a", "b", "c"),
        entries=(GuidanceEntry(box=BoundingBox(0.1, 0.2, 0.6, 0.7), concept=2),),
    )
    mask = build_soft_mask(g, grid, grid)
    guided = guided_attention(q, k, mask, schedule(), 10)
    base = attention(q, k)
    outside = mask.suppress[:, 2]
    keep = [0, 1]
    expected = base[outside][:, keep]
    expected /= expected.sum(axis=1, keepdims=True)
    assert np.allclose(guided[outside][:, keep], expected, atol=1e-12)
    assert (guided[outside][:, 2] == 0.0).all()


def test_guided_in_box_attention_grows_with_w_prime():
    rng = np.random.default_rng(6)
    grid = 8
    q = rng.standard_normal((grid * grid, 4)) + 0.5  # keep max logit positive
    k = rng.standard_normal((3, 4))
    g = GuidanceSet(
        prompt=("a", "b", "c"),
        entries=(GuidanceEntry(box=BoundingBox(0.2, 0.2, 0.8, 0.8), concept=0),),
    )
    mask = build_soft_mask(g, grid, grid)
    inside = ~mask.suppress[:, 0]
    means = []
    for w_prime in (0.0, 0.05, 0.1, 0.15, 0.2):
        out = guided_attention(q, k, mask, schedule(w_prime=w_prime), 10)
        means.append(out[inside, 0].mean())
    assert all(lo < hi for lo, hi in zip(means, means[1:]))


def test_guided_perturbation_decays_with_the_step_counter():
    # Full-frame box: no suppression, so the L1 gap to the baseline is
    # driven purely by the decaying weight.
    rng = np.random.default_rng(8)
    q = rng.standard_normal((9, 4)) + 0.3
    k = rng.standard_normal((2, 4))
    g = GuidanceSet(
        prompt=("a", "b"),
        entries=(GuidanceEntry(box=BoundingBox(0.0, 0.0, 1.0, 1.0), concept=1),),
    )
    mask = build_soft_mask(g, 3, 3)
    base = attention(q, k)
    gaps = [
        np.abs(guided_attention(q, k, mask, schedule(t_max=10), t) - base).sum()
        for t in range(10, -1, -1)
    ]
    assert all(a >= b - 1e-12 for a, b in zip(gaps, gaps[1:]))
    assert gaps[0] > gaps[-1]
    assert gaps[-1] == pytest.approx(0.0, abs=1e-12)
