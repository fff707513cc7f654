import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from texcamo.lpgd import (
    LpgdConfig,
    ViewGrad,
    aggregate,
    cosine_matrix,
    decorrelate,
    orthogonalize,
    relative_eps,
    sort_by_loss,
)
from texcamo.renderer import GradField

from oracles import gram_schmidt


def _vg(loss, arr, i):
    return ViewGrad(loss, GradField(np.asarray(arr, dtype=np.float64).reshape(-1, 1, 3)), i)


def _batch(rng, k, dim=999, losses=None):
    losses = rng.random(k) if losses is None else losses
    return [_vg(float(l), rng.standard_normal(dim), i) for i, l in enumerate(losses)]


def _flat(f):
    return f.grad.reshape(-1)


def test_sort_examples():
    batch = [_vg(l, np.zeros(3), i) for i, l in enumerate((0.2, 0.9, 0.5))]
    assert [vg.loss for vg in sort_by_loss(batch)] == [0.9, 0.5, 0.2]
    tied = [_vg(0.3, np.zeros(3), i) for i in (4, 1, 7)]
    assert [vg.view_index for vg in sort_by_loss(tied)] == [1, 4, 7]
    assert sort_by_loss(batch[:1]) == batch[:1]
    with pytest.raises(ValueError):
        sort_by_loss([])


def test_nonfinite_loss_rejected():
    with pytest.raises(ValueError):
        _vg(float("nan"), np.zeros(3), 0)


def test_config_validation():
    with pytest.raises(ValueError):
        LpgdConfig(k=0)
    with pytest.raises(ValueError):
        LpgdConfig(eps=0.0)


def test_single_view_identity(rng):
    vg = _batch(rng, 1)[0]
    [out] = orthogonalize([vg])
    assert np.array_equal(out.grad, vg.grad.grad)
    assert np.array_equal(decorrelate([vg]).grad, vg.grad.grad)
    assert np.array_equal(aggregate([vg.grad], 1).grad, vg.grad.grad)


def test_identical_pair(rng):
    g = rng.standard_normal(30)
    a, b = orthogonalize([_vg(1.0, g, 0), _vg(1.0, g, 1)])
    assert np.array_equal(_flat(a), g)
    assert not b.grad.any()
    agg = decorrelate([_vg(1.0, g, 0), _vg(1.0, g, 1)])
    np.testing.assert_allclose(_flat(agg), g / 2, rtol=0, atol=1e-12)


def test_orthogonal_pair_unchanged():
    g1 = np.array([1.0, 0, 0, 2.0, 0, 0])
    g2 = np.array([0, 3.0, 0, 0, 0, -1.0])
    a, b = orthogonalize([_vg(2.0, g1, 0), _vg(1.0, g2, 1)])
    assert np.array_equal(_flat(a), g1) and np.array_equal(_flat(b), g2)


@pytest.mark.parametrize("c", [0.3, 1.0, 7.5])
def test_anti_parallel_pair_keeps_priority(rng, c):
    g1 = rng.standard_normal(60)
    batch = [_vg(0.4, -c * g1, 0), _vg(0.9, g1, 1)]
    out = orthogonalize(sort_by_loss(batch))
    assert np.array_equal(_flat(out[0]), g1)
    assert np.abs(_flat(out[1])).max() <= 1e-12
    np.testing.assert_allclose(_flat(decorrelate(batch)), g1 / 2, rtol=0, atol=1e-12)


def test_k_copies_average_to_fraction(rng):
    g = rng.standard_normal(45)
    batch = [_vg(0.5, g, i) for i in range(6)]
    np.testing.assert_allclose(_flat(decorrelate(batch)), g / 6, rtol=0, atol=1e-12)


def test_strict_largest_loss_passes_bitwise(rng):
    batch = _batch(rng, 7, losses=[0.1, 0.2, 0.95, 0.3, 0.3, 0.0, 0.5])
    out = orthogonalize(sort_by_loss(batch))
    assert np.array_equal(out[0].grad, batch[2].grad.grad)


def test_random_batch_matches_gram_schmidt_oracle(rng):
    batch = _batch(rng, 5, dim=1002)
    ordered = sort_by_loss(batch)
    vecs = [_flat(vg.grad) for vg in ordered]
    ref = gram_schmidt(vecs, relative_eps(vecs))
    out = [_flat(f) for f in orthogonalize(ordered)]
    for o, r in zip(out, ref):
        assert np.linalg.norm(o - r) <= 1e-10 * np.linalg.norm(r)
    for i in range(5):
        for j in range(i):
            assert abs(o_dot := out[i] @ out[j]) <= 1e-8 * np.linalg.norm(out[i]) * np.linalg.norm(out[j]), o_dot


def test_mask_restricts_inner_products(rng):
    mask = np.zeros((10, 10), bool)
    mask[2:8, 3:9] = True
    fields = []
    for i in range(4):
        g = rng.standard_normal((10, 10, 3)) * mask[..., None]
        fields.append(ViewGrad(float(i), GradField(g), i))
    ordered = sort_by_loss(fields)
    masked = orthogonalize(ordered, mask=mask)
    full = orthogonalize(ordered)
    for a, b in zip(masked, full):
        np.testing.assert_allclose(a.grad, b.grad, rtol=0, atol=1e-12)
        assert not a.grad[~mask].any()


@pytest.mark.parametrize("k", [1, 2, 5, 17, 40])
def test_output_in_span_of_inputs(rng, k):
    batch = _batch(rng, k, dim=600)
    out = _flat(decorrelate(batch))
    assert np.isfinite(out).all()
    basis = np.stack([_flat(vg.grad) for vg in batch], axis=1)
    coef, *_ = np.linalg.lstsq(basis, out, rcond=None)
    assert np.linalg.norm(basis @ coef - out) <= 1e-8 * np.linalg.norm(out)


def test_duplicate_adds_only_zero_field(rng):
    batch = _batch(rng, 4, dim=300)
    dup = batch + [ViewGrad(batch[1].loss, batch[1].grad, 4)]
    base = [_flat(f) for f in orthogonalize(sort_by_loss(batch))]
    more = [_flat(f) for f in orthogonalize(sort_by_loss(dup))]
    nonzero = [v for v in more if np.abs(v).max() > 1e-12]
    assert len(nonzero) == 4
    for a, b in zip(base, nonzero):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)
    np.testing.assert_allclose(_flat(decorrelate(dup)) * 5, _flat(decorrelate(batch)) * 4,
                               rtol=0, atol=1e-10)


def test_scale_invariant_skipping(rng):
    g = rng.standard_normal(51)
    for scale in (1e-150, 1.0, 1e150):
        out = orthogonalize([_vg(1.0, g * scale, 0), _vg(0.5, g * scale * (1 + 1e-15), 1)])
        assert not out[1].grad.any()
        assert np.array_equal(_flat(out[0]), g * scale)


def test_aggregate_matches_direct_sum(rng):
    fields = [GradField(rng.standard_normal((6, 5, 3))) for _ in range(9)]
    expected = np.zeros((6, 5, 3))
    for f in fields:
        expected += f.grad
    np.testing.assert_allclose(aggregate(fields, 9).grad, expected / 9, rtol=1e-15, atol=0)
    with pytest.raises(ValueError):
        aggregate(fields, 8)


def test_cosine_matrix():
    c = cosine_matrix([GradField(np.array([[[1.0, 0, 0]]])), GradField(np.array([[[2.0, 2.0, 0]]])),
                       GradField.zeros(1, 1)])
    np.testing.assert_allclose(c[0, 1], 1 / np.sqrt(2))
    assert c[2].tolist() == [0.0, 0.0, 0.0]


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(2, 12), rank=st.integers(1, 12))
def test_pairwise_orthogonal_property(seed, k, rank):
    rng = np.random.default_rng(seed)
    basis = rng.standard_normal((rank, 90))
    batch = [_vg(float(rng.random()), rng.standard_normal(rank) @ basis, i) for i in range(k)]
    out = [_flat(f) for f in orthogonalize(sort_by_loss(batch))]
    norms = [np.linalg.norm(v) for v in out]
    for i in range(k):
        for j in range(i):
            if norms[i] and norms[j]:
                assert abs(out[i] @ out[j]) <= 1e-8 * norms[i] * norms[j]
    assert sum(n > 0 for n in norms) <= rank
