import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tritrans.scale_adjust import UFM, ScaleAdjust
from tritrans.tensor import ShapeError, Tensor, grad_check, no_grad


def _levels(rng, chans, top, b=1):
    """Random maps for levels finest-first, the coarsest at ``top`` pixels."""
    n = len(chans)
    return [Tensor(rng.normal(size=(b, c, top * 2 ** (n - 1 - i), top * 2 ** (n - 1 - i))).astype(np.float32))
            for i, c in enumerate(chans)]


def test_transition_shape_and_relu():
    sa = ScaleAdjust([64, 64], 16, rng=np.random.default_rng(0))
    out = sa.transition([Tensor(np.random.default_rng(1).normal(size=(1, 64, 8, 8)))])[0]
    assert out.shape == (1, 16, 8, 8)
    assert out.data.min() >= 0


def test_transition_zero():
    sa = ScaleAdjust([8, 8], 4, rng=np.random.default_rng(0))
    out = sa.transition([Tensor(np.zeros((1, 8, 8, 8))), Tensor(np.zeros((1, 8, 4, 4)))])
    assert all(not o.data.any() for o in out)


def test_ufm_shape_and_zero():
    u = UFM(8, rng=np.random.default_rng(0))
    out = u(Tensor(np.zeros((1, 8, 8, 8))), Tensor(np.zeros((1, 8, 16, 16))))
    assert out.shape == (1, 8, 16, 16)
    assert not out.data.any()


@pytest.mark.parametrize("low", [(12, 12), (16, 15), (8, 8)])
def test_ufm_rejects_non_double(low):
    u = UFM(4, rng=np.random.default_rng(0))
    with pytest.raises(ShapeError, match="ufm"):
        u(Tensor(np.zeros((1, 4, 8, 8))), Tensor(np.zeros((1, 4) + low)))


def test_ufm_gradient_wrt_high():
    rng = np.random.default_rng(4)
    u = UFM(4, rng=rng).astype(np.float64)
    hi = Tensor(rng.normal(size=(1, 4, 4, 4)))
    lo = Tensor(rng.normal(size=(1, 4, 8, 8)))
    assert grad_check(lambda: u(hi, lo).sum(), [hi], n_samples=64, rng=rng) < 1e-4


def test_k3_paper_geometry():
    sa = ScaleAdjust([4, 4, 4], 4, rng=np.random.default_rng(0))
    with no_grad():
        out = sa(_levels(np.random.default_rng(1), [4, 4, 4], 8))
    assert [o.shape[-2:] for o in out] == [(32, 32)] * 3


def test_k2_structure():
    rng = np.random.default_rng(2)
    sa = ScaleAdjust([4, 6], 4, rng=rng)
    feats = _levels(rng, [4, 6], 4)
    with no_grad():
        out = sa(feats)
        t = sa.transition(feats)
        expect = sa.chains[1][0](t[1], t[0])
    assert out[0].data.tobytes() == t[0].data.tobytes()
    np.testing.assert_array_equal(out[1].data, expect.data)


def test_k3_zero():
    sa = ScaleAdjust([4, 4, 4], 4, rng=np.random.default_rng(0))
    out = sa([Tensor(np.zeros((1, 4, s, s))) for s in (16, 8, 4)])
    assert all(o.shape == (1, 4, 16, 16) and not o.data.any() for o in out)


def test_k_outside_range_rejected():
    with pytest.raises(ValueError):
        ScaleAdjust([4], 4)
    with pytest.raises(ValueError):
        ScaleAdjust([4] * 5, 4)


def test_chain_lengths_and_unshared_parameters():
    sa = ScaleAdjust([4, 4, 4, 4], 4, rng=np.random.default_rng(0))
    assert [len(c) for c in sa.chains] == [0, 1, 2, 3]
    ids = {id(p) for c in sa.chains for u in c for p in u.parameters()}
    assert len(ids) == 6 * len(UFM(4).parameters())


def test_coarsest_passes_through_k_minus_1_ufms():
    sa = ScaleAdjust([4, 4, 4], 4, rng=np.random.default_rng(0))
    calls = []
    for j, chain in enumerate(sa.chains):
        for u in chain:
            orig = u.forward
            u.forward = lambda h, l, _o=orig, _j=j: (calls.append(_j), _o(h, l))[1]
    with no_grad():
        sa(_levels(np.random.default_rng(0), [4, 4, 4], 2))
    assert calls.count(2) == 2 and calls.count(1) == 1


@settings(max_examples=12, deadline=None)
@given(st.integers(2, 4), st.integers(1, 3), st.integers(1, 2))
def test_aligned_shapes_identical(k, top, b):
    rng = np.random.default_rng(k * 10 + top)
    sa = ScaleAdjust([3 + i for i in range(k)], 5, rng=rng)
    feats = _levels(rng, [3 + i for i in range(k)], top, b)
    with no_grad():
        out = sa(feats)
    assert len(out) == k
    assert all(o.shape == (b, 5) + feats[0].shape[-2:] for o in out)
    assert out[0].data.tobytes() == sa.transition(feats[:1])[0].data.tobytes()
