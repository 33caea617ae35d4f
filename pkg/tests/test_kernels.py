import numpy as np
import pytest

from kgalign import _kernels
from kgalign._kernels import fallback


def _backends():
    impls = [("fallback", fallback)]
    if _kernels.BACKEND == "cython":
        from kgalign._kernels import _fast
        impls.append(("cython", _fast))
    return impls


@pytest.mark.parametrize("name,impl", _backends())
def test_l1_cross_matches_direct(name, impl):
    rng = np.random.default_rng(0)
    a = rng.standard_normal((7, 5))
    b = rng.standard_normal((11, 5))
    got = impl.l1_cross(np.ascontiguousarray(a), np.ascontiguousarray(b))
    want = np.abs(a[:, None, :] - b[None, :, :]).sum(axis=2)
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)


@pytest.mark.parametrize("name,impl", _backends())
def test_segment_sum_matches_direct(name, impl):
    rng = np.random.default_rng(1)
    vals = rng.standard_normal((20, 3))
    seg = rng.integers(0, 6, size=20)
    got = impl.segment_sum(np.ascontiguousarray(vals),
                           np.ascontiguousarray(seg, dtype=np.int64), 6)
    want = np.zeros((6, 3))
    for i, s in enumerate(seg):
        want[s] += vals[i]
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_backends_agree():
    impls = dict(_backends())
    if "cython" not in impls:
        pytest.skip("compiled extension not available")
    rng = np.random.default_rng(2)
    a = np.ascontiguousarray(rng.standard_normal((300, 17)))
    b = np.ascontiguousarray(rng.standard_normal((123, 17)))
    # summation order differs between the scalar loop and numpy reductions
    np.testing.assert_allclose(impls["cython"].l1_cross(a, b),
                               fallback.l1_cross(a, b), rtol=0, atol=1e-10)
    seg = np.ascontiguousarray(rng.integers(0, 9, size=300), dtype=np.int64)
    np.testing.assert_allclose(impls["cython"].segment_sum(a, seg, 9),
                               fallback.segment_sum(a, seg, 9), atol=1e-12)


@pytest.mark.parametrize("name,impl", _backends())
def test_dimension_mismatch_raises(name, impl):
    a = np.zeros((2, 3))
    b = np.zeros((2, 4))
    with pytest.raises(ValueError):
        impl.l1_cross(a, b)


@pytest.mark.parametrize("name,impl", _backends())
def test_segment_out_of_range_raises(name, impl):
    vals = np.zeros((2, 2))
    seg = np.array([0, 5], dtype=np.int64)
    with pytest.raises(IndexError):
        impl.segment_sum(vals, seg, 3)
