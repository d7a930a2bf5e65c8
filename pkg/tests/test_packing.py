import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convgemm import BlockingParams, MatrixView, PackedPanel, pack_a, pack_b
from convgemm.gemm import Team
from convgemm.packing import unpack_a, unpack_b


def panel(n, micro=1, dtype=np.float32):
    return PackedPanel(np.full(n, np.nan, dtype), n, 1, micro)


def test_blocking_defaults():
    bp = BlockingParams()
    assert (bp.mc, bp.nc, bp.kc, bp.mr, bp.nr) == (120, 3072, 640, 8, 12)
    assert bp.scratch_bytes() == (120 * 640 + 640 * 3072) * 4 == 8_171_520


@pytest.mark.parametrize("kw", [
    dict(mr=0), dict(mc=4, mr=8), dict(nc=6, nr=12), dict(mc=10, mr=4), dict(nc=20, nr=12),
])
def test_blocking_rejects_bad_values(kw):
    with pytest.raises(ValueError):
        BlockingParams(**kw)


def test_pack_a_identity():
    bp = BlockingParams(mc=2, nc=2, kc=2, mr=2, nr=2)
    out = panel(4)
    pack_a(MatrixView.from_array(np.eye(2)), 0, 0, 2, 2, bp, out)
    np.testing.assert_array_equal(out.data, [1, 0, 0, 1])


def test_pack_a_zero_fills_last_micro_panel():
    bp = BlockingParams(mc=4, nc=2, kc=1, mr=2, nr=2)
    out = panel(4)
    pack_a(MatrixView.from_array([[1.5], [2.5], [3.5]]), 0, 0, 3, 1, bp, out)
    np.testing.assert_array_equal(out.data, [1.5, 2.5, 3.5, 0.0])


def test_pack_a_unpack_reproduces_block(rng):
    A = rng.standard_normal((8, 8)).astype(np.float32)
    bp = BlockingParams(mc=8, nc=4, kc=8, mr=4, nr=4)
    out = panel(64)
    pack_a(MatrixView.from_array(A), 0, 0, 8, 8, bp, out)
    np.testing.assert_array_equal(unpack_a(out, 8, 8, 4), A)


def test_pack_a_interior_block(rng):
    A = rng.standard_normal((9, 7)).astype(np.float32)
    bp = BlockingParams(mc=4, nc=4, kc=3, mr=2, nr=2)
    out = panel(12)
    pack_a(MatrixView.from_array(A), 5, 2, 3, 3, bp, out)
    np.testing.assert_array_equal(unpack_a(out, 3, 3, 2), A[5:8, 2:5])


def test_pack_b_hand_trace():
    B = np.array([[1, 5, 9, 13], [2, 6, 10, 14]], np.float32)
    bp = BlockingParams(mc=2, nc=4, kc=2, mr=2, nr=2)
    out = panel(8)
    pack_b(MatrixView.from_array(B), 0, 0, 2, 4, bp, out)
    np.testing.assert_array_equal(out.data, [1, 5, 2, 6, 9, 13, 10, 14])


def test_pack_b_single_element():
    bp = BlockingParams(mc=1, nc=1, kc=1, mr=1, nr=1)
    out = panel(1)
    pack_b(MatrixView.from_array([[7.0]]), 0, 0, 1, 1, bp, out)
    assert out.data[0] == 7.0


def test_pack_b_zero_fills_partial_panel():
    B = np.arange(1, 7, dtype=np.float32).reshape(2, 3)
    bp = BlockingParams(mc=2, nc=4, kc=2, mr=2, nr=2)
    out = panel(8)
    pack_b(MatrixView.from_array(B), 0, 0, 2, 3, bp, out)
    np.testing.assert_array_equal(out.data, [1, 2, 4, 5, 3, 0, 6, 0])


def test_pack_b_is_a_permutation(rng):
    # distinct values: every source element must land exactly once
    B = rng.permutation(54).astype(np.float32).reshape(6, 9) + 1
    bp = BlockingParams(mc=3, nc=9, kc=6, mr=3, nr=3)
    out = panel(54)
    pack_b(MatrixView.from_array(B), 0, 0, 6, 9, bp, out)
    assert sorted(out.data.tolist()) == sorted(B.ravel().tolist())
    np.testing.assert_array_equal(unpack_b(out, 6, 9, 3), B)


@settings(max_examples=80, deadline=None)
@given(
    k=st.integers(1, 20), n=st.integers(1, 20), m=st.integers(1, 20),
    mr=st.integers(1, 5), nr=st.integers(1, 5), threads=st.sampled_from([1, 2, 3]),
    seed=st.integers(0, 2**32 - 1),
)
def test_packing_permutation_property(k, n, m, mr, nr, threads, seed):
    rng = np.random.default_rng(seed)
    bp = BlockingParams(mc=mr * 3, nc=nr * 3, kc=5, mr=mr, nr=nr)
    A = MatrixView.from_array(rng.permutation(m * k).reshape(m, k) + 1.0)
    B = MatrixView.from_array(rng.permutation(k * n).reshape(k, n) + 1.0)
    team = Team(threads)
    for pc in range(0, k, bp.kc):
        kc_eff = min(bp.kc, k - pc)
        for jc in range(0, n, bp.nc):
            nc_eff = min(bp.nc, n - jc)
            out = PackedPanel.for_b(bp, np.float64)
            out.data[:] = np.nan
            pack_b(B, pc, jc, kc_eff, nc_eff, bp, out, team)
            used = -(-nc_eff // nr) * nr * kc_eff
            vals = out.data[:used]
            nonzero = vals[vals != 0]
            # every block element exactly once, padding slots exactly zero, nothing unwritten
            assert not np.isnan(vals).any()
            assert sorted(nonzero) == sorted(B.array[pc:pc + kc_eff, jc:jc + nc_eff].ravel())
            assert len(vals) - len(nonzero) == used - kc_eff * nc_eff
        for ic in range(0, m, bp.mc):
            mc_eff = min(bp.mc, m - ic)
            out = PackedPanel.for_a(bp, np.float64)
            out.data[:] = np.nan
            pack_a(A, ic, pc, mc_eff, kc_eff, bp, out, team)
            np.testing.assert_array_equal(
                unpack_a(out, mc_eff, kc_eff, mr), A.array[ic:ic + mc_eff, pc:pc + kc_eff])
            used = -(-mc_eff // mr) * mr * kc_eff
            assert not np.isnan(out.data[:used]).any()


def test_packing_buffers_are_aligned():
    out = PackedPanel.for_b(BlockingParams())
    assert out.data.ctypes.data % 64 == 0
    assert out.capacity == 640 * 3072
    assert PackedPanel.for_a(BlockingParams()).capacity == 120 * 640
