import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convgemm import (
    BlockingParams,
    ConvParams,
    Im2colSource,
    PackedPanel,
    Tensor4,
    conv_direct,
    conv_gemm,
    conv_gemm_workspace_bytes,
    conv_im2col_gemm,
    decompose_col,
    decompose_row,
    im2col,
    im2col_workspace_bytes,
    measure_scratch,
    pack_b,
    pack_b_im2col,
)
from convgemm.oracle import conv_error

from conftest import SMALL_BLOCKING, conv_params


def bits(a):
    return np.asarray(a).view(np.uint32 if a.dtype == np.float32 else np.uint64)


def test_decompose_row():
    cp = ConvParams(1, 3, 3, 2, 5, 5)
    assert decompose_row(4, cp) == (0, 1, 1)
    assert decompose_row(0, cp) == (0, 0, 0)
    assert decompose_row(362, ConvParams(64, 11, 11, 3, 224, 224, s=4)) == (2, 10, 10)


def test_decompose_col():
    cp = ConvParams(64, 11, 11, 3, 224, 224, b=2, s=4)
    assert decompose_col(0, cp) == (0, 0, 0)
    assert decompose_col(2916, cp) == (1, 0, 0)
    assert decompose_col(2916 + 55, cp) == (1, 1, 1)


def test_source_elements_match_im2col(rng):
    cp = ConvParams(2, 3, 2, 3, 6, 5, b=2, s=2, p=1)
    I = Tensor4.random(cp.input_shape, rng)
    src = Im2colSource(I, cp)
    B = im2col(I, cp)
    for r in range(src.rows):
        for c in range(src.cols):
            assert src.element(r, c) == B[r, c]


def packed_pair(I, cp, bp, p_c, j_c, kc_eff, nc_eff, threads=1):
    fused = PackedPanel.for_b(bp, I.dtype)
    fused.data[:] = np.nan
    pack_b_im2col(Im2colSource(I, cp), p_c, j_c, kc_eff, nc_eff, bp, fused, threads)
    explicit = PackedPanel.for_b(bp, I.dtype)
    explicit.data[:] = np.nan
    pack_b(im2col(I, cp), p_c, j_c, kc_eff, nc_eff, bp, explicit)
    used = -(-nc_eff // bp.nr) * bp.nr * kc_eff
    return fused.data[:used], explicit.data[:used]


def test_one_by_one_packs_a_relayout(rng):
    cp = ConvParams(1, 1, 1, 4, 3, 3, b=2)
    I = Tensor4.random(cp.input_shape, rng)
    bp = BlockingParams(mc=2, nc=6, kc=4, mr=2, nr=3)
    fused, explicit = packed_pair(I, cp, bp, 0, 6, 4, 6)
    assert bits(fused).tolist() == bits(explicit).tolist()
    # panel 0, row p_s = channel: columns 6, 7, 8 -> (i_b=0, i_w=2, i_h=0..2)
    assert fused[:3].tolist() == [I[0, 2, 0, 0], I[1, 2, 0, 0], I[2, 2, 0, 0]]


def test_block_straddling_batch_boundary(rng):
    cp = ConvParams(2, 3, 3, 2, 5, 4, b=3, s=1, p=1)
    I = Tensor4.random(cp.input_shape, rng)
    per_image = cp.h_o * cp.w_o
    bp = BlockingParams(mc=2, nc=8, kc=7, mr=2, nr=4)
    for j_c in (per_image - 1, per_image - 5, 2 * per_image - 3):
        for p_c in (0, 3, 11):
            fused, explicit = packed_pair(I, cp, bp, p_c, j_c, min(7, 18 - p_c), 8)
            assert bits(fused).tolist() == bits(explicit).tolist()


@settings(max_examples=100, deadline=None)
@given(cp=conv_params(), seed=st.integers(0, 2**32 - 1),
       nr=st.integers(1, 5), kc=st.integers(1, 9), threads=st.sampled_from([1, 2, 3]))
def test_fusion_is_bit_exact(cp, seed, nr, kc, threads):
    rng = np.random.default_rng(seed)
    I = Tensor4.random(cp.input_shape, rng)
    bp = BlockingParams(mc=nr, nc=nr * 2, kc=kc, mr=nr, nr=nr)
    src = Im2colSource(I, cp)
    for p_c in range(0, src.rows, bp.kc):
        for j_c in range(0, src.cols, bp.nc):
            kc_eff = min(bp.kc, src.rows - p_c)
            nc_eff = min(bp.nc, src.cols - j_c)
            fused, explicit = packed_pair(I, cp, bp, p_c, j_c, kc_eff, nc_eff, threads)
            assert bits(fused).tolist() == bits(explicit).tolist()


def test_conv_gemm_small(rng):
    cp = ConvParams(2, 2, 2, 1, 3, 3)
    F = Tensor4.random(cp.filter_shape, rng)
    I = Tensor4.random(cp.input_shape, rng)
    assert conv_error(conv_gemm(F, I, cp), F, I, cp) <= 1e-5


def test_conv_gemm_equals_explicit_path_bitwise_alexnet_layer7(rng):
    cp = ConvParams(384, 3, 3, 384, 13, 13)
    F = Tensor4.random(cp.filter_shape, rng)
    I = Tensor4.random(cp.input_shape, rng)
    fused = conv_gemm(F, I, cp, threads=2)
    explicit = conv_im2col_gemm(F, I, cp, threads=2)
    assert bits(fused.data).tolist() == bits(explicit.data).tolist()
    assert conv_error(fused, F, I, cp) <= 1e-5


@settings(max_examples=60, deadline=None)
@given(cp=conv_params(), seed=st.integers(0, 2**32 - 1), small=st.booleans(), threads=st.sampled_from([1, 2, 4]))
def test_conv_gemm_equals_explicit_bitwise(cp, seed, small, threads):
    rng = np.random.default_rng(seed)
    bp = SMALL_BLOCKING if small else BlockingParams()
    F = Tensor4.random(cp.filter_shape, rng)
    I = Tensor4.random(cp.input_shape, rng)
    a = conv_gemm(F, I, cp, bp, threads)
    b = conv_im2col_gemm(F, I, cp, bp, threads)
    assert bits(a.data).tolist() == bits(b.data).tolist()
    c = conv_gemm(F, I, cp, bp, 1)
    assert bits(a.data).tolist() == bits(c.data).tolist()


def test_workspace_is_only_the_packing_buffers(rng):
    assert conv_gemm_workspace_bytes() == 8_171_520
    assert im2col_workspace_bytes(ConvParams(192, 5, 5, 64, 55, 55)) == 16_646_400
    peaks = set()
    for b, h in ((1, 13), (2, 13), (3, 20)):
        cp = ConvParams(8, 3, 3, 16, h, h, b=b, p=1)
        F = Tensor4.random(cp.filter_shape, rng)
        I = Tensor4.random(cp.input_shape, rng)
        with measure_scratch() as meter:
            conv_gemm(F, I, cp)
        assert sorted(label for label, _ in meter.allocations) == ["Ac", "Bc"]
        peaks.add(meter.peak)
    assert peaks == {8_171_520}


def test_explicit_path_workspace_includes_im2col(rng):
    cp = ConvParams(8, 3, 3, 16, 13, 13, b=2, p=1)
    F = Tensor4.random(cp.filter_shape, rng)
    I = Tensor4.random(cp.input_shape, rng)
    with measure_scratch() as meter:
        conv_im2col_gemm(F, I, cp)
    assert meter.peak == im2col_workspace_bytes(cp) + 8_171_520


def test_conv_gemm_float64_exact_on_integers(rng):
    cp = ConvParams(5, 3, 2, 4, 7, 6, b=2, s=2, p=1)
    F = Tensor4.random_integers(cp.filter_shape, rng)
    I = Tensor4.random_integers(cp.input_shape, rng)
    np.testing.assert_array_equal(conv_gemm(F, I, cp, SMALL_BLOCKING).data, conv_direct(F, I, cp).data)


def test_conv_gemm_rejects_mismatched_tensors(rng):
    cp = ConvParams(2, 2, 2, 1, 3, 3)
    with pytest.raises(ValueError):
        conv_gemm(Tensor4.zeros((2, 2, 2, 2)), Tensor4.zeros(cp.input_shape), cp)
