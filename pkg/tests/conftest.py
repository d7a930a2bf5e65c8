import numpy as np
import pytest
from hypothesis import strategies as st

from convgemm import BlockingParams, ConvParams, InvalidGeometry

SMALL_BLOCKING = BlockingParams(mc=4, nc=6, kc=5, mr=2, nr=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_conv_params(rng, max_extent=8, strides=(1, 2), pads=(0, 1), batches=(1, 2, 3)):
    """Draw a valid ConvParams with every extent <= max_extent."""
    while True:
        k_h, k_w = rng.integers(1, max_extent + 1, size=2)
        h_i, w_i = rng.integers(1, max_extent + 1, size=2)
        cp = ConvParams(
            k_n=int(rng.integers(1, max_extent + 1)),
            k_h=int(k_h), k_w=int(k_w),
            c_i=int(rng.integers(1, max_extent + 1)),
            h_i=int(h_i), w_i=int(w_i),
            b=int(rng.choice(batches)),
            s=int(rng.choice(strides)),
            p=int(rng.choice(pads)),
        )
        try:
            cp.output_shape
        except InvalidGeometry:
            continue
        return cp


@st.composite
def conv_params(draw, max_extent=8):
    k_h = draw(st.integers(1, max_extent))
    k_w = draw(st.integers(1, max_extent))
    p = draw(st.integers(0, 1))
    h_i = draw(st.integers(max(1, k_h - 2 * p), max_extent))
    w_i = draw(st.integers(max(1, k_w - 2 * p), max_extent))
    return ConvParams(
        k_n=draw(st.integers(1, max_extent)), k_h=k_h, k_w=k_w,
        c_i=draw(st.integers(1, max_extent)), h_i=h_i, w_i=w_i,
        b=draw(st.integers(1, 3)), s=draw(st.integers(1, 2)), p=p,
    )


# acceptance summary: one line per criterion, printed after the run
_criteria = {}


@pytest.fixture
def criterion():
    def record(number, passed, detail=""):
        _criteria[number] = (passed, detail)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        passed, detail = _criteria[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
