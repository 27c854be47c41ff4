import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nfc.numerics import (
    BoundedKind,
    BoundedNoiseSpec,
    ForwardKind,
    ForwardNoiseSpec,
    RngStream,
    ceil_int,
    draw_bounded,
    draw_forward,
    floor_int,
)

finite = st.floats(allow_nan=False, allow_infinity=False, min_value=-1e15, max_value=1e15)


@pytest.mark.parametrize("a, expected", [(2.3, 2), (-0.2, -1), (2.0, 2), (-3.0, -3)])
def test_floor_int(a, expected):
    assert floor_int(a) == expected


@pytest.mark.parametrize("a, expected", [(2.3, 3), (0.52, 1), (-1.5, -1), (4.0, 4)])
def test_ceil_int(a, expected):
    assert ceil_int(a) == expected


@pytest.mark.parametrize("bad", [math.inf, -math.inf, math.nan])
def test_non_finite_rejected(bad):
    with pytest.raises(ValueError):
        floor_int(bad)
    with pytest.raises(ValueError):
        ceil_int(bad)


def test_negative_floor_matches_quantizer_algebra():
    # quantizer needs floor below zero: y = -3, b = 1 sits in the cell centred at -2
    assert 2 * floor_int((-3.0 + 1.0) / 2.0) == -2
    assert 2 * floor_int((-2.5 + 1.0) / 2.0) == -2


@given(finite)
def test_floor_ceil_brackets(a):
    f, c = floor_int(a), ceil_int(a)
    assert f <= a < f + 1
    assert c - 1 < a <= c
    assert c == -floor_int(-a)


def test_forward_spec_rejects_zero_variance():
    with pytest.raises(ValueError):
        ForwardNoiseSpec(ForwardKind.GAUSSIAN, 0.0)


def test_gaussian_draw_reproducible():
    a = draw_forward(ForwardNoiseSpec(), RngStream(123, 4))
    b = draw_forward(ForwardNoiseSpec(), RngStream(123, 4))
    assert a == b
    assert a != draw_forward(ForwardNoiseSpec(), RngStream(123, 5))


def test_uniform_white_support():
    s = draw_forward(ForwardNoiseSpec(ForwardKind.UNIFORM, 1.0), RngStream(1), 100_000)
    assert np.abs(s).max() <= 1.7320509


@pytest.mark.parametrize("kind", list(ForwardKind))
def test_forward_second_moment(kind):
    s = draw_forward(ForwardNoiseSpec(kind, 2.5), RngStream(9, 1), 1_000_000)
    assert abs(np.mean(s * s) / 2.5 - 1) < 0.02
    assert abs(np.mean(s)) < 0.01


def test_bounded_zero():
    assert draw_bounded(BoundedNoiseSpec(BoundedKind.ZERO, 1.0), RngStream(1)) == 0.0


def test_rademacher_support_without_margin():
    s = draw_bounded(BoundedNoiseSpec(BoundedKind.RADEMACHER, 0.5, 0.0), RngStream(2), 10_000)
    assert set(np.unique(s)) == {-0.5, 0.5}


def test_atom_kinds_default_to_interior_margin():
    assert BoundedNoiseSpec(BoundedKind.RADEMACHER, 1.0).interior_margin == 2.0**-20
    assert BoundedNoiseSpec(BoundedKind.CONSTANT, 1.0).interior_margin == 2.0**-20
    assert BoundedNoiseSpec(BoundedKind.UNIFORM, 1.0).interior_margin == 0.0
    assert draw_bounded(BoundedNoiseSpec(BoundedKind.CONSTANT, 1.0), RngStream(0)) == 1.0 - 2.0**-20


@pytest.mark.parametrize("kind", list(BoundedKind))
@pytest.mark.parametrize("bound, eps", [(1.0, 0.01), (0.3, None), (2.0, 0.0)])
def test_bounded_support_exact(kind, bound, eps):
    spec = BoundedNoiseSpec(kind, bound, eps)
    s = draw_bounded(spec, RngStream(5, 3), 100_000)
    assert np.count_nonzero(np.abs(s) > bound * (1 - spec.interior_margin)) == 0


def test_trunc_gauss_is_not_degenerate():
    s = draw_bounded(BoundedNoiseSpec(BoundedKind.TRUNC_GAUSS, 0.9), RngStream(5), 100_000)
    assert 0.25 < s.std() < 0.31  # scale b/3 = 0.3, lightly truncated


def test_replay_is_byte_identical():
    spec = BoundedNoiseSpec(BoundedKind.TRUNC_GAUSS, 1.0)
    a = draw_bounded(spec, RngStream(77, 12), 5000)
    b = draw_bounded(spec, RngStream(77, 12), 5000)
    assert a.tobytes() == b.tobytes()


def test_invalid_specs():
    with pytest.raises(ValueError):
        BoundedNoiseSpec(BoundedKind.UNIFORM, -1.0)
    with pytest.raises(ValueError):
        BoundedNoiseSpec(BoundedKind.UNIFORM, 1.0, 1.0)
    with pytest.raises(ValueError):
        RngStream(-1)
