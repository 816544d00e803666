import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uwbpos.core import (
    WINDOW_LEN,
    PhysConstants,
    Position2D,
    preprocess,
    toa_label,
    toa_to_range,
)
from uwbpos.errors import AllZeroCir, MissingLabel

from conftest import make_record

C = 29.9792458


def test_preprocess_window_placement():
    samples = np.zeros(1016)
    samples[280:460] = 1.0
    w = preprocess(make_record(samples, first_path_idx=300))
    assert w.window_start == 290
    assert len(w.values) == WINDOW_LEN
    assert w.pad_left == 0


def test_preprocess_constant_scaling():
    samples = np.full(400, 5.0)
    w = preprocess(make_record(samples, first_path_idx=100))
    assert np.all(w.values == 1.0)
    assert w.norm_factor == 5.0


def test_preprocess_left_clamp_pads_zeros():
    samples = np.ones(200)
    w = preprocess(make_record(samples, first_path_idx=4))
    assert w.window_start == 0
    assert w.pad_left == 6
    assert np.all(w.values[:6] == 0.0)
    assert np.all(w.values[6:] == 1.0)
    assert len(w.values) == WINDOW_LEN
    # element 10 is still the first-path sample
    assert w.to_absolute(10.0) == pytest.approx(4.0)


def test_preprocess_right_edge_pads_zeros():
    samples = np.ones(100)
    w = preprocess(make_record(samples, first_path_idx=90))
    assert w.window_start == 80
    assert np.all(w.values[20:] == 0.0)
    assert len(w.values) == WINDOW_LEN


def test_preprocess_all_zero_window_raises():
    samples = np.zeros(400)
    samples[300:] = 1.0  # nonzero raw data, but outside the window
    with pytest.raises(AllZeroCir):
        preprocess(make_record(samples, first_path_idx=50))


@given(first_path_idx=st.integers(min_value=0, max_value=399))
@settings(max_examples=60, deadline=None)
def test_preprocess_length_is_constant(first_path_idx):
    rng = np.random.default_rng(first_path_idx)
    samples = rng.random(400) + 1e-6
    w = preprocess(make_record(samples, first_path_idx=first_path_idx))
    assert len(w.values) == WINDOW_LEN


@given(exponent=st.integers(min_value=-20, max_value=20), seed=st.integers(0, 1000))
@settings(max_examples=60, deadline=None)
def test_preprocess_scale_invariance_exact_for_pow2(exponent, seed):
    # Power-of-two scales cancel exactly in binary floating point.
    rng = np.random.default_rng(seed)
    samples = rng.random(400) + 1e-6
    w1 = preprocess(make_record(samples, first_path_idx=120))
    w2 = preprocess(make_record(samples * 2.0**exponent, first_path_idx=120))
    assert np.array_equal(w1.values, w2.values)


@given(scale=st.floats(min_value=1e-6, max_value=1e6), seed=st.integers(0, 1000))
@settings(max_examples=60, deadline=None)
def test_preprocess_scale_invariance_general(scale, seed):
    # Arbitrary scales cancel up to one rounding step per element.
    rng = np.random.default_rng(seed)
    samples = rng.random(400) + 1e-6
    w1 = preprocess(make_record(samples, first_path_idx=120))
    w2 = preprocess(make_record(samples * scale, first_path_idx=120))
    np.testing.assert_allclose(w1.values, w2.values, rtol=5e-16, atol=0)


@pytest.mark.parametrize(
    "toa_dwm,err,expected",
    [
        (100.0, 0.0, 100.0),
        (100.0, 2 * C, 98.0),
        (250.5, -C, 251.5),
    ],
)
def test_toa_label_examples(toa_dwm, err, expected):
    rec = make_record(np.ones(400), 100, toa_dwm=toa_dwm, range_err_cm=err)
    assert toa_label(rec) == pytest.approx(expected, abs=1e-12)


def test_toa_label_missing_raises():
    rec = make_record(np.ones(400), 100)
    with pytest.raises(MissingLabel):
        toa_label(rec)


@pytest.mark.parametrize(
    "toa,expected",
    [(0.0, 0.0), (2.0, 59.9584916), (10.5, 314.7820809)],
)
def test_toa_to_range_examples(toa, expected):
    assert toa_to_range(toa) == pytest.approx(expected, abs=1e-9)


@given(
    toa_dwm=st.floats(min_value=0.0, max_value=399.0),
    err=st.floats(min_value=-500.0, max_value=500.0),
)
@settings(max_examples=200, deadline=None)
def test_label_range_roundtrip(toa_dwm, err):
    """Eq-style round trip: range(toa_dwm) - range(label) == range_err_cm."""
    rec = make_record(np.ones(400), 50, toa_dwm=toa_dwm, range_err_cm=err)
    label = toa_label(rec)
    diff = toa_to_range(rec.toa_dwm) - toa_to_range(label)
    assert diff == pytest.approx(err, abs=1e-9)


def test_phys_constants_validation():
    with pytest.raises(ValueError):
        PhysConstants(c=-1.0)
    with pytest.raises(ValueError):
        PhysConstants(delta_t=0.0)


def test_position_distance():
    assert Position2D(3.0, 4.0).distance_to(Position2D(0.0, 0.0)) == 5.0
    with pytest.raises(ValueError):
        Position2D(float("nan"), 0.0)


def test_window_relative_absolute_roundtrip():
    samples = np.ones(400)
    for fpi in (4, 10, 120):
        w = preprocess(make_record(samples, first_path_idx=fpi))
        assert w.to_relative(w.to_absolute(7.25)) == pytest.approx(7.25)
        # the first-path sample is always window element 10
        assert w.to_relative(float(fpi)) == pytest.approx(10.0)
