import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seisfacies.cae import ConvAutoencoder, build_model, extract_features
from seisfacies.features import (
    GatherWindow,
    SurveyGrid,
    WindowRangeError,
    WindowStandardizer,
    assemble_feature_matrix,
    cut_window,
    standardize,
    standardize_array,
    validate_window,
    window_samples,
)


def test_window_samples_default_window():
    assert window_samples(48, 2) == 24
    with pytest.raises(ValueError):
        window_samples(48, 5)


def test_cut_below_starts_at_pick():
    gather = np.arange(100.0)[:, None] * np.ones((1, 6))
    w = cut_window(gather, horizon_time_ms=20.0, window_ms=48, dt_ms=2, alignment="below")
    assert w.samples.shape == (1, 24, 6)
    assert w.samples[0, 0, 0] == 10.0


def test_cut_centered_and_odd_traces():
    gather = np.arange(100.0)[:, None] * np.ones((1, 7))
    w = cut_window(gather, horizon_time_ms=100.0, window_ms=48, dt_ms=2)
    assert w.samples.shape == (1, 24, 6)
    assert w.samples[0, 12, 0] == 50.0


def test_cut_out_of_range():
    with pytest.raises(WindowRangeError):
        cut_window(np.zeros((20, 4)), 10.0, window_ms=48, dt_ms=2, alignment="below")


def test_validate_window_cases():
    t = np.linspace(0, 2 * np.pi, 24, endpoint=False)
    sine = np.sin(t)[:, None] * np.ones((1, 3))
    assert validate_window(sine).ok
    ramp = np.linspace(1, 2, 24)[:, None] * np.ones((1, 2))
    assert validate_window(ramp).flagged_traces == [0, 1]
    zero = np.zeros((24, 2))
    assert validate_window(zero).flagged_traces == [0, 1]


def test_standardize_moments(rng):
    x = rng.normal(3.0, 5.0, size=(1, 24, 8))
    s = standardize_array(x)
    assert abs(s.mean()) < 1e-12 and abs(s.std() - 1) < 1e-12
    np.testing.assert_allclose(standardize_array(s), s, atol=1e-12)


def test_standardize_is_scale_and_shift_invariant(rng):
    x = rng.normal(size=(1, 24, 8))
    np.testing.assert_allclose(standardize_array(10 * x + 4), standardize_array(x), atol=1e-12)


def test_standardize_constant_window_warns():
    with pytest.warns(RuntimeWarning):
        out = standardize_array(np.full((1, 4, 4), 7.0))
    assert not out.any()


def test_standardize_window_object(rng):
    w = GatherWindow(1, 2, rng.normal(size=(1, 6, 4)), 2.0, 10.0)
    s = standardize(w)
    assert (s.inline, s.crossline) == (1, 2)
    assert abs(s.samples.std() - 1) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 100), st.floats(-50, 50), st.integers(0, 1000))
def test_standardize_property(scale, shift, seed):
    x = np.random.default_rng(seed).normal(size=(3, 1, 6, 4))
    np.testing.assert_allclose(standardize_array(scale * x + shift), standardize_array(x), atol=1e-9)


def test_window_standardizer_transformer(rng):
    x = rng.normal(2, 3, size=(5, 1, 6, 4))
    np.testing.assert_allclose(WindowStandardizer().fit_transform(x), standardize_array(x))


@pytest.fixture(scope="module")
def small_grid():
    data = np.random.default_rng(0).normal(size=(4, 3, 10, 10))
    return SurveyGrid(data, 2.0, 20.0)


def test_grid_keys_inline_major(small_grid):
    keys = small_grid.keys()
    assert keys[:4] == [(0, 0), (0, 1), (0, 2), (1, 0)]
    assert small_grid.window(1, 2).samples.shape == (1, 10, 10)


def test_feature_matrix_matches_per_window(small_grid):
    model = build_model((1, 10, 10), n_layers=1, n_maps=4, seed=0)
    est = ConvAutoencoder.from_model(model, standardize=False)
    F, keys = assemble_feature_matrix(small_grid, est)
    assert F.shape == (12, 64) and len(keys) == 12
    for row, (i, j) in zip(F, keys):
        np.testing.assert_array_equal(row, extract_features(model, small_grid.data[i, j][None]))


def test_feature_matrix_threads_identical(small_grid):
    model = build_model((1, 10, 10), n_layers=1, n_maps=4, seed=0)
    F1, k1 = assemble_feature_matrix(small_grid, model)
    F4, k4 = assemble_feature_matrix(small_grid, model, threads=4)
    np.testing.assert_array_equal(F1, F4)
    assert k1 == k4


@pytest.mark.parametrize("threads", [2, 3, 7])
def test_feature_matrix_threads_identical_many_chunks(threads):
    grid = SurveyGrid(np.random.default_rng(1).normal(size=(10, 15, 10, 10)), 2.0, 20.0)
    model = build_model((1, 10, 10), n_layers=2, n_maps=5, seed=0)
    F1, _ = assemble_feature_matrix(grid, model)
    Ft, _ = assemble_feature_matrix(grid, model, threads=threads)
    assert F1.tobytes() == Ft.tobytes()


def test_feature_rows_follow_grid_order(small_grid):
    model = build_model((1, 10, 10), n_layers=1, n_maps=2, seed=0)
    F, keys = assemble_feature_matrix(small_grid, model)
    flipped = SurveyGrid(small_grid.data[::-1], 2.0, 20.0)
    G, _ = assemble_feature_matrix(flipped, model)
    ni = small_grid.n_inlines
    for r, (i, j) in enumerate(keys):
        np.testing.assert_array_equal(F[r], G[keys.index((ni - 1 - i, j))])


def test_feature_matrix_10x10_grid_shape():
    grid = SurveyGrid(np.random.default_rng(1).normal(size=(10, 10, 12, 12)), 2.0, 24.0)
    model = build_model((1, 12, 12), n_layers=1, n_maps=10, seed=0)
    F, keys = assemble_feature_matrix(grid, model)
    assert F.shape == (100, 250) and len(keys) == 100
