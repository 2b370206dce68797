import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snmplan.histogram import HistogramGrid
from snmplan.models import CarModel, LinearGaussianModel, NoiseSpec
from snmplan.mong import (
    InvalidCovariance,
    clamp,
    entropy_histogram,
    gaussian_entropy,
    mong_at,
    negentropy,
)


def test_grid_validation():
    with pytest.raises(ValueError):
        HistogramGrid([0.0], [1.0], 1)
    with pytest.raises(ValueError):
        HistogramGrid([0.0], [0.0], 4)
    g = HistogramGrid([0.0, 0.0], [1.0, 2.0], [2, 4])
    assert g.total_bins == 8 and g.bin_volume == pytest.approx(0.25)


def test_grid_from_samples_expands_union():
    g = HistogramGrid.from_samples(np.array([[0.0], [1.0]]), np.array([[3.0]]), bins=5)
    assert g.lower[0] == pytest.approx(-0.03) and g.upper[0] == pytest.approx(3.03)
    degenerate = HistogramGrid.from_samples(np.ones((5, 1)), bins=3)
    assert degenerate.upper[0] - degenerate.lower[0] == pytest.approx(2e-9)


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=100), st.integers(2, 9))
@settings(max_examples=100, deadline=None)
def test_counts_cover_every_sample(xs, k):
    x = np.array(xs)[:, None]
    g = HistogramGrid.from_samples(x, bins=k)
    counts = g.counts(x)
    assert counts.sum() == len(xs) and counts.size == k


def test_out_of_grid_points_go_to_edge_cells():
    g = HistogramGrid([0.0], [1.0], 4)
    assert g.indices(np.array([[-5.0], [5.0]])).tolist() == [0, 3]


def test_gaussian_entropy_closed_form():
    assert gaussian_entropy(1.0) == pytest.approx(0.5 * math.log(2 * math.pi * math.e), abs=1e-12)
    assert gaussian_entropy(np.diag([1.0, 4.0])) == pytest.approx(math.log(2 * math.pi * math.e) + math.log(2))
    assert gaussian_entropy(np.zeros((2, 2))) == -math.inf
    with pytest.raises(InvalidCovariance):
        gaussian_entropy(np.diag([1.0, -1.0]))


def test_uniform_entropy_and_negentropy():
    x = np.random.default_rng(0).random(100_000)
    assert entropy_histogram(x) == pytest.approx(0.0, abs=0.05)
    assert negentropy(x) == pytest.approx(0.5 * math.log(2 * math.pi * math.e / 12), abs=0.05)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_gaussian_negentropy_near_zero(dim):
    rng = np.random.default_rng(dim)
    L = rng.normal(size=(dim, dim)) + 2 * np.eye(dim)
    x = rng.standard_normal((100_000, dim)) @ L.T
    assert abs(negentropy(x)) < 0.02


def test_negentropy_detects_bimodality():
    rng = np.random.default_rng(1)
    x = np.concatenate([rng.normal(-3, 1, 50_000), rng.normal(3, 1, 50_000)])
    assert negentropy(x) > 0.2


def test_negentropy_with_deterministic_direction():
    rng = np.random.default_rng(2)
    x = np.column_stack([rng.standard_normal(50_000), np.full(50_000, 0.3)])
    assert abs(negentropy(x)) < 0.02


def test_explicit_grid_path():
    x = np.random.default_rng(3).standard_normal(100_000)
    grid = HistogramGrid([-6.0], [6.0], 200)
    assert abs(negentropy(x, grid=grid)) < 0.02


def test_clamp():
    assert clamp(-0.01) == 0.0 and clamp(0.3) == 0.3


def test_mong_zero_for_linear_model():
    lin = LinearGaussianModel(np.eye(2), np.eye(2), np.eye(2), 0.01 * np.eye(2), 0.01 * np.eye(2),
                              [[0.0, 0.0], [1.0, 0.0]], [-100, -100], [100, 100])
    mt, mz = mong_at(lin, np.zeros(2), lin.actions, 50_000, np.random.default_rng(4))
    assert abs(mt) < 0.02 and abs(mz) < 0.02


def test_car_additive_observation_mong_zero():
    model = CarModel(noise=NoiseSpec(0.038, 0.075))
    _, mz = mong_at(model, np.array([0.1, 0.2, 0.3, 0.05]), model.actions[:1], 50_000, np.random.default_rng(5))
    assert abs(mz) < 0.02
