import numpy as np
import pytest

from wallflow.fields import hardy_ratio
from wallflow.suites import (HARDY_CONSTANT, antisymmetry_batch, collocation_batch, convolution_batch,
                             hardy_batch, manufactured_batch, random_wall_field)


def test_random_wall_fields_vanish_on_wall():
    for seed in range(6):
        make = random_wall_field(seed)
        f, g = make(64), make(128)
        assert not np.any(f.v[:, 0])
        # tangential slip comes only from the one-sided wall difference
        assert np.max(np.abs(g.u[:, 0])) <= np.max(np.abs(f.u[:, 0])) / 1.5
        assert 0 < hardy_ratio(f) <= HARDY_CONSTANT


def test_hardy_batch_default_seed():
    rep = hardy_batch()
    assert rep["count"] == 50
    assert rep["bound_ok"] and rep["excess_shrinks"], rep["excess"]


@pytest.mark.parametrize("seed", range(10))
def test_hardy_batch_seeds(seed):
    rep = hardy_batch(seed=seed, count=10)
    assert rep["passed"], (rep["max_ratio"], rep["excess"])


@pytest.mark.parametrize("seed", range(10))
def test_antisymmetry_batch_seeds(seed):
    rep = antisymmetry_batch(seed=seed, count=5)
    assert rep["passed"], rep["ratios"]


def test_forward_stencil_breaks_antisymmetry_suite():
    # negative control: one-sided differences are first order, ratio ~2 instead of ~4
    rep = antisymmetry_batch(stencil="forward", count=5)
    assert not rep["passed"]
    assert max(rep["ratios"]) < 4 * 0.7


def test_manufactured_and_collocation_batches():
    assert manufactured_batch()["passed"]
    assert manufactured_batch(seed=5)["passed"]
    assert collocation_batch()["passed"]


def test_convolution_batch():
    rep = convolution_batch(seed=3)
    assert rep["passed"] and rep["max_error"] <= 1e-8
