"""Tests for seeded random streams."""

import numpy as np
import pytest

from privquery.core.random import RandomSource, stage_key
from privquery.utils.exceptions import InvalidArgumentError

pytestmark = pytest.mark.unit


def test_same_seed_and_key_reproduce_draws():
    a = RandomSource(7).child(3, "engine")
    b = RandomSource(7).child(3, "engine")
    assert np.array_equal(a.uniform(100), b.uniform(100))


def test_children_do_not_consume_parent_draws():
    parent = RandomSource(7)
    untouched = RandomSource(7)
    parent.child(0, "data").uniform(50)
    parent.fork("engine").uniform(50)
    assert parent.uniform() == untouched.uniform()


def test_stage_order_does_not_matter():
    root = RandomSource(11)
    first = root.fork("relabel").uniform(10)
    root.fork("subsample").uniform(10)
    again = RandomSource(11).fork("relabel").uniform(10)
    assert np.array_equal(first, again)


def test_distinct_stages_and_trials_differ():
    root = RandomSource(11)
    assert not np.array_equal(root.fork("relabel").uniform(10), root.fork("resample").uniform(10))
    assert not np.array_equal(root.child(0, "trial").uniform(10), root.child(1, "trial").uniform(10))


def test_stage_key_is_stable_32_bit():
    assert stage_key("engine") == stage_key("engine")
    assert 0 <= stage_key("engine") < 2**32
    assert stage_key("engine") != stage_key("relabel")


def test_uniform_open_never_returns_zero(mocker):
    source = RandomSource(1)
    mocker.patch.object(source.generator, "random", side_effect=[0.0, 0.0, 0.25])
    assert source.uniform_open() == 0.25


def test_bit_is_fair():
    source = RandomSource(5)
    bits = [source.bit() for _ in range(20000)]
    assert set(bits) == {0, 1}
    assert abs(np.mean(bits) - 0.5) < 0.02


@pytest.mark.parametrize("seed,trial", [(-1, 0), (0, -1)])
def test_negative_seed_or_trial_rejected(seed, trial):
    with pytest.raises(InvalidArgumentError):
        RandomSource(seed).child(trial, "x")
