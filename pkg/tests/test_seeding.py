import numpy as np

from udelab.seeding import child_seed, stream


def test_streams_are_reproducible_and_independent():
    assert stream(0, "init").random() == stream(0, "init").random()
    assert stream(0, "init").random() != stream(0, "batching").random()
    assert stream(0, "init").random() != stream(1, "init").random()


def test_child_seed_is_stable_int():
    s = child_seed(5, "data-source")
    assert isinstance(s, int) and s == child_seed(5, "data-source")
    assert np.random.default_rng(s).random() == np.random.default_rng(child_seed(5, "data-source")).random()
