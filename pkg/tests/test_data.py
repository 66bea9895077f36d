import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nona.data import SplitPlan, SyntheticSpec, Target, generate, read_csv, split, split_sizes, target_values
from nona.tensor import ContractError


def test_target_examples():
    origin = np.zeros((1, 2))
    assert target_values("linear", origin)[0] == 0.5
    assert target_values("radial", origin)[0] == 0.0


@pytest.mark.parametrize("target", list(Target))
def test_targets_bounded(target, rng):
    y = target_values(target, rng.uniform(-1, 1, (500, 2)))
    assert np.all(np.abs(y) <= 1.0)


def test_generation_is_deterministic():
    spec = SyntheticSpec("spiral", 300, 0.05, seed=11)
    X1, y1 = generate(spec)
    X2, y2 = generate(spec)
    assert X1.tobytes() == X2.tobytes() and y1.tobytes() == y2.tobytes()
    assert X1.shape == (300, 2)
    assert np.all(np.abs(X1) <= 1)


def test_noise_free_matches_target():
    X, y = generate(SyntheticSpec("checkerboard", 50, 0.0, 3))
    np.testing.assert_array_equal(y, target_values("checkerboard", X))


def test_split_size_examples():
    assert split_sizes(100) == (68, 12, 20)
    assert split_sizes(10) == (6, 2, 2)
    assert split_sizes(2000) == (1360, 240, 400)


def test_split_too_small():
    with pytest.raises(ContractError):
        split(9)


def test_seeds_change_permutation_not_sizes():
    a = split(100, SplitPlan(seed=0))
    b = split(100, SplitPlan(seed=1))
    assert [len(x) for x in a] == [len(x) for x in b]
    assert not np.array_equal(a[0], b[0])


@settings(max_examples=50, deadline=None)
@given(st.integers(10, 5000), st.integers(0, 1000))
def test_split_partitions_indices(n, seed):
    parts = split(n, SplitPlan(seed=seed))
    allidx = np.concatenate(parts)
    assert np.array_equal(np.sort(allidx), np.arange(n))
    assert all(len(p) > 0 for p in parts)


def test_csv_round_trip(tmp_path):
    from nona.data import write_csv
    X, y = generate(SyntheticSpec("radial", 20, 0.05, 2))
    write_csv(tmp_path / "d.csv", X, y)
    X2, y2 = read_csv(tmp_path / "d.csv")
    assert X2.tobytes() == X.tobytes() and y2.tobytes() == y.tobytes()
