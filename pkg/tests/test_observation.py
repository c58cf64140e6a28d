import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tpopt.errors import ConfigurationError, ParameterDomainError
from tpopt.families import ChirpFamily
from tpopt.observation import (PRNG_NAME, DatasetConfig, Observation, make_dataset, make_observation,
                               make_rng)

FAM = ChirpFamily()


def test_noiseless_positive():
    xi = np.array([32.0, 3.0])
    obs = make_observation(FAM, xi, 1.0, 0.0, make_rng(0))
    assert obs.y == 1
    assert np.array_equal(obs.x, FAM.signal(xi))
    assert np.linalg.norm(obs.x) == pytest.approx(1.0, abs=1e-12)


def test_negative_has_no_param():
    obs = make_observation(FAM, None, 1.0, 0.1, make_rng(0))
    assert obs.y == 0 and obs.true_param is None
    with pytest.raises(ConfigurationError):
        Observation(obs.x, 1, None, 1.0, 0.1)


def test_out_of_domain_param():
    with pytest.raises(ParameterDomainError):
        make_observation(FAM, [10.0, 0.0], 1.0, 0.1, make_rng(0))
    with pytest.raises(ParameterDomainError):
        make_observation(FAM, None, 1.0, -0.1, make_rng(0))


def test_defaults_match_desk_model():
    cfg = DatasetConfig()
    assert cfg.sigma == 0.1 and cfg.amplitude == 1.0


def test_noise_energy_moment():
    # ||z||^2 / sigma^2 ~ chi^2_D: mean D sigma^2, variance 2 D sigma^4
    d = make_dataset(FAM, DatasetConfig(n_pos=0, n_neg=10000, sigma=0.1), seed=3)
    energy = np.sum(d.x**2, axis=1)
    se = np.sqrt(2 * 256 * 0.1**4 / energy.size)
    assert abs(energy.mean() - 2.56) < 3 * se


def test_noise_variance_per_coordinate():
    d = make_dataset(FAM, DatasetConfig(n_pos=0, n_neg=4000, sigma=0.1), seed=4)
    assert d.x.size > 10**6
    assert abs(d.x.var() / 0.01 - 1) < 0.01


def test_dataset_determinism_and_layout():
    cfg = DatasetConfig(n_pos=50, n_neg=30, split="test")
    a = make_dataset(FAM, cfg, seed=11)
    b = make_dataset(FAM, cfg, seed=11)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.params, b.params, equal_nan=True)
    assert a.y.tolist() == [1] * 50 + [0] * 30
    assert np.all(np.isnan(a.params[50:])) and not np.any(np.isnan(a.params[:50]))
    assert a.metadata()["prng"] == PRNG_NAME
    assert a.metadata()["n_pos"] == 50 and a.metadata()["n_neg"] == 30


def test_splits_use_independent_streams():
    x_train = make_dataset(FAM, DatasetConfig(n_pos=5, split="train"), seed=1).x
    x_test = make_dataset(FAM, DatasetConfig(n_pos=5, split="test"), seed=1).x
    assert not np.allclose(x_train, x_test)


def test_observations_iterate_in_order():
    d = make_dataset(FAM, DatasetConfig(n_pos=3, n_neg=2), seed=0)
    obs = list(d.observations())
    assert [o.y for o in obs] == [1, 1, 1, 0, 0]
    assert obs[0].true_param is not None and obs[-1].true_param is None


def test_bad_config():
    with pytest.raises(ConfigurationError):
        DatasetConfig(split="holdout")
    with pytest.raises(ConfigurationError):
        DatasetConfig(n_pos=-1)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**63 - 1), st.integers(0, 20), st.integers(0, 20))
def test_regeneration_bitwise(seed, n_pos, n_neg):
    cfg = DatasetConfig(n_pos=n_pos, n_neg=n_neg, split="validation")
    a = make_dataset(FAM, cfg, seed)
    b = make_dataset(FAM, cfg, seed)
    assert a.x.tobytes() == b.x.tobytes()
    assert len(a) == n_pos + n_neg
