"""Noisy observations ``x = a s(xi) + z`` (or pure noise) and seeded datasets."""

from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from .errors import ConfigurationError, ParameterDomainError

# Generator algorithm recorded in every dataset's metadata.
PRNG_NAME = "numpy.PCG64"

SPLITS = ("train", "validation", "test", "embed")


def make_rng(seed, *keys):
    """PCG64 generator from a seed mixed with integer stream keys."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, keys)])))


@dataclass
class Observation:
    x: np.ndarray
    y: int
    true_param: Optional[np.ndarray]
    amplitude: float
    noise_sigma: float

    def __post_init__(self):
        if (self.y == 1) != (self.true_param is not None):
            raise ConfigurationError("positives carry a true parameter, negatives do not")


def make_observation(family, xi, amplitude, sigma, rng):
    """One observation; ``xi=None`` produces a pure-noise negative."""
    if sigma < 0 or amplitude < 0:
        raise ParameterDomainError("amplitude and sigma must be nonnegative")
    z = sigma * rng.standard_normal(family.ambient_dim)
    if xi is None:
        return Observation(z, 0, None, float(amplitude), float(sigma))
    xi = family.check_params(xi)[0]
    x = amplitude * family.signal(xi) + z
    return Observation(x, 1, xi, float(amplitude), float(sigma))


@dataclass
class DatasetConfig:
    n_pos: int = 1000
    n_neg: int = 0
    sigma: float = 0.1
    amplitude: float = 1.0
    split: str = "train"

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ConfigurationError(f"unknown split {self.split!r}")
        if self.n_pos < 0 or self.n_neg < 0:
            raise ConfigurationError("observation counts must be nonnegative")
        if self.sigma < 0 or self.amplitude < 0:
            raise ConfigurationError("amplitude and sigma must be nonnegative")


@dataclass
class Dataset:
    """Observations stored column-wise.

    ``params`` has NaN rows for negatives.
    """

    x: np.ndarray
    y: np.ndarray
    params: np.ndarray
    seed: int
    split: str
    sigma: float
    amplitude: float
    family: dict

    def __len__(self):
        return self.x.shape[0]

    @property
    def positives(self):
        return self.x[self.y == 1]

    @property
    def negatives(self):
        return self.x[self.y == 0]

    def observations(self):
        for x, y, p in zip(self.x, self.y, self.params):
            yield Observation(x, int(y), p if y == 1 else None, self.amplitude, self.sigma)

    def metadata(self):
        return {
            "D": int(self.x.shape[1]),
            "count": int(self.x.shape[0]),
            "n_pos": int(np.sum(self.y == 1)),
            "n_neg": int(np.sum(self.y == 0)),
            "seed": int(self.seed),
            "split": self.split,
            "sigma": float(self.sigma),
            "amplitude": float(self.amplitude),
            "family": self.family,
            "prng": PRNG_NAME,
        }


def make_dataset(family, config: DatasetConfig, seed):
    """Positives first, then negatives; the order is part of the contract.

    The split name selects an independent random stream, so train,
    validation and test sets drawn from one master seed never share noise.
    """
    rng = make_rng(seed, SPLITS.index(config.split))
    params = family.sample_params(rng, config.n_pos)
    clean = family.signals(params) if config.n_pos else np.zeros((0, family.ambient_dim))
    n = config.n_pos + config.n_neg
    noise = config.sigma * rng.standard_normal((n, family.ambient_dim))
    x = noise
    x[: config.n_pos] += config.amplitude * clean
    y = np.concatenate([np.ones(config.n_pos, dtype=np.int64), np.zeros(config.n_neg, dtype=np.int64)])
    all_params = np.full((n, family.intrinsic_dim), np.nan)
    all_params[: config.n_pos] = params
    return Dataset(x, y, all_params, int(seed), config.split, float(config.sigma),
                   float(config.amplitude), family.describe())


def dataset_config_dict(config: DatasetConfig):
    return asdict(config)
