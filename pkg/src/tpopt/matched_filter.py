"""Matched filtering over finite template banks."""

from dataclasses import dataclass

import numpy as np

from .counting import MultiplyCounter
from .errors import ConfigurationError
from .observation import make_rng


@dataclass
class TemplateBank:
    templates: np.ndarray  # (n_templates, D), unit-norm rows
    seed: int = 0
    draw: int = 0

    def __post_init__(self):
        self.templates = np.atleast_2d(np.asarray(self.templates, dtype=float))
        norms = np.linalg.norm(self.templates, axis=1)
        if self.templates.shape[0] and not np.allclose(norms, 1.0, rtol=0, atol=1e-9):
            raise ConfigurationError("bank templates must be unit norm")

    def __len__(self):
        return self.templates.shape[0]

    @property
    def ambient_dim(self):
        return self.templates.shape[1]


def mf_scores(bank: TemplateBank, x, counter: MultiplyCounter = None):
    """Statistic and first maximizing template for each row of ``x``.

    Returns ``(scores, argmax_index)`` arrays of length ``len(x)``.
    """
    if len(bank) == 0:
        raise ConfigurationError("template bank is empty")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != bank.ambient_dim:
        raise ConfigurationError(
            f"observation dimension {x.shape[1]} != template dimension {bank.ambient_dim}"
        )
    counter = counter if counter is not None else MultiplyCounter()
    corr = counter.matmul(x, bank.templates.T)
    idx = np.argmax(corr, axis=1)
    return corr[np.arange(x.shape[0]), idx], idx


def mf_statistic(bank: TemplateBank, x, counter: MultiplyCounter = None):
    """``(max_i <s_i, x>, smallest maximizing i)`` for one observation."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ConfigurationError("mf_statistic takes a single observation vector")
    scores, idx = mf_scores(bank, x[None, :], counter)
    return float(scores[0]), int(idx[0])


def mf_decide(score, threshold):
    """Detection decision; the threshold is inclusive."""
    return int(score >= threshold)


def mf_cost(n_templates, ambient_dim):
    """Multiplications for one statistic evaluation: ``n D``."""
    if n_templates < 1 or ambient_dim < 1:
        raise ConfigurationError("bank size and dimension must be positive")
    return int(n_templates) * int(ambient_dim)


def draw_bank(family, m, rng, seed=0, draw=0):
    params = family.sample_params(rng, m)
    return TemplateBank(family.signals(params), seed=seed, draw=draw)


def select_best_bank(family, m, n_draws, validation, seed=0, return_aucs=False):
    """Best of ``n_draws`` random banks of size ``m`` by validation AUC.

    Templates are drawn from the family's own parameter distribution.
    Ties go to the earliest draw.
    """
    from .evaluation import auc

    if n_draws < 1:
        raise ConfigurationError("n_draws must be at least 1")
    rng = make_rng(seed, 7, m)
    pos = validation.positives
    neg = validation.negatives
    best, best_auc = None, -np.inf
    aucs = []
    for draw in range(n_draws):
        bank = draw_bank(family, m, rng, seed=seed, draw=draw)
        a = auc(mf_scores(bank, pos)[0], mf_scores(bank, neg)[0])
        aucs.append(a)
        if a > best_auc:
            best, best_auc = bank, a
    if return_aucs:
        return best, np.array(aucs)
    return best
