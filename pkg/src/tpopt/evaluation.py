"""ROC/AUC and budget-matched comparisons between detectors."""

from dataclasses import dataclass, asdict
import csv
import hashlib
import io
import json

import numpy as np

from .errors import EvaluationError


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # thresholds[0] = +inf for the (0, 0) corner
    auc: float


def _counts(pos, neg):
    pos = np.asarray(pos, dtype=float).ravel()
    neg = np.asarray(neg, dtype=float).ravel()
    if pos.size == 0 or neg.size == 0:
        raise EvaluationError("ROC needs at least one positive and one negative score")
    thresholds = np.unique(np.concatenate([pos, neg]))[::-1]
    pos_sorted = np.sort(pos)
    neg_sorted = np.sort(neg)
    # number of scores >= each threshold
    tp = pos.size - np.searchsorted(pos_sorted, thresholds, side="left")
    fp = neg.size - np.searchsorted(neg_sorted, thresholds, side="left")
    tp = np.concatenate([[0], tp]).astype(np.int64)
    fp = np.concatenate([[0], fp]).astype(np.int64)
    return tp, fp, np.concatenate([[np.inf], thresholds]), pos.size, neg.size


def roc(scores_pos, scores_neg):
    """Operating points of the rule ``score >= tau`` over every distinct score.

    Tied positive/negative scores move both rates in one step, so the
    trapezoid area equals ``P(pos > neg) + P(pos = neg) / 2``. The area is
    accumulated in integers and divided once, which makes it bitwise equal
    to pair counting.
    """
    tp, fp, thr, n_pos, n_neg = _counts(scores_pos, scores_neg)
    twice_area = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    auc = twice_area / (2 * n_pos * n_neg)
    return RocCurve(fp / n_neg, tp / n_pos, thr, auc)


def auc(scores_pos, scores_neg):
    return roc(scores_pos, scores_neg).auc


def auc_pair_count(scores_pos, scores_neg):
    """Brute-force Mann-Whitney AUC (reference implementation)."""
    pos = np.asarray(scores_pos, dtype=float).ravel()
    neg = np.asarray(scores_neg, dtype=float).ravel()
    if pos.size == 0 or neg.size == 0:
        raise EvaluationError("AUC needs both classes")
    gt = int(np.sum(pos[:, None] > neg[None, :]))
    eq = int(np.sum(pos[:, None] == neg[None, :]))
    return (2 * gt + eq) / (2 * pos.size * neg.size)


@dataclass
class TradeoffRow:
    method: str
    budget: int
    auc: float
    K: int = 0
    m: int = 0
    M: int = 0
    seed: int = 0
    config_hash: str = ""


TRADEOFF_FIELDS = ["method", "budget", "auc", "K", "m", "M", "seed", "config_hash"]


def config_hash(obj):
    """Short stable fingerprint of a JSON-serializable object."""
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def matched_bank_size(budget, ambient_dim):
    """Largest ``n`` with ``n D <= budget``."""
    return max(1, int(budget) // int(ambient_dim))


def tradeoff_sweep(test, banks, detectors, seed=0, config_fingerprint=""):
    """Score every detector on a shared test set.

    ``banks`` maps bank size to :class:`TemplateBank`. ``detectors`` maps a
    ``(method, K)`` key to a callable ``X -> (scores, multiplies_per_obs, m, M)``.
    Rows come back sorted by budget then method.
    """
    from .counting import MultiplyCounter
    from .matched_filter import mf_cost, mf_scores

    pos, neg = test.positives, test.negatives
    rows = []
    for n, bank in banks.items():
        counter = MultiplyCounter()
        sp = mf_scores(bank, pos, counter)[0]
        sn = mf_scores(bank, neg, counter)[0]
        per_obs = counter.count // len(test)
        if per_obs != mf_cost(len(bank), bank.ambient_dim):
            raise EvaluationError("instrumented MF cost disagrees with n D")
        rows.append(TradeoffRow("mf", per_obs, auc(sp, sn), 0, 0, 0, seed, config_fingerprint))
    for (method, K), run in detectors.items():
        sp, cost_p, m, M = run(pos)
        sn, cost_n, _, _ = run(neg)
        if cost_p != cost_n:
            raise EvaluationError("detector cost differs between classes")
        rows.append(TradeoffRow(method, int(cost_p), auc(sp, sn), int(K), int(m), int(M), seed,
                                config_fingerprint))
    rows.sort(key=lambda r: (r.budget, r.method, r.K))
    return rows


def rows_to_csv(rows):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=TRADEOFF_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        rec = asdict(row)
        rec["auc"] = repr(float(rec["auc"]))
        writer.writerow(rec)
    return buf.getvalue()


def rows_from_csv(text):
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        rows.append(TradeoffRow(rec["method"], int(rec["budget"]), float(rec["auc"]), int(rec["K"]),
                                int(rec["m"]), int(rec["M"]), int(rec["seed"]), rec["config_hash"]))
    return rows


def series_csv(columns):
    """Plot-ready CSV from a dict of equal-length columns."""
    names = list(columns)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(names)
    for values in zip(*(columns[n] for n in names)):
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in values])
    return buf.getvalue()
