"""Model scoring: profit, CATE mean squared error, and ranking quality.

Two profit paths are exposed.  ``ipw_policy_value`` scores a policy on
experimental data alone (the transformed outcome makes it unbiased for the
population policy value), which is what tuning must use in practice.
``dgp.oracle_policy_value`` scores against the true effect function and is
available only in simulations; the report assembly here uses the oracle
path because evaluation samples carry oracle labels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .dgp import LabeledSample, oracle_policy_value
from .errors import DimensionError, ValidationError
from .linear import TransformedDataset, policy_from_cate


@dataclass(frozen=True)
class EvalReport:
    """One model's metric triple on one evaluation population."""

    profit: float
    mse: Optional[float]
    qini: float
    n_eval: int
    model_tag: str = ""

    def __post_init__(self):
        if self.n_eval < 1:
            raise ValidationError("n_eval must be >= 1")
        if self.mse is not None and self.mse < 0:
            raise ValidationError("mse must be nonnegative")


def ipw_policy_value(td: TransformedDataset, policy, c: float) -> float:
    """Experimental-data policy value: mean of policy * (y* - c)."""
    policy = np.asarray(policy, dtype=float).ravel()
    if policy.shape[0] != td.n:
        raise DimensionError("policy length must match the dataset")
    return float(np.mean(policy * (td.y_star - c)))


def cate_mse(tau_hat, tau_true) -> float:
    """Mean squared error between predicted and true effects."""
    tau_hat = np.asarray(tau_hat, dtype=float).ravel()
    tau_true = np.asarray(tau_true, dtype=float).ravel()
    if tau_hat.shape != tau_true.shape:
        raise DimensionError("tau_hat and tau_true must have equal length")
    return float(np.mean(np.square(tau_hat - tau_true)))


def qini_coefficient(scores, tau_true) -> float:
    """Area between the score-ordered cumulative-uplift curve and the diagonal.

    Observations are ranked by score descending (ties keep original order);
    with T_k the cumulative true uplift of the top k divided by n, returns
    mean_k [T_k - (k/n) * mean(tau_true)].  Depends on the scores only
    through their ordering.  Identical scores rank nothing and return 0.0 by
    convention (random ordering has zero area in expectation).
    """
    scores = np.asarray(scores, dtype=float).ravel()
    tau_true = np.asarray(tau_true, dtype=float).ravel()
    n = scores.shape[0]
    if tau_true.shape[0] != n:
        raise DimensionError("scores and tau_true must have equal length")
    if n < 2:
        raise ValidationError("need at least two observations")
    if np.all(scores == scores[0]):
        return 0.0
    order = np.argsort(-scores, kind="stable")
    cum_gain = np.cumsum(tau_true[order]) / n
    diagonal = np.arange(1, n + 1) * (np.mean(tau_true) / n)
    return float(np.mean(cum_gain - diagonal))


def evaluate_model(
    predict: Callable[[np.ndarray], np.ndarray],
    sample: LabeledSample,
    c: float,
    is_cate: bool,
    model_tag: str = "",
) -> EvalReport:
    """Score one predictor on an oracle-labeled evaluation sample.

    Profit uses the policy ``1{prediction >= c}`` against the true effects;
    MSE is reported only for predictors whose output is a CATE; the ranking
    coefficient uses the raw predictions as scores.
    """
    preds = np.asarray(predict(sample.dataset.x), dtype=float).ravel()
    if preds.shape[0] != sample.dataset.n:
        raise DimensionError("predictor returned the wrong number of values")
    profit = oracle_policy_value(sample, policy_from_cate(preds, c), c)
    mse = cate_mse(preds, sample.tau_true) if is_cate else None
    qini = qini_coefficient(preds, sample.tau_true)
    return EvalReport(
        profit=profit, mse=mse, qini=qini, n_eval=sample.dataset.n, model_tag=model_tag
    )
