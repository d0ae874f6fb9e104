"""Threshold selection for score-based abstention.

A policy answers a query when its confidence score ``g`` satisfies
``g >= threshold`` and abstains otherwise. The loss of a calibration point
is 1 when the policy answers and the answer does not match, so the
empirical loss ``L_n`` is non-increasing in the threshold.

Candidates are the sorted unique calibration scores followed by the
``ALWAYS_ABSTAIN`` sentinel (``+inf``). ``L_n`` is constant between
consecutive scores, so the smallest candidate meeting a condition induces
the same calibration abstention set as the infimum over all real
thresholds.

Methods
-------
baseline
    Smallest candidate with ``L_n <= alpha``. No guarantee.
crc
    Smallest candidate with ``n/(n+1) L_n + B/(n+1) <= alpha``; the expected
    test risk is at most ``alpha``.
rcps
    Smallest candidate from which every larger candidate has
    ``UCB(losses) <= alpha``; the test risk is at most ``alpha`` with
    probability ``1 - delta``.
amplified-crc
    Maximum of padded CRC thresholds fitted on ``ceil(ln(1/delta))``
    disjoint parts; the test risk is at most ``e * alpha`` with probability
    ``1 - delta``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .bounds import BernsteinConstant, BoundKind, BoundSpec, upper_confidence_bound
from .records import Dataset, MatchCalibRecord, ScoreKind, seeded_permutation

ALWAYS_ABSTAIN = math.inf
NEVER_ABSTAIN = -math.inf

# Slack for float round-off in the defining inequalities; far below any
# statistically meaningful difference.
_TOL = 1e-12


class GuaranteeInfeasible(ValueError):
    """No threshold, not even full abstention, satisfies the condition."""


class Method(str, Enum):
    BASELINE = "baseline"
    CRC = "crc"
    RCPS = "rcps"
    AMPLIFIED_CRC = "amplified-crc"


class Decision(str, Enum):
    ANSWER = "answer"
    ABSTAIN = "abstain"


@dataclass(frozen=True)
class LossCurve:
    thresholds: np.ndarray
    losses: np.ndarray
    abstention: np.ndarray
    error_counts: np.ndarray
    n: int


@dataclass(frozen=True)
class ThresholdPolicy:
    """A calibrated abstention rule and the statistics it was fitted on.

    ``calibration_bound`` is the value the method compared against ``alpha``
    at the chosen threshold: ``L_n`` for the baseline, the padded loss for
    CRC, the UCB for RCPS and the largest per-part padded loss for the
    amplified variant.
    """

    threshold: float
    method: Method
    alpha: float
    n_calibration: int
    bound: Optional[BoundSpec] = None
    delta: Optional[float] = None
    loss_range: float = 1.0
    calibration_loss: float = float("nan")
    calibration_abstention: float = float("nan")
    calibration_bound: float = float("nan")
    score_kind: ScoreKind = ScoreKind.CUSTOM
    part_thresholds: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "score_kind", ScoreKind(self.score_kind))
        low_ok = self.alpha >= 0.0 if self.method is Method.BASELINE else self.alpha > 0.0
        if not (low_ok and self.alpha < 1.0):
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")

    @property
    def is_sentinel(self) -> bool:
        return math.isinf(self.threshold)

    def answers(self, score: float) -> bool:
        return score >= self.threshold

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "lambda": _encode_threshold(self.threshold),
            "alpha": self.alpha,
            "delta": self.delta,
            "bound": None if self.bound is None else self.bound.kind.value,
            "bernstein_constant": None if self.bound is None else self.bound.bernstein_constant.value,
            "loss_range": self.loss_range,
            "n_calibration": self.n_calibration,
            "score_kind": self.score_kind.value,
            "calibration_loss": _none_if_nan(self.calibration_loss),
            "calibration_abstention": _none_if_nan(self.calibration_abstention),
            "calibration_bound": _none_if_nan(self.calibration_bound),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, obj: dict) -> "ThresholdPolicy":
        bound = None
        if obj.get("bound") is not None:
            bound = BoundSpec(
                obj["bound"], obj["delta"], obj.get("loss_range", 1.0),
                obj.get("bernstein_constant") or BernsteinConstant.DEFAULT,
            )
        return cls(
            threshold=_decode_threshold(obj["lambda"]),
            method=obj["method"],
            alpha=float(obj["alpha"]),
            n_calibration=int(obj["n_calibration"]),
            bound=bound,
            delta=obj.get("delta"),
            loss_range=float(obj.get("loss_range", 1.0)),
            calibration_loss=_nan_if_none(obj.get("calibration_loss")),
            calibration_abstention=_nan_if_none(obj.get("calibration_abstention")),
            calibration_bound=_nan_if_none(obj.get("calibration_bound")),
            score_kind=obj.get("score_kind", ScoreKind.CUSTOM.value),
        )

    @classmethod
    def from_json(cls, text: str | bytes) -> "ThresholdPolicy":
        return cls.from_dict(json.loads(text))


def _none_if_nan(x):
    return None if math.isnan(x) else x


def _nan_if_none(x):
    return float("nan") if x is None else float(x)


def _encode_threshold(x: float):
    if x == ALWAYS_ABSTAIN:
        return "ALWAYS_ABSTAIN"
    if x == NEVER_ABSTAIN:
        return "NEVER_ABSTAIN"
    return x


def _decode_threshold(x) -> float:
    if x == "ALWAYS_ABSTAIN":
        return ALWAYS_ABSTAIN
    if x == "NEVER_ABSTAIN":
        return NEVER_ABSTAIN
    if isinstance(x, str) or isinstance(x, bool):
        raise ValueError(f"bad lambda value {x!r}")
    return float(x)


def _check_alpha(alpha: float):
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")


def _loss_curve(scores: np.ndarray, matched: np.ndarray) -> LossCurve:
    n = scores.size
    if n == 0:
        raise ValueError("empty calibration set")
    uniq = np.unique(scores)
    err_sorted = np.sort(scores[~matched])
    all_sorted = np.sort(scores)
    errors = err_sorted.size - np.searchsorted(err_sorted, uniq, side="left")
    below = np.searchsorted(all_sorted, uniq, side="left")
    thresholds = np.append(uniq, ALWAYS_ABSTAIN)
    error_counts = np.append(errors, 0)
    abstained = np.append(below, n)
    return LossCurve(thresholds, error_counts / n, abstained / n, error_counts, n)


def empirical_loss_curve(data: Dataset) -> LossCurve:
    """``L_n`` and abstention rate at every candidate threshold."""
    if len(data) == 0:
        raise ValueError("empty dataset")
    return _loss_curve(data.scores, data.matched)


def _first(mask: np.ndarray) -> Optional[int]:
    hits = np.flatnonzero(mask)
    return int(hits[0]) if hits.size else None


def _policy(curve: LossCurve, idx: int, method: Method, alpha: float, data: Dataset,
            bound_value: float, **extra) -> ThresholdPolicy:
    return ThresholdPolicy(
        threshold=float(curve.thresholds[idx]),
        method=method,
        alpha=alpha,
        n_calibration=curve.n,
        calibration_loss=float(curve.losses[idx]),
        calibration_abstention=float(curve.abstention[idx]),
        calibration_bound=float(bound_value),
        score_kind=data.score_kind,
        **extra,
    )


def crc_adjusted_losses(curve: LossCurve, B: float = 1.0) -> np.ndarray:
    """``n/(n+1) L_n + B/(n+1)`` along the curve."""
    return (curve.error_counts + B) / (curve.n + 1)


def baseline_threshold(data: Dataset, alpha: float) -> ThresholdPolicy:
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    curve = empirical_loss_curve(data)
    idx = _first(curve.losses <= alpha + _TOL)
    return _policy(curve, idx, Method.BASELINE, alpha, data, curve.losses[idx])


def crc_threshold(data: Dataset, alpha: float, B: float = 1.0) -> ThresholdPolicy:
    _check_alpha(alpha)
    curve = empirical_loss_curve(data)
    adjusted = crc_adjusted_losses(curve, B)
    idx = _first(adjusted <= alpha + _TOL)
    if idx is None:
        raise GuaranteeInfeasible(
            f"CRC infeasible: B/(n+1) = {B / (curve.n + 1):.6g} exceeds alpha = {alpha}"
        )
    return _policy(curve, idx, Method.CRC, alpha, data, adjusted[idx], loss_range=B)


def rcps_ucb_curve(data: Dataset, bound: BoundSpec, stop_above: Optional[float] = None) -> np.ndarray:
    """UCB of the loss vector at each candidate, scanned from the top.

    With ``stop_above`` the scan halts at the first UCB exceeding it and the
    remaining (lower) entries are left as NaN.
    """
    curve = empirical_loss_curve(data)
    scores, matched = data.scores, data.matched
    wrong = ~matched
    ucbs = np.full(curve.thresholds.size, np.nan)
    for j in range(curve.thresholds.size - 1, -1, -1):
        losses = (scores >= curve.thresholds[j]) & wrong
        ucbs[j] = upper_confidence_bound(losses.astype(float) * bound.loss_range, bound)
        if stop_above is not None and ucbs[j] > stop_above + _TOL:
            break
    return ucbs


def rcps_threshold(data: Dataset, alpha: float, bound: BoundSpec) -> ThresholdPolicy:
    """Risk-controlling threshold from an upper confidence bound.

    Candidates are scanned from ``ALWAYS_ABSTAIN`` downwards and the scan
    stops at the first candidate whose UCB exceeds ``alpha``. For UCBs that
    are monotone in the empirical loss this is the smallest candidate with
    ``UCB <= alpha``.
    """
    _check_alpha(alpha)
    if bound.kind is BoundKind.EMPIRICAL_BERNSTEIN and len(data) < 2:
        raise ValueError("empirical Bernstein needs at least 2 calibration points")
    curve = empirical_loss_curve(data)
    ucbs = rcps_ucb_curve(data, bound, stop_above=alpha)
    ok = ucbs <= alpha + _TOL
    if not ok[-1]:
        raise GuaranteeInfeasible(
            f"RCPS ({bound.kind.value}) infeasible: UCB at full abstention "
            f"{ucbs[-1]:.6g} exceeds alpha = {alpha}"
        )
    idx = len(ok) - 1
    while idx > 0 and ok[idx - 1]:
        idx -= 1
    return _policy(curve, idx, Method.RCPS, alpha, data, ucbs[idx],
                   bound=bound, delta=bound.delta, loss_range=bound.loss_range)


def amplification_parts(delta: float) -> int:
    """Number of disjoint parts, ``ceil(ln(1/delta))``."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    return max(1, math.ceil(math.log(1.0 / delta) - 1e-12))


def amplified_partition(n: int, delta: float, seed: int) -> list[np.ndarray]:
    """Seeded shuffle of ``range(n)`` cut into near-equal parts (larger first)."""
    K = amplification_parts(delta)
    if n < K:
        raise ValueError(f"need at least {K} calibration points for delta={delta}")
    return np.array_split(seeded_permutation(n, seed), K)


def amplified_crc_threshold(data: Dataset, alpha: float, delta: float, B: float = 1.0,
                            seed: int = 0) -> ThresholdPolicy:
    """High-probability CRC by fitting on disjoint parts and taking the max.

    Part ``i`` of size ``n_i`` uses the condition
    ``n_i/(n_i + c) L(S_i) + B c/(n_i + c) <= alpha`` with
    ``c = ln(1/delta)``. An infeasible part contributes ``ALWAYS_ABSTAIN``.
    """
    _check_alpha(alpha)
    c = math.log(1.0 / delta)
    parts = amplified_partition(len(data), delta, seed)
    lams, worst, infeasible = [], 0.0, 0
    for idx in parts:
        curve = empirical_loss_curve(data.take(np.sort(idx)))
        n_i = curve.n
        padded = (curve.error_counts + B * c) / (n_i + c)
        j = _first(padded <= alpha + _TOL)
        if j is None:
            infeasible += 1
            lams.append(ALWAYS_ABSTAIN)
            worst = max(worst, padded[-1])
        else:
            lams.append(float(curve.thresholds[j]))
            worst = max(worst, padded[j])
    if infeasible == len(parts):
        raise GuaranteeInfeasible(
            f"amplified CRC infeasible: padding B ln(1/delta)/(n_i + ln(1/delta)) "
            f"exceeds alpha = {alpha} in every part"
        )
    lam = max(lams)
    answered = data.scores >= lam
    loss = float(np.sum(answered & ~data.matched) / len(data))
    abst = float(np.mean(~answered))
    return ThresholdPolicy(
        threshold=lam, method=Method.AMPLIFIED_CRC, alpha=alpha, n_calibration=len(data),
        delta=delta, loss_range=B, calibration_loss=loss, calibration_abstention=abst,
        calibration_bound=float(worst), score_kind=data.score_kind,
        part_thresholds=tuple(lams),
    )


def calibrate(data: Dataset, method: Method | str, alpha: float, *,
              bound: Optional[BoundSpec] = None, delta: float = 0.05, B: float = 1.0,
              seed: int = 0) -> ThresholdPolicy:
    """Dispatch to the threshold rule named by ``method``."""
    method = Method(method)
    if method is Method.BASELINE:
        return baseline_threshold(data, alpha)
    if method is Method.CRC:
        return crc_threshold(data, alpha, B)
    if method is Method.RCPS:
        if bound is None:
            raise ValueError("rcps needs a bound")
        return rcps_threshold(data, alpha, bound)
    return amplified_crc_threshold(data, alpha, delta, B, seed)


def apply_policy(policy: ThresholdPolicy, score: float) -> Decision:
    if not math.isfinite(score):
        raise ValueError(f"score must be finite, got {score}")
    return Decision.ANSWER if policy.answers(score) else Decision.ABSTAIN


# -- match-function calibration ---------------------------------------------

ABOVE_MAX = math.inf


@dataclass(frozen=True)
class MatchCalibResult:
    """Calibrated similarity threshold with the error accounting on its records.

    ``l1_rate``: human-incorrect responses the match function accepts.
    ``l2_rate``: responses the match function rejects.
    ``c_rate``: human-incorrect responses.
    The integer counts behind the rates satisfy ``C <= L1 + L2`` exactly;
    see :attr:`accounting_holds`.
    """

    beta_hat: float
    l1_rate: float
    l2_rate: float
    c_rate: float
    alpha: float
    n: int
    l1_count: int = 0
    l2_count: int = 0
    c_count: int = 0

    @property
    def accounting_holds(self) -> bool:
        return self.c_count <= self.l1_count + self.l2_count

    def to_dict(self) -> dict:
        return {
            "beta_hat": "ABOVE_MAX" if self.beta_hat == ABOVE_MAX else self.beta_hat,
            "L1_rate": self.l1_rate,
            "L2_rate": self.l2_rate,
            "C_rate": self.c_rate,
            "alpha": self.alpha,
            "n": self.n,
            "L1_count": self.l1_count,
            "L2_count": self.l2_count,
            "C_count": self.c_count,
        }


def match_l1_curve(similarity: np.ndarray, human_correct: np.ndarray):
    """Candidate thresholds and false-match counts ``#{not correct, s >= beta}``."""
    uniq = np.unique(similarity)
    bad = np.sort(similarity[~human_correct])
    counts = bad.size - np.searchsorted(bad, uniq, side="left")
    return np.append(uniq, ABOVE_MAX), np.append(counts, 0)


def match_accounting(similarity: np.ndarray, human_correct: np.ndarray, beta: float):
    """(L1, L2, C) counts of the match function ``s >= beta``."""
    accepted = similarity >= beta
    l1 = int(np.sum(accepted & ~human_correct))
    l2 = int(np.sum(~accepted))
    c = int(np.sum(~human_correct))
    return l1, l2, c


def calibrate_match_threshold(records: Sequence[MatchCalibRecord], alpha: float) -> MatchCalibResult:
    """Conformal choice of the similarity threshold of a match function.

    The per-record loss is a false match (human says incorrect, similarity
    at or above ``beta``), which is non-increasing in ``beta``; the smallest
    candidate with ``n/(n+1) L1 + 1/(n+1) <= alpha`` bounds the expected
    false-match rate on new data by ``alpha``.
    """
    _check_alpha(alpha)
    if not records:
        raise ValueError("no match-calibration records")
    sims = np.array([r.similarity for r in records], dtype=float)
    correct = np.array([r.human_correct for r in records], dtype=bool)
    return _calibrate_match_arrays(sims, correct, alpha)


def _calibrate_match_arrays(sims: np.ndarray, correct: np.ndarray, alpha: float) -> MatchCalibResult:
    n = sims.size
    cands, counts = match_l1_curve(sims, correct)
    idx = _first((counts + 1) / (n + 1) <= alpha + _TOL)
    if idx is None:
        raise GuaranteeInfeasible(f"match calibration infeasible: 1/(n+1) = {1 / (n + 1):.6g} > alpha")
    beta = float(cands[idx])
    l1, l2, c = match_accounting(sims, correct, beta)
    return MatchCalibResult(beta, l1 / n, l2 / n, c / n, alpha, n, l1, l2, c)
