"""Conformal abstention for LLM question answering.

Calibrate a confidence-score threshold below which a model declines to
answer, so that the rate of answered-but-wrong responses is controlled in
expectation (conformal risk control) or with high probability (risk
controlling prediction sets).
"""

from .bounds import (
    BernsteinConstant,
    BoundKind,
    BoundSpec,
    bernoulli_kl,
    binomial_cdf,
    ucb_bernoulli_kl,
    ucb_emp_bernstein,
    ucb_hoeffding,
    ucb_hoeffding_bentkus,
    upper_confidence_bound,
)
from .calibrate import (
    ABOVE_MAX,
    ALWAYS_ABSTAIN,
    NEVER_ABSTAIN,
    Decision,
    GuaranteeInfeasible,
    MatchCalibResult,
    Method,
    ThresholdPolicy,
    amplified_crc_threshold,
    apply_policy,
    baseline_threshold,
    calibrate,
    calibrate_match_threshold,
    crc_threshold,
    empirical_loss_curve,
    rcps_threshold,
)
from .evaluation import (
    EvalRow,
    EvalTable,
    ExperimentConfig,
    MethodSpec,
    SyntheticSpec,
    bootstrap_experiment,
    canonical_spec,
    emit_wide_tables,
    emit_report,
    evaluate_policy,
    parse_report_csv,
    synthetic_generate,
    validate_amplified_crc,
    validate_crc_expectation,
    validate_match_calibration,
    validate_rcps_high_prob,
)
from .records import (
    Dataset,
    MatchCalibRecord,
    ParseError,
    ScoredExample,
    ScoreKind,
    ValidationError,
    parse_match_calib_records,
    parse_scored_examples,
    split_calibration_test,
)

__version__ = "0.1.0"
