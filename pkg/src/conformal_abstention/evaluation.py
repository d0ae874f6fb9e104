"""Experiment protocol, Monte Carlo guarantee checks and report emission.

Bootstrap protocol: the pool is split once into a calibration pool and a
fixed test set. For every sample size and replicate a subsample is drawn
with replacement from the calibration pool, each method is calibrated on
it, and the resulting policy is scored on the test set. Rows aggregate the
replicates of one (method, sample size) pair.

Randomness: the subsample of replicate ``r`` at size ``m`` is drawn from a
stream seeded by ``(seed, m, r)``, so every method sees the same
subsamples; method-internal randomness (the amplified-CRC partition) is
seeded by ``(seed, method, m, r)``. Streams are numpy ``Philox`` generators
keyed through ``SeedSequence``.
"""

from __future__ import annotations

import csv
import io
import math
import zlib
from dataclasses import dataclass, field, fields
from typing import Callable, Optional, Sequence

import numpy as np

from .bounds import BoundKind, BoundSpec
from .calibrate import (
    GuaranteeInfeasible,
    Method,
    amplification_parts,
    ThresholdPolicy,
    _calibrate_match_arrays,
    amplified_crc_threshold,
    calibrate,
    crc_threshold,
    rcps_threshold,
)
from .records import (
    Dataset,
    MatchCalibRecord,
    ScoreKind,
    split_calibration_test,
)

DEFAULT_SAMPLE_SIZES = (10, 15, 20, 25, 30, 40, 60, 100, 300, 900, 3200)


class ConfigError(ValueError):
    pass


# -- policies on test data --------------------------------------------------


def _risk_abstention(threshold: float, scores: np.ndarray, matched: np.ndarray):
    answered = scores >= threshold
    return float(np.mean(answered & ~matched)), float(np.mean(~answered))


def evaluate_policy(policy: ThresholdPolicy, test: Dataset) -> tuple[float, float]:
    """(risk, abstention rate) of ``policy`` on ``test``."""
    if len(test) == 0:
        raise ValueError("empty test set")
    return _risk_abstention(policy.threshold, test.scores, test.matched)


# -- methods and configuration ----------------------------------------------

_BOUND_LABELS = {
    BoundKind.EMPIRICAL_BERNSTEIN: "Emp. Bernstein",
    BoundKind.HOEFFDING_BENTKUS: "Hoeffding-Bentkus",
    BoundKind.BERNOULLI_KL: "Bernoulli KL",
    BoundKind.HOEFFDING: "Hoeffding",
}

SCORE_ABBREVIATIONS = {
    ScoreKind.MATCH_COUNT: "m.c.",
    ScoreKind.EXPECTED_MATCH_COUNT: "e.m.c.",
    ScoreKind.LOG_PROBABILITY: "l.p.",
    ScoreKind.CUSTOM: "custom",
}


@dataclass(frozen=True)
class MethodSpec:
    method: Method
    bound: Optional[BoundKind] = None

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.bound is not None:
            object.__setattr__(self, "bound", BoundKind(self.bound))
        if (self.method is Method.RCPS) != (self.bound is not None):
            raise ConfigError("a bound kind is required for rcps and only for rcps")

    @property
    def key(self) -> str:
        return f"rcps/{self.bound.value}" if self.bound else self.method.value

    @classmethod
    def parse(cls, key: str) -> "MethodSpec":
        method, _, bound = key.partition("/")
        return cls(method, bound or None)

    def table_label(self, score_kind: ScoreKind) -> str:
        abbr = SCORE_ABBREVIATIONS[ScoreKind(score_kind)]
        if self.method is Method.BASELINE:
            return f"(. / {abbr}) Baseline"
        if self.method is Method.CRC:
            return f"(CRC / {abbr}) Bound in expectation"
        if self.method is Method.AMPLIFIED_CRC:
            return f"(Amplified CRC / {abbr}) High probability"
        return f"(RCPS / {abbr}) {_BOUND_LABELS[self.bound]}"


DEFAULT_METHODS = (
    MethodSpec("baseline"),
    MethodSpec("crc"),
    MethodSpec("rcps", "empirical-bernstein"),
    MethodSpec("rcps", "hoeffding-bentkus"),
    MethodSpec("rcps", "bernoulli-kl"),
)


@dataclass(frozen=True)
class ExperimentConfig:
    sample_sizes: tuple[int, ...] = DEFAULT_SAMPLE_SIZES
    replicates_per_size: int = 10
    alpha: float = 0.1
    delta: float = 0.05
    methods: tuple[MethodSpec, ...] = DEFAULT_METHODS
    test_fraction: float = 0.2
    seed: int = 0
    loss_range: float = 1.0
    bernstein_constant: str = "paper"
    std_ddof: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sample_sizes", tuple(int(s) for s in self.sample_sizes))
        object.__setattr__(self, "methods", tuple(
            m if isinstance(m, MethodSpec) else MethodSpec.parse(m) for m in self.methods
        ))
        if not self.sample_sizes or list(self.sample_sizes) != sorted(set(self.sample_sizes)):
            raise ConfigError("sample_sizes must be a non-empty strictly ascending list")
        if self.sample_sizes[0] < 1:
            raise ConfigError("sample sizes must be positive")
        if self.replicates_per_size < 1:
            raise ConfigError("replicates_per_size must be at least 1")
        if not self.methods:
            raise ConfigError("no methods configured")

    def bound_spec(self, kind: BoundKind) -> BoundSpec:
        return BoundSpec(kind, self.delta, self.loss_range, self.bernstein_constant)

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(sorted(unknown))}")
        return cls(**obj)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["sample_sizes"] = list(self.sample_sizes)
        out["methods"] = [m.key for m in self.methods]
        return out


# -- tables -----------------------------------------------------------------


@dataclass(frozen=True)
class EvalRow:
    method: str
    size: int
    mean_test_loss: Optional[float]
    std_test_loss: Optional[float]
    mean_abstention: Optional[float]
    std_abstention: Optional[float]
    median_lambda: Optional[float]
    infeasible_count: int
    std_lambda: Optional[float] = None
    sentinel_count: int = 0
    replicates: int = 0
    mean_calibration_bound: Optional[float] = None
    std_calibration_bound: Optional[float] = None


CSV_COLUMNS = tuple(f.name for f in fields(EvalRow))
_INT_COLUMNS = {"size", "infeasible_count", "sentinel_count", "replicates"}


@dataclass(frozen=True)
class EvalTable:
    rows: tuple[EvalRow, ...]
    alpha: Optional[float] = field(default=None, compare=False)
    delta: Optional[float] = field(default=None, compare=False)
    score_kind: ScoreKind = field(default=ScoreKind.CUSTOM, compare=False)
    name: str = field(default="", compare=False)

    def row(self, method: str, size: int) -> EvalRow:
        for r in self.rows:
            if r.method == method and r.size == size:
                return r
        raise KeyError((method, size))

    @property
    def methods(self) -> list[str]:
        return list(dict.fromkeys(r.method for r in self.rows))

    @property
    def sizes(self) -> list[int]:
        return sorted({r.size for r in self.rows})


@dataclass(frozen=True)
class Replicate:
    method: str
    size: int
    replicate: int
    threshold: Optional[float]
    risk: Optional[float]
    abstention: Optional[float]
    calibration_bound: Optional[float]

    @property
    def infeasible(self) -> bool:
        return self.threshold is None


def _seed_stream(*entropy: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(entropy))))


def _method_code(key: str) -> int:
    return zlib.crc32(key.encode("utf-8"))


def _derived_seed(*entropy: int) -> int:
    return int(np.random.SeedSequence(list(entropy)).generate_state(1, dtype=np.uint64)[0])


def _std(values: Sequence[float], ddof: int) -> float:
    if len(values) <= ddof:
        return 0.0
    return float(np.std(values, ddof=ddof))


def _aggregate(method: str, size: int, reps: Sequence[Replicate], ddof: int) -> EvalRow:
    ok = [r for r in reps if not r.infeasible]
    infeasible = len(reps) - len(ok)
    if not ok:
        return EvalRow(method, size, None, None, None, None, None, infeasible,
                       replicates=len(reps))
    risks = [r.risk for r in ok]
    absts = [r.abstention for r in ok]
    lams = [r.threshold for r in ok if math.isfinite(r.threshold)]
    bounds = [r.calibration_bound for r in ok]
    return EvalRow(
        method=method,
        size=size,
        mean_test_loss=float(np.mean(risks)),
        std_test_loss=_std(risks, ddof),
        mean_abstention=float(np.mean(absts)),
        std_abstention=_std(absts, ddof),
        median_lambda=float(np.median(lams)) if lams else None,
        infeasible_count=infeasible,
        std_lambda=_std(lams, ddof) if lams else None,
        sentinel_count=len(ok) - len(lams),
        replicates=len(reps),
        mean_calibration_bound=float(np.mean(bounds)),
        std_calibration_bound=_std(bounds, ddof),
    )


def _min_points(spec: MethodSpec, delta: float) -> int:
    """Smallest calibration size the method accepts; smaller sizes count as infeasible."""
    if spec.method is Method.AMPLIFIED_CRC:
        return amplification_parts(delta)
    if spec.bound is BoundKind.EMPIRICAL_BERNSTEIN:
        return 2
    return 1


def run_replicates(pool: Dataset, config: ExperimentConfig):
    """All replicate evaluations of the bootstrap protocol, in a fixed order.

    Returns ``(replicates, calibration_pool, test_set)``.
    """
    cal_pool, test = split_calibration_test(pool, config.test_fraction, config.seed)
    if config.sample_sizes[-1] > len(cal_pool):
        raise ConfigError(
            f"largest sample size {config.sample_sizes[-1]} exceeds the "
            f"calibration pool ({len(cal_pool)} points)"
        )
    out = []
    for size in config.sample_sizes:
        for r in range(config.replicates_per_size):
            idx = _seed_stream(config.seed, size, r).integers(0, len(cal_pool), size=size)
            sub = cal_pool.take(idx)
            for spec in config.methods:
                method_seed = _derived_seed(config.seed, _method_code(spec.key), size, r)
                bound = config.bound_spec(spec.bound) if spec.bound else None
                if size < _min_points(spec, config.delta):
                    out.append(Replicate(spec.key, size, r, None, None, None, None))
                    continue
                try:
                    policy = calibrate(sub, spec.method, config.alpha, bound=bound,
                                       delta=config.delta, B=config.loss_range, seed=method_seed)
                except GuaranteeInfeasible:
                    out.append(Replicate(spec.key, size, r, None, None, None, None))
                    continue
                risk, abst = evaluate_policy(policy, test)
                out.append(Replicate(spec.key, size, r, policy.threshold, risk, abst,
                                     policy.calibration_bound))
    return out, cal_pool, test


def bootstrap_experiment(pool: Dataset, config: ExperimentConfig, name: str = "") -> EvalTable:
    reps, _, _ = run_replicates(pool, config)
    rows = []
    for spec in config.methods:
        for size in config.sample_sizes:
            group = [r for r in reps if r.method == spec.key and r.size == size]
            rows.append(_aggregate(spec.key, size, group, config.std_ddof))
    return EvalTable(tuple(rows), config.alpha, config.delta, pool.score_kind, name)


# -- synthetic data ---------------------------------------------------------


@dataclass(frozen=True)
class ScoreDistribution:
    """Score law of synthetic data: ``discrete-uniform``, ``gaussian`` or ``table``."""

    kind: str
    params: tuple

    @classmethod
    def discrete_uniform(cls, k: int = 10) -> "ScoreDistribution":
        return cls("discrete-uniform", (int(k),))

    @classmethod
    def gaussian(cls, mu: float, sigma: float) -> "ScoreDistribution":
        return cls("gaussian", (float(mu), float(sigma)))

    @classmethod
    def table(cls, values: Sequence[float], probs: Sequence[float]) -> "ScoreDistribution":
        probs = np.asarray(probs, dtype=float)
        if len(values) != len(probs) or np.any(probs < 0) or not math.isclose(probs.sum(), 1.0):
            raise ConfigError("table distribution needs matching values and probabilities summing to 1")
        return cls("table", (tuple(float(v) for v in values), tuple(probs.tolist())))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "discrete-uniform":
            return rng.integers(0, self.params[0] + 1, size=n).astype(float)
        if self.kind == "gaussian":
            return rng.normal(self.params[0], self.params[1], size=n)
        values, probs = self.params
        return np.asarray(values)[rng.choice(len(values), size=n, p=probs)]

    def support(self) -> Optional[tuple[np.ndarray, np.ndarray]]:
        """(values, probabilities) for discrete laws, ``None`` otherwise."""
        if self.kind == "discrete-uniform":
            k = self.params[0]
            return np.arange(k + 1, dtype=float), np.full(k + 1, 1.0 / (k + 1))
        if self.kind == "table":
            return np.asarray(self.params[0]), np.asarray(self.params[1])
        return None

    def probe_points(self) -> np.ndarray:
        sup = self.support()
        if sup is not None:
            return np.sort(sup[0])
        mu, sigma = self.params
        return np.linspace(mu - 6 * sigma, mu + 6 * sigma, 241)


def linear_match_model(k: int = 10) -> Callable[[np.ndarray], np.ndarray]:
    """``P(match | s) = s / k`` clipped to ``[0, 1]``."""
    return lambda s: np.clip(np.asarray(s, dtype=float) / k, 0.0, 1.0)


def constant_match_model(p: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda s: np.full(np.shape(s), float(p))


@dataclass(frozen=True)
class SyntheticSpec:
    score_distribution: ScoreDistribution
    match_model: Callable[[np.ndarray], np.ndarray]
    n_calibration: int = 100
    n_test: int = 10_000
    trials: int = 2000
    seed: int = 0

    def __post_init__(self):
        probe = self.score_distribution.probe_points()
        p = np.asarray(self.match_model(probe), dtype=float)
        if np.any(p < 0) or np.any(p > 1):
            raise ConfigError("match probabilities must lie in [0, 1]")
        if np.any(np.diff(p) < -1e-12):
            raise ConfigError("match model must be non-decreasing in the score")
        if self.n_calibration < 1 or self.n_test < 1 or self.trials < 1:
            raise ConfigError("sizes and trial count must be positive")

    def true_risk(self, threshold: float) -> Optional[float]:
        """Exact risk of a threshold under a discrete score law."""
        sup = self.score_distribution.support()
        if sup is None:
            return None
        values, probs = sup
        p_match = np.asarray(self.match_model(values), dtype=float)
        return float(np.sum(probs * (values >= threshold) * (1.0 - p_match)))


def canonical_spec(n_calibration: int = 100, n_test: int = 10_000, trials: int = 2000,
                   seed: int = 0) -> SyntheticSpec:
    """Scores uniform on 0..10 with ``P(match | s) = s / 10``."""
    return SyntheticSpec(ScoreDistribution.discrete_uniform(10), linear_match_model(10),
                         n_calibration, n_test, trials, seed)


_WHICH = {"calibration": 0, "test": 1}


def _draw(spec: SyntheticSpec, which: str, trial: int, n: Optional[int] = None):
    if which not in _WHICH:
        raise ValueError(f"which must be 'calibration' or 'test', got {which!r}")
    if n is None:
        n = spec.n_calibration if which == "calibration" else spec.n_test
    rng = _seed_stream(spec.seed, _WHICH[which], trial)
    scores = spec.score_distribution.sample(rng, n)
    p = np.asarray(spec.match_model(scores), dtype=float)
    matched = rng.random(n) < p
    return scores, matched


def _score_kind(spec: SyntheticSpec) -> tuple[ScoreKind, int]:
    dist = spec.score_distribution
    if dist.kind == "discrete-uniform":
        return ScoreKind.MATCH_COUNT, dist.params[0]
    return ScoreKind.CUSTOM, 10


def synthetic_generate(spec: SyntheticSpec, which: str, trial: int) -> Dataset:
    scores, matched = _draw(spec, which, trial)
    kind, k = _score_kind(spec)
    ids = [f"{which[:3]}-{trial}-{i}" for i in range(scores.size)]
    return Dataset.from_arrays(scores, matched, ids=ids, score_kind=kind, k=k, validate=False)


def synthetic_match_records(spec: SyntheticSpec, which: str, trial: int) -> list[MatchCalibRecord]:
    """Similarity drawn from the score law, ``human_correct`` from the match model."""
    sims, correct = _draw(spec, which, trial)
    return [MatchCalibRecord(f"{which[:3]}-{trial}-{i}", float(s), bool(c))
            for i, (s, c) in enumerate(zip(sims, correct))]


# -- Monte Carlo guarantee checks -------------------------------------------


def mc_slack(level: float, trials: int) -> float:
    """Three binomial standard errors at ``level``."""
    return 3.0 * math.sqrt(level * (1.0 - level) / trials)


@dataclass(frozen=True)
class GuaranteeCheck:
    """Outcome of a Monte Carlo validation.

    ``statistic`` is compared against ``target + slack``.
    """

    name: str
    statistic: float
    target: float
    slack: float
    trials: int
    infeasible: int = 0
    details: dict = field(default_factory=dict, compare=False)

    @property
    def limit(self) -> float:
        return self.target + self.slack

    @property
    def holds(self) -> bool:
        return self.statistic <= self.limit

    def to_dict(self) -> dict:
        return {"name": self.name, "statistic": self.statistic, "target": self.target,
                "slack": self.slack, "limit": self.limit, "holds": self.holds,
                "trials": self.trials, "infeasible": self.infeasible, **self.details}


def _check_trials(spec: SyntheticSpec):
    if spec.trials < 100:
        raise ConfigError("guarantee validation needs at least 100 trials")


def _monte_carlo(spec: SyntheticSpec, fit: Callable[[Dataset, int], ThresholdPolicy]):
    """Per-trial test risks of the fitted policies; ``None`` marks infeasible trials."""
    kind, k = _score_kind(spec)
    risks = []
    for t in range(spec.trials):
        cal_s, cal_m = _draw(spec, "calibration", t)
        cal = Dataset.from_arrays(cal_s, cal_m, score_kind=kind, k=k, validate=False)
        try:
            policy = fit(cal, t)
        except GuaranteeInfeasible:
            risks.append(None)
            continue
        test_s, test_m = _draw(spec, "test", t)
        risks.append(_risk_abstention(policy.threshold, test_s, test_m)[0])
    ok = [r for r in risks if r is not None]
    if not ok:
        raise GuaranteeInfeasible("every trial was infeasible")
    return ok, len(risks) - len(ok)


def validate_crc_expectation(spec: SyntheticSpec, alpha: float, B: float = 1.0) -> GuaranteeCheck:
    """Mean test risk of CRC over independent calibration draws."""
    _check_trials(spec)
    risks, infeasible = _monte_carlo(spec, lambda cal, t: crc_threshold(cal, alpha, B))
    return GuaranteeCheck("crc-expectation", float(np.mean(risks)), alpha,
                          mc_slack(alpha, spec.trials), spec.trials, infeasible)


def validate_rcps_high_prob(spec: SyntheticSpec, alpha: float, bound: BoundSpec) -> GuaranteeCheck:
    """Fraction of trials whose RCPS policy has test risk above ``alpha``."""
    _check_trials(spec)
    risks, infeasible = _monte_carlo(spec, lambda cal, t: rcps_threshold(cal, alpha, bound))
    frac = float(np.mean(np.asarray(risks) > alpha))
    return GuaranteeCheck(f"rcps-{bound.kind.value}", frac, bound.delta,
                          mc_slack(bound.delta, spec.trials), spec.trials, infeasible,
                          {"mean_risk": float(np.mean(risks))})


def validate_amplified_crc(spec: SyntheticSpec, alpha: float, delta: float,
                           B: float = 1.0) -> GuaranteeCheck:
    """Fraction of trials whose amplified-CRC risk exceeds ``e * alpha``."""
    _check_trials(spec)

    def fit(cal, t):
        return amplified_crc_threshold(cal, alpha, delta, B, seed=_derived_seed(spec.seed, 7, t))

    risks, infeasible = _monte_carlo(spec, fit)
    frac = float(np.mean(np.asarray(risks) > math.e * alpha))
    return GuaranteeCheck("amplified-crc", frac, delta, mc_slack(delta, spec.trials),
                          spec.trials, infeasible, {"mean_risk": float(np.mean(risks))})


def validate_match_calibration(spec: SyntheticSpec, alpha: float) -> GuaranteeCheck:
    """Mean test false-match rate of the calibrated similarity threshold.

    Also counts calibration draws on which ``C <= L1 + L2`` fails (expected 0).
    """
    _check_trials(spec)
    l1_rates, infeasible, accounting_failures = [], 0, 0
    for t in range(spec.trials):
        sims, correct = _draw(spec, "calibration", t)
        try:
            res = _calibrate_match_arrays(sims, correct, alpha)
        except GuaranteeInfeasible:
            infeasible += 1
            continue
        if not res.accounting_holds:
            accounting_failures += 1
        test_s, test_c = _draw(spec, "test", t)
        l1_rates.append(float(np.mean((test_s >= res.beta_hat) & ~test_c)))
    if not l1_rates:
        raise GuaranteeInfeasible("every trial was infeasible")
    return GuaranteeCheck("match-calibration", float(np.mean(l1_rates)), alpha,
                          mc_slack(alpha, spec.trials), spec.trials, infeasible,
                          {"accounting_failures": accounting_failures})


# -- report emission --------------------------------------------------------


def _fmt_cell(mean: Optional[float], std: Optional[float], digits: int = 3) -> str:
    if mean is None:
        return "n/a"
    return f"{mean:.{digits}f} ± {(std or 0.0):.{digits}f}"


def _csv_value(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def emit_report(table: EvalTable, format: str = "csv") -> bytes:
    """Long-format report: one line per (method, sample size)."""
    if not table.rows:
        raise ValueError("empty table")
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(CSV_COLUMNS)
        for row in table.rows:
            writer.writerow([_csv_value(getattr(row, c)) for c in CSV_COLUMNS])
        return buf.getvalue().encode("utf-8")
    if format == "markdown":
        lines = [
            "| method | size | test loss | abstention | median λ | infeasible |",
            "|---|---|---|---|---|---|",
        ]
        for r in table.rows:
            lam = "n/a" if r.median_lambda is None else f"{r.median_lambda:.3f}"
            lines.append(
                f"| {r.method} | {r.size} | {_fmt_cell(r.mean_test_loss, r.std_test_loss)} | "
                f"{_fmt_cell(r.mean_abstention, r.std_abstention)} | {lam} | {r.infeasible_count} |"
            )
        return ("\n".join(lines) + "\n").encode("utf-8")
    raise ValueError(f"unknown report format {format!r}")


def parse_report_csv(data: bytes | str) -> EvalTable:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    reader = csv.reader(io.StringIO(data))
    header = next(reader)
    if tuple(header) != CSV_COLUMNS:
        raise ValueError(f"unexpected report header {header}")
    rows = []
    for rec in reader:
        if not rec:
            continue
        values = {}
        for name, raw in zip(header, rec):
            if name == "method":
                values[name] = raw
            elif name in _INT_COLUMNS:
                values[name] = int(raw)
            else:
                values[name] = None if raw == "" else float(raw)
        rows.append(EvalRow(**values))
    return EvalTable(tuple(rows))


WIDE_QUANTITIES = (
    ("AVERAGE TEST LOSSES", "mean_test_loss", "std_test_loss"),
    ("AVERAGE TEST ABSTENTION RATES", "mean_abstention", "std_abstention"),
    ("UPPER CONFIDENCE BOUNDS ON CALIBRATION SET", "mean_calibration_bound", "std_calibration_bound"),
    ("MEDIAN λ values", "median_lambda", "std_lambda"),
)


def _wide_row_order(tables: Sequence[EvalTable]):
    """Baseline and CRC rows of every score kind first, then the RCPS rows."""
    first, second = [], []
    for t in tables:
        for key in t.methods:
            spec = MethodSpec.parse(key)
            target = second if spec.method is Method.RCPS else first
            target.append((t, key, spec.table_label(t.score_kind)))
    return first, second


def emit_wide_tables(tables: EvalTable | Sequence[EvalTable], dataset: str = "") -> bytes:
    """Wide markdown tables with one column per sample size.

    One table per quantity; rows are ``(method / score) name`` and columns
    the sample sizes. Cells read ``mean ± std`` (``median ± std`` for λ).
    """
    if isinstance(tables, EvalTable):
        tables = [tables]
    sizes = sorted({s for t in tables for s in t.sizes})
    alpha = tables[0].alpha
    name = dataset or tables[0].name or "synthetic"
    first, second = _wide_row_order(tables)
    out = []
    for title, mean_field, std_field in WIDE_QUANTITIES:
        caption = f"Dataset {name}: {title}."
        if alpha is not None:
            caption += f" α={alpha:g}"
        out.append(caption)
        out.append("")
        out.append("| baseline / sample size | " + " | ".join(str(s) for s in sizes) + " |")
        out.append("|---" * (len(sizes) + 1) + "|")
        for group in (first, second):
            for t, key, label in group:
                cells = []
                for s in sizes:
                    try:
                        r = t.row(key, s)
                    except KeyError:
                        cells.append("")
                        continue
                    cells.append(_fmt_cell(getattr(r, mean_field), getattr(r, std_field)))
                out.append(f"| {label} | " + " | ".join(cells) + " |")
        out.append("")
    return "\n".join(out).encode("utf-8")
