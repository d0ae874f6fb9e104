"""Command-line front end.

Every subcommand reads from ``--input`` (default stdin) and writes to
``--output`` (default stdout). Failures print one JSON line
``{"error": <code>, "message": <text>}`` to stderr; usage errors exit with
status 2 and domain errors with status 1.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

from . import bounds as _bounds
from .bounds import BoundKind, BoundSpec
from .calibrate import (
    ThresholdPolicy,
    apply_policy,
    calibrate,
    calibrate_match_threshold,
)
from .evaluation import (
    ExperimentConfig,
    bootstrap_experiment,
    canonical_spec,
    emit_wide_tables,
    emit_report,
    synthetic_generate,
    validate_amplified_crc,
    validate_crc_expectation,
    validate_match_calibration,
    validate_rcps_high_prob,
)
from .records import (
    DEFAULT_K,
    Dataset,
    ScoredExample,
    ScoreKind,
    parse_match_calib_records,
    parse_scored_examples,
    serialize_scored_examples,
)
from .scores import (
    PromptTemplate,
    ScoreFunction,
    TemplateError,
    bundle_match,
    parse_response_bundles,
    render_prompt,
    score_bundle,
    template_slots,
)

_FUNCTION_KIND = {
    ScoreFunction.MATCH_COUNT: ScoreKind.MATCH_COUNT,
    ScoreFunction.GREEDY_MATCH_COUNT: ScoreKind.MATCH_COUNT,
    ScoreFunction.EXPECTED_MATCH_COUNT: ScoreKind.EXPECTED_MATCH_COUNT,
    ScoreFunction.LOG_PROBABILITY: ScoreKind.LOG_PROBABILITY,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _read_input(path: Optional[str]) -> bytes:
    if path is None or path == "-":
        return sys.stdin.buffer.read()
    with open(path, "rb") as fh:
        return fh.read()


def _write_output(path: Optional[str], data: bytes | str):
    if isinstance(data, str):
        data = data.encode("utf-8")
    if path is None or path == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()
    else:
        with open(path, "wb") as fh:
            fh.write(data)


def _json_line(obj) -> str:
    return json.dumps(obj, sort_keys=False) + "\n"


# -- subcommands ------------------------------------------------------------


def cmd_score(args):
    function = ScoreFunction(args.score_function)
    bundles = parse_response_bundles(_read_input(args.input))
    examples = []
    k = 0
    for b in bundles:
        result = score_bundle(b, function, beta=args.beta)
        examples.append(ScoredExample(b.id, result.score, bundle_match(b, result.chosen_index, args.match_beta)))
        k = max(k, b.k - 1 if function is ScoreFunction.MATCH_COUNT else len(b.reference_similarities or ()))
    kind = _FUNCTION_KIND[function]
    data = Dataset(tuple(examples), kind, k if k > 0 else DEFAULT_K)
    _write_output(args.output, serialize_scored_examples(data))


def _load_dataset(args) -> Dataset:
    data = parse_scored_examples(_read_input(args.input))
    if args.score_kind is not None:
        data = Dataset(data.examples, args.score_kind, data.k)
    return data


def _bound_spec(args) -> Optional[BoundSpec]:
    if args.bound is None:
        return None
    return BoundSpec(args.bound, args.delta, args.loss_range, args.bernstein_constant)


def cmd_calibrate(args):
    data = _load_dataset(args)
    if args.method == "rcps" and args.bound is None:
        raise UsageError("--method rcps requires --bound")
    policy = calibrate(data, args.method, args.alpha, bound=_bound_spec(args),
                       delta=args.delta, B=args.loss_range, seed=args.seed)
    _write_output(args.output, policy.to_json())


def cmd_match_calibrate(args):
    records = parse_match_calib_records(_read_input(args.input))
    result = calibrate_match_threshold(records, args.alpha)
    _write_output(args.output, json.dumps(result.to_dict(), indent=2) + "\n")


def _experiment_config(args) -> ExperimentConfig:
    base = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            base = json.load(fh)
        if not isinstance(base, dict):
            raise ValueError("experiment config must be a JSON object")
    overrides = {
        "sample_sizes": args.sizes, "replicates_per_size": args.replicates,
        "alpha": args.alpha, "delta": args.delta, "methods": args.methods,
        "test_fraction": args.test_fraction, "seed": args.seed,
        "loss_range": args.loss_range, "bernstein_constant": args.bernstein_constant,
        "std_ddof": args.std_ddof,
    }
    base.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(base)


def cmd_evaluate(args):
    config = _experiment_config(args)
    if args.synthetic_pool:
        spec = canonical_spec(n_calibration=args.synthetic_pool, seed=config.seed)
        pool = synthetic_generate(spec, "calibration", 0)
    else:
        pool = _load_dataset(args)
    table = bootstrap_experiment(pool, config, name=args.name or "")
    if args.format == "wide":
        out = emit_wide_tables(table)
    else:
        out = emit_report(table, args.format)
    _write_output(args.output, out)


def cmd_validate(args):
    checks = ["crc", "rcps", "amplified-crc", "match"] if args.check == "all" else [args.check]
    results = []
    for check in checks:
        n_cal = args.n_calibration or (300 if check in ("rcps", "amplified-crc") else 100)
        spec = canonical_spec(n_cal, args.n_test, args.trials, args.seed)
        alpha = args.alpha
        if check == "crc":
            results.append(validate_crc_expectation(spec, alpha if alpha is not None else 0.1))
        elif check == "rcps":
            kinds = [args.bound] if args.bound else [k.value for k in BoundKind]
            for kind in kinds:
                bound = BoundSpec(kind, args.delta, 1.0, args.bernstein_constant)
                results.append(validate_rcps_high_prob(spec, alpha if alpha is not None else 0.2, bound))
        elif check == "amplified-crc":
            results.append(validate_amplified_crc(spec, alpha if alpha is not None else 0.05, args.delta))
        else:
            results.append(validate_match_calibration(spec, alpha if alpha is not None else 0.1))
    _write_output(args.output, "".join(_json_line(r.to_dict()) for r in results))
    return 0 if all(r.holds for r in results) else 1


def cmd_bound(args):
    kind = BoundKind(args.kind)
    if kind is BoundKind.EMPIRICAL_BERNSTEIN:
        if args.losses is None:
            raise UsageError("empirical-bernstein needs --losses (comma-separated values)")
        values = [float(v) for v in args.losses.split(",") if v.strip()]
        value = _bounds.ucb_emp_bernstein(values, args.delta, args.loss_range, args.bernstein_constant)
    else:
        if args.mean is None or args.n is None:
            raise UsageError(f"{kind.value} needs --mean and --n")
        fn = {
            BoundKind.HOEFFDING: _bounds.ucb_hoeffding,
            BoundKind.HOEFFDING_BENTKUS: _bounds.ucb_hoeffding_bentkus,
            BoundKind.BERNOULLI_KL: _bounds.ucb_bernoulli_kl,
        }[kind]
        value = fn(args.mean, args.n, args.delta)
    _write_output(args.output, f"{value:.10f}\n")


def cmd_render_prompt(args):
    template = PromptTemplate(args.template)
    slots = {}
    for item in args.slot or ():
        name, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--slot expects NAME=VALUE, got {item!r}")
        slots[name] = value
    if args.list_slots:
        _write_output(args.output, "\n".join(template_slots(template)) + "\n")
        return
    _write_output(args.output, render_prompt(template, slots) + "\n")


def cmd_apply(args):
    with open(args.policy, "rb") as fh:
        policy = ThresholdPolicy.from_json(fh.read())
    data = parse_scored_examples(_read_input(args.input))
    lines = [apply_policy(policy, ex.score).value for ex in data.examples]
    if args.with_ids:
        lines = [f"{ex.id}\t{d}" for ex, d in zip(data.examples, lines)]
    _write_output(args.output, "".join(line + "\n" for line in lines))


# -- parser -----------------------------------------------------------------


def _common(p, *, seed=True):
    p.add_argument("--input", help="input file (default: stdin)")
    p.add_argument("--output", help="output file (default: stdout)")
    if seed:
        p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="conformal-abstention",
                     description="Conformal abstention calibration for LLM answers.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("score", help="score response bundles")
    _common(p)
    p.add_argument("--score-function", choices=[f.value for f in ScoreFunction],
                   default=ScoreFunction.MATCH_COUNT.value)
    p.add_argument("--beta", type=float, default=5.0, help="similarity cut for match counts")
    p.add_argument("--match-beta", type=float, default=0.5,
                   help="token-recall cut when matching against a gold answer")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("calibrate", help="fit a threshold policy")
    _common(p)
    p.add_argument("--method", choices=["baseline", "crc", "rcps", "amplified-crc"], required=True)
    p.add_argument("--bound", choices=[k.value for k in BoundKind])
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--loss-range", type=float, default=1.0)
    p.add_argument("--bernstein-constant", choices=["paper", "literature"], default="paper")
    p.add_argument("--score-kind", choices=[k.value for k in ScoreKind])
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("match-calibrate", help="calibrate the similarity threshold")
    _common(p)
    p.add_argument("--alpha", type=float, required=True)
    p.set_defaults(func=cmd_match_calibrate)

    p = sub.add_parser("evaluate", help="run the bootstrap protocol")
    _common(p)
    p.add_argument("--config", help="experiment config (JSON object)")
    p.add_argument("--method", dest="methods", action="append",
                   help="method key, e.g. crc or rcps/bernoulli-kl (repeatable)")
    p.add_argument("--sizes", type=lambda s: [int(x) for x in s.split(",")])
    p.add_argument("--replicates", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--test-fraction", type=float)
    p.add_argument("--loss-range", type=float)
    p.add_argument("--bernstein-constant", choices=["paper", "literature"])
    p.add_argument("--std-ddof", type=int)
    p.add_argument("--score-kind", choices=[k.value for k in ScoreKind])
    p.add_argument("--synthetic-pool", type=int,
                   help="evaluate on this many canonical synthetic points instead of --input")
    p.add_argument("--name", help="dataset name for wide-table captions")
    p.add_argument("--format", choices=["csv", "markdown", "wide"], default="csv")
    p.set_defaults(func=cmd_evaluate, seed=None)

    p = sub.add_parser("validate", help="Monte Carlo guarantee checks")
    p.add_argument("--output")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--check", choices=["crc", "rcps", "amplified-crc", "match", "all"], default="all")
    p.add_argument("--bound", choices=[k.value for k in BoundKind])
    p.add_argument("--alpha", type=float)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--bernstein-constant", choices=["paper", "literature"], default="paper")
    p.add_argument("--trials", type=int, default=2000)
    p.add_argument("--n-calibration", type=int)
    p.add_argument("--n-test", type=int, default=10_000)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("bound", help="evaluate an upper confidence bound")
    p.add_argument("--output")
    p.add_argument("--kind", choices=[k.value for k in BoundKind], required=True)
    p.add_argument("--mean", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--losses", help="comma-separated losses (empirical-bernstein)")
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--loss-range", type=float, default=1.0)
    p.add_argument("--bernstein-constant", choices=["paper", "literature"], default="paper")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("render-prompt", help="instantiate a prompt template")
    p.add_argument("--output")
    p.add_argument("--template", choices=[t.value for t in PromptTemplate], required=True)
    p.add_argument("--slot", action="append", help="NAME=VALUE (repeatable)")
    p.add_argument("--list-slots", action="store_true")
    p.set_defaults(func=cmd_render_prompt)

    p = sub.add_parser("apply", help="apply a policy to scored examples")
    _common(p, seed=False)
    p.add_argument("--policy", required=True, help="policy file from 'calibrate'")
    p.add_argument("--with-ids", action="store_true", help="prefix each decision with its id")
    p.set_defaults(func=cmd_apply)
    return parser


def _fail(code: str, message: str, status: int) -> int:
    sys.stderr.write(_json_line({"error": code, "message": message}))
    return status


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        status = args.func(args)
    except UsageError as exc:
        return _fail("usage", str(exc), 2)
    except TemplateError as exc:
        return _fail(type(exc).__name__, exc.args[0] if exc.args else str(exc), 1)
    except (ValueError, OSError, KeyError) as exc:
        return _fail(type(exc).__name__, str(exc), 1)
    return int(status or 0)


if __name__ == "__main__":
    sys.exit(main())
