"""Command-line interface.

Subcommands::

    mtdselect simulate   --model spec.json --n 10000 --seed 7 --out seq.txt
    mtdselect select     --input seq.txt --method fsc:3 --d 8 [--alpha-c C]
    mtdselect estimate   --input seq.txt --lags -1,-8 --format csv
    mtdselect experiment --config exp.json --out results
    mtdselect verify     --model spec.json [--budget N] [--coverage-reps R]

Exit codes: 0 ok, 1 usage error, 2 data error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys

import numpy as np

from .counting import load_sequence
from .estimation import estimate_kernel, marginal_estimate
from .experiments import (
    ExperimentConfig,
    coverage_check,
    grid_search_c,
    parse_method,
    run_experiment,
    select_with_method,
)
from .model import (
    Alphabet,
    LagSet,
    load_model,
    model_from_dict,
    simulate,
    validate_model,
    diagnostics,
)
from .oracle import STATE_BUDGET, exact_law, oracle_report
from .selection import (
    algorithm2_select,
    fs_only_select,
    fs_step,
    fsc_select,
    pcp_select,
)
from .thresholds import ThresholdParams

USAGE_ERROR = 1
DATA_ERROR = 2
VERIFY_ERROR = 3


def _fmt_symbol(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(value)


def _parse_alphabet(text: str) -> Alphabet:
    return Alphabet(tuple(float(tok) for tok in text.split(",")))


def _parse_symbol_map(text: str | None):
    if not text:
        return None
    out = {}
    for item in text.split(","):
        tok, _, val = item.partition("=")
        if not val:
            raise ValueError(f"bad symbol map entry {item!r}")
        out[tok.strip()] = float(val)
    return out


def cmd_simulate(args) -> int:
    model = load_model(args.model)
    bad = validate_model(model)
    if bad:
        print("invalid model:", file=sys.stderr)
        for v in bad:
            print("  -", v, file=sys.stderr)
        return DATA_ERROR
    seq = simulate(model, args.n, args.seed, burn_in=args.burn_in)
    syms = model.alphabet.symbols
    with open(args.out, "w", encoding="utf-8") as fh:
        for idx in seq.data:
            fh.write(_fmt_symbol(syms[idx]) + "\n")
    print(f"wrote {args.n} symbols to {args.out}")
    return 0


def _threshold_params(args, n: int) -> ThresholdParams:
    return ThresholdParams.for_sample(
        n, c=args.alpha_c, epsilon=args.epsilon, mu=args.mu
    )


def cmd_select(args) -> int:
    alphabet = _parse_alphabet(args.alphabet)
    seq = load_sequence(args.input, alphabet,
                        symbol_map=_parse_symbol_map(args.symbol_map),
                        skip_header=args.skip_header)
    method = parse_method(args.method)
    d = args.d
    n = len(seq)
    params = _threshold_params(args, n)
    if method.name == "pcp":
        lags = LagSet(tuple(int(t) for t in args.S.split(",")), d) if args.S \
            else LagSet.full(d)
        selected, trace = pcp_select(seq, lags, params)
    elif method.name == "fsc":
        m = max(d + 1, int(n * args.split))
        selected, trace = fsc_select(seq, d, int(method.arg), params, m=m)
    elif method.name == "fs":
        selected, trace = fs_only_select(seq, d, int(method.arg), return_trace=True)
    elif method.name == "alg2":
        selected, trace = algorithm2_select(seq, d, float(method.arg), return_trace=True)
    else:
        raise ValueError(f"method {method.name} not usable here")
    payload = trace.to_dict()
    payload["n"] = n
    text = json.dumps(payload, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def cmd_estimate(args) -> int:
    alphabet = _parse_alphabet(args.alphabet)
    seq = load_sequence(args.input, alphabet,
                        symbol_map=_parse_symbol_map(args.symbol_map),
                        skip_header=args.skip_header)
    lags = tuple(int(t) for t in args.lags.split(","))
    d = args.d if args.d else -min(lags)
    params = _threshold_params(args, len(seq))
    kern = estimate_kernel(seq, LagSet(lags, d), params)
    if args.format == "json":
        text = kern.to_json(indent=2)
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        else:
            print(text)
    else:
        out = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
        writer = csv.writer(out)
        writer.writerow(["context", "symbol", "p_hat", "count", "radius"])
        for ctx, a, p, cnt, radius in kern.to_rows():
            writer.writerow([
                " ".join(str(c) for c in ctx), a,
                f"{p:.17g}", cnt,
                "inf" if math.isinf(radius) else f"{radius:.17g}",
            ])
        if args.out:
            out.close()
    return 0


def cmd_experiment(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        spec = json.load(fh)
    model_spec = spec["model"]
    model = load_model(model_spec) if isinstance(model_spec, str) \
        else model_from_dict(model_spec)
    config = ExperimentConfig(
        model=model,
        methods=list(spec["methods"]),
        sample_sizes=[int(n) for n in spec["sample_sizes"]],
        replications=int(spec.get("replications", 100)),
        seed=int(spec.get("seed", 0)),
        epsilon=float(spec.get("epsilon", 0.1)),
        mu=float(spec.get("mu", 0.5)),
        alpha_c=float(spec.get("alpha_c", 2.0)),
        c_grid=spec.get("c_grid"),
        grid_replications=int(spec.get("grid_replications", 100)),
        grid_sample_size=spec.get("grid_sample_size"),
        split=float(spec.get("split", 0.5)),
        burn_in=int(spec.get("burn_in", 1000)),
        estimate_symbol=spec.get("estimate_symbol"),
        workers=int(spec.get("workers", args.workers)),
    )
    result = run_experiment(config)
    base = args.out or "experiment"
    with open(base + ".json", "w", encoding="utf-8") as fh:
        json.dump(result, fh, indent=2)
        fh.write("\n")
    fields = ["method", "n", "c", "replications", "successes", "frequency", "se"]
    if config.estimate_symbol is not None:
        fields += ["estimate_mean", "estimate_sd"]
    with open(base + ".csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        writer.writeheader()
        for row in result["rows"]:
            writer.writerow({
                k: (f"{v:.17g}" if isinstance(v, float) else v)
                for k, v in row.items() if k in fields
            })
    for row in result["rows"]:
        line = f"{row['method']:>8}  n={row['n']:<8} frequency={row['frequency']:.3f}"
        if "estimate_sd" in row:
            line += f"  sd={row['estimate_sd']:.5f}"
        print(line)
    print(f"wrote {base}.json and {base}.csv")
    return 0


def cmd_verify(args) -> int:
    model = load_model(args.model)
    bad = validate_model(model)
    if bad:
        print("invalid model:", file=sys.stderr)
        for v in bad:
            print("  -", v, file=sys.stderr)
        return DATA_ERROR
    n_states = model.alphabet.size ** model.order
    if n_states > args.budget:
        print(f"skip: state space {n_states} exceeds budget {args.budget}")
        return 0
    report = oracle_report(model, budget=args.budget)
    if args.debug_nu_bias:
        # deliberately corrupt the influence values to prove the battery
        # detects broken identities
        for e in report.structure.entries:
            object.__setattr__(e, "nu_bar", e.nu_bar + args.debug_nu_bias)
        report.structure.max_binary_identity_residual = max(
            abs(e.nu_bar - 2.0 * e.cov_abs) for e in report.structure.entries
        ) if model.alphabet.size == 2 else None
        report.structure.min_influence_margin = min(
            model.alphabet.diameter * model.alphabet.sup_norm * e.nu_bar - e.cov_abs
            for e in report.structure.entries
        )
        report.structure.max_nu_on_covered += abs(args.debug_nu_bias)

    checks = [
        ("stationary residual <= 1e-12", report.stationary_residual <= 1e-12),
        ("conditional-covariance identity residual <= 1e-10",
         report.structure.max_lemma_residual <= 1e-10),
        ("influence lower bound never violated",
         report.structure.min_influence_margin >= -1e-10),
        ("influence vanishes once all relevant lags conditioned",
         report.structure.max_nu_on_covered <= 1e-12),
    ]
    if report.structure.max_binary_identity_residual is not None:
        checks.append(("binary influence identity residual <= 1e-10",
                       report.structure.max_binary_identity_residual <= 1e-10))
    checks.append(("KL bound holds on grid",
                   all(c.holds for c in report.kl_checks)))
    if args.coverage_reps > 0 and len(diagnostics(model).relevant):
        cov = coverage_check(
            model, args.coverage_n, args.coverage_reps,
            ThresholdParams(epsilon=args.epsilon, mu=args.mu, alpha=args.coverage_alpha),
            seed=args.seed,
        )
        checks.append((
            f"coverage {cov['frequency']:.5f} <= bound {cov['bound']:.5f} + 3se",
            cov["ok"],
        ))

    payload = report.to_dict()
    payload["checks"] = [{"name": name, "ok": ok} for name, ok in checks]
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    failed = False
    for name, ok in checks:
        print(("PASS  " if ok else "FAIL  ") + name)
        failed |= not ok
    print(f"kappa={report.structure.kappa:.6g}"
          + (f"  kappa_lower_bound={report.structure.kappa_lower_bound:.6g}"
             if report.structure.kappa_lower_bound is not None else "")
          + (f"  ell_star={report.ell_star}" if report.ell_star is not None else ""))
    return VERIFY_ERROR if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mtdselect",
        description="Sparse lag selection and estimation for high-order MTD models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a sequence from a model spec")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--alphabet", default="0,1",
                        help="comma-separated symbol values (default 0,1)")
    common.add_argument("--symbol-map", default=None,
                        help="token=value pairs, e.g. rain=1,dry=0")
    common.add_argument("--skip-header", action="store_true")
    common.add_argument("--epsilon", type=float, default=0.1)
    common.add_argument("--mu", type=float, default=0.5)
    common.add_argument("--alpha-c", type=float, default=2.0,
                        help="alpha = C log n (default C=2)")

    p = sub.add_parser("select", parents=[common], help="select relevant lags")
    p.add_argument("--input", required=True)
    p.add_argument("--method", required=True,
                   help="pcp | fsc:L | fs:L | alg2:TAU")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--S", default=None,
                   help="candidate lags for pcp (default: all of -d..-1)")
    p.add_argument("--split", type=float, default=0.5)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("estimate", parents=[common],
                       help="estimate transition probabilities over a lag set")
    p.add_argument("--input", required=True)
    p.add_argument("--lags", required=True, help="comma-separated lags, e.g. -1,-8")
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("experiment", help="run a replication study from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("verify", help="run the exact-oracle verification battery")
    p.add_argument("--model", required=True)
    p.add_argument("--budget", type=int, default=STATE_BUDGET)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--mu", type=float, default=0.5)
    p.add_argument("--coverage-reps", type=int, default=200)
    p.add_argument("--coverage-n", type=int, default=2000)
    p.add_argument("--coverage-alpha", type=float, default=3.0)
    p.add_argument("--out", default=None)
    p.add_argument("--debug-nu-bias", type=float, default=0.0,
                   help="inject a bias into influence values (battery self-test)")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE_ERROR if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
