"""``pecmdp`` command-line front end.

Exit codes: 0 success, 1 parse/validation/domain errors, 2 usage errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from typing import Optional, Sequence

from . import __version__
from .compiler import compile_domain, mdp_to_json
from .core import PartialFluentState, PecError, validate
from .decompiler import decompiled_domain, minimize_conditions, policy_to_pprops, reachability_prune, roundtrip_check
from .oracle import oracle_project
from .parser import ParseError, parse_file, render_domain
from .planning import PolicyTable, RewardSpec, build_reward, simulate, solve_finite_horizon, solve_stationary
from .projection import Query, filter_vector, project, propagate, StateDistribution


class UsageError(Exception):
    pass


def parse_at(text: str) -> tuple[PartialFluentState, str]:
    """``"F=V[, F2=V2]@t"`` -> (partial state, instant label)."""
    body, sep, label = text.rpartition("@")
    if not sep or not label.strip():
        raise UsageError(f"expected 'F=V[, F2=V2]@instant', got {text!r}")
    pairs = []
    for part in body.split(","):
        part = part.strip()
        if not part:
            continue
        f, eq, v = part.partition("=")
        if not eq or not f.strip() or not v.strip():
            raise UsageError(f"bad assignment {part!r} in {text!r}")
        pairs.append((f.strip(), v.strip()))
    try:
        return PartialFluentState(pairs), label.strip()
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _dump(obj, fh) -> None:
    json.dump(obj, fh, sort_keys=True, indent=2)
    fh.write("\n")


def _write(path: Optional[str], text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _load(args):
    domain = parse_file(args.domain)
    report = validate(domain)
    for v in report.warnings:
        print(f"{args.domain}:{v}", file=sys.stderr)
    if not report.ok:
        for v in report.errors:
            print(f"{args.domain}:{v}", file=sys.stderr)
        raise SystemExit(1)
    return domain


def _compile(args, domain):
    return compile_domain(domain, max_states=args.max_states)


def cmd_validate(args) -> int:
    domain = _load(args)
    if args.format == "json":
        _dump({"ok": True, "warnings": [str(v) for v in validate(domain).warnings]}, sys.stdout)
    else:
        print("ok")
    return 0


def cmd_compile(args) -> int:
    mdp = _compile(args, _load(args))
    _write(args.output, json.dumps(mdp_to_json(mdp), sort_keys=True, indent=1) + "\n")
    return 0


def _check_vars(domain, state) -> None:
    for f, v in state.items():
        if f not in domain.fluent_names:
            raise UsageError(f"unknown fluent {f!r}")
        if v not in domain.vals(f):
            raise UsageError(f"{v!r} is not a value of {f!r}")


def cmd_project(args) -> int:
    domain = _load(args)
    target, tq = parse_at(args.query)
    _check_vars(domain, target)
    cond = tc = None
    if args.given:
        cond, tc = parse_at(args.given)
        _check_vars(domain, cond)
    q = Query(target, tq, cond, tc)
    if args.engine == "oracle":
        value = oracle_project(domain, q)
        detail = "oracle: fsum over enumerated worlds"
    else:
        mdp = _compile(args, domain)
        value = project(mdp, q)
        if not q.conditional:
            p = propagate(mdp, StateDistribution(mdp.p0, 0), mdp.step_of(tq)).probs
            f = filter_vector(mdp.codec, target)
            detail = f"matrix: fsum over {int(f.sum())} matching states"
            value_check = math.fsum((p * f).tolist())
            detail += f" = {value_check!r}"
        else:
            detail = "matrix: conditioned and renormalised"
    if args.format == "json":
        _dump({"query": args.query, "given": args.given, "engine": args.engine, "probability": value}, sys.stdout)
    else:
        print(f"{value:.12g}")
    print(f"# {detail}; exact value {value!r}", file=sys.stderr)
    return 0


def cmd_plan(args) -> int:
    domain = _load(args)
    mdp = _compile(args, domain)
    with open(args.reward, encoding="utf-8") as fh:
        spec = RewardSpec.from_json(fh.read())
    R = build_reward(mdp, spec)
    if args.horizon_mode == "finite":
        policy, V = solve_finite_horizon(mdp, R, spec.discount, strict=args.strict)
        value = float(mdp.p0 @ V[0])
    else:
        if not spec.discount < 1.0:
            raise UsageError("--horizon-mode discounted needs a discount below 1")
        policy, V = solve_stationary(mdp, R, spec.discount, args.epsilon, strict=args.strict)
        value = float(mdp.p0 @ V)
    doc = policy.to_json(mdp)
    doc["expected_return"] = value
    doc["reward"] = spec.to_dict()
    if args.output in (None, "-"):
        _dump(doc, sys.stdout)
    else:
        with open(args.output, "w", encoding="utf-8") as fh:
            _dump(doc, fh)
    return 0


def cmd_decompile(args) -> int:
    domain = _load(args)
    mdp = _compile(args, domain)
    with open(args.policy, encoding="utf-8") as fh:
        policy = PolicyTable.from_json(fh.read(), mdp)
    props = policy_to_pprops(mdp, policy)
    if args.prune:
        props = reachability_prune(mdp, policy, props, args.threshold)
    if args.minimize:
        props = minimize_conditions(mdp, props, policy=policy, threshold=args.threshold)
    _write(args.output, render_domain(decompiled_domain(domain, props)))
    if args.check:
        report = roundtrip_check(domain, props, policy, args.threshold, mdp)
        for m in report.mismatches:
            print(f"mismatch: {m}", file=sys.stderr)
        if not report.ok:
            return 1
    return 0


def cmd_simulate(args) -> int:
    domain = _load(args)
    mdp = _compile(args, domain)
    policy = None
    if args.policy:
        with open(args.policy, encoding="utf-8") as fh:
            policy = PolicyTable.from_json(fh.read(), mdp)
    reward, discount = None, 1.0
    if args.reward:
        with open(args.reward, encoding="utf-8") as fh:
            spec = RewardSpec.from_json(fh.read())
        reward, discount = build_reward(mdp, spec), spec.discount
    result = simulate(mdp, policy, seed=args.seed, episodes=args.episodes, reward=reward, discount=discount)
    out = result.summary()
    out["seed"] = args.seed
    freqs = {}
    for t, label in enumerate(mdp.instants):
        for f, vs in zip(mdp.codec.fluent_order, mdp.codec.values):
            for v in vs:
                freqs[f"{f}={v}@{label}"] = result.frequency(mdp, {f: v}, t) if result.episodes else None
    out["frequencies"] = freqs
    if args.query:
        target, tq = parse_at(args.query)
        _check_vars(domain, target)
        out["query"] = {"text": args.query, "estimate": result.frequency(mdp, target, mdp.step_of(tq))
                        if result.episodes else None}
    if args.format == "json":
        _dump(out, sys.stdout)
    else:
        print(f"episodes {out['episodes']} seed {args.seed}")
        if "mean_return" in out:
            print(f"mean return {out['mean_return']:.12g} (std {out['std_return']:.6g})")
        if "query" in out:
            print(f"{args.query}: {out['query']['estimate']:.12g}")
        for k, v in freqs.items():
            if v is not None:
                print(f"{k}\t{v:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pecmdp", description="Compile and query PEC domains as MDPs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("domain", help=".pec domain file")
        p.add_argument("--format", choices=("text", "json"), default="text")
        p.add_argument("--max-states", type=int, default=2**24)

    p = sub.add_parser("validate", help="check a domain for well-formedness")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("compile", help="write the compiled MDP as JSON")
    common(p)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("project", help="temporal projection query")
    common(p)
    p.add_argument("--query", required=True, help='e.g. "Lamp=on@2"')
    p.add_argument("--given", help='e.g. "Lamp=off@0"')
    p.add_argument("--engine", choices=("matrix", "oracle"), default="matrix")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("plan", help="solve for a deterministic policy")
    common(p)
    p.add_argument("--reward", required=True, help="reward spec JSON")
    p.add_argument("-o", "--output")
    p.add_argument("--horizon-mode", choices=("finite", "discounted"), default="finite")
    p.add_argument("--strict", action="store_true", help="only situations performable at each instant")
    p.add_argument("--epsilon", type=float, default=1e-10)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("decompile", help="rewrite a policy as p-propositions")
    common(p)
    p.add_argument("--policy", required=True)
    p.add_argument("--prune", action="store_true")
    p.add_argument("--minimize", action="store_true")
    p.add_argument("--threshold", type=float, default=0.0)
    p.add_argument("--check", action="store_true", help="verify the round trip")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_decompile)

    p = sub.add_parser("simulate", help="Monte-Carlo trajectories")
    common(p)
    p.add_argument("--episodes", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--policy")
    p.add_argument("--reward")
    p.add_argument("--query")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"pecmdp: error: {exc}", file=sys.stderr)
        return 2
    except ParseError as exc:
        print(f"{args.domain}:{exc.span.line}:{exc.span.column}: error: {exc.message}", file=sys.stderr)
        return 1
    except PecError as exc:
        print(f"pecmdp: error: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"pecmdp: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
