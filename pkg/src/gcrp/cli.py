"""Command-line surface tying every module into reproducible experiments.

Subcommands: ``simulate``, ``verify {thm-v,vm,events,main,lln,corollary}``,
``constants``, ``oracle``, ``gamma-audit``.  Exit codes: 0 all verdicts
pass, 1 at least one verdict failed, 2 usage or domain error.  Replica
parallelism is bounded by the ``GCRP_THREADS`` environment variable
(default 1); outputs are independent of the thread count.

File formats are documented field by field in docs/formats.md.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import gamma_audit as ga
from . import harness, normalizers, oracle
from .engine import SimConfig, default_checkpoints, simulate
from .errors import GcrpError
from .manifest import RunManifest, write_csv, write_json, write_jsonl
from .model import Regime, validate_params

_REGIME_TABLE = (
    "admissible regimes:\n"
    "  Polynomial    0 < alpha < 1 and theta > -alpha\n"
    "  Logarithmic   alpha = 0 and theta > 0\n"
    "  BoundedParts  alpha < 0 and theta = -m*alpha, m a positive integer"
)


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=float, required=True, help="size discount parameter")
    p.add_argument("--theta", type=float, required=True, help="strength parameter")


def _add_run_args(p: argparse.ArgumentParser, n_default=None, r_default=None) -> None:
    p.add_argument("--n", type=int, required=n_default is None, default=n_default,
                   help="horizon (number of arrivals)")
    p.add_argument("--replicas", type=int, default=r_default or 1)
    p.add_argument("--seed", type=int, default=20260810)
    p.add_argument("--out", type=Path, required=True, help="output directory")


def _parse_checkpoints(spec: str, horizon: int) -> tuple[int, ...]:
    if spec == "geometric":
        return default_checkpoints(horizon)
    return tuple(sorted({int(x) for x in spec.split(",")} | {horizon}))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="gcrp",
        description="simulator and verification workbench for the "
                    "two-parameter generalized Chinese restaurant process",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="run replicas, write trajectories")
    _add_model_args(sp)
    _add_run_args(sp)
    sp.add_argument("--checkpoints", default="geometric",
                    help="'geometric' or a comma-separated list of times")
    sp.add_argument("--kmax", type=int, default=None,
                    help="histogram truncation (default: provable size range)")

    vp = sub.add_parser("verify", help="confront a finite-n statement with simulation")
    vsub = vp.add_subparsers(dest="check", required=True)

    tv = vsub.add_parser("thm-v", help="uniform-in-time envelope of V/phi")
    _add_model_args(tv)
    _add_run_args(tv, n_default=100_000, r_default=1000)
    tv.add_argument("--delta", type=float, default=None,
                    help="failure budget, must be < exp(-K); default exp(-K)/2")
    tv.add_argument("--fit-lo", type=int, default=100)
    tv.add_argument("--fit-hi", type=int, default=10_000)

    vm = vsub.add_parser("vm", help="running-sup tail of V/phi")
    _add_model_args(vm)
    _add_run_args(vm, n_default=100_000, r_default=1000)
    vm.add_argument("--a-grid", default=None,
                    help="comma-separated tail levels (>= K); default K multiples")

    ev = vsub.add_parser("events", help="two-sided size-class control events")
    _add_model_args(ev)
    _add_run_args(ev, n_default=10_000, r_default=10_000)
    ev.add_argument("--a", type=float, default=1.0)
    ev.add_argument("--kmax", type=int, default=5)

    mn = vsub.add_parser("main", help="simultaneous concentration of N_n(k)")
    _add_model_args(mn)
    _add_run_args(mn, n_default=100_000, r_default=1000)
    mn.add_argument("--epsilon", type=float, default=0.3)
    mn.add_argument("--a", type=float, default=1.0)
    mn.add_argument("--c-ref", type=float, default=None,
                    help="externally calibrated constant (default: split-half)")

    ll = vsub.add_parser("lln", help="N_n(k)/V_n against its limit")
    _add_model_args(ll)
    _add_run_args(ll, n_default=100_000, r_default=200)
    ll.add_argument("--kmax", type=int, default=5)
    ll.add_argument("--rel-tol", type=float, default=0.05)

    co = vsub.add_parser("corollary", help="two-sided window coverage")
    _add_model_args(co)
    _add_run_args(co, n_default=100_000, r_default=1000)
    co.add_argument("--epsilon-n", type=float, default=None)
    co.add_argument("--c-n", type=float, default=None)

    cp = sub.add_parser("constants", help="dump the constants table and coefficients")
    _add_model_args(cp)
    cp.add_argument("--kmax", type=int, default=50)
    cp.add_argument("--c3", type=float, default=None)
    cp.add_argument("--cm", type=float, default=None)
    cp.add_argument("--out", type=Path, required=True)

    op = sub.add_parser("oracle", help="exact laws by exhaustive enumeration")
    _add_model_args(op)
    op.add_argument("--n", type=int, default=8)
    op.add_argument("--cap", type=int, default=oracle.DEFAULT_CAP)
    op.add_argument("--out", type=Path, required=True)

    gp = sub.add_parser("gamma-audit", help="sweep every analytic Gamma estimate")
    gp.add_argument("--alpha", type=float, default=0.5)
    gp.add_argument("--theta", type=float, default=0.5)
    gp.add_argument("--out", type=Path, required=True)
    return ap


# ---------------------------------------------------------------------------
# command implementations
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    params = validate_params(args.alpha, args.theta)
    cps = _parse_checkpoints(args.checkpoints, args.n)
    kmax = args.kmax
    man = RunManifest(
        command="simulate",
        parameters={
            "alpha": args.alpha, "theta": args.theta, "n": args.n,
            "replicas": args.replicas, "checkpoints": list(cps),
            "kmax": kmax, "seed": args.seed,
        },
        base_seed=args.seed,
    )
    out = args.out
    out.mkdir(parents=True, exist_ok=True)

    records = []
    agg: dict[int, int] = {}
    final_v_sum = 0
    for r in range(args.replicas):
        cfg = SimConfig.make(params, args.n, args.seed, r, checkpoints=cps,
                             k_max_tracked=kmax)
        traj = simulate(params, cfg)
        pts = traj.points
        records.append({
            "replica": r,
            "n": [pt.n for pt in pts],
            "num_parts": [pt.num_parts for pt in pts],
            "counts": [pt.counts for pt in pts],
            "tail_count": [pt.tail_count for pt in pts],
        })
        for k, c in pts[-1].counts.items():
            agg[k] = agg.get(k, 0) + c
        final_v_sum += pts[-1].num_parts

    write_jsonl(man, out, "trajectories.jsonl", records)
    kmax_eff = max(agg) if agg else 1
    write_csv(
        man, out, "histogram.csv",
        ["k", "total_count", "mean_count"],
        [(k, agg.get(k, 0), agg.get(k, 0) / args.replicas) for k in range(1, kmax_eff + 1)],
    )
    man.write(out)
    print(f"wrote {len(records)} trajectories to {out}")
    return 0


def _build_ensemble(args, params, k_max_hist: int):
    return harness.run_ensemble(
        params, args.n, args.replicas, args.seed, k_max_hist=k_max_hist
    )


def cmd_verify(args) -> int:
    params = validate_params(args.alpha, args.theta)
    if params.regime is not Regime.POLYNOMIAL:
        raise GcrpError(f"theorem checks require the Polynomial regime\n{_REGIME_TABLE}")
    c = normalizers.compute_constants(params)

    if args.check == "thm-v":
        delta = args.delta if args.delta is not None else math.exp(-c.K) / 2.0
        ens = _build_ensemble(args, params, k_max_hist=1)
        report = harness.check_thm_V(ens, delta, constants=c,
                                     fit_range=(args.fit_lo, args.fit_hi))
    elif args.check == "vm":
        grid = ([float(x) for x in args.a_grid.split(",")]
                if args.a_grid else None)
        ens = _build_ensemble(args, params, k_max_hist=1)
        report = harness.check_vm_tail(ens, grid, constants=c)
    elif args.check == "events":
        ens = _build_ensemble(args, params, k_max_hist=args.kmax)
        report = harness.check_enk_events(ens, args.a, args.kmax, constants=c)
    elif args.check == "main":
        k_hist = max(8, normalizers.k_epsilon_n(args.epsilon, args.n, params))
        ens = _build_ensemble(args, params, k_max_hist=k_hist)
        report = harness.check_main(ens, args.epsilon, args.a, c_ref=args.c_ref,
                                    constants=c)
    elif args.check == "lln":
        ens = _build_ensemble(args, params, k_max_hist=args.kmax)
        report = harness.check_lln_ratio(ens, args.kmax, args.rel_tol, constants=c)
    elif args.check == "corollary":
        ens = _build_ensemble(args, params, k_max_hist=8)
        report = harness.check_corollary(ens, args.epsilon_n, args.c_n, constants=c)
    else:  # pragma: no cover
        raise GcrpError(f"unknown check {args.check}")

    man = RunManifest(
        command=f"verify-{args.check}",
        parameters={k: (str(v) if isinstance(v, Path) else v)
                    for k, v in sorted(vars(args).items()) if k != "out"},
        base_seed=args.seed,
    )
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    write_json(man, out, "report.json", {"report": report.as_dict()})
    rows = [(report.name, report.violations, report.trials,
             report.frequency, report.wilson_low, report.wilson_high,
             report.bound, report.verdict)]
    write_csv(man, out, "report.csv",
              ["event", "violations", "trials", "frequency",
               "wilson_low", "wilson_high", "bound", "verdict"], rows)
    man.write(out)
    print(f"{report.name}: {report.verdict} "
          f"(violations {report.violations}/{report.trials}, "
          f"frequency {report.frequency:.4g}, bound {report.bound:.4g})")
    return 0 if report.verdict == "PASS" else 1


def cmd_constants(args) -> int:
    params = validate_params(args.alpha, args.theta)
    c = normalizers.compute_constants(params, c3=args.c3, cM=args.cm)
    co = normalizers.coefficients(args.kmax, params, c)
    man = RunManifest(
        command="constants",
        parameters={"alpha": args.alpha, "theta": args.theta, "kmax": args.kmax,
                    "c3": args.c3, "cm": args.cm},
        base_seed=None,
    )
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "constants": c.as_dict(),
        "provenance": c.provenance,
        "derived": {
            "C_U": co.c_u,
            "C_U_provenance": "sup_k a1(k)/(a0(k) k^(alpha+2)) fitted over "
                              f"k <= {args.kmax} and frozen",
            "D": normalizers.d_constant(c, co),
            "D_provenance": "2/cV + C_U",
        },
        "coefficients": {
            "k": list(range(1, args.kmax + 1)),
            "log_a0": co.log_a0[1:].tolist(),
            "log_a1": co.log_a1[1:].tolist(),
        },
    }
    write_json(man, out, "constants.json", payload)
    write_csv(man, out, "coefficients.csv", ["k", "log_a0", "log_a1", "a1_over_a0"],
              [(k, float(co.log_a0[k]), float(co.log_a1[k]), co.ratio_a1_a0(k))
               for k in range(1, args.kmax + 1)])
    man.write(out)
    print(f"constants for (alpha={args.alpha}, theta={args.theta}) -> {out}")
    return 0


def cmd_oracle(args) -> int:
    params = validate_params(args.alpha, args.theta)
    laws = oracle.enumerate_laws(params, args.n, cap=args.cap)
    man = RunManifest(
        command="oracle",
        parameters={"alpha": args.alpha, "theta": args.theta, "n": args.n},
        base_seed=None,
    )
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    payload = {"laws": {}}
    for n, law in sorted(laws.items()):
        payload["laws"][str(n)] = {
            "shapes": {"+".join(map(str, s)): p for s, p in sorted(law.probs.items())},
            "marginal_num_parts": {str(k): v for k, v in law.marginal_v().items()},
            "marginal_singletons": {str(k): v for k, v in law.marginal_nk(1).items()},
            "mean_num_parts": law.mean_v(),
        }
    write_json(man, out, "exact_laws.json", payload)
    man.write(out)
    print(f"exact laws up to n={args.n} -> {out}")
    return 0


def cmd_gamma_audit(args) -> int:
    params = validate_params(args.alpha, args.theta)
    results = ga.run_all(params)
    man = RunManifest(
        command="gamma-audit",
        parameters={"alpha": args.alpha, "theta": args.theta},
        base_seed=None,
    )
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    write_json(man, out, "audit.json", {"results": [r.as_dict() for r in results]})
    write_csv(man, out, "audit.csv",
              ["lemma_id", "max_violation", "num_tol", "passed", "argmax"],
              [(r.lemma_id, r.max_violation, r.num_tol, r.passed, r.argmax)
               for r in results])
    man.write(out)
    all_pass = all(r.passed for r in results)
    for r in results:
        print(f"{r.lemma_id:34s} {'PASS' if r.passed else 'FAIL'} "
              f"(max violation {r.max_violation:+.3e})")
    return 0 if all_pass else 1


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "constants":
            return cmd_constants(args)
        if args.command == "oracle":
            return cmd_oracle(args)
        if args.command == "gamma-audit":
            return cmd_gamma_audit(args)
    except GcrpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if "regime" in str(exc).lower() or "alpha" in str(exc).lower():
            print(_REGIME_TABLE, file=sys.stderr)
        return 2
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
