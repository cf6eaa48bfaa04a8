"""Batch command-line front end.

Exit codes: 0 when every check passed, 1 when a verified inequality failed
or a constant came out unbounded, 2 for invalid input or infeasible
hypotheses.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
import warnings
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, build_scenario, load_config, resolve_mode
from .constants import (
    ConstantReport,
    best_constant_p2,
    lower_bound_constant,
    random_admissible_functions,
    run_constructive_chain,
)
from .errors import InfeasibleError, PoincareLabError
from .functionals import check_sobolev_weight_conditions, find_logsob_constant, make_psi_pair, poincare_sides
from .report import FORMATS, RunReport, emit_report, metric
from .space import fit_growth_constant, space_to_dict
from .weights import check_admissibility, check_admissibility_alt, default_grids, search_admissibility

log = logging.getLogger("poincare_lab")

COMMANDS = ("check-admissibility", "estimate-constant", "verify-poincare", "verify-logsob", "scenario", "selftest")


class Usage(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise Usage(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="poincare-lab", description="Certify and estimate weighted Poincaré-type constants.")
    ap.add_argument("--version", action="version", version=__version__)
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="INI run configuration")
    common.add_argument("--out", type=Path, help="report path (stdout when omitted)")
    common.add_argument("--format", choices=FORMATS, default="json")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=None, help="cap on BLAS threads")
    common.add_argument("--tolerance-scale", type=float, default=1.0, help="multiplier for every slack")
    common.add_argument("--timings", action="store_true", help="include wall times (makes reports run-dependent)")
    common.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return ap


def _growth(space, cfg: RunConfig) -> tuple:
    g = fit_growth_constant(space, max_n=cfg.admissibility["max_n"])
    return g, {"C": g.C, "lambda0": g.lambda0, "max_n_tested": g.max_n_tested}


def _certify(sc, cfg: RunConfig, g):
    adm = cfg.admissibility
    given = [k for k in ("lam", "epsilon", "s") if k in adm]
    if given and len(given) < 3:
        raise PoincareLabError("[admissibility] needs all of lam, epsilon, s or none of them")
    if given:
        check = check_admissibility_alt if adm["alt"] else check_admissibility
        cert = check(sc.space, sc.weights, adm["lam"], adm["epsilon"], adm["s"], lambda0=g.lambda0)
        return cert, None
    res = search_admissibility(sc.space, sc.weights, *default_grids(g.lambda0), lambda0=g.lambda0)
    return res.certificate, res.worst


def _cert_doc(cert, worst) -> dict:
    if cert is not None:
        doc = cert.to_dict()
        doc["passed"] = cert.passed
        return doc
    doc = {"passed": False, "feasible": False}
    if worst:
        kinds = sorted({v.kind for *_, v in worst})
        s, lam, eps, v = min(worst, key=lambda w: (w[3].kind != "connect", w[3].deficit))
        doc["grid_points_tried"] = len(worst)
        doc["violation_kinds"] = kinds
        doc["closest"] = {"s": s, "lambda": lam, "epsilon": eps, "point": int(v.point),
                          "deficit": float(v.deficit), "kind": v.kind}
    return doc


def _violations_doc(cert, limit: int = 50) -> list:
    if cert is None:
        return []
    return [{"point": int(v.point), "deficit": float(v.deficit), "kind": v.kind} for v in cert.violations[:limit]]


def cmd_scenario(sc, cfg, rep: RunReport, args) -> int:
    rep.extra["space"] = space_to_dict(sc.space)
    rep.extra["weights"] = {"W": sc.weights.W, "W_plus": sc.weights.W_plus,
                            "X0": np.flatnonzero(sc.weights.X0), "pinned": np.flatnonzero(sc.weights.pinned),
                            "ordered": sc.weights.ordered}
    return 0


def cmd_check_admissibility(sc, cfg, rep: RunReport, args) -> int:
    g, rep.growth = _growth(sc.space, cfg)
    cert, worst = _certify(sc, cfg, g)
    rep.certificate = _cert_doc(cert, worst)
    rep.violations = _violations_doc(cert)
    if cert is None or not cert.passed:
        rep.status = "infeasible"
        return 2
    return 0


def cmd_estimate_constant(sc, cfg, rep: RunReport, args) -> int:
    c = cfg.constants
    mode, normalized = resolve_mode(sc, c["mode"], c["normalized"])
    p = c["p"]
    exact = best_constant_p2(sc.space, sc.weights, mode, normalized=normalized) if p == 2 else None
    lower = lower_bound_constant(sc.space, sc.weights, p, restarts=c["restarts"], seed=args.seed,
                                 mode=mode, normalized=normalized)
    chain = None
    g, rep.growth = _growth(sc.space, cfg)
    if c["chain"] and normalized and mode in ("x0", "none") and sc.weights.ordered:
        try:
            cert, worst = _certify(sc, cfg, g)
            rep.certificate = _cert_doc(cert, worst)
            if cert is not None and cert.passed:
                chain = run_constructive_chain(sc.space, sc.weights, cert, p, c["n_max"], growth=g, seed=args.seed)
        except InfeasibleError as exc:
            rep.certificate = {"passed": False, "detail": str(exc)}
    cr = ConstantReport(p, exact, lower, chain)
    rtol = 1e-6 * args.tolerance_scale
    doc = {"p": p, "mode": mode, "normalized": normalized,
           "lower_bound": metric(lower.value, rtol), "consistent": cr.consistent(rtol)}
    if exact is not None:
        doc["exact_p2"] = metric(exact.value, 1e-10 * args.tolerance_scale)
        doc["bounded"] = exact.bounded
    else:
        doc["bounded"] = lower.bounded and chain is not None
    if chain is not None:
        ch = chain.to_dict()
        ch["constructive_upper"] = metric(chain.constructive_upper, rtol)
        doc["chain"] = ch
    rep.constants = doc
    if not doc["bounded"] or not doc["consistent"]:
        rep.status = "failed"
        return 1
    return 0


def cmd_verify_poincare(sc, cfg, rep: RunReport, args) -> int:
    c = cfg.constants
    mode, normalized = resolve_mode(sc, c["mode"], c["normalized"])
    p = c["p"]
    slack = c["slack"] * args.tolerance_scale
    if p == 2:
        est = best_constant_p2(sc.space, sc.weights, mode, normalized=normalized)
        C, source = est.value, "exact_p2"
    else:
        g, rep.growth = _growth(sc.space, cfg)
        cert, worst = _certify(sc, cfg, g)
        rep.certificate = _cert_doc(cert, worst)
        if cert is None or not cert.passed:
            rep.status = "infeasible"
            return 2
        chain = run_constructive_chain(sc.space, sc.weights, cert, p, c["n_max"], growth=g, seed=args.seed)
        C, source = chain.constructive_upper, "constructive_upper"
    doc = {"p": p, "mode": mode, "normalized": normalized, "source": source,
           "constant": metric(C, slack), "samples": c["samples"]}
    rep.constants = doc
    if not np.isfinite(C):
        rep.status = "unbounded"
        return 1
    fs = random_admissible_functions(sc.space, sc.weights, c["samples"], args.seed, mode)
    worst_ratio = 0.0
    bad = []
    for i, f in enumerate(fs):
        lhs, rhs = poincare_sides(sc.space, sc.weights, f, p, normalized=normalized)
        if rhs > 0:
            worst_ratio = max(worst_ratio, lhs / rhs)
        if lhs > C * rhs * (1 + slack):
            bad.append({"sample": i, "lhs": lhs, "rhs": rhs})
    doc["max_ratio"] = metric(worst_ratio, slack)
    rep.violations = bad
    if bad:
        rep.status = "failed"
        return 1
    return 0


def cmd_verify_logsob(sc, cfg, rep: RunReport, args) -> int:
    ls = cfg.logsob
    mode, _ = resolve_mode(sc, ls["mode"], None)
    psi = make_psi_pair(ls["psi"], ls["alpha"], ls["c"])
    cond = check_sobolev_weight_conditions(sc.space, sc.weights, psi, ls["p"])
    fam = random_admissible_functions(sc.space, sc.weights, ls["samples"], args.seed, mode)
    res = find_logsob_constant(sc.space, sc.weights, psi, fam, ls["p"], rtol=ls["rtol"])
    lo = 1 - 0.01 * args.tolerance_scale
    rep.logsob = {"psi": psi.kind, "alpha": psi.alpha, "K1": metric(cond.K1, None), "K2": metric(cond.K2, None),
                  "flagged": np.flatnonzero(cond.flagged) if cond.flagged.dtype == bool else cond.flagged,
                  "c_star": metric(res.c, ls["rtol"]), "max_value": metric(res.max_value, 1 - lo)}
    ok = np.isfinite(cond.K1) and np.isfinite(cond.K2) and res.c > 0 and lo <= res.max_value <= 1.0
    if not ok:
        rep.status = "failed"
        return 1
    return 0


def cmd_selftest(args) -> tuple[RunReport, int]:
    from .acceptance import run_all

    rep = RunReport("selftest", args.seed, {"kind": "acceptance"})
    results = run_all(args.seed)
    rep.checks = {f"criterion_{r.number:02d}": r.to_dict() for r in results}
    if args.timings:
        rep.timings = {f"criterion_{r.number:02d}": r.elapsed for r in results}
    for r in results:
        print(r.line(), file=sys.stderr)
    if not all(r.passed for r in results):
        rep.status = "failed"
        rep.exit_code = 1
    return rep, rep.exit_code


HANDLERS = {
    "scenario": cmd_scenario,
    "check-admissibility": cmd_check_admissibility,
    "estimate-constant": cmd_estimate_constant,
    "verify-poincare": cmd_verify_poincare,
    "verify-logsob": cmd_verify_logsob,
}


def _write(rep: RunReport, args) -> None:
    data = emit_report(rep, args.format)
    if args.out is None:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        args.out.write_bytes(data)


def _limits(threads):
    if threads is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=threads)


def _execute(args) -> int:
    if args.command == "selftest":
        rep, code = cmd_selftest(args)
        _write(rep, args)
        return code
    if args.config is None:
        raise Usage(f"{args.command} needs --config")
    cfg = load_config(args.config)
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        sc = build_scenario(cfg.scenario)
    rep = RunReport(args.command, args.seed, {"config": cfg.echo(), "info": sc.info, "n_points": sc.space.n})
    if caught:
        rep.extra["warnings"] = sorted({str(w.message) for w in caught})
    try:
        code = HANDLERS[args.command](sc, cfg, rep, args)
    except InfeasibleError as exc:
        rep.status, code = "infeasible", 2
        rep.extra["error"] = str(exc)
    if args.timings:
        rep.timings = {"total": time.perf_counter() - t0}
    rep.exit_code = code
    if code == 0:
        rep.status = "passed"
    _write(rep, args)
    return code


def run_command(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except Usage as exc:
        print(f"poincare-lab: error: {exc}", file=sys.stderr)
        build_parser().print_usage(sys.stderr)
        return 2
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, stream=sys.stderr)
    try:
        with _limits(args.threads):
            return _execute(args)
    except Usage as exc:
        print(f"poincare-lab: error: {exc}", file=sys.stderr)
        return 2
    except (PoincareLabError, ValueError) as exc:
        print(f"poincare-lab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except Exception:  # never let a crash masquerade as a failed inequality (exit 1)
        log.exception("internal error")
        return 2


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
