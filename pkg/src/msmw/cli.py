"""Command-line front end.

Subcommands: analyze, factorize, verify, oracle, simulate, asymptote.
Every report is written atomically (temp file + rename) together with a run
manifest (command line, model hash, seed, version, wall time, tolerance
profile), and every numeric in a report carries its tolerance or standard
error.  Exit codes: 0 success / all checks pass, 1 check or computation
failure, 2 usage or model-file error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__, asymptotics, factorization, montecarlo, oracle, spectral
from .errors import MsmwError
from .model import load_model, validate

TOL_PROFILES = {
    "default": {
        "algebraic": 1e-12,
        "spectral": 1e-10,
        "extrapolation_rel": 0.03,
        "mc_sigmas": 4.0,
    },
    "strict": {
        "algebraic": 1e-13,
        "spectral": 1e-11,
        "extrapolation_rel": 0.01,
        "mc_sigmas": 3.0,
    },
    "loose": {
        "algebraic": 1e-10,
        "spectral": 1e-8,
        "extrapolation_rel": 0.05,
        "mc_sigmas": 5.0,
    },
}


@dataclass
class RunManifest:
    command: str
    model_hash: str
    seed: int | None
    version: str
    wall_time_s: float
    tolerances: dict


@dataclass
class VerdictReport:
    suite: str
    checks: list  # {name, residual, tolerance, passed}

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".msmw-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: str, obj) -> None:
    _atomic_write(path, json.dumps(obj, indent=2, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    raise TypeError(f"cannot serialize {type(x)!r}")


def _write_csv(path: str, header, rows) -> None:
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".msmw-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _model_hash(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _emit_manifest(out_path: str, args, t0: float, tols: dict) -> None:
    man = RunManifest(
        command=" ".join(sys.argv),
        model_hash=_model_hash(args.model) if getattr(args, "model", None) else "",
        seed=getattr(args, "seed", None),
        version=__version__,
        wall_time_s=round(time.time() - t0, 3),
        tolerances=tols,
    )
    _write_json(out_path + ".manifest.json", asdict(man))


def _load(args):
    try:
        return load_model(args.model)
    except FileNotFoundError:
        raise UsageError(f"model file not found: {args.model}")
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise UsageError(f"bad model file {args.model}: {exc}")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_analyze(args, tols) -> int:
    model = _load(args)
    try:
        rep = spectral.variance(model)
        hyp = validate(model)
        alpha0 = spectral.working_alpha(model)
        q = spectral.q_left_end(model, alpha0)
    except MsmwError as exc:
        print(f"analyze failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    lam_grid = np.linspace(-alpha0, alpha0, args.k_grid)
    k_vals = [float(np.real(spectral.k_value(model, lam))) for lam in lam_grid]
    scan = spectral.radius_scan(model, (0.0, 0.0), (0.5, args.scan_im_max),
                                (1, args.scan_steps))
    report = {
        "gamma": {"value": hyp.drift, "tolerance": 1e-10},
        "sigma2": {"value": rep.sigma2, "fd_cross_check": rep.sigma2_fd,
                   "tolerance_rel": 1e-6},
        "alpha1": {"value": rep.alpha1, "tolerance_rel": 1e-6},
        "alpha2": {"value": rep.alpha2, "tolerance_rel": 1e-4},
        "q": {"value": q, "working_alpha": alpha0, "tolerance_rel": 1e-10},
        "k_grid": [{"lambda": float(l), "k": v} for l, v in zip(lam_grid, k_vals)],
        "radius_scan": {
            "chi": scan.chi,
            "band": scan.band,
            "peaks": [{"lambda": {"re": p[0].real, "im": p[0].imag}, "r": p[1]}
                      for p in scan.peaks],
            "note": ("lattice model: r = 1 peaks repeat with period 2*pi/span; "
                     "chi < 1 is only expected for spread-out models"
                     if model.is_lattice() else "spread-out scan"),
        },
    }
    _write_json(args.out, report)
    if args.csv:
        _write_csv(args.csv, ["lambda", "k"], list(zip(lam_grid.tolist(), k_vals)))
    _emit_manifest(args.out, args, args._t0, tols)
    print(f"analyze: report written to {args.out}")
    return 0


def cmd_factorize(args, tols) -> int:
    model = _load(args)
    try:
        fs = factorization.build_factor_series(model, args.order)
    except MsmwError as exc:
        print(f"factorize failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    lam = args.lam if args.lam is not None else 0.0
    summary = {
        "order": args.order,
        "lambda": lam,
        "c_mass_row_sums": [fs.c.coeffs[n].total().sum(axis=1).tolist()
                            for n in range(min(args.order, 8) + 1)],
        "bstar_at_lambda": [fs.bstar.coeffs[n].laplace_eval(lam).real.tolist()
                            for n in range(min(args.order, 8) + 1)],
        "tolerance": tols["algebraic"],
    }
    _write_json(args.out, summary)
    if args.dump_series:
        rows = fs.c.dump_rows()
        _write_csv(args.dump_series, ["n", "i", "j", "x", "mass"], rows)
    _emit_manifest(args.out, args, args._t0, tols)
    print(f"factorize: series summary written to {args.out}")
    return 0


def cmd_verify(args, tols) -> int:
    model = _load(args)
    checks = []
    tol_alg = tols["algebraic"]
    try:
        if args.suite == "wiener-hopf":
            res = factorization.verify_wiener_hopf(model, [0.0, 0.3, -0.3], args.order)
            checks.append({"name": "wiener_hopf_series", "residual": res,
                           "tolerance": tol_alg, "passed": res < tol_alg})
        elif args.suite == "inverses":
            res = factorization.verify_inverses(model, [-0.3, 0.0, 0.3], args.order)
            checks.append({"name": "inverse_identities", "residual": res,
                           "tolerance": tol_alg, "passed": res < tol_alg})
        elif args.suite == "lemma41":
            for lam in (0.2, 1.0):
                ms = factorization.min_transform(model, lam, args.order, "series")
                mo = factorization.min_transform(model, lam, args.order, "oracle")
                res = float(np.max(np.abs(ms.g - mo.g)))
                checks.append({"name": f"lemma41_lambda_{lam}", "residual": res,
                               "tolerance": tol_alg, "passed": res < tol_alg})
        elif args.suite == "limits":
            lim = factorization.estimate_limits(
                model, [0.4, 0.2, 0.1], [1 - 0.25 ** k for k in (2, 3, 4)],
                max(args.order, 4096))
            tol = tols["extrapolation_rel"]
            checks.append({"name": "product_identity", "residual": lim.product_residual,
                           "tolerance": tol, "passed": lim.product_residual < tol})
            sign_ok = bool(np.all(lim.a_plus <= 1e-9) and np.all(lim.a_minus >= -1e-9))
            checks.append({"name": "limit_sign_structure", "residual": 0.0 if sign_ok else 1.0,
                           "tolerance": 0.5, "passed": sign_ok})
        else:
            raise UsageError(f"unknown suite {args.suite!r}")
    except MsmwError as exc:
        print(f"verify failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    verdict = VerdictReport(suite=args.suite, checks=checks)
    out = {"suite": verdict.suite, "checks": verdict.checks, "passed": verdict.passed}
    _write_json(args.out, out)
    _emit_manifest(args.out, args, args._t0, tols)
    for c in checks:
        flag = "PASS" if c["passed"] else "FAIL"
        print(f"[{flag}] {c['name']}: residual {c['residual']:.3e} vs {c['tolerance']:.1e}")
    return 0 if verdict.passed else 1


def cmd_oracle(args, tols) -> int:
    model = _load(args)
    try:
        if args.emit == "joint":
            tab = oracle.joint_law(model, args.n, start_state=args.start)
            rows = [(j, s, m, p) for (j, s, m), p in sorted(tab.probs.items())]
            _write_csv(args.out, ["state", "s_index", "m_index", "prob"], rows)
        elif args.emit == "min-laplace":
            if args.lam is None:
                raise UsageError("--emit min-laplace needs --lambda")
            mat = oracle.exact_min_laplace(model, args.n, args.lam)
            rows = [(i, j, mat[i, j]) for i in range(model.n_states)
                    for j in range(model.n_states)]
            _write_csv(args.out, ["i", "j", "value"], rows)
        elif args.emit == "min-cdf":
            if args.x is None:
                raise UsageError("--emit min-cdf needs --x")
            mat = oracle.exact_min_cdf(model, args.n, args.x)
            rows = [(i, j, mat[i, j]) for i in range(model.n_states)
                    for j in range(model.n_states)]
            _write_csv(args.out, ["i", "j", "value"], rows)
        else:
            raise UsageError(f"unknown emit kind {args.emit!r}")
    except MsmwError as exc:
        print(f"oracle failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    _emit_manifest(args.out, args, args._t0, tols)
    print(f"oracle: {args.emit} table written to {args.out}")
    return 0


def cmd_simulate(args, tols) -> int:
    model = _load(args)
    plan = montecarlo.SimulationPlan(
        n=args.n, paths=args.paths, seed=args.seed,
        lambdas=tuple(args.lam or ()), xs=tuple(args.x or ()),
    )
    try:
        report = {"n": args.n, "paths": args.paths, "seed": args.seed,
                  "probes": {"lambda": [], "x": []}}
        for lam in plan.lambdas:
            est = montecarlo.estimate_min_laplace(model, plan, lam, workers=args.workers)
            report["probes"]["lambda"].append({
                "lambda": lam,
                "sqrt_n_min_laplace": [[{"value": est[i, j].value, "stderr": est[i, j].stderr}
                                        for j in range(model.n_states)]
                                       for i in range(model.n_states)],
            })
        for x in plan.xs:
            est = montecarlo.estimate_min_cdf(model, plan, x, workers=args.workers)
            report["probes"]["x"].append({
                "x": x,
                "sqrt_n_min_cdf": [[{"value": est[i, j].value, "stderr": est[i, j].stderr}
                                    for j in range(model.n_states)]
                                   for i in range(model.n_states)],
            })
        clt = montecarlo.clt_check(model, plan, workers=args.workers)
        report["clt_sigma2"] = {"value": clt.value, "stderr": clt.stderr}
    except MsmwError as exc:
        print(f"simulate failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    _write_json(args.out, report)
    _emit_manifest(args.out, args, args._t0, tols)
    print(f"simulate: report written to {args.out}")
    return 0


def cmd_asymptote(args, tols) -> int:
    model = _load(args)
    try:
        lims = factorization.estimate_limits(
            model, list(args.lam or [0.4, 0.2, 0.1]),
            [1 - 0.25 ** k for k in (2, 3, 4)], args.order)
        h_report = None
        if args.x_max is not None:
            xs = list(range(max(4, args.x_max // 2), args.x_max + 1))
            prof = oracle.min_cdf_profile(model, args.n, xs)
            growth = asymptotics.h_growth(model, np.sqrt(args.n) * prof, xs)
            h_report = {
                "slopes": growth.slopes,
                "ratio_means": growth.ratio_means,
                "candidate_no_pi": growth.candidate_no_pi,
                "candidate_pi": growth.candidate_pi,
                "winner": growth.winner,
            }
        h_entries = {}
        for lam in (args.lam or [0.4]):
            est = asymptotics.H_estimate(model, lam, args.order)
            h_entries[str(lam)] = {
                "H": est.H, "route_series": est.route_series,
                "route_coeff": est.route_coeff,
                "err_series": est.err_series, "err_coeff": est.err_coeff,
            }
        sll = asymptotics.small_lambda_limit(model, args.lam or [0.4, 0.2, 0.1])
        report = {
            "A_plus": {"value": lims.a_plus, "err": lims.err_plus},
            "A_minus": {"value": lims.a_minus, "err": lims.err_minus},
            "product_residual": {"value": lims.product_residual,
                                 "tolerance": tols["extrapolation_rel"]},
            "H": h_entries,
            "lambdaH_limit": {"value": sll.limit, "expected": sll.expected,
                              "max_rel_dev": sll.max_rel_dev, "err": sll.err},
            "h_slope": h_report,
        }
    except MsmwError as exc:
        print(f"asymptote failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    _write_json(args.out, report)
    _emit_manifest(args.out, args, args._t0, tols)
    print(f"asymptote: report written to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser and dispatch
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="msmw",
        description="Minimum of a Markov-modulated random walk: spectral, "
                    "Wiener-Hopf, oracle, Monte Carlo and limit numerics.",
    )
    p.add_argument("--tol-profile", choices=sorted(TOL_PROFILES), default="default")
    sub = p.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("analyze", help="spectral report: gamma, sigma^2, q, k grid, radius scan")
    pa.add_argument("--model", required=True)
    pa.add_argument("--out", default="analyze.json")
    pa.add_argument("--csv", default=None, help="also write a (lambda, k) CSV")
    pa.add_argument("--k-grid", type=int, default=21)
    pa.add_argument("--scan-im-max", type=float, default=8.0)
    pa.add_argument("--scan-steps", type=int, default=64)
    pa.set_defaults(func=cmd_analyze)

    pf = sub.add_parser("factorize", help="build the factor series")
    pf.add_argument("--model", required=True)
    pf.add_argument("--order", type=int, default=24)
    pf.add_argument("--lambda", dest="lam", type=float, default=None)
    pf.add_argument("--dump-series", default=None)
    pf.add_argument("--out", default="factorize.json")
    pf.set_defaults(func=cmd_factorize)

    pv = sub.add_parser("verify", help="run an identity suite; nonzero exit on failure")
    pv.add_argument("--suite", required=True,
                    choices=["wiener-hopf", "inverses", "lemma41", "limits"])
    pv.add_argument("--model", required=True)
    pv.add_argument("--order", type=int, default=24)
    pv.add_argument("--out", default="verify.json")
    pv.set_defaults(func=cmd_verify)

    po = sub.add_parser("oracle", help="exact DP tables")
    po.add_argument("--model", required=True)
    po.add_argument("--n", type=int, required=True)
    po.add_argument("--emit", required=True, choices=["joint", "min-laplace", "min-cdf"])
    po.add_argument("--lambda", dest="lam", type=float, default=None)
    po.add_argument("--x", type=float, default=None)
    po.add_argument("--start", type=int, default=0)
    po.add_argument("--out", required=True)
    po.set_defaults(func=cmd_oracle)

    ps = sub.add_parser("simulate", help="Monte Carlo estimates with standard errors")
    ps.add_argument("--model", required=True)
    ps.add_argument("--n", type=int, required=True)
    ps.add_argument("--paths", type=int, required=True)
    ps.add_argument("--seed", type=int, required=True)
    ps.add_argument("--lambda", dest="lam", type=float, action="append")
    ps.add_argument("--x", type=float, action="append")
    ps.add_argument("--workers", type=int, default=None)
    ps.add_argument("--out", default="simulate.json")
    ps.set_defaults(func=cmd_simulate)

    py = sub.add_parser("asymptote", help="limit constants H, A+/-, h slope")
    py.add_argument("--model", required=True)
    py.add_argument("--lambda", dest="lam", type=float, action="append")
    py.add_argument("--x-max", type=int, default=None)
    py.add_argument("--n", type=int, default=10000)
    py.add_argument("--order", type=int, default=4096)
    py.add_argument("--out", default="limits.json")
    py.set_defaults(func=cmd_asymptote)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    args._t0 = time.time()
    tols = TOL_PROFILES[args.tol_profile]
    try:
        return args.func(args, tols)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
