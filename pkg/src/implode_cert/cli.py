"""Command line entry point: implode-cert {coeffs, verify, shoot}.

Exit codes: 0 success, 1 a check or pipeline stage failed, 2 bad configuration.
Every run writes manifest.json (config hash, versions, wall time) to --out.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
import time
import warnings
from pathlib import Path

import mpmath

from . import __version__
from .parameters import Config, ConfigError, ConstraintViolation, derive_params, load_config
from .taylor_series import ResonantOrder, compute_series, series_to_csv

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", metavar="PATH", help="key = value config file")
    p.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")
    p.add_argument("--format", choices=("json", "csv"), default=None)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--quiet", action="store_true", help="machine output only on stdout")


def build_parser():
    ap = _Parser(prog="implode-cert", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("coeffs", help="sonic series coefficients U_0..U_N")
    _common(c)
    g = c.add_mutually_exclusive_group()
    g.add_argument("--limit-gamma", action="store_true", help="exact mode at gamma = ell**(-1/2)")
    g.add_argument("--kappa", type=float, help="float mode at the gamma with this kappa")
    c.add_argument("--N", type=int, default=500)
    c.add_argument("--dps", type=int, default=None)

    v = sub.add_parser("verify", help="exact induction checks and barrier certificates")
    _common(v)
    v.add_argument("which", choices=("induction", "barriers", "all"))
    v.add_argument("--N", type=int, default=None, help="series order (default n1 + 10)")

    s = sub.add_parser("shoot", aliases=["profile"], help="find kappa_n and build the global profile")
    _common(s)
    s.add_argument("--n", type=int, default=101)
    s.add_argument("--tol", type=float, default=1e-12)
    s.add_argument("--zmax", type=float, default=1e4)
    s.add_argument("--no-profile", action="store_true", help="stop after the shooting stage")
    return ap


# ------------------------------------------------------------------ helpers


class _Run:
    def __init__(self, args, argv):
        self.args = args
        self.argv = argv
        self.t0 = time.perf_counter()
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files = []

    def log(self, msg):
        if not self.args.quiet:
            print(msg, file=sys.stderr)

    def write(self, name, text):
        path = self.out / name
        path.write_text(text)
        self.files.append(name)
        return path

    def emit(self, obj):
        print(json.dumps(obj, indent=None if self.args.quiet else 2, default=str))

    def manifest(self, cfg, status):
        cfg_blob = json.dumps({"command": self.args.command, "config": cfg}, sort_keys=True, default=str)
        man = {
            "command": self.args.command,
            "argv": self.argv,
            "config": cfg,
            "config_sha256": hashlib.sha256(cfg_blob.encode()).hexdigest(),
            "status": status,
            "files": self.files,
            "wall_time_s": round(time.perf_counter() - self.t0, 3),
            "versions": _versions(),
        }
        (self.out / "manifest.json").write_text(json.dumps(man, indent=2, default=str) + "\n")


def _versions():
    import gmpy2
    import numpy
    import scipy

    return {"implode_cert": __version__, "python": platform.python_version(),
            "mpmath": mpmath.__version__, "gmpy2": gmpy2.version(),
            "numpy": numpy.__version__, "scipy": scipy.__version__}


def _base_config(args):
    if args.config:
        return load_config(args.config)
    return Config()


def _cfg_dict(cfg):
    return {k: getattr(cfg, k) for k in ("d", "p", "gamma_mode", "kappa", "gamma_num",
                                         "gamma_den", "dps", "C_kappa")}


# ------------------------------------------------------------------ commands


def cmd_coeffs(args, run):
    cfg = _base_config(args)
    if args.kappa is not None:
        cfg = Config(d=cfg.d, p=cfg.p, gamma_mode="kappa_target", kappa=args.kappa,
                     dps=args.dps or cfg.dps)
    elif args.limit_gamma:
        cfg = Config(d=cfg.d, p=cfg.p, dps=args.dps or cfg.dps)
    if args.N < 0:
        raise ConfigError("--N must be >= 0")
    params = derive_params(cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ser = compute_series(params, args.N)
    fmt = args.format or "csv"
    if fmt == "csv":
        path = run.write("coeffs.csv", series_to_csv(ser))
    else:
        from .scalar_kernel import field_to_str

        rows = [{"n": n, "U_n": field_to_str(u) if params.exact else mpmath.nstr(u, 17)}
                for n, u in enumerate(ser.U)]
        path = run.write("coeffs.json", json.dumps(rows, indent=1) + "\n")
    run.log(f"wrote {len(ser.U)} coefficients to {path}")
    run.emit({"rows": len(ser.U), "exact": params.exact, "file": str(path)})
    return EXIT_OK, _cfg_dict(cfg) | {"N": args.N}


def cmd_verify(args, run):
    cfg = _base_config(args)
    if cfg.gamma_mode != "exact_limit":
        raise ConfigError("verify needs the exact limit gamma")
    params = derive_params(cfg)
    if not params.exact:
        raise ConfigError("verify needs exact arithmetic")
    summary = {}
    ok = True
    if args.which in ("induction", "all"):
        from .induction_verifier import InductionParams, verify_all

        ip = InductionParams()
        N = args.N or ip.n1 + 10
        t = time.perf_counter()
        series = compute_series(params, N)
        rep, consts = verify_all(series, ip)
        body = rep.to_json(digits=40)
        body["series_time_s"] = round(time.perf_counter() - t - rep.wall_time, 3)
        body["constants"] = consts.to_json() if hasattr(consts, "to_json") else str(consts)
        run.write("induction_report.json", json.dumps(body, indent=2, default=str) + "\n")
        for c in rep.checks:
            run.log(f"{'PASS' if c.passed else 'FAIL'}  {c.name}")
        summary["induction"] = {"passed": rep.passed, "failures": [c.name for c in rep.failures()]}
        ok &= rep.passed
    if args.which in ("barriers", "all"):
        from .barrier_certifier import certify_all

        fb, certs, wall = certify_all(params)
        body = {"wall_time_s": round(wall, 4), "certificates": [c.to_json() for c in certs]}
        run.write("barrier_report.json", json.dumps(body, indent=2, default=str) + "\n")
        for c in certs:
            run.log(f"{'PASS' if c.passed else 'FAIL'}  {c.condition}: {c.verdict}")
        passed = all(c.passed for c in certs)
        summary["barriers"] = {"passed": passed, "count": len(certs),
                               "failures": [c.condition for c in certs if not c.passed]}
        ok &= passed
    run.emit(summary)
    return (EXIT_OK if ok else EXIT_FAIL), _cfg_dict(cfg) | {"which": args.which}


def cmd_shoot(args, run):
    from . import shooting_solver as ss

    if args.n % 2 == 0:
        raise ConfigError("n must be odd")
    cfg = _base_config(args)
    sc = ss.ShootConfig(n=args.n, d=cfg.d, p=cfg.p, tol=args.tol, workers=max(1, args.workers))
    stage = "shoot"
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = ss.find_kappa_auto(args.n, sc, log=run.log)
        run.write("shoot.json", res.dumps() + "\n")
        run.write("trajectory.csv", _traj_csv(res))
        summary = {"n": res.n, "kappa_star": mpmath.nstr(res.kappa_star, 30),
                   "kappa_star_hex": float(res.kappa_star).hex(), "g_star": float(res.g_star),
                   "glued_passed": res.glued["passed"] if res.glued else None}
        ok = abs(res.g_star) < sc.g_tol and (res.glued is None or res.glued["passed"])
        if not args.no_profile:
            from . import profile_builder as pb

            stage = "profile"
            prof = pb.build_profile(res, sc, zmax=args.zmax)
            run.write("profile.csv", prof.to_csv())
            run.write("profile.json", json.dumps(prof.to_json(), indent=2, default=str) + "\n")
            summary.update({"V_inf": prof.V_inf, "W_inf": prof.W_inf,
                            "a_exponent": prof.a_exponent, "markers": prof.markers})
            ok &= -1 < prof.V_inf < 1 and prof.W_inf > 0
        run.write("summary.json", json.dumps(summary, indent=2, default=str) + "\n")
        run.emit(summary)
    except (ss.IntegrationFailure, ss.NoBracket, RuntimeError) as exc:
        print(f"stage {stage} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL, {"n": args.n, "stage": stage}
    return (EXIT_OK if ok else EXIT_FAIL), _cfg_dict(cfg) | {"n": args.n, "tol": args.tol,
                                                            "zmax": args.zmax}


def _traj_csv(res):
    import csv
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["leg", "Y", "U"])
    for t, s in res.final.trajectory.nodes:
        w.writerow(["backward", mpmath.nstr(t, 17), mpmath.nstr(s[0], 17)])
    if res.forward_trajectory is not None:
        for t, s in res.forward_trajectory.nodes:
            w.writerow(["forward", mpmath.nstr(t, 17), mpmath.nstr(s[0], 17)])
    return buf.getvalue()


COMMANDS = {"coeffs": cmd_coeffs, "verify": cmd_verify, "shoot": cmd_shoot, "profile": cmd_shoot}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    run = _Run(args, argv)
    cfg = {}
    try:
        code, cfg = COMMANDS[args.command](args, run)
    except (ConfigError, ConstraintViolation, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        code = EXIT_CONFIG
    except ResonantOrder as exc:
        print(f"resonant order: {exc}", file=sys.stderr)
        code = EXIT_CONFIG
    run.manifest(cfg, {EXIT_OK: "ok", EXIT_FAIL: "failed", EXIT_CONFIG: "config-error"}[code])
    return code


if __name__ == "__main__":
    sys.exit(main())
