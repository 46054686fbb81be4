"""Command-line entry point.

Exit codes: 0 success, 1 config error, 2 numerical failure, 3 partial run
(some grid points failed; see the manifest). Set QSL_LOG=debug|info|warning
for progress logging on stderr.
"""

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import core, dynamics, experiments, moyal, spectrum, steadystate, wigner
from .dynamics import SLParams
from .exceptions import ConfigError, QslError
from .experiments import fmt_float

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_PARTIAL = 3


class _Parser(argparse.ArgumentParser):
    # argparse's default error path exits with status 2, which this tool
    # reserves for numerical failures; route usage errors to ConfigError.
    def error(self, message):
        raise ConfigError(message)


def _setup_logging():
    level_name = os.environ.get("QSL_LOG", "").strip()
    level = getattr(logging, level_name.upper(), None) if level_name else logging.WARNING
    if level is None:
        level = logging.WARNING
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _parse_params(text):
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError(f"--params expects 'kappa1,gamma1,gamma2', got {text!r}")
    try:
        k1, g1, g2 = (float(s) for s in parts)
    except ValueError:
        raise ConfigError(f"--params expects three numbers, got {text!r}") from None
    return SLParams(k1, g1, g2)


def _parse_state(text):
    return core.parse_state_spec(text)


def _state_dim(spec, dim, cap=80):
    if dim:
        return dim
    n = max(experiments._state_need(spec), 8)
    while n <= cap:
        try:
            core.make_state(spec, n)
            return n
        except QslError:
            n += 6
    raise ConfigError(f"state needs a truncation above {cap}; pass --dim explicitly")


def _build_parser():
    parser = _Parser(prog="qsl",
                     description="Quantum Stuart-Landau oscillator laboratory")
    common = _Parser(add_help=False)
    common.add_argument("--seedless", action="store_true",
                        help="accepted for interface stability; every computation "
                             "here is deterministic and uses no RNG")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common],
                       help="run a configured experiment")
    p.add_argument("--config", required=True, help="experiment config (TOML)")
    p.add_argument("--out", default=None, help="output directory override")
    p.add_argument("--workers", type=int, default=None, help="worker count override")

    p = sub.add_parser("validate", parents=[common],
                       help="check a config and report estimated cost")
    p.add_argument("--config", required=True)

    p = sub.add_parser("derive-eom", parents=[common],
                       help="derive the phase-space evolution operator symbolically")
    p.add_argument("--json", default=None, metavar="FILE",
                   help="also write the term list as JSON")
    p.add_argument("--latex", default=None, metavar="FILE",
                   help="also write a LaTeX rendering")

    p = sub.add_parser("steady-state", parents=[common],
                       help="steady-state populations and derived scalars")
    p.add_argument("--params", required=True, metavar="K1,G1,G2")
    p.add_argument("--dim", type=int, default=0, help="truncation (0 = automatic)")
    p.add_argument("--out", default=None, metavar="FILE",
                   help="write populations CSV (n, p)")

    p = sub.add_parser("spectrum", parents=[common],
                       help="Liouvillian eigenvalues and gap")
    p.add_argument("--params", required=True, metavar="K1,G1,G2")
    p.add_argument("--dim", type=int, default=0)
    p.add_argument("--out", default=None, metavar="FILE",
                   help="write eigenvalue CSV (j, re_lambda, im_lambda)")
    p.add_argument("--leading", type=int, default=10,
                   help="eigenvalues to print (default 10)")

    p = sub.add_parser("evolve", parents=[common],
                       help="integrate the master equation from an initial state")
    p.add_argument("--params", required=True, metavar="K1,G1,G2")
    p.add_argument("--state", required=True, metavar="SPEC",
                   help="e.g. fock:2, thermal:1.5, coherent:1+1j, cat:2, "
                        "superpos:0=1,3=0.5")
    p.add_argument("--t-end", type=float, required=True)
    p.add_argument("--dim", type=int, default=0)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out", default=None, metavar="FILE",
                   help="write trajectory CSV (t, re_a, im_a, n, pair)")

    p = sub.add_parser("wigner", parents=[common],
                       help="phase-space function of a state on a square grid")
    p.add_argument("--state", required=True, metavar="SPEC")
    p.add_argument("--dim", type=int, default=0)
    p.add_argument("--points", type=int, default=201)
    p.add_argument("--half-width", type=float, default=0.0, help="0 = automatic")
    p.add_argument("--out", required=True, metavar="FILE",
                   help="long-format CSV (x, p, w); a JSON sidecar records "
                        "extent, resolution, and integral checks")

    p = sub.add_parser("negvol", parents=[common],
                       help="negative volume of a state's phase-space function")
    p.add_argument("--state", required=True, metavar="SPEC")
    p.add_argument("--dim", type=int, default=0)
    p.add_argument("--points", type=int, default=201)
    p.add_argument("--half-width", type=float, default=0.0)
    return parser


def _cmd_run(args):
    cfg = experiments.load_config(args.config)
    manifest = experiments.run_experiment(cfg, out_dir=args.out, workers=args.workers)
    out = Path(args.out if args.out is not None else cfg.out)
    print(f"{cfg.kind}: {len(manifest['files'])} files in {out}")
    if manifest["failures"]:
        print(f"{len(manifest['failures'])} point(s) failed; see manifest.json",
              file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _cmd_validate(args):
    report = experiments.validate_config(experiments.load_config(args.config))
    for line in report.lines():
        print(line)
    return EXIT_OK if report.ok else EXIT_CONFIG


def _cmd_derive_eom(args):
    op = moyal.derive_qsl_operator()
    print(moyal.render_text(op))
    if args.json:
        Path(args.json).write_text(
            json.dumps(moyal.render_json(op), indent=2, sort_keys=True) + "\n")
    if args.latex:
        Path(args.latex).write_text(moyal.render_latex(op) + "\n")
    return EXIT_OK


def _cmd_steady_state(args):
    params = _parse_params(args.params)
    params.require_two_photon()
    dim = args.dim or steadystate.n_hi_analytic(params) + 10
    ss = steadystate.steady_state_numeric(params, dim)
    print(f"dim = {dim}")
    print(f"energy = {fmt_float(ss.energy)}")
    print(f"n_hi = {ss.n_hi}")
    if ss.r_classical is not None:
        print(f"r_classical = {fmt_float(ss.r_classical)}")
        print(f"ratio = {fmt_float(ss.ratio)}")
    else:
        print("at or below the bifurcation: no classical limit cycle")
    if args.out:
        experiments.write_csv(args.out, ("n", "p"), list(enumerate(ss.populations)))
        print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_spectrum(args):
    params = _parse_params(args.params)
    if args.dim:
        dim = args.dim
    else:
        dim = 20
        if params.gamma2 > 0:
            dim = min(steadystate.n_hi_analytic(params) + 10, spectrum.DIM_CAP)
    res = spectrum.spectrum(params, dim)
    print(f"dim = {dim}")
    print(f"gap = {fmt_float(res.gap)}")
    if res.n_hi is not None:
        print(f"n_hi = {res.n_hi} ({'adequate' if res.valid else 'exceeds dim'})")
    for j in range(min(args.leading, len(res.eigenvalues))):
        lam = res.eigenvalues[j]
        print(f"lambda_{j} = {fmt_float(lam.real)} {lam.imag:+.12g}i")
    if args.out:
        experiments.write_csv(args.out, ("j", "re_lambda", "im_lambda"),
                              [(j, lam.real, lam.imag)
                               for j, lam in enumerate(res.eigenvalues)])
        print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_evolve(args):
    params = _parse_params(args.params)
    spec = _parse_state(args.state)
    if args.dim:
        dim = args.dim
    elif params.gamma2 > 0:
        dim = experiments._auto_dim(params, 10, (spec,))
    else:
        dim = _state_dim(spec, 0)
    rho0 = core.make_state(spec, dim)
    if args.samples < 1:
        raise ConfigError("--samples must be >= 1")
    traj = dynamics.evolve(params, rho0, args.t_end, tol=args.tol,
                           sample_every=args.t_end / args.samples
                           if args.t_end > 0 else None)
    print(f"dim = {dim}, samples = {len(traj.times)}")
    final = traj.final_state
    print(f"final n = {fmt_float(np.real(np.trace(core.number(dim) @ final)))}")
    if args.out:
        rows = [(traj.times[k], traj.exp_a[k].real, traj.exp_a[k].imag,
                 traj.exp_n[k], traj.exp_pair[k]) for k in range(len(traj.times))]
        experiments.write_csv(args.out, ("t", "re_a", "im_a", "n", "pair"), rows)
        print(f"wrote {args.out}")
    return EXIT_OK


def _wigner_grid_of_state(args):
    spec = _parse_state(args.state)
    dim = _state_dim(spec, args.dim)
    rho = core.make_state(spec, dim)
    energy = float(np.real(np.diag(rho)) @ np.arange(dim))
    half = args.half_width or math.sqrt(2.0 * (energy + 1.0)) + experiments.GRID_MARGIN
    grid = wigner.phase_grid(half_width=half, points=args.points)
    return wigner.wigner_of_rho(rho, grid), dim


def _cmd_wigner(args):
    wg, dim = _wigner_grid_of_state(args)
    rows = ((x, p, wg.values[j, k]) for j, x in enumerate(wg.x)
            for k, p in enumerate(wg.p))
    experiments.write_csv(args.out, ("x", "p", "w"), rows)
    rep = wigner.negative_volume(wg)
    integral = float(np.trapezoid(np.trapezoid(np.real(wg.values), dx=wg.dp, axis=1),
                                  dx=wg.dx))
    sidecar = {
        "dim": dim,
        "half_width": float(wg.x[-1]),
        "points": int(wg.x.size),
        "integral": integral,
        "negative_volume": rep.volume,
        "negative_volume_error": rep.error_estimate,
    }
    Path(str(args.out) + ".json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    print(f"wrote {args.out} ({wg.x.size}x{wg.p.size}, integral "
          f"{fmt_float(integral)})")
    return EXIT_OK


def _cmd_negvol(args):
    wg, dim = _wigner_grid_of_state(args)
    rep = wigner.negative_volume(wg)
    print(f"dim = {dim}")
    print(f"V = {fmt_float(rep.volume)}")
    print(f"error_estimate = {fmt_float(rep.error_estimate)}")
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "validate": _cmd_validate,
    "derive-eom": _cmd_derive_eom,
    "steady-state": _cmd_steady_state,
    "spectrum": _cmd_spectrum,
    "evolve": _cmd_evolve,
    "wigner": _cmd_wigner,
    "negvol": _cmd_negvol,
}


def main(argv=None):
    _setup_logging()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except QslError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
