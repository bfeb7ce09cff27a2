"""``levisim`` command line: derive | rates | expand | scan | simulate.

Scalars and reports go out as JSON, curves as CSV. Every output carries a run
manifest (embedded in JSON, or written next to a CSV as ``<file>.manifest.json``).

Exit status: 0 success, 1 invalid input, 2 numerical-consistency failure.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from levisim import __version__, gaussian, protocol, rates, wavesim
from levisim.params import ConfigError, ExperimentConfig, derive, fig2_config, load_config

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else ("inf" if value > 0 else "-inf" if value < 0 else "nan")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def manifest(config: ExperimentConfig, argv: list[str], detector: bool = True) -> dict:
    return {
        "tool": "levisim",
        "version": __version__,
        "config_sha256": config.digest(),
        "argv": list(argv),
        "interpretation": {
            "omega_in_t1": protocol.OMEGA_READING,
            "csl_shape": rates.CSL_SHAPE_MODE,
            "detector_kernel": wavesim.DETECTOR_KERNEL if detector else "none",
            "thermal_velocity": (
                "configured" if config.environment.thermal_velocity is not None else "sqrt(3 k_B T_e / m_a)"
            ),
            "kappa_mirror": "pi c / (2 L F)",
            "mode_volume": "pi/4 w^2 L",
            "tau_gamma_band": [1 / protocol.TAU_GAMMA_BAND, protocol.TAU_GAMMA_BAND],
        },
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


def _sidecar(config: ExperimentConfig, meta: dict) -> dict:
    return {"manifest": meta, "config": config.to_dict()}


def _emit_json(payload: dict, out: str | None) -> None:
    text = json.dumps(_jsonable(payload), indent=2)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _emit_csv(columns, rows, out: str | None, meta: dict) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    if out:
        Path(out).write_text(buf.getvalue())
        Path(out + ".manifest.json").write_text(json.dumps(_jsonable(meta), indent=2) + "\n")
    else:
        sys.stdout.write(buf.getvalue())


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _config(args) -> ExperimentConfig:
    return load_config(Path(args.config)) if args.config else fig2_config()


def cmd_derive(args, argv) -> int:
    cfg = _config(args)
    dq = derive(cfg)
    payload = {
        "manifest": manifest(cfg, argv),
        "config": cfg.to_dict(),
        "derived": dq.as_dict(),
        "thermal_velocity": cfg.environment.mean_velocity,
        "kappa_mirror_over_2pi_hz": dq.kappa_mirror / (2 * math.pi),
    }
    _emit_json(payload, args.out)
    return EXIT_OK


def cmd_rates(args, argv) -> int:
    cfg = _config(args)
    dq = derive(cfg)
    loc = rates.localization_rates(cfg, dq)
    plan = protocol.plan_pulse(cfg, dq, loc, strict=False)
    n_ph = args.nph if args.nph is not None else plan.n_ph
    sigma = args.sigma if args.sigma is not None else plan.sigma
    cr = rates.coupling_rates(dq, n_ph, sigma)
    loc = rates.localization_rates(cfg, dq, n_ph)
    n_floor, resolved = rates.cooling_occupation(dq, cr.C_l)
    payload = {
        "manifest": manifest(cfg, argv),
        "config": cfg.to_dict(),
        "inputs": {"n_ph": n_ph, "sigma": sigma},
        "coupling": cr.as_dict(),
        "localization": loc.as_dict(),
        "cooling": {"n_bar_floor": n_floor, "resolved_sideband": resolved, "n_bar_configured": cfg.trap.occupation},
        "kappa": {"mirror": dq.kappa_mirror, "scattering": dq.kappa_sc, "total": dq.kappa},
        "formulas": rates.FORMULAS,
    }
    _emit_json(payload, args.out)
    return EXIT_OK


def cmd_expand(args, argv) -> int:
    cfg = _config(args)
    dq = derive(cfg)
    loc = rates.localization_rates(cfg, dq)
    state = gaussian.initial_state(dq, cfg.trap.occupation)
    rows = []
    for t, s in gaussian.trajectory(state, np.linspace(0.0, args.t, args.points), loc.Lambda_sd):
        rows.append((t, s.vx, s.vp, s.cxp, gaussian.coherence_length(s)))
    _emit_csv(("t", "vx", "vp", "cxp", "xi_l"), rows, args.out, _sidecar(cfg, manifest(cfg, argv)))
    return EXIT_OK


def _jobs(args) -> int:
    if args.jobs is not None:
        return max(1, args.jobs)
    env = os.environ.get("LEVISIM_JOBS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        raise UsageError(f"LEVISIM_JOBS must be an integer, got {env!r}") from None


def cmd_scan(args, argv) -> int:
    cfg = _config(args)
    if args.csl_factor is not None:
        cfg = cfg.with_protocol(csl_factor=args.csl_factor)
    if args.points < 0 or args.dmin_nm <= 0 or args.dmax_nm < args.dmin_nm:
        raise UsageError("need 0 < --dmin-nm <= --dmax-nm and --points >= 0")
    grid = protocol.diameter_grid(args.dmin_nm * 1e-9, args.dmax_nm * 1e-9, args.points)
    rows = protocol.scan_regime(cfg, grid, jobs=_jobs(args))
    meta = manifest(cfg, argv)
    records = [row.as_record() for row in rows]
    if args.format == "json":
        _emit_json({"manifest": meta, "config": cfg.to_dict(), "rows": records}, args.out)
    else:
        table = [[r[c] for c in protocol.SCAN_COLUMNS] for r in records]
        _emit_csv(protocol.SCAN_COLUMNS, table, args.out, _sidecar(cfg, meta))
    return EXIT_OK


def cmd_simulate(args, argv) -> int:
    cfg = _config(args)
    changes = {}
    if args.d_over_D is not None:
        changes.update(d_over_D=args.d_over_D, separation=None)
    if args.csl_factor is not None:
        changes["csl_factor"] = args.csl_factor
    if changes:
        cfg = cfg.with_protocol(**changes)
    result = wavesim.simulate_protocol(cfg, force=args.force, detector=not args.no_detector)
    meta = manifest(cfg, argv, detector=not args.no_detector)
    if args.out:
        x = result.grid.x
        rows = zip(x, result.ideal.q, result.standard.q, result.csl.q)
        _emit_csv(("x", "q_ideal", "q_standard", "q_csl"), rows, args.out, _sidecar(cfg, meta))
    _emit_json({"manifest": meta, "config": cfg.to_dict(), **result.summary()}, None)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="levisim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"levisim {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="TOML config (default: bundled fig2 parameters)")
        p.add_argument("--out", help="output file (default: stdout)")

    p = sub.add_parser("derive", help="derived static quantities as JSON")
    common(p)
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("rates", help="couplings and localization rates as JSON")
    common(p)
    p.add_argument("--nph", type=float, help="intracavity photons (default: planned)")
    p.add_argument("--sigma", type=float, help="wavepacket width in m (default: planned)")
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("expand", help="moment trajectory of the free expansion as CSV")
    common(p)
    p.add_argument("--t", type=float, required=True, help="final time in s")
    p.add_argument("--points", type=int, default=101)
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("scan", help="operational regime over sphere diameters")
    common(p)
    p.add_argument("--dmin-nm", type=float, default=protocol.DEFAULT_SCAN[0] * 1e9)
    p.add_argument("--dmax-nm", type=float, default=protocol.DEFAULT_SCAN[1] * 1e9)
    p.add_argument("--points", type=int, default=protocol.DEFAULT_SCAN[2])
    p.add_argument("--csl-factor", type=float, help="lambda / lambda_0")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--jobs", type=int, help="worker processes (env LEVISIM_JOBS)")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("simulate", help="interference patterns (CSV) and fringe report (JSON)")
    common(p)
    p.add_argument("--d-over-D", dest="d_over_D", type=float, help="slit separation in sphere diameters")
    p.add_argument("--csl-factor", type=float, help="lambda / lambda_0")
    p.add_argument("--no-detector", action="store_true", help="skip the detector-resolution smear")
    p.add_argument("--force", action="store_true", help="run outside the operational window")
    p.set_defaults(func=cmd_simulate)
    return parser


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_help(sys.stderr)
            return EXIT_INVALID
        return args.func(args, argv)
    except (UsageError, ConfigError, ValueError) as exc:
        print(f"levisim: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (protocol.PlanningError, wavesim.GridError, wavesim.MeasurementError) as exc:
        print(f"levisim: numerical consistency failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"levisim: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
