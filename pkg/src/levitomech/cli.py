"""Command-line driver: ``levitomech <subcommand> [options]``.

Every run writes its data files and a ``manifest.json`` into ``--out-dir``.
Exit codes: 0 success, 2 invalid configuration or domain, 3 numerical
convergence failure, 64 usage error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from . import absorb, dynamics, elasticity, fock, params, photon, teleport, tomography
from .errors import ConfigError, ConvergenceError, DomainError

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_USAGE = 0, 2, 3, 64

SUBCOMMANDS = ("params", "sweep", "cool", "photon", "absorb", "teleport", "tof", "elastic")

SCHEMAS: dict[str, dict[str, dict[str, str]]] = {
    "params": {"derived.json": {"<field>": "derived parameter; complex values as [re, im]",
                                "units": "SI unit label per field"}},
    "sweep": {"sweep.csv": {"radius_m": "sphere radius (m)",
                            "kappa_sc_over_kappa": "scattering loss over cavity decay",
                            "n_M": "minimal phonon number",
                            "gamma_sc_rad_s": "recoil heating rate (rad/s)",
                            "g0_rad_s": "single-photon coupling (rad/s)"}},
    "cool": {"cool.csv": {"t": "time (1/kappa)", "tr": "trace of rho", "n_a": "photon number",
                          "n_b": "phonon number", "purity": "tr rho^2"}},
    "photon": {"photon.csv": {"t": "time (1/kappa)", "n_b": "phonon population",
                              "n_a": "cavity photon population"}},
    "absorb": {"absorb.csv": {"t": "time (1/kappa)", "g_over_kappa": "coupling schedule",
                              "abs_b": "|<b>| for the superposition input"}},
    "teleport": {"teleport.json": {"g": "coupling", "kappa": "cavity decay", "t": "drive time",
                                   "r": "squeezing parameter", "F_analytic": "fidelity formula",
                                   "F_simulated": "Monte Carlo fidelity",
                                   "F_stderr": "one-sigma statistical error"}},
    "tof": {"tof_data.csv": {"theta_rad": "quadrature angle (rad)",
                             "x": "quadrature sample (dimensionless)"},
            "wigner.csv": {"x": "position quadrature", "p": "momentum quadrature",
                           "W": "reconstructed Wigner function"}},
    "elastic": {"elastic.csv": {"n": "mode index", "omega_n": "mode frequency (rad/s)",
                                "gamma_n": "centre-of-mass coupling (rad/s)"}},
}

# per-subcommand options: name -> (type, default, help)
OPTIONS: dict[str, dict[str, tuple[Callable, Any, str]]] = {
    "params": {"rn": (bool, False, "apply the depolarization renormalization")},
    "sweep": {"r_min": (float, 50e-9, "smallest radius (m)"),
              "r_max": (float, 300e-9, "largest radius (m)"),
              "steps": (int, 251, "number of radii")},
    "cool": {"hamiltonian": (str, "full", "red, blue or full"),
             "dim_b": (int, 10, "phonon cutoff"), "dim_a": (int, 4, "photon cutoff"),
             "omega_t": (float, 10.0, "trap frequency (units of kappa)"),
             "g": (float, 0.1, "coupling (units of kappa)"),
             "kappa": (float, 1.0, "cavity amplitude decay rate"),
             "gamma_sc": (float, 0.0, "recoil heating rate"),
             "n_initial": (float, 0.3, "initial thermal phonon number"),
             "t_final": (float, 200.0, "integration time"),
             "samples": (int, 201, "output rows")},
    "photon": {"g_over_kappa": (float, 1.0, "coupling over kappa"),
               "sigma": (float, 5.6, "pulse width (units of kappa)"),
               "xin": (float, 5.0, "pulse centre (units of 1/kappa)"),
               "omega_t": (float, 10.0, "trap frequency (units of kappa)"),
               "t_max": (float, 12.0, "end time (units of 1/kappa)"),
               "samples": (int, 601, "output rows")},
    "absorb": {"sigma": (float, 2 / 3, "pulse width (units of kappa)"),
               "xin": (float, 10.0, "pulse centre (units of 1/kappa)"),
               "omega_t": (float, 10.0, "detuning and carrier (units of kappa)"),
               "g_min": (float, 1e-6, "coupling imposed at the window start (units of kappa)"),
               "samples": (int, 601, "output rows")},
    "teleport": {"g": (float, 0.1, "coupling"), "kappa": (float, 1.0, "cavity decay"),
                 "t": (float, 50.0, "drive time"), "state": (str, "coherent:0.5", "input state"),
                 "dim": (int, 12, "input cutoff"), "shots": (int, 10000, "Bell outcomes"),
                 "relation": (str, "cosh", "squeezing relation: cosh or standard"),
                 "dump_state": (bool, False, "also write the averaged output state")},
    "tof": {"state": (str, "fock1", "vac, fock1, sup, fock:<n> or coherent:<a>"),
            "dim": (int, 10, "state cutoff"), "angles": (int, 40, "release times"),
            "shots": (int, 5000, "shots per angle"), "dz": (float, 0.0, "resolution (m)"),
            "t_f": (float, 0.05, "detection time (s)"),
            "cutoff": (float, 4.0, "filter frequency cutoff"),
            "grid": (int, 81, "Wigner grid points per axis"),
            "extent": (float, 5.0, "Wigner grid half-width"),
            "accept_infeasible": (bool, False, "sample even when the plan is infeasible"),
            "include_position": (bool, False, "keep the release-position term")},
    "elastic": {"n_max": (int, 20, "number of modes"),
                "occupation": (float, 0.0, "thermal occupation of every mode")},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="levitomech", description="Levitated-nanosphere optomechanics toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None, help="JSON configuration file")
        p.add_argument("--seed", type=int, default=None, help="master seed")
        p.add_argument("--out-dir", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--format", choices=("csv", "json"), default="csv",
                       help="format of tabular outputs")
        p.add_argument("--schema", action="store_true", help="print output columns and exit")
        for opt, (typ, _, help_) in OPTIONS[name].items():
            if typ is bool:
                p.add_argument(_flag(opt), dest=opt, action="store_const", const=True,
                               default=None, help=help_)
            else:
                p.add_argument(_flag(opt), dest=opt, type=typ, default=None, help=help_)
    return parser


def load_config(path: Path | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    fields = set(params.PhysicalConfig.__dataclass_fields__)
    out: dict[str, Any] = {"physical": dict(doc.get("physical", {}))}
    for key, val in doc.items():
        if key == "physical":
            continue
        if key in SUBCOMMANDS:
            if not isinstance(val, dict):
                raise ConfigError(f"section {key!r} must be an object")
            unknown = set(val) - set(OPTIONS[key]) - {"seed"}
            if unknown:
                raise ConfigError(f"unknown keys in section {key!r}: {sorted(unknown)}")
            out[key] = val
        elif key in fields:
            out["physical"][key] = val
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return out


def _canonical(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def _physical(cfg: dict[str, Any]) -> params.PhysicalConfig:
    return params.PhysicalConfig.from_mapping(cfg.get("physical", {}))


def _parse_state(spec: str, dim: int) -> np.ndarray:
    spec = spec.strip().lower()
    if spec in ("vac", "vacuum"):
        return fock.fock(0, dim)
    if spec == "fock1":
        return fock.fock(1, dim)
    if spec == "sup":
        return fock.normalize(fock.fock(0, dim) + fock.fock(1, dim))
    kind, _, arg = spec.partition(":")
    try:
        if kind == "fock":
            return fock.fock(int(arg), dim)
        if kind == "coherent":
            return fock.coherent(complex(arg.replace("i", "j")), dim)
    except ValueError as exc:
        raise ConfigError(f"cannot parse state {spec!r}") from exc
    raise ConfigError(f"unknown state {spec!r}")


class Writer:
    def __init__(self, out_dir: Path, fmt: str):
        self.out_dir = out_dir
        self.fmt = fmt
        self.files: list[str] = []

    def table(self, stem: str, header: Sequence[str], rows) -> str:
        rows = [tuple(r) for r in rows]
        if self.fmt == "csv":
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([repr(float(v)) if isinstance(v, float) else v for v in r])
            name, text = f"{stem}.csv", buf.getvalue()
        else:
            name = f"{stem}.json"
            text = json.dumps({"columns": list(header), "rows": [list(r) for r in rows]},
                              sort_keys=True) + "\n"
        return self._write(name, text)

    def json(self, name: str, doc: Any) -> str:
        return self._write(name, json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n")

    def _write(self, name: str, text: str) -> str:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / name).write_text(text)
        self.files.append(name)
        return name


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _thin(n_total: int, n_keep: int) -> np.ndarray:
    return np.unique(np.linspace(0, n_total - 1, max(min(n_keep, n_total), 2)).round().astype(int))


def run_params(opts, cfg, seed, w: Writer) -> dict:
    dp = params.derive(_physical(cfg))
    if opts["rn"]:
        dp = params.apply_rn(dp)
    doc = dp.to_dict()
    rate, n0, n_m = params.cooling_figures(dp)
    doc["cooling"] = {"gamma_minus": rate, "n_M0": n0, "n_M": n_m}
    doc["displacement_residuals"] = list(params.displacement_residuals(dp))
    w.json("derived.json", doc)
    return {"n_M": n_m}


def run_sweep(opts, cfg, seed, w: Writer) -> dict:
    rows = params.sweep_radius(_physical(cfg), opts["r_min"], opts["r_max"], opts["steps"])
    w.table("sweep", params.SWEEP_HEADER,
            ((r.radius, r.kappa_ratio, r.min_phonons, r.recoil_heating, r.single_photon_coupling)
             for r in rows))
    radii = [r.radius for r in rows]
    summary = {"kappa_sc_crossing_m": params.crossing(radii, [r.kappa_ratio for r in rows]),
               "n_M_crossing_m": params.crossing(radii, [r.min_phonons for r in rows])}
    w.json("sweep_summary.json", summary)
    return summary


def run_cool(opts, cfg, seed, w: Writer) -> dict:
    model = dynamics.LindbladModel(opts["dim_b"], opts["dim_a"], opts["hamiltonian"], opts["g"],
                                   opts["omega_t"], opts["kappa"], gamma_sc=opts["gamma_sc"])
    rho0 = np.kron(fock.thermal(opts["n_initial"], model.dim_b),
                   fock.dm(fock.fock(0, model.dim_a)))
    t_eval = np.linspace(0, opts["t_final"], opts["samples"])
    traj = dynamics.evolve(rho0, model, opts["t_final"], t_eval=t_eval)
    w.table("cool", traj.CSV_HEADER, traj.rows())
    rho_ss = dynamics.steady_state_direct(model)
    n_b_op = dynamics.operators(model)["n_b"]
    summary = {"model": model.to_dict(), "cooling_rate": dynamics.cooling_rate(model),
               "n_steady": float(np.trace(n_b_op @ rho_ss).real),
               "sideband_limit": dynamics.sideband_limit(2 * model.kappa, model.omega_t),
               "error_bound": traj.error_bound}
    w.json("cool_summary.json", summary)
    return summary


def run_photon(opts, cfg, seed, w: Writer) -> dict:
    kappa = 1.0
    pulse = photon.gaussian_pulse(opts["omega_t"], opts["sigma"], opts["xin"])
    traj = photon.run(pulse, opts["g_over_kappa"] * kappa, kappa, opts["omega_t"], opts["t_max"])
    idx = _thin(len(traj.t), opts["samples"])
    w.table("photon", traj.CSV_HEADER,
            zip(traj.t[idx].tolist(), traj.n_b[idx].tolist(), traj.n_a[idx].tolist()))
    k = int(np.argmax(traj.n_b))
    t_h = photon.t_hold(opts["g_over_kappa"] * kappa, kappa, opts["xin"])
    summary = {"max_n_b": float(traj.n_b[k]), "t_max_n_b": float(traj.t[k]), "t_h": t_h,
               "n_a_at_t_h": float(np.interp(t_h, traj.t, traj.n_a)),
               "oracle_deviation": traj.oracle_deviation,
               "grid_norm_error": traj.grid_norm_error}
    w.json("photon_summary.json", summary)
    return summary


def run_absorb(opts, cfg, seed, w: Writer) -> dict:
    kappa = 1.0
    pulse = photon.gaussian_pulse(opts["omega_t"], opts["sigma"], opts["xin"])
    sched = absorb.solve_g(pulse, kappa, opts["omega_t"], g_min=opts["g_min"] * kappa)
    half = 1 / math.sqrt(2)
    traj = absorb.simulate_means(sched, weights=(half, half))
    idx = _thin(len(sched.t), opts["samples"])
    w.table("absorb", sched.CSV_HEADER,
            zip(sched.t[idx].tolist(), (sched.g[idx] / kappa).tolist(),
                np.abs(traj.b[idx]).tolist()))
    summary = {"final_abs_b": float(abs(traj.b[-1])), "residual": sched.residual,
               "reflected_fraction": absorb.absorption_residual(sched, traj),
               "clipped": sched.clipped, "max_g": float(sched.g.max())}
    w.json("absorb_summary.json", summary)
    return summary


def run_teleport(opts, cfg, seed, w: Writer) -> dict:
    if opts["shots"] < 1:
        raise ConfigError("shots must be positive")
    plan = teleport.make_plan(opts["g"], opts["kappa"], opts["t"], relation=opts["relation"])
    psi = _parse_state(opts["state"], opts["dim"])
    res = teleport.teleport(psi, plan.r, opts["shots"], seed)
    n_b, _, _ = teleport.squeezing(opts["g"], opts["kappa"], opts["t"], opts["relation"])
    report = {"g": plan.g, "kappa": plan.kappa, "t": plan.t, "r": plan.r, "n_b": n_b,
              "F_analytic": plan.fidelity, "F_simulated": res.fidelity,
              "F_stderr": res.stderr, "shots": res.shots, "seed": seed, "state": opts["state"]}
    w.json("teleport.json", report)
    if opts["dump_state"]:
        w.json("teleport_state.json", fock.to_json(res.rho))
    return report


def run_tof(opts, cfg, seed, w: Writer) -> dict:
    if opts["shots"] < 1:
        raise ConfigError("shots must be positive")
    if opts["angles"] < 1:
        raise ConfigError("need at least one angle")
    dp = params.derive(_physical(cfg))
    psi = _parse_state(opts["state"], opts["dim"])
    plan = tomography.half_period_plan(dp.trap_freq, dp.mass, dp.zero_point_momentum,
                                       opts["angles"], opts["t_f"], dz=opts["dz"],
                                       shots=opts["shots"])
    data = tomography.sample(psi, plan, seed, accept_infeasible=opts["accept_infeasible"],
                             include_position=opts["include_position"])
    w.table("tof_data", data.CSV_HEADER, data.rows())
    grid = np.linspace(-opts["extent"], opts["extent"], opts["grid"])
    rec = tomography.reconstruct(data, grid, grid, cutoff=opts["cutoff"])
    w.table("wigner", ("x", "p", "W"), rec.rows())
    truth = fock.wigner(fock.dm(psi), grid, grid)
    summary = {"feasibility": plan.feasibility(),
               "max_abs_error": float(np.abs(rec.w - truth).max()),
               "max_abs_w": float(np.abs(truth).max()),
               "fidelity": tomography.overlap_fidelity(rec, psi),
               "min_w": float(rec.w.min()), "stat_error": rec.stat_error,
               "negativity_detected": rec.negativity_detected()}
    w.json("tof_summary.json", summary)
    return summary


def run_elastic(opts, cfg, seed, w: Writer) -> dict:
    dp = params.derive(_physical(cfg))
    occ = None if not opts["occupation"] else (opts["occupation"],) * opts["n_max"]
    model = elasticity.from_derived(dp, opts["n_max"], occ)
    coup = elasticity.couplings(model, elasticity.StandingWave.from_derived(dp),
                                dp.zero_point_length)
    ren = elasticity.trap_renormalization(model, coup.gamma)
    w.table("elastic", coup.CSV_HEADER,
            zip(model.n.tolist(), model.omega.tolist(), coup.gamma.tolist()))
    summary = {"model": model.to_dict(), "ratio_sq": ren.ratio_sq, "correction": ren.correction,
               "tail_ratio": ren.tail_ratio, "scale_separation": ren.scale_separation,
               "quadrature_error": coup.quadrature_error}
    w.json("elastic_summary.json", summary)
    return summary


RUNNERS = {"params": run_params, "sweep": run_sweep, "cool": run_cool, "photon": run_photon,
           "absorb": run_absorb, "teleport": run_teleport, "tof": run_tof,
           "elastic": run_elastic}


def _resolve(name: str, args: argparse.Namespace, cfg: dict) -> dict[str, Any]:
    section = cfg.get(name, {})
    opts = {}
    for opt, (typ, default, _) in OPTIONS[name].items():
        val = getattr(args, opt)
        if val is None:
            val = section.get(opt, default)
        try:
            opts[opt] = typ(val) if typ is not bool else bool(val)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"option {opt!r} has invalid value {val!r}") from exc
    return opts


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"levitomech: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    name = args.subcommand
    if args.schema:
        print(json.dumps(SCHEMAS[name], indent=2, sort_keys=True))
        return EXIT_OK
    try:
        cfg = load_config(args.config)
        opts = _resolve(name, args, cfg)
        seed = args.seed if args.seed is not None else int(cfg.get(name, {}).get("seed", 0))
        writer = Writer(args.out_dir, args.format)
        RUNNERS[name](opts, cfg, seed, writer)
    except (ConfigError, DomainError) as exc:
        print(f"levitomech: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"levitomech: convergence error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    manifest = {"subcommand": name, "config": None if args.config is None else str(args.config),
                "seed": seed, "out_dir": str(args.out_dir), "format": args.format,
                "version": __version__,
                "config_sha256": hashlib.sha256(_canonical(cfg).encode()).hexdigest(),
                "options": opts, "files": writer.files}
    writer.json("manifest.json", manifest)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
