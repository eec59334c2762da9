"""``laplab`` command-line front end.

Every run writes its payload files plus ``manifest.json`` into one output
directory. Exit codes: 0 success, 2 configuration error, 3 numerical guard,
4 non-convergence, 1 anything else raised by the library.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import COMMANDS, SCHEMAS, COMMON, RunConfig, parse_config, OUTPUT_ROOT_ENV
from .conformal import PolyMap, Trajectory, area, boundary_points, harmonic_moments_exact, min_abs_derivative
from .errors import ConfigError, ConvergenceError, DomainError, LaplabError, NumericalGuardError
from .output import OutputDir, environment, json_text, svg_polylines


@dataclass
class RunResult:
    diagnostics: dict = field(default_factory=dict)
    exit_code: int = 0
    message: str = ""


# ---------------------------------------------------------------- helpers

def parse_init(text: str, orientation: str = "interior") -> PolyMap:
    """Coefficients ``a_1,a_2,...`` (Python complex literals allowed) or a PolyMap JSON file."""
    text = text.strip()
    if text.endswith(".json"):
        path = Path(text)
        if not path.is_file():
            raise ConfigError(f"key 'init': file not found: {path}")
        return PolyMap.from_json(path.read_text())
    try:
        coeffs = [complex(s.replace(" ", "")) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"key 'init': cannot parse coefficients {text!r}") from None
    if not coeffs:
        raise ConfigError("key 'init': no coefficients")
    return PolyMap(orientation, np.array(coeffs))


def _load_json(key: str, path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"key '{key}': file not found: {p}")
    return json.loads(p.read_text())


def _read_measure(path: str):
    from .potential import DiscreteMeasure
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"key 'mu': file not found: {p}")
    with open(p, newline="") as fh:
        rows = list(csv.DictReader(fh))
    try:
        pts = [float(r["x"]) + 1j * float(r["y"]) for r in rows]
        w = [float(r["w"]) for r in rows]
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"key 'mu': expected columns x,y,w ({exc})") from None
    return DiscreteMeasure(np.array(pts), np.array(w))


# ---------------------------------------------------------------- commands

def run_pg(cfg: RunConfig, out: OutputDir) -> RunResult:
    from .pg_exact import INJECTION, SUCTION, PGState, cusp_time, pg_evolve
    p = cfg.params
    fmap = parse_init(p["init"])
    state = PGState.initial(fmap, INJECTION if p["rate"] == "injection" else SUCTION)
    traj = pg_evolve(state, p["dt"], p["t_end"])
    d = state.degree
    header = ["t"] + [f"a_{k}" for k in range(1, d + 1)] + ["area"] + \
             [f"C_{k}" for k in range(1, d)] + ["min_abs_fprime"]
    rows = []
    for t, m in zip(traj.times, traj.maps):
        a = np.zeros(d)
        a[: m.coeffs.size] = m.coeffs.real
        C = harmonic_moments_exact(m, d - 1).C.real[: d - 1] if d > 1 else []
        rows.append([t, *a, area(m), *C, min_abs_derivative(m)])
    out.csv("trajectory.csv", header, rows)
    out.json("trajectory.json", {**traj.to_dict(), "seed": cfg.seed})
    diag = {"stop_reason": traj.stop_reason, "t_final": traj.times[-1], "snapshots": len(traj)}
    if d <= 2:
        est = cusp_time(state)
        diag["cusp_time"] = {"time": est.time, "kind": est.kind}
    res = RunResult(diag)
    if traj.stop_reason != "t_end":
        res.exit_code, res.message = 3, f"stopped at t={traj.times[-1]:.6g}: {traj.stop_reason}"
    return res


def run_dbm(cfg: RunConfig, out: OutputDir) -> RunResult:
    from .dbm import DBMConfig, dbm_evolve, moment_drift
    p = cfg.params
    fmap = parse_init(p["init"], p["orientation"])
    dcfg = DBMConfig(alpha=p["alpha"], sigma=p["sigma"], M=p["modes"], dt=p["dt"], t_end=p["t_end"],
                     save_dt=p["save_dt"] or None,
                     direction=1 if p["direction"] == "injection" else -1)
    traj = dbm_evolve(fmap, dcfg)
    out.json("snapshots.json", {**traj.to_dict(), "seed": cfg.seed})
    M = p["boundary_points"]
    theta = 2 * np.pi * np.arange(M) / M
    for i, (t, m) in enumerate(zip(traj.times, traj.maps)):
        z = boundary_points(m, M)
        out.csv(f"boundary/{i:04d}.csv", ["t", "theta", "x", "y"],
                ([t, th, w.real, w.imag] for th, w in zip(theta, z)))
    diag = {"stop_reason": traj.stop_reason, "t_final": traj.meta.get("t_final"),
            "snapshots": len(traj), "min_abs_fprime": min_abs_derivative(traj.maps[-1])}
    if p["alpha"] == 2.0 and fmap.orientation == "interior" and len(traj) > 1:
        diag["moment_drift"] = moment_drift(traj, 3)
    res = RunResult(diag)
    if traj.stop_reason != "t_end":
        res.exit_code, res.message = 3, f"stopped at t={diag['t_final']:.6g}: {traj.stop_reason}"
    return res


def run_blockdla(cfg: RunConfig, out: OutputDir) -> RunResult:
    from .analysis import box_counting_dimension
    from .block_dla import BlockModelConfig, default_modes, ensemble_mean_map, replica_seeds, run_aggregation
    p = cfg.params
    fmap = parse_init(p["init"])
    bcfg = BlockModelConfig(N=p["N"], K=p["K"], epsilon=p["epsilon"], steps=p["steps"], seed=cfg.seed,
                            landing=p["landing"], lengths=p["lengths"])
    M = p["modes"] or default_modes(p["N"])
    save_every = p["save_every"] or p["steps"]
    if p["replicas"] < 1:
        raise ConfigError("key 'replicas': must be >= 1")
    seeds = [cfg.seed] if p["replicas"] == 1 else replica_seeds(cfg.seed, p["replicas"])
    replicas = []
    results = []
    for r, s in enumerate(seeds):
        res = run_aggregation(replace(bcfg, seed=s), fmap, M, save_every, np.random.default_rng(s))
        results.append(res)
        maxk = res.k.max(axis=1) if res.k.size else np.zeros(0, dtype=int)
        rows = [[0, res.area[0], res.min_fprime[0], 0]]
        rows += [[i + 1, res.area[i + 1], res.min_fprime[i + 1], maxk[i]] for i in range(res.k.shape[0])]
        out.csv(f"steps_{r:03d}.csv", ["step", "area", "min_abs_fprime", "max_k"], rows)
        entry = {"replica": r, "seed": s, "stop_reason": res.trajectory.stop_reason,
                 "steps_done": int(res.k.shape[0]), "final_area": res.area[-1],
                 "bookkeeping_area": res.bookkeeping_area[-1], "final_map": res.trajectory.maps[-1].to_dict(),
                 "kappa_ratio_mean": float(np.mean(res.kappa_ratios())) if res.k.size else None,
                 "kappa_ratio_var": float(np.var(res.kappa_ratios())) if res.k.size else None}
        if p["dimension"]:
            pts = np.concatenate([boundary_points(m, 4 * p["N"]) for m in res.trajectory.maps])
            try:
                bc = box_counting_dimension(pts)
                lo, hi = bc.interval()
                entry["dimension"] = {"value": bc.dimension, "stderr": bc.stderr, "ci95": [lo, hi],
                                      "r_squared": bc.r_squared, "points": int(pts.size)}
            except DomainError as exc:
                entry["dimension"] = {"value": None, "reason": str(exc), "points": int(pts.size)}
        replicas.append(entry)
    summary = {"seed": cfg.seed, "kappa": bcfg.kappa, "K_epsilon": bcfg.K * bcfg.epsilon, "M": M,
               "replicas": replicas}
    complete = [r for r in results if len(r.trajectory.maps) == len(results[0].trajectory.maps)
                and r.trajectory.stop_reason == "t_end"]
    if len(complete) == len(results):
        summary["mean_final_map"] = ensemble_mean_map(results).to_dict()
    out.json("ensemble.json", summary)
    stopped = [e for e in replicas if e["stop_reason"] != "t_end"]
    diag = {"replicas": len(replicas), "stopped": len(stopped),
            "final_area_mean": float(np.mean([e["final_area"] for e in replicas]))}
    res = RunResult(diag)
    if stopped:
        res.exit_code = 3
        res.message = f"{len(stopped)} replica(s) stopped by a guard ({stopped[0]['stop_reason']})"
    return res


def run_fekete(cfg: RunConfig, out: OutputDir) -> RunResult:
    from .potential import circle_cloud, discrete_energy, fekete_points, segment_cloud, transfinite_diameter
    p = cfg.params
    shape = p["shape"]
    if shape == "circle":
        cloud = circle_cloud(p["cloud"], p["radius"])
    elif shape == "segment":
        cloud = segment_cloud(p["cloud"], -p["radius"], p["radius"])
    elif shape.endswith(".json"):
        data = np.asarray(_load_json("shape", shape), dtype=float)
        if data.ndim != 2 or data.shape[1] != 2:
            raise ConfigError("key 'shape': JSON file must hold a list of [x, y] pairs")
        cloud = data[:, 0] + 1j * data[:, 1]
    else:
        raise ConfigError(f"key 'shape': expected circle, segment or a .json file, got {shape!r}")
    res = fekete_points(cloud, p["n"])
    out.csv("fekete.csv", ["index", "x", "y"], ([i, z.real, z.imag] for i, z in enumerate(res.points)))
    report = {"seed": cfg.seed, "n": p["n"], "cloud_size": int(np.size(cloud)), "log_delta": res.log_delta,
              "delta": res.delta, "W": discrete_energy(res.points),
              "d_n": math.exp(2 * res.log_delta / (p["n"] * (p["n"] - 1))) if p["n"] > 1 else None,
              "sweeps": len(res.history)}
    if p["n_max"]:
        tr = transfinite_diameter(cloud, n_max=p["n_max"])
        report["transfinite"] = {"n": tr.n, "d": tr.d, "cap": tr.cap, "monotone": tr.monotone}
        out.csv("transfinite.csv", ["n", "d_n"], zip(tr.n, tr.d))
    out.json("energy.json", report)
    return RunResult({k: report[k] for k in ("log_delta", "W")})


def run_equilibrium(cfg: RunConfig, out: OutputDir) -> RunResult:
    from .potential import ExternalField, equilibrium_measure_1d, orthopoly_realline
    p = cfg.params
    try:
        V = ExternalField.from_expression(p["V"])
    except (ValueError, TypeError, SyntaxError) as exc:
        raise ConfigError(f"key 'V': {exc}") from None
    support = p["support"] or None
    if support is not None and len(support) != 2:
        raise ConfigError("key 'support': expected a,b")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mu, rep = equilibrium_measure_1d(V, p["t"], p["n"], support=support)
    out.csv("measure.csv", ["x", "w"], zip(mu.points.real, mu.weights))
    report = {**rep.to_dict(), "seed": cfg.seed, "t": p["t"], "n": p["n"]}
    if p["poly_n"]:
        n = p["poly_n"]
        op = orthopoly_realline(V, float(n), n)
        zeros = op.zeros(n)
        out.csv("zeros.csv", ["k", "x"], enumerate(zeros))
        report["poly"] = {"n": n, "N": n, "log_norm": op.log_norms[n], "scaled_log_norm": op.scaled_log_norm(n)}
    out.json("energy.json", report)
    res = RunResult({"oscillation": rep.oscillation, "off_support_min_excess": rep.off_support_min_excess,
                     "residual": rep.residual, "converged": rep.converged})
    if not rep.converged:
        res.exit_code, res.message = 4, f"equilibrium descent stopped with residual {rep.residual:.3g}"
    return res


def run_weak(cfg: RunConfig, out: OutputDir) -> RunResult:
    from .potential import ExternalField
    from .weak_lg import GridSpec, PsiField, ito_dla_step, weak_boundary
    p = cfg.params
    try:
        V = ExternalField.from_expression(p["V"])
    except (ValueError, TypeError, SyntaxError) as exc:
        raise ConfigError(f"key 'V': {exc}") from None
    if len(p["grid"]) != 6:
        raise ConfigError("key 'grid': expected xmin,xmax,ymin,ymax,nx,ny")
    g = p["grid"]
    grid = GridSpec(g[0], g[1], g[2], g[3], int(g[4]), int(g[5]))
    mu = _read_measure(p["mu"]) if p["mu"] else None
    rng = np.random.default_rng(cfg.seed)
    if p["growth_steps"]:
        if mu is None:
            raise ConfigError("key 'growth_steps': needs a measure 'mu'")
        for _ in range(p["growth_steps"]):
            mu = ito_dla_step(mu, p["radius"], p["dt"], p["noise"], rng, m=p["tracers"])
        out.csv("measure.csv", ["x", "y", "w"], zip(mu.points.real, mu.points.imag, mu.weights))
    fr = weak_boundary(PsiField(V, mu, grid))
    out.csv("frontier.csv", ["component", "closed", "x", "y"], fr.to_rows())
    meta = {"seed": cfg.seed, "count": fr.count, "closed": fr.closed, "residuals": fr.residuals,
            "tolerances": fr.tolerances, "diagnostic": fr.diagnostic, "grid_spacing": grid.spacing,
            "growth_steps": p["growth_steps"],
            "arrival_model": "field-line surrogate (streamlines of -conj(C)/|C| from a far circle)"}
    out.json("frontier.json", meta)
    if p["svg"]:
        out.text("frontier.svg", svg_polylines(fr.polylines, fr.closed, (g[0], g[1], g[2], g[3]),
                                               None if mu is None else mu.points))
    return RunResult({"components": fr.count, "diagnostic": fr.diagnostic})


def run_nrm(cfg: RunConfig, out: OutputDir) -> RunResult:
    from .nrm import NRMPotential, angular_uniformity, density_histogram, interior_deviation, metropolis_sample
    p = cfg.params
    try:
        pot = NRMPotential(p["t0"], tuple(p["tk"]))
    except ConfigError as exc:
        raise ConfigError(f"key 't0': {exc}") from None
    if not pot.integrable(p["N"], p["n"]):
        raise ConfigError(f"key 'tk': potential with t0={p['t0']}, tk={list(p['tk'])} is not "
                          "integrable (rejected by the ray probe)")
    rng = np.random.default_rng(cfg.seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        samples = metropolis_sample(pot, p["n"], p["N"], p["sweeps"], rng, chains=p["chains"],
                                    burn=None if p["burn"] < 0 else p["burn"], thin=p["thin"], seed=cfg.seed)
    e = p["extent"]
    H = density_histogram(samples, p["N"], bounds=(-e, e, -e, e), bins=p["bins"])
    C = H.centers
    out.csv("histogram.csv", ["x", "y", "density"],
            zip(C.real.ravel(), C.imag.ravel(), H.density.ravel()))
    per_chain = {}
    for s in samples:
        per_chain.setdefault(s.meta["chain"], s.meta)
    chains = [{"chain": c, "acceptance": m["acceptance"], "step": m["step"]} for c, m in sorted(per_chain.items())]
    diag = {"seed": cfg.seed, "samples": len(samples), "chains": chains, "burn": samples[0].meta["burn"],
            "sweeps": p["sweeps"], "histogram_mass": H.mass,
            "angular_uniformity_pvalue": float(angular_uniformity(samples).pvalue),
            "warnings": [str(w.message) for w in caught]}
    if pot.radial:
        r = 0.7 * math.sqrt(p["t0"] * p["n"] / p["N"])
        diag["interior_deviation"] = {"radius": r, "value": interior_deviation(H, r, 1 / (math.pi * p["t0"]))}
    out.json("diagnostics.json", diag)
    return RunResult({"samples": len(samples), "mean_acceptance": float(np.mean([c["acceptance"] for c in chains]))})


def run_compare(cfg: RunConfig, out: OutputDir) -> RunResult:
    from .analysis import compare_trajectories
    p = cfg.params
    try:
        a = Trajectory.from_dict(_load_json("a", p["a"]))
        b = Trajectory.from_dict(_load_json("b", p["b"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"not a trajectory file: {exc}") from None
    rep = compare_trajectories(a, b, M=p["M"], moments=p["moments"])
    out.csv("comparison.csv", ["t", "hausdorff", "moment_diff"], rep.to_rows())
    summary = {"seed": cfg.seed, "max_hausdorff": rep.max_hausdorff,
               "max_moment_diff": float(np.nanmax(rep.moment_diff)) if rep.moment_diff.size else None,
               "times": rep.times.size}
    out.json("summary.json", summary)
    return RunResult({k: summary[k] for k in ("max_hausdorff", "max_moment_diff")})


RUNNERS = {"pg": run_pg, "dbm": run_dbm, "blockdla": run_blockdla, "fekete": run_fekete,
           "equilibrium": run_equilibrium, "weak": run_weak, "nrm": run_nrm, "compare": run_compare}


# ---------------------------------------------------------------- orchestration

def execute(cfg: RunConfig) -> int:
    """Run one configured command, write payloads and the manifest, return the exit code."""
    cfg.out.mkdir(parents=True, exist_ok=True)
    out = OutputDir(cfg.out)
    t0 = time.perf_counter()
    try:
        res = RUNNERS[cfg.command](cfg, out)
    except ConfigError as exc:
        res = RunResult(exit_code=2, message=str(exc))
    except DomainError as exc:
        # inadmissible parameters reach the library as domain errors
        res = RunResult(exit_code=2, message=str(exc))
    except NumericalGuardError as exc:
        res = RunResult(exit_code=3, message=str(exc))
    except ConvergenceError as exc:
        res = RunResult(exit_code=4, message=str(exc))
    except LaplabError as exc:
        res = RunResult(exit_code=exc.exit_code, message=str(exc))
    manifest = {"format_version": cfg.format_version, "code_version": __version__,
                "config": cfg.to_dict(), "wall_time_s": time.perf_counter() - t0,
                "exit_code": res.exit_code, "message": res.message,
                "diagnostics": res.diagnostics, "files": out.inventory(), "environment": environment()}
    (cfg.out / "manifest.json").write_text(json_text(manifest))
    if res.message:
        print(f"laplab {cfg.command}: {res.message}", file=sys.stderr)
    print(cfg.out)
    return res.exit_code


SUMMARIES = {
    "pg": "exact polynomial Laplacian growth with cusp detection",
    "dbm": "spectral dielectric breakdown growth",
    "blockdla": "block aggregation ensembles",
    "fekete": "Fekete points and transfinite diameter",
    "equilibrium": "weighted equilibrium measure on the line",
    "weak": "weak growth frontier of a discrete measure",
    "nrm": "normal random matrix Coulomb gas sampling",
    "compare": "Hausdorff and moment comparison of two runs",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="laplab", allow_abbrev=False, description="Laplacian growth and logarithmic potential laboratory.",
        epilog=f"Output root: ${OUTPUT_ROOT_ENV} (default ./laplab-runs). "
               "Exit codes: 0 ok, 2 config, 3 numerical guard, 4 non-convergence.")
    parser.add_argument("--version", action="version", version=f"laplab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in COMMANDS:
        sp = sub.add_parser(name, help=SUMMARIES[name], description=SUMMARIES[name],
                            argument_default=argparse.SUPPRESS,
                            allow_abbrev=False)
        sp.add_argument("--config", metavar="FILE", help="flat key = value file; flags override it")
        for p in SCHEMAS[name] + COMMON:
            flags = [p.flag] if p.flag == "--" + p.name else [p.flag, "--" + p.name]
            sp.add_argument(*flags, dest=p.name, metavar=p.kind.upper(), help=p.describe())
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if extra:
            bad = next((a for a in extra if a.startswith("-")), extra[0])
            raise ConfigError(f"unknown key '{bad.lstrip('-').split('=')[0].replace('-', '_')}' "
                              f"for command '{ns.command}'")
        flags = {k: v for k, v in vars(ns).items() if k not in ("command", "config")}
        cfg = parse_config(ns.command, getattr(ns, "config", None), flags)
    except ConfigError as exc:
        print(f"laplab: {exc}", file=sys.stderr)
        return 2
    return execute(cfg)


if __name__ == "__main__":
    sys.exit(main())
