"""Batch front door: INI configs in, deterministic CSV tables out.

Usage:
    fraclab <subcommand> --config <path> [--out <dir>] [--threads <n>]

Subcommands: solve, iterate, sweep, hardy, exponents, certify, probe, limits.
Every CSV starts with a comment line carrying the sha256 of the fully
resolved configuration, so re-running a config reproduces its outputs
bit for bit.  Exit codes: 0 success, 2 validation error, 3 numerical failure.

Kernel tables are cached on disk when FRACLAB_CACHE_DIR is set; stale or
corrupted cache files are rebuilt with a warning.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import math
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import (
    ConfigurationError,
    ConsistencyError,
    FraclabError,
    HypothesisViolation,
    ParameterError,
    QuadratureError,
)
from .fixedpoint import IterationConfig, ProblemSpec, picard_iterate
from .grids import Annulus, Ball, Box, GridDomain, GridFunction, build_domain, sample
from .kernels import CacheMismatch, get_table, load_kernel_table, save_kernel_table
from .nonexistence import bump_family, certify as certify_family, lambda_star_star
from .operators import apply_D_s2, apply_frac_laplacian, central_gradient
from .poisson import assemble, solve_poisson
from .regularity import PROPOSITIONS, exponent_range, regularity_probe
from .seminorms import hardy_constant, hardy_constant_mc

__all__ = ["main", "run", "cache_kernel", "ExperimentConfig"]

SUBCOMMANDS = ("solve", "iterate", "sweep", "hardy", "exponents", "certify", "probe", "limits")

REQ = object()  # sentinel: key is required


def _bool(v: str) -> bool:
    lv = v.strip().lower()
    if lv in ("true", "yes", "1", "on"):
        return True
    if lv in ("false", "no", "0", "off"):
        return False
    raise ConfigurationError(f"expected a boolean, got {v!r}")


def _floats(v: str) -> list[float]:
    return [float(x) for x in v.split(",") if x.strip()]


def _ints(v: str) -> list[int]:
    return [int(x) for x in v.split(",") if x.strip()]


def _strs(v: str) -> list[str]:
    return [x.strip() for x in v.split(",") if x.strip()]


_DOMAIN_SCHEMA = {
    "shape": (str, "ball"),
    "dimension": (int, 1),
    "nodes_per_axis": (int, REQ),
    "margin_cells": (int, 2),
    "origin_offset": (_bool, False),
    "radius": (float, 1.0),
    "r_inner": (float, 0.5),
    "r_outer": (float, 1.0),
    "lo": (_floats, [-1.0]),
    "hi": (_floats, [1.0]),
    "center": (_floats, None),
    "cutoff_factor": (float, 4.0),
}

_PROBLEM_SCHEMA = {
    "s": (float, REQ),
    "rhs_kind": (str, "D_s2"),
    "lambda": (float, 0.1),
    "mu": (str, "const:1.0"),
    "f": (str, "const:1.0"),
    "m": (float, None),
    "t": (float, None),
    "q": (float, None),
    "alpha": (float, None),
}

_OUTPUT_SCHEMA = {"precision": (int, 17)}

SCHEMAS: dict[str, dict[str, dict]] = {
    "solve": {
        "domain": _DOMAIN_SCHEMA,
        "problem": {"s": (float, REQ), "f": (str, "const:1.0")},
        "run": {"levels": (_ints, REQ)},
        "output": _OUTPUT_SCHEMA,
    },
    "iterate": {
        "domain": _DOMAIN_SCHEMA,
        "problem": _PROBLEM_SCHEMA,
        "run": {
            "tolerance": (float, 1e-9),
            "max_iter": (int, 200),
            "divergence_norm": (float, None),
        },
        "output": _OUTPUT_SCHEMA,
    },
    "sweep": {
        "domain": _DOMAIN_SCHEMA,
        "problem": _PROBLEM_SCHEMA,
        "run": {
            "tolerance": (float, 1e-9),
            "max_iter": (int, 200),
            "lambda_sweep": (_floats, REQ),
        },
        "output": _OUTPUT_SCHEMA,
    },
    "hardy": {
        "run": {
            "triples": (_strs, REQ),  # entries N:s:p
            "tol": (float, 1e-6),
            "mc_samples": (int, 2_000_000),
            "seed": (int, 20240801),
        },
        "output": _OUTPUT_SCHEMA,
    },
    "exponents": {
        "run": {
            "propositions": (_strs, ["all"]),
            "dimension": (int, 2),
            "s": (str, REQ),  # exact rational, e.g. 3/4
            "t_values": (_strs, [""]),
            "m_values": (_strs, REQ),
        },
        "output": _OUTPUT_SCHEMA,
    },
    "certify": {
        "domain": _DOMAIN_SCHEMA,
        "problem": {"s": (float, REQ), "f": (str, "const:1.0"), "mu1": (float, 1.0)},
        "run": {
            "lambda_values": (_floats, REQ),
            "bump_centers": (int, 3),
            "bump_rhos": (_floats, [0.3, 0.5, 0.7]),
        },
        "output": _OUTPUT_SCHEMA,
    },
    "probe": {
        "domain": {"dimension": (int, 1), "radius": (float, 1.0)},
        "run": {
            "beta": (float, REQ),
            "s": (float, REQ),
            "t": (float, REQ),
            "p": (float, REQ),
            "m": (float, 1.0),
            "levels": (_ints, REQ),
        },
        "output": _OUTPUT_SCHEMA,
    },
    "limits": {
        "run": {
            "s_values": (_floats, [0.8, 0.9, 0.95]),
            "nodes_per_axis": (int, 3000),
            "radius": (float, 5.0),
        },
        "output": _OUTPUT_SCHEMA,
    },
}


class ExperimentConfig:
    """Validated, fully resolved configuration for one subcommand."""

    def __init__(self, subcommand: str, values: dict[str, dict[str, object]]):
        self.subcommand = subcommand
        self.values = values

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def resolved_hash(self) -> str:
        lines = [f"subcommand={self.subcommand}"]
        for section in sorted(self.values):
            for key in sorted(self.values[section]):
                lines.append(f"{section}.{key}={self.values[section][key]!r}")
        return hashlib.sha256("\n".join(lines).encode()).hexdigest()

    @classmethod
    def load(cls, subcommand: str, path) -> "ExperimentConfig":
        if subcommand not in SCHEMAS:
            raise ConfigurationError(f"unknown subcommand {subcommand!r}")
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        read = parser.read(path)
        if not read:
            raise ConfigurationError(f"config file {path} is missing or unreadable")
        schema = SCHEMAS[subcommand]
        for section in parser.sections():
            if section not in schema:
                raise ConfigurationError(
                    f"unknown section [{section}] for subcommand {subcommand}"
                )
            for key in parser[section]:
                if key not in schema[section]:
                    raise ConfigurationError(f"unknown key {key!r} in section [{section}]")
        values: dict[str, dict[str, object]] = {}
        for section, keys in schema.items():
            values[section] = {}
            for key, (parse, default) in keys.items():
                if parser.has_option(section, key):
                    raw = parser.get(section, key)
                    try:
                        values[section][key] = parse(raw)
                    except (ValueError, ConfigurationError) as exc:
                        raise ConfigurationError(
                            f"invalid value for [{section}] {key}: {raw!r} ({exc})"
                        ) from exc
                elif default is REQ:
                    raise ConfigurationError(f"missing required key [{section}] {key}")
                else:
                    values[section][key] = default
        return cls(subcommand, values)


# ---------------------------------------------------------------------------
# shared builders
# ---------------------------------------------------------------------------


def _build_domain(dcfg: dict) -> GridDomain:
    N = dcfg["dimension"]
    shape_name = dcfg["shape"]
    center = dcfg["center"] if dcfg["center"] is not None else [0.0] * N
    if len(center) != N:
        raise ConfigurationError(f"center must have {N} components")
    if shape_name == "ball":
        shape = Ball(center=tuple(center), radius=dcfg["radius"])
    elif shape_name == "annulus":
        shape = Annulus(r_inner=dcfg["r_inner"], r_outer=dcfg["r_outer"], center=tuple(center))
    elif shape_name == "box":
        lo, hi = dcfg["lo"], dcfg["hi"]
        if len(lo) != N or len(hi) != N:
            raise ConfigurationError(f"box lo/hi must have {N} components")
        shape = Box(lo=tuple(lo), hi=tuple(hi))
    else:
        raise ConfigurationError(f"unknown shape {shape_name!r}; use ball|box|annulus")
    return build_domain(
        shape,
        dcfg["nodes_per_axis"],
        margin_cells=dcfg["margin_cells"],
        origin_offset=dcfg["origin_offset"],
    )


def _cutoff(domain: GridDomain, dcfg: dict) -> float | None:
    factor = dcfg.get("cutoff_factor", 4.0)
    if factor == 4.0:
        return None  # library default
    return factor * domain.bbox_diameter


def _field(spec: str, domain: GridDomain) -> GridFunction:
    kind, _, arg = spec.partition(":")
    if kind == "const":
        v = float(arg) if arg else 1.0
        return sample(lambda *cs: np.full_like(cs[0], v), domain)
    if kind == "power":
        beta = float(arg)
        r = np.linalg.norm(domain.interior_coords, axis=1)
        if r.min() <= 0.0:
            raise ConfigurationError("power-law field needs an origin-offset grid")
        return domain.from_interior(r ** (-beta))
    if kind == "bump":
        rho = float(arg)
        r2 = (domain.interior_coords**2).sum(axis=1)
        return domain.from_interior(np.maximum(1.0 - r2 / rho**2, 0.0) ** 2)
    raise ConfigurationError(f"unknown field spec {spec!r}; use const:<v>|power:<beta>|bump:<rho>")


def cache_kernel(domain: GridDomain, sigma: float, cutoff_radius: float | None, path) -> str:
    """Build (or fetch) the kernel table and persist it at path; returns the path."""
    table = get_table(domain, sigma, cutoff_radius)
    save_kernel_table(table, path)
    return str(path)


def _warm_table_cache(domain: GridDomain, sigma: float, cutoff_radius: float | None) -> None:
    cache_dir = os.environ.get("FRACLAB_CACHE_DIR")
    if not cache_dir:
        return
    key = f"{domain.shape_hash()[:16]}_{sigma:.6g}_{domain.nodes_per_axis}.flkt"
    path = Path(cache_dir) / key
    memo_key = (round(float(sigma), 14), cutoff_radius, False)
    if path.exists():
        try:
            table = load_kernel_table(path, domain, sigma, cutoff_radius)
            domain._tables[memo_key] = table
            return
        except CacheMismatch as exc:
            print(f"warning: rebuilding kernel cache {path} ({exc})", file=sys.stderr)
    table = get_table(domain, sigma, cutoff_radius)
    try:
        Path(cache_dir).mkdir(parents=True, exist_ok=True)
        save_kernel_table(table, path)
    except OSError as exc:
        print(f"warning: could not write kernel cache {path} ({exc})", file=sys.stderr)


def _fmt(x, precision: int) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        if math.isinf(x):
            return "inf"
        return f"{x:.{precision}g}"
    return str(x)


def _write_csv(path: Path, header: list[str], rows: list[list], cfg_hash: str, precision: int) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_sha256={cfg_hash}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v, precision) for v in row])


def _interp_to(coarse: GridDomain, fine_u: GridFunction) -> np.ndarray:
    """Linearly interpolate a fine-grid function onto coarse interior nodes."""
    from scipy.interpolate import RegularGridInterpolator

    fine = fine_u.domain
    interp = RegularGridInterpolator(
        tuple(fine.axis_centers),
        fine_u.values,
        bounds_error=False,
        fill_value=0.0,
    )
    return interp(coarse.interior_coords)


def _problem_from_config(cfg: ExperimentConfig, domain: GridDomain, lam: float | None = None) -> ProblemSpec:
    p = cfg["problem"]
    return ProblemSpec(
        rhs_kind=p["rhs_kind"],
        s=p["s"],
        lam=p["lambda"] if lam is None else lam,
        mu=_field(p["mu"], domain),
        f=_field(p["f"], domain),
        m=p["m"],
        t=p["t"],
        q=p["q"],
        alpha=p["alpha"],
    )


# ---------------------------------------------------------------------------
# subcommand drivers
# ---------------------------------------------------------------------------


def _run_solve(cfg: ExperimentConfig, out: Path) -> None:
    dcfg = dict(cfg["domain"])
    levels = cfg["run"]["levels"]
    if len(levels) < 2:
        raise ConfigurationError("solve needs at least two levels")
    s = cfg["problem"]["s"]
    sols = []
    for n in levels:
        dcfg["nodes_per_axis"] = n
        dom = _build_domain(dcfg)
        _warm_table_cache(dom, 2.0 * s, _cutoff(dom, dcfg))
        solver = assemble(dom, s, cutoff_radius=_cutoff(dom, dcfg)).factorize()
        f = _field(cfg["problem"]["f"], dom)
        sols.append((n, dom, solve_poisson(solver, f)))
    n_f, dom_f, u_f = sols[-1]
    rows = []
    prev_err = None
    for n, dom, u in sols[:-1]:
        ref = _interp_to(dom, u_f)
        err = float(np.sqrt(((u.interior - ref) ** 2).sum() * dom.h**dom.dimension))
        ratio = None if prev_err is None else prev_err / err
        rows.append([n, dom.h, err, ratio])
        prev_err = err
    rows.append([n_f, dom_f.h, 0.0, None])
    _write_csv(
        out / "solve.csv",
        ["level", "h", "l2_error_vs_finest", "ratio"],
        rows,
        cfg.resolved_hash(),
        cfg["output"]["precision"],
    )


def _run_iterate(cfg: ExperimentConfig, out: Path) -> None:
    dom = _build_domain(cfg["domain"])
    spec = _problem_from_config(cfg, dom)
    _warm_table_cache(dom, 2.0 * spec.s, _cutoff(dom, cfg["domain"]))
    solver = assemble(dom, spec.s, cutoff_radius=_cutoff(dom, cfg["domain"])).factorize()
    it = IterationConfig(
        tolerance=cfg["run"]["tolerance"],
        max_iter=cfg["run"]["max_iter"],
        divergence_norm=cfg["run"]["divergence_norm"],
    )
    rep = picard_iterate(spec, it, solver)
    rows = []
    n_hist = len(rep.history["sup_norm"])
    for k in range(n_hist):
        last = k == n_hist - 1
        rows.append(
            [
                k + 1,
                rep.history["sup_norm"][k],
                rep.history["energy_norm"][k],
                rep.history["frac_half_norm"][k],
                rep.history["successive_diff"][k],
                rep.verdict if last else "",
                rep.final_residual if last else None,
            ]
        )
    if not rows:  # converged at iteration 0
        rows.append([0, 0.0, 0.0, 0.0, 0.0, rep.verdict, rep.final_residual])
    _write_csv(
        out / "iterate.csv",
        ["iteration", "sup_norm", "energy_norm", "frac_half_norm", "successive_diff", "verdict", "final_residual"],
        rows,
        cfg.resolved_hash(),
        cfg["output"]["precision"],
    )


def _run_sweep(cfg: ExperimentConfig, out: Path) -> None:
    dom = _build_domain(cfg["domain"])
    s = cfg["problem"]["s"]
    _warm_table_cache(dom, 2.0 * s, _cutoff(dom, cfg["domain"]))
    solver = assemble(dom, s, cutoff_radius=_cutoff(dom, cfg["domain"])).factorize()
    it = IterationConfig(tolerance=cfg["run"]["tolerance"], max_iter=cfg["run"]["max_iter"])
    rows = []
    for lam in cfg["run"]["lambda_sweep"]:
        spec = _problem_from_config(cfg, dom, lam=lam)
        rep = picard_iterate(spec, it, solver)
        rows.append([lam, rep.verdict, rep.iterations, rep.final_residual])
    _write_csv(
        out / "sweep.csv",
        ["lambda", "verdict", "iterations", "final_residual"],
        rows,
        cfg.resolved_hash(),
        cfg["output"]["precision"],
    )


def _run_hardy(cfg: ExperimentConfig, out: Path) -> None:
    rows = []
    for entry in cfg["run"]["triples"]:
        parts = entry.split(":")
        if len(parts) != 3:
            raise ConfigurationError(f"hardy triple must be N:s:p, got {entry!r}")
        N, s, p = int(parts[0]), float(parts[1]), float(parts[2])
        res = hardy_constant(N, s, p, tol=cfg["run"]["tol"])
        mc, mc_err = hardy_constant_mc(
            N, s, p, samples=cfg["run"]["mc_samples"], seed=cfg["run"]["seed"]
        )
        rows.append(
            [N, s, p, res.value, res.error_estimate, mc, mc_err, abs(res.value - mc) / res.value]
        )
    _write_csv(
        out / "hardy.csv",
        ["N", "s", "p", "lambda_quad", "error_estimate", "lambda_mc", "mc_stderr", "rel_diff"],
        rows,
        cfg.resolved_hash(),
        cfg["output"]["precision"],
    )


def _rat(x: str) -> Fraction:
    return Fraction(x)


def _run_exponents(cfg: ExperimentConfig, out: Path) -> None:
    run = cfg["run"]
    props = run["propositions"]
    if props == ["all"]:
        props = list(PROPOSITIONS)
    for prop in props:
        if prop not in PROPOSITIONS:
            raise ConfigurationError(f"unknown proposition {prop!r}")
    N = run["dimension"]
    s = _rat(run["s"])
    t_values = [(_rat(t) if t else None) for t in run["t_values"]] or [None]
    m_values = [_rat(m) for m in run["m_values"]]
    rows = []
    for prop in props:
        takes_t = prop in ("P3.1", "P-cr2", "P-cr3", "P-rg1")
        for t in t_values if takes_t else [None]:
            for m in m_values:
                try:
                    r = exponent_range(prop, N, s, t, m)
                    upper = "inf" if r.upper == math.inf else str(r.upper)
                    rows.append(
                        [prop, r.case_index, N, str(s), "" if t is None else str(t), str(m),
                         str(r.lower), upper, r.upper_inclusive, "ok"]
                    )
                except HypothesisViolation as exc:
                    rows.append(
                        [prop, "", N, str(s), "" if t is None else str(t), str(m),
                         "", "", "", f"rejected:{exc.condition}"]
                    )
    _write_csv(
        out / "exponents.csv",
        ["proposition", "case", "N", "s", "t", "m", "lower", "upper", "upper_inclusive", "status"],
        rows,
        cfg.resolved_hash(),
        cfg["output"]["precision"],
    )


def _run_certify(cfg: ExperimentConfig, out: Path) -> None:
    dom = _build_domain(cfg["domain"])
    s = cfg["problem"]["s"]
    mu1 = cfg["problem"]["mu1"]
    f = _field(cfg["problem"]["f"], dom)
    n_c = cfg["run"]["bump_centers"]
    lo, hi = dom.lo.min(), dom.hi.max()
    span = 0.4 * (hi - lo)
    centers = [
        tuple(c)
        for c in np.stack(
            np.meshgrid(*([np.linspace(-span / 2, span / 2, n_c)] * dom.dimension), indexing="ij"),
            axis=-1,
        ).reshape(-1, dom.dimension)
    ]
    family = []
    for c in centers:
        for rho in cfg["run"]["bump_rhos"]:
            if isinstance(dom.shape, Ball):
                # keep the support inside the ball so bumps are not truncated
                room = dom.shape.radius - float(
                    np.linalg.norm(np.asarray(c) - np.asarray(dom.shape.center))
                )
                rho = min(rho, 0.95 * room)
                if rho <= dom.h:
                    continue
            family.extend(bump_family(dom, [c], [rho]))
    rows = []
    for lam in cfg["run"]["lambda_values"]:
        ok, best = certify_family(lam, f, mu1, s, family)
        rows.append([lam, ok, best.value, best.phi_id])
    _write_csv(
        out / "certify.csv",
        ["lambda", "certified_nonexistence", "min_lambda_star_star", "witness_id"],
        rows,
        cfg.resolved_hash(),
        cfg["output"]["precision"],
    )


def _run_probe(cfg: ExperimentConfig, out: Path) -> None:
    run = cfg["run"]
    rep = regularity_probe(
        beta=run["beta"],
        s=run["s"],
        t=run["t"],
        p=run["p"],
        node_counts=run["levels"],
        m=run["m"],
        N=cfg["domain"]["dimension"],
        radius=cfg["domain"]["radius"],
    )
    rows = []
    for i, (n, v) in enumerate(zip(rep.node_counts, rep.values)):
        growth = rep.growth_factors[i - 1] if i > 0 else None
        rows.append([n, v, growth, rep.route, rep.classification if i == len(rep.values) - 1 else ""])
    _write_csv(
        out / "probe.csv",
        ["level", "measured", "growth_factor", "route", "classification"],
        rows,
        cfg.resolved_hash(),
        cfg["output"]["precision"],
    )


def _run_limits(cfg: ExperimentConfig, out: Path) -> None:
    run = cfg["run"]
    radius = run["radius"]
    n = run["nodes_per_axis"]
    dom = build_domain(Ball(center=(0.0,), radius=radius), n, margin_cells=max(1, n // 10))
    half = radius / 2.0
    u = sample(lambda x: np.maximum(1.0 - (x / half) ** 2, 0.0) ** 3, dom)
    h = dom.h
    full = u.values
    lap = np.zeros_like(full)
    lap[1:-1] = (2.0 * full[1:-1] - full[2:] - full[:-2]) / h**2  # 5-point -Laplacian
    lap_i = lap[dom.interior_mask]
    g2 = (central_gradient(u) ** 2).sum(axis=1)
    rows = []
    for s in run["s_values"]:
        Au = apply_frac_laplacian(u, s).interior
        D = apply_D_s2(u, s).interior
        err_a = float(np.abs(Au - lap_i).max() / np.abs(lap_i).max())
        err_d = float(np.abs(D - g2).max() / np.abs(g2).max())
        rows.append([s, err_a, err_d])
    _write_csv(
        out / "limits.csv",
        ["s", "frac_laplacian_rel_err", "grad_sq_rel_err"],
        rows,
        cfg.resolved_hash(),
        cfg["output"]["precision"],
    )


_DRIVERS = {
    "solve": _run_solve,
    "iterate": _run_iterate,
    "sweep": _run_sweep,
    "hardy": _run_hardy,
    "exponents": _run_exponents,
    "certify": _run_certify,
    "probe": _run_probe,
    "limits": _run_limits,
}


def run(subcommand: str, config_path, out_dir=".", threads: int = 1) -> int:
    """Execute one subcommand; returns the process exit code."""
    try:
        if threads < 1:
            raise ConfigurationError(f"--threads must be >= 1, got {threads}")
        cfg = ExperimentConfig.load(subcommand, config_path)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _DRIVERS[subcommand](cfg, out)
        return 0
    except (ConfigurationError, ParameterError, HypothesisViolation, configparser.Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConsistencyError, QuadratureError, FraclabError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fraclab", description=__doc__)
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="path to an INI config file")
    parser.add_argument("--out", default=".", help="output directory for CSV files")
    parser.add_argument("--threads", type=int, default=1, help="advisory worker count")
    args = parser.parse_args(argv)
    return run(args.subcommand, args.config, args.out, args.threads)


if __name__ == "__main__":
    sys.exit(main())
