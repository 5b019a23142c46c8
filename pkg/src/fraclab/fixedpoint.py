"""Picard iteration for the nonlocal fixed-point problems and their constants.

The driver realizes successive substitution  u_{k+1} = S(rhs(u_k)),  u_0 = 0,
for five right-hand-side families built from the nonlocal operators:

    D_s2:              mu * D_s^2(u)             + lambda f
    u_times_D_s2:      mu * u * D_s^2(u)         + lambda f
    abs_frac_power_q:  mu * |(-Delta)^{t/2} u|^q + lambda f
    riesz_grad_q:      mu * |grad^s u|^q         + lambda f
    B_sq_alpha:        mu * (B_s^q u)^alpha      + lambda f

Convergence is declared on the relative successive difference; divergence on
non-finite iterates or a sup-norm runaway.  The closed-form root of

    g(t) = a^p (b t + c*)^p - t,   c* = (p-1)/p * (1/(p a^p b))^{1/(p-1)}

drives the smallness thresholds: lambda* is the largest forcing scale for
which g keeps a root, and l = t* is the invariant-ball radius parameter used
by the membership checks.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import ParameterError
from .grids import GridFunction
from .operators import (
    apply_B_sq,
    apply_D_s2,
    apply_frac_power,
    apply_riesz_gradient,
)
from .poisson import FactorizedSolver
from .seminorms import _pair_seminorm

__all__ = [
    "RHS_KINDS",
    "SCHEMES",
    "ProblemSpec",
    "IterationConfig",
    "IterationReport",
    "ThresholdConstants",
    "lemma_g_root",
    "lemma_g_value",
    "threshold_from_constants",
    "picard_iterate",
    "ball_membership",
    "manufacture_forcing",
]

RHS_KINDS = ("D_s2", "u_times_D_s2", "abs_frac_power_q", "riesz_grad_q", "B_sq_alpha")
SCHEMES = ("P_lambda", "P_tilde", "Q_lambda")
OMEGA_EXPONENT_VARIANTS = ("lambda_star", "l_equation")


@dataclass(frozen=True)
class ProblemSpec:
    """One instance of the nonlinear problem: which rhs family, and its data."""

    rhs_kind: str
    s: float
    lam: float
    mu: GridFunction
    f: GridFunction
    m: float | None = None
    t: float | None = None
    q: float | None = None
    alpha: float | None = None

    def __post_init__(self):
        if self.rhs_kind not in RHS_KINDS:
            raise ParameterError(f"rhs_kind must be one of {RHS_KINDS}, got {self.rhs_kind!r}")
        if not 0.0 < self.s < 1.0:
            raise ParameterError(f"s must lie in (0,1), got {self.s}")
        if self.lam <= 0.0:
            raise ParameterError(f"lambda must be positive, got {self.lam}")
        if self.mu.domain is not self.f.domain:
            raise ParameterError("mu and f must live on the same domain")
        if self.rhs_kind == "abs_frac_power_q":
            if self.t is None or not 0.0 < self.t < 1.0:
                raise ParameterError(f"abs_frac_power_q requires t in (0,1), got {self.t}")
            if self.q is None or self.q <= 1.0:
                raise ParameterError(f"abs_frac_power_q requires q > 1, got {self.q}")
        if self.rhs_kind == "riesz_grad_q" and (self.q is None or self.q <= 1.0):
            raise ParameterError(f"riesz_grad_q requires q > 1, got {self.q}")
        if self.rhs_kind == "B_sq_alpha":
            if self.q is None or self.q <= 1.0:
                raise ParameterError(f"B_sq_alpha requires q > 1, got {self.q}")
            if self.alpha is None or not 1.0 < self.alpha <= self.q:
                raise ParameterError(
                    f"B_sq_alpha requires 1 < alpha <= q, got alpha={self.alpha}"
                )
        if self.m is not None and self.m < 1.0:
            raise ParameterError(f"integrability label m must be >= 1, got {self.m}")

    @property
    def domain(self):
        return self.mu.domain


@dataclass(frozen=True)
class IterationConfig:
    tolerance: float = 1e-9
    max_iter: int = 200
    divergence_norm: float | None = None  # None: 1e6 * ||S(lambda f)||_inf
    frac_half_norm_r: float = 2.0

    def __post_init__(self):
        if self.tolerance <= 0.0:
            raise ParameterError("tolerance must be positive")
        if self.max_iter < 1:
            raise ParameterError("max_iter must be >= 1")


@dataclass
class IterationReport:
    verdict: str  # converged | diverged | max_iter
    iterations: int
    history: dict[str, list[float]]
    final_residual: float | None
    u_final: GridFunction
    divergence_norm_used: float
    ball_member: bool | None = None
    ball_seminorm: float | None = None
    ball_radius: float | None = None


@dataclass(frozen=True)
class ThresholdConstants:
    """User-supplied regularity/embedding constants plus derived thresholds.

    reg_constant is the scheme's regularity constant (C1, C2 or C3);
    embed_constant the companion embedding constant (C10 or C11, unused for
    Q_lambda where |Omega|^e takes its place).
    """

    reg_constant: float
    mu_inf: float
    f_norm: float
    embed_constant: float | None = None
    omega_measure: float | None = None
    r: float | None = None
    q: float | None = None
    m: float | None = None
    omega_exponent_variant: str = "l_equation"
    lambda_star: float | None = None
    l: float | None = None
    c_star: float | None = None
    t_star: float | None = None
    identity_residual: float | None = None


def lemma_g_root(a: float, b: float, p: float) -> tuple[float, float]:
    """Root data of g(t) = a^p (b t + c*)^p - t.

    Returns (c*, t*) with c* = (p-1)/p (1/(p a^p b))^{1/(p-1)} and
    t* = 1/(p b) (1/(p a^p b))^{1/(p-1)}; g(t*) = 0 and t* is the unique root.
    """
    if a <= 0.0 or b <= 0.0:
        raise ParameterError(f"a and b must be positive, got a={a}, b={b}")
    if p <= 1.0:
        raise ParameterError(f"p must exceed 1, got {p}")
    log_core = -(math.log(p) + p * math.log(a) + math.log(b)) / (p - 1.0)
    if abs(log_core) > 690.0:
        raise ParameterError(
            f"root magnitude exp({log_core:.1f}) exceeds the floating-point range"
        )
    core = math.exp(log_core)
    c_star = (p - 1.0) / p * core
    t_star = core / (p * b)
    return c_star, t_star


def lemma_g_value(a: float, b: float, p: float, c: float, t) -> np.ndarray:
    """g(t) = a^p (b t + c)^p - t, vectorized in t."""
    t = np.asarray(t, dtype=float)
    return a**p * (b * t + c) ** p - t


def threshold_from_constants(constants: ThresholdConstants, scheme: str) -> ThresholdConstants:
    """Complete the constants with lambda*, l and the root data of their scheme.

    Schemes map to (a, b, p) as  P_lambda: (C1, C10 ||mu||, 2),
    P_tilde: (C2, C11 ||mu||, 3),  Q_lambda: (C3, |Omega|^e ||mu||, q)  where
    the |Omega| exponent e is (r-qm)/r or (r-qm)/(mr) per the variant switch;
    both variants are kept because the two source formulas disagree, and each
    is completed self-consistently so its defining identity holds exactly.
    """
    if scheme not in SCHEMES:
        raise ParameterError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    c = constants
    for name in ("reg_constant", "mu_inf", "f_norm"):
        if getattr(c, name) <= 0.0:
            raise ParameterError(f"{name} must be positive")

    if scheme in ("P_lambda", "P_tilde"):
        if c.embed_constant is None or c.embed_constant <= 0.0:
            raise ParameterError(f"{scheme} requires a positive embed_constant")
        a = c.reg_constant
        b = c.embed_constant * c.mu_inf
        p = 2.0 if scheme == "P_lambda" else 3.0
    else:
        for name in ("omega_measure", "r", "q", "m"):
            if getattr(c, name) is None or getattr(c, name) <= 0.0:
                raise ParameterError(f"Q_lambda requires positive {name}")
        if c.omega_exponent_variant not in OMEGA_EXPONENT_VARIANTS:
            raise ParameterError(
                f"omega_exponent_variant must be one of {OMEGA_EXPONENT_VARIANTS}"
            )
        if c.q <= 1.0:
            raise ParameterError(f"Q_lambda requires q > 1, got {c.q}")
        e = (c.r - c.q * c.m) / c.r
        if c.omega_exponent_variant == "l_equation":
            e = e / c.m
        a = c.reg_constant
        b = c.omega_measure**e * c.mu_inf
        p = c.q

    c_star, t_star = lemma_g_root(a, b, p)
    lam_star = c_star / c.f_norm
    l = t_star
    residual = abs(a * (b * l + lam_star * c.f_norm) - l ** (1.0 / p)) / l ** (1.0 / p)
    return replace(
        c,
        lambda_star=lam_star,
        l=l,
        c_star=c_star,
        t_star=t_star,
        identity_residual=residual,
    )


def _rhs_eval(spec: ProblemSpec, u: GridFunction) -> np.ndarray:
    mu = spec.mu.interior
    base = spec.lam * spec.f.interior
    if spec.rhs_kind == "D_s2":
        return mu * apply_D_s2(u, spec.s).interior + base
    if spec.rhs_kind == "u_times_D_s2":
        return mu * u.interior * apply_D_s2(u, spec.s).interior + base
    if spec.rhs_kind == "abs_frac_power_q":
        return mu * np.abs(apply_frac_power(u, spec.t).interior) ** spec.q + base
    if spec.rhs_kind == "riesz_grad_q":
        g = apply_riesz_gradient(u, spec.s)
        return mu * ((g**2).sum(axis=1)) ** (spec.q / 2.0) + base
    b = apply_B_sq(u, spec.s, spec.q).interior
    return mu * b**spec.alpha + base


def _warn_integrability_window(spec: ProblemSpec) -> None:
    # the existence arguments normalize m into (N/2s, N/(2s-1)); larger m still
    # embeds on a bounded domain, so this is advisory only
    if spec.m is None or spec.rhs_kind not in ("D_s2", "u_times_D_s2"):
        return
    N = spec.domain.dimension
    lo = N / (2.0 * spec.s)
    hi = N / (2.0 * spec.s - 1.0) if spec.s > 0.5 else math.inf
    if not lo < spec.m < hi:
        warnings.warn(
            f"integrability label m={spec.m} outside the normalized window "
            f"({lo:.4g}, {hi:.4g}); proceeding",
            stacklevel=3,
        )


def picard_iterate(
    spec: ProblemSpec,
    config: IterationConfig,
    solver: FactorizedSolver,
    ball_check: tuple[float, float, float] | None = None,
) -> IterationReport:
    """Run u_{k+1} = S(rhs(u_k)) from u_0 = 0 until the verdict is decided.

    ball_check, when given, is (epsilon, r, radius): after the loop the final
    iterate is tested for membership in the invariant ball of seminorm order
    s + epsilon, power r and the given radius.
    """
    if solver.domain is not spec.domain:
        raise ParameterError("solver and problem live on different domains")
    if abs(solver.operator.s - spec.s) > 1e-14:
        raise ParameterError(
            f"solver is assembled for s={solver.operator.s}, problem has s={spec.s}"
        )
    _warn_integrability_window(spec)
    dom = spec.domain
    hN = dom.h**dom.dimension

    base = solver.solve_vector(spec.lam * spec.f.interior)
    base_sup = float(np.abs(base).max()) if base.size else 0.0
    div_norm = (
        config.divergence_norm
        if config.divergence_norm is not None
        else 1e6 * max(base_sup, 1e-300)
    )

    history: dict[str, list[float]] = {
        "sup_norm": [],
        "energy_norm": [],
        "frac_half_norm": [],
        "successive_diff": [],
    }
    u = dom.zeros()

    rhs0 = _rhs_eval(spec, u)
    if not np.any(rhs0):
        return IterationReport(
            verdict="converged",
            iterations=0,
            history=history,
            final_residual=0.0,
            u_final=u,
            divergence_norm_used=div_norm,
        )

    verdict = "max_iter"
    iterations = config.max_iter
    for k in range(1, config.max_iter + 1):
        rhs = _rhs_eval(spec, u)
        if not np.all(np.isfinite(rhs)):
            verdict, iterations = "diverged", k
            break
        v = solver.solve_vector(rhs)
        if not np.all(np.isfinite(v)):
            verdict, iterations = "diverged", k
            break
        u_new = dom.from_interior(v)
        sup = float(np.abs(v).max())
        diff = float(np.abs(v - u.interior).max()) / max(sup, 1e-300)
        history["sup_norm"].append(sup)
        history["energy_norm"].append(math.sqrt(max(solver.operator.energy(u_new), 0.0)))
        history["frac_half_norm"].append(
            float(
                (np.abs(apply_frac_power(u_new, spec.s).interior) ** config.frac_half_norm_r).sum()
                * hN
            )
            ** (1.0 / config.frac_half_norm_r)
        )
        history["successive_diff"].append(diff)
        u = u_new
        if sup > div_norm:
            verdict, iterations = "diverged", k
            break
        if diff <= config.tolerance:
            verdict, iterations = "converged", k
            break

    final_residual = None
    if verdict == "converged":
        rhs = _rhs_eval(spec, u)
        num = float(np.linalg.norm(solver.operator.matrix @ u.interior - rhs))
        den = float(np.linalg.norm(rhs))
        final_residual = num / max(den, 1e-300)

    report = IterationReport(
        verdict=verdict,
        iterations=iterations,
        history=history,
        final_residual=final_residual,
        u_final=u,
        divergence_norm_used=div_norm,
    )
    if ball_check is not None:
        eps, r, radius = ball_check
        member, value = ball_membership(u, spec.s, eps, r, radius)
        report.ball_member = member
        report.ball_seminorm = value
        report.ball_radius = radius
    return report


def ball_membership(
    u: GridFunction,
    s: float,
    eps: float,
    r: float,
    radius: float,
) -> tuple[bool, float]:
    """Test the invariant-ball condition [u]^r_{s+eps, r, D_Omega} <= radius^{r/2}.

    Kernel order (s+eps)*r may exceed 2 here (direct pairwise summation with
    cell-averaged weights); orders up to N+2 are supported.
    """
    if eps <= 0.0 or not 0.0 < s + eps < 1.0:
        raise ParameterError(f"need 0 < s+eps < 1, got s+eps = {s + eps}")
    if r < 1.0:
        raise ParameterError(f"r must be >= 1, got {r}")
    if radius <= 0.0:
        raise ParameterError(f"radius must be positive, got {radius}")
    order = (s + eps) * r
    N = u.domain.dimension
    if order >= N + 2.0:
        raise ParameterError(
            f"kernel order (s+eps)*r = {order} exceeds the supported bound N+2 = {N + 2}"
        )
    value = _pair_seminorm(u, r, order, "d_omega", None, None, True)
    return value <= radius ** (r / 2.0), value


def manufacture_forcing(spec: ProblemSpec, u_star: GridFunction, solver: FactorizedSolver) -> GridFunction:
    """Forcing f making u_star an exact discrete fixed point of spec's map.

    Solves  lambda f = A u* - (rhs(u*) - lambda f)  for f, i.e. subtracts the
    nonlinear part of the right-hand side from the stiffness action.
    """
    zero_f = replace(spec, f=spec.domain.zeros())
    nonlinear = _rhs_eval(zero_f, u_star)
    f_vec = (solver.operator.matrix @ u_star.interior - nonlinear) / spec.lam
    return spec.domain.from_interior(f_vec)
