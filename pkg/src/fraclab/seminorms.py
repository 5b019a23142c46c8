"""Gagliardo seminorms, the Sobolev quotient, and the sharp Hardy constant.

The discrete Gagliardo p-power sum over a pair region uses the same
cell-averaged tables as the operators, at kernel order sigma = s*p:

    [u]^p = h^N [ sum_{i,j} |u_i-u_j|^p w_ij  (+ kappa and origin-cell terms) ]

Regions: "omega_omega" integrates over interior x interior only; "d_omega"
adds both exterior blocks (each contributing |u_i|^p kappa_i once); for
exterior-zero functions the full-space value coincides with d_omega.  Because
the weights, kappa and the origin moment are shared with the operator module,
the decomposition identity against the nonlocal gradient square and the
operator energy identity hold to machine precision.

The sharp Hardy constant is evaluated from its one-dimensional double
integral

    Lambda_{N,s,p} = 2 int_0^1 sigma^{ps-1} |1 - sigma^{(N-ps)/p}|^p
                     Phi_{N,s,p}(sigma) dsigma,
    Phi_{N,s,p}(sigma) = |S^{N-2}| int_{-1}^1 (1-t^2)^{(N-3)/2}
                         (1 - 2 sigma t + sigma^2)^{-(N+ps)/2} dt,

by nested adaptive quadrature with an exp substitution near sigma = 0, a
power substitution that flattens the (1-sigma)^{p-1-ps} endpoint, and a
closed-form term for the last stretch where Phi enters its asymptotic regime
Phi(1-u) ~ c_Phi u^{-1-ps}.  An independent Monte-Carlo estimator of the same
double integral (importance sampling in sigma, closed-form Phi) serves as the
cross-check oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import betaln, hyp2f1

from .errors import ParameterError, QuadratureError
from .grids import GridFunction, lp_norm
from .kernels import KernelTable, get_table, sphere_area
from .operators import central_gradient, pair_power_sum

__all__ = [
    "REGIONS",
    "SeminormSpec",
    "HardyResult",
    "SobolevCheckResult",
    "gagliardo_double_sum",
    "sobolev_check",
    "hardy_constant",
    "hardy_constant_mc",
    "hardy_ratio",
    "hardy_phi_weight",
]

REGIONS = ("omega_omega", "d_omega", "full_space")

_U_SWITCH = 1e-8  # 1 - sigma below which the endpoint asymptotics take over


@dataclass(frozen=True)
class SeminormSpec:
    """Parameters of a Gagliardo seminorm: order s, power p, pair region."""

    s: float
    p: float
    region: str = "d_omega"

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise ParameterError(f"s must lie in (0,1), got {self.s}")
        if self.p < 1.0:
            raise ParameterError(f"p must be >= 1, got {self.p}")
        if self.region not in REGIONS:
            raise ParameterError(f"region must be one of {REGIONS}, got {self.region!r}")


@dataclass(frozen=True)
class HardyResult:
    value: float
    error_estimate: float
    N: int
    s: float
    p: float


@dataclass(frozen=True)
class SobolevCheckResult:
    ratio: float
    critical_exponent: float
    s: float
    p: float


def _pair_seminorm(
    u: GridFunction,
    p: float,
    order: float,
    region: str,
    table: KernelTable | None,
    cutoff_radius,
    allow_high_order: bool,
) -> float:
    dom = u.domain
    if table is None:
        table = get_table(dom, order, cutoff_radius, allow_high_order)
    ui = u.interior
    pairs = float(pair_power_sum(table, ui, p).sum())
    grad = central_gradient(u)
    gp = ((grad**2).sum(axis=1)) ** (p / 2.0)
    origin = float((gp * table.origin_moment(p)).sum())
    kap = 0.0
    if region in ("d_omega", "full_space"):
        kap = 2.0 * float((np.abs(ui) ** p * table.kappa).sum())
    return (pairs + kap + origin) * dom.h**dom.dimension


def gagliardo_double_sum(
    u: GridFunction,
    p: float,
    s: float,
    region: str = "d_omega",
    table: KernelTable | None = None,
    cutoff_radius: float | None = None,
) -> float:
    """Discrete Gagliardo p-power sum of order s over the given pair region.

    Requires kernel order s*p < 2; higher orders are rejected (the ball
    membership check in the fixed-point driver use its own direct summation).
    """
    spec = SeminormSpec(s=s, p=p, region=region)
    order = s * p
    if order >= 2.0:
        raise ParameterError(
            f"kernel order s*p = {order} is outside the supported range (0,2)"
        )
    return _pair_seminorm(u, p, order, spec.region, table, cutoff_radius, False)


def sobolev_check(u: GridFunction, s: float, p: float) -> SobolevCheckResult:
    """Empirical Sobolev quotient ||u||_{p_s*} / [u]_{s,p} with p_s* = Np/(N-sp)."""
    N = u.domain.dimension
    if not 0.0 < s < 1.0:
        raise ParameterError(f"s must lie in (0,1), got {s}")
    if p < 1.0:
        raise ParameterError(f"p must be >= 1, got {p}")
    if s * p >= N:
        raise ParameterError(f"sobolev_check requires s*p < N, got s*p = {s * p}")
    p_star = N * p / (N - s * p)
    semi = gagliardo_double_sum(u, p, s, "d_omega")
    if semi == 0.0:
        raise ParameterError("seminorm vanishes; u must be nonzero")
    ratio = lp_norm(u, p_star) / semi ** (1.0 / p)
    return SobolevCheckResult(ratio=ratio, critical_exponent=p_star, s=s, p=p)


# ---------------------------------------------------------------------------
# Hardy constant
# ---------------------------------------------------------------------------


def _phi_coeff(N: int, beta: float) -> float:
    # lim_{u->0} u^{1+ps} Phi(1-u) = |S^{N-2}| B((N-1)/2, beta-(N-1)/2) / 2
    return sphere_area(N - 2) * 0.5 * math.exp(betaln((N - 1) / 2.0, beta - (N - 1) / 2.0))


def _phi_quad(N: int, beta: float, sigma: float) -> tuple[float, float]:
    """Angular factor Phi by adaptive quadrature, peaked-core split near sigma=1."""
    SN2 = sphere_area(N - 2)
    usq = (1.0 - sigma) ** 2

    def f(th):
        return math.sin(th) ** (N - 2) * (usq + 4.0 * sigma * math.sin(th / 2.0) ** 2) ** (-beta)

    u = 1.0 - sigma
    if u >= 0.1:
        v, e = quad(f, 0.0, math.pi, limit=200)
        return SN2 * v, SN2 * e
    cut = min(10.0 * u, math.pi / 2.0)
    v1, e1 = quad(lambda tau: u * f(u * tau), 0.0, cut / u, limit=200)
    v2, e2 = quad(lambda w: math.exp(w) * f(math.exp(w)), math.log(cut), math.log(math.pi), limit=200)
    return SN2 * (v1 + v2), SN2 * (e1 + e2)


def hardy_phi_weight(N: int, s: float, p: float, sigma: float) -> float:
    """Phi_{N,s,p}(sigma); Phi(0) equals the unit sphere area |S^{N-1}|."""
    if N < 2:
        raise ParameterError(f"Phi requires N >= 2, got {N}")
    return _phi_quad(N, (N + p * s) / 2.0, sigma)[0]


def hardy_constant(N: int, s: float, p: float, tol: float = 1e-6) -> HardyResult:
    """Sharp Hardy constant Lambda_{N,s,p} by nested adaptive quadrature.

    Raises QuadratureError (reporting the achieved estimate) if the combined
    error estimate exceeds tol.
    """
    if N < 2:
        raise ParameterError(f"hardy_constant requires N >= 2, got {N}")
    if not 0.0 < s < 1.0:
        raise ParameterError(f"s must lie in (0,1), got {s}")
    if p <= 1.0:
        raise ParameterError(f"p must exceed 1, got {p}")

    beta = (N + p * s) / 2.0
    k = (N - p * s) / p
    ps = p * s
    g = p - ps
    phi_err = [0.0]

    def F(sigma: float) -> float:
        v, e = _phi_quad(N, beta, sigma)
        phi_err[0] = max(phi_err[0], e / max(abs(v), 1e-300))
        return sigma ** (ps - 1.0) * abs(1.0 - sigma**k) ** p * v

    v1, e1 = quad(lambda tau: F(math.exp(-tau)) * math.exp(-tau), math.log(2.0), math.inf, limit=300)

    w_switch = _U_SWITCH**g
    endpoint = k**p * _phi_coeff(N, beta) * w_switch / g
    v2, e2 = quad(
        lambda w: F(1.0 - w ** (1.0 / g)) * (1.0 / g) * w ** (1.0 / g - 1.0),
        w_switch,
        0.5**g,
        limit=300,
    )
    lam = 2.0 * (v1 + v2 + endpoint)
    err = 2.0 * (e1 + e2) + phi_err[0] * lam + 2.0 * endpoint * _U_SWITCH
    if not math.isfinite(lam) or err > tol:
        raise QuadratureError(
            f"Hardy constant quadrature reached error estimate {err:.3e} > tol {tol:.3e}"
        )
    return HardyResult(value=lam, error_estimate=err, N=N, s=s, p=p)


def _phi_closed(N: int, beta: float, sigma: np.ndarray) -> np.ndarray:
    """Closed forms of Phi for N in {2,3}, used only by the MC oracle."""
    u = 1.0 - sigma
    if N == 2:
        ksq = 4.0 * sigma / np.maximum(u, 1e-150) ** 2
        return 2.0 * math.pi * u ** (-2.0 * beta) * hyp2f1(beta, 0.5, 1.0, -ksq)
    if N == 3:
        bm1 = beta - 1.0
        sg = np.maximum(sigma, 1e-8)
        return 2.0 * math.pi / (2.0 * sg * bm1) * (u ** (-2.0 * bm1) - (1.0 + sg) ** (-2.0 * bm1))
    raise ParameterError(f"Monte-Carlo Hardy oracle implemented for N in {{2,3}}, got {N}")


def hardy_constant_mc(
    N: int,
    s: float,
    p: float,
    samples: int = 2_000_000,
    seed: int = 20240801,
) -> tuple[float, float]:
    """Monte-Carlo estimate of the same Hardy double integral.

    Importance mixture in sigma (densities ~ sigma^{ps-1} near 0 and
    (1-sigma)^{p-ps-1} near 1, both with exact inverse CDFs) keeps the
    integrand bounded; returns (estimate, standard error).
    """
    if N < 2:
        raise ParameterError(f"hardy_constant_mc requires N >= 2, got {N}")
    if not 0.0 < s < 1.0 or p <= 1.0:
        raise ParameterError("require s in (0,1) and p > 1")
    rng = np.random.default_rng(seed)
    beta = (N + p * s) / 2.0
    k = (N - p * s) / p
    ps = p * s
    g = p - ps
    cphi = _phi_coeff(N, beta)

    U = rng.random(samples)
    pick = rng.random(samples) < 0.5
    sigma = np.where(pick, U ** (1.0 / ps), 1.0 - U ** (1.0 / g))
    u = 1.0 - sigma
    dens = 0.5 * ps * np.maximum(sigma, 1e-300) ** (ps - 1.0) + 0.5 * g * np.maximum(u, 1e-300) ** (
        g - 1.0
    )
    F = np.empty(samples)
    near = u < _U_SWITCH
    far = ~near
    F[far] = (
        sigma[far] ** (ps - 1.0)
        * np.abs(1.0 - sigma[far] ** k) ** p
        * _phi_closed(N, beta, sigma[far])
    )
    F[near] = k**p * cphi * np.maximum(u[near], 1e-300) ** (p - 1.0 - ps)
    vals = 2.0 * F / dens
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(samples))


def hardy_ratio(
    phi: GridFunction,
    s: float,
    p: float,
    weight_exponent: float,
    table: KernelTable | None = None,
) -> float:
    """Quotient [phi]^p_{s,p,D_Omega} / int |phi|^p |x|^-weight_exponent dx.

    Requires an origin-offset grid (no node at 0) and a nonzero denominator.
    """
    dom = phi.domain
    radii = np.linalg.norm(dom.interior_coords, axis=1)
    if radii.min() < 1e-12 * dom.h:
        raise ParameterError("grid has a node at the origin; use origin_offset=True")
    num = gagliardo_double_sum(phi, p, s, "d_omega", table=table)
    den = float(
        (np.abs(phi.interior) ** p * radii ** (-weight_exponent)).sum()
        * dom.h**dom.dimension
    )
    if den <= 0.0:
        raise ParameterError("weighted denominator vanishes: phi must be nonzero")
    return num / den
