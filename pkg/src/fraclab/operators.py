"""Discrete nonlocal operators sharing one kernel table per (domain, order).

All operators act on exterior-zero grid functions and return the same.  With
P the interior pair-weight matrix, kappa the exterior mass and T = total+tail
the full-space weight mass, the signed operators take the form

    (-Delta)^sigma/2-type:   a * [ T u - P u + L0 u ]

where L0 is the origin-cell term: the symmetrized stride-2 second difference
weighted by half the origin moment  I0(2) = int_{cell0} |z|^{2-N-sigma} dz.
L0 is exactly the symmetric operator whose quadratic form matches the
|grad_h u|^2 * I0(2) origin term used by the squared operators and by the
Gagliardo sums, so the energy identity

    <A u, u>_h = (a/2) * gagliardo_double_sum(u, 2, s, D_omega)

holds to machine precision, not just asymptotically.

The squared gradient  D_s^2(u) = (a/2) int |u(x)-u(y)|^2 |x-y|^-(N+2s) dy  and
its q-th power generalization B_s^q use the same tables; their origin cell is
absolutely integrable and approximated by |grad_h u|^{2 or q} * I0(2 or q).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .grids import GridDomain, GridFunction
from .kernels import (
    KernelTable,
    cell_kernel_integrals,
    get_table,
    normalization_constant,
    origin_cell_moment,
)

__all__ = [
    "central_gradient",
    "apply_frac_laplacian",
    "apply_frac_power",
    "apply_D_s2",
    "apply_B_sq",
    "apply_riesz_gradient",
    "riesz_potential",
    "pair_power_sum",
    "OperatorHandle",
    "make_operator",
]

_PAIR_CHUNK = 2048


def central_gradient(u: GridFunction) -> np.ndarray:
    """Central-difference gradient at interior nodes, shape (interior_count, N).

    Exterior neighbors contribute their value 0, consistent with the
    exterior-zero condition.
    """
    dom = u.domain
    h = dom.h
    full = u.values
    out = np.empty((dom.interior_count, dom.dimension))
    for k in range(dom.dimension):
        up = np.zeros_like(full)
        dn = np.zeros_like(full)
        sl_up = [slice(None)] * dom.dimension
        sl_dn = [slice(None)] * dom.dimension
        sl_up[k] = slice(None, -1)
        sl_dn[k] = slice(1, None)
        up[tuple(sl_up)] = full[tuple(sl_dn)]
        dn[tuple(sl_dn)] = full[tuple(sl_up)]
        out[:, k] = ((up - dn) / (2.0 * h))[dom.interior_mask]
    return out


def _stride2_second_difference(u: GridFunction) -> np.ndarray:
    """sum_k (2 u_i - u_{i+2e_k} - u_{i-2e_k}) / (4 h^2) at interior nodes."""
    dom = u.domain
    full = u.values
    acc = np.zeros_like(full)
    for k in range(dom.dimension):
        up = np.zeros_like(full)
        dn = np.zeros_like(full)
        sl_a = [slice(None)] * dom.dimension
        sl_b = [slice(None)] * dom.dimension
        sl_a[k] = slice(None, -2)
        sl_b[k] = slice(2, None)
        up[tuple(sl_a)] = full[tuple(sl_b)]
        dn[tuple(sl_b)] = full[tuple(sl_a)]
        acc += 2.0 * full - up - dn
    return (acc / (4.0 * dom.h**2))[dom.interior_mask]


def _resolve(u: GridFunction, sigma: float, table: KernelTable | None, cutoff_radius):
    if table is None:
        table = get_table(u.domain, sigma, cutoff_radius)
    elif table.domain is not u.domain:
        raise ParameterError("kernel table belongs to a different domain")
    elif abs(table.sigma - sigma) > 1e-12:
        raise ParameterError(f"kernel table has order {table.sigma}, expected {sigma}")
    return table


def _signed_apply(u: GridFunction, sigma: float, norm: float, table: KernelTable) -> GridFunction:
    ui = u.interior
    P = table.pair_matrix()
    I02 = table.origin_moment(2.0)
    out = norm * (
        (table.total_weight + table.tail) * ui
        - P @ ui
        + 0.5 * I02 * _stride2_second_difference(u)
    )
    return u.domain.from_interior(out)


def apply_frac_laplacian(
    u: GridFunction,
    s: float,
    table: KernelTable | None = None,
    cutoff_radius: float | None = None,
) -> GridFunction:
    """(-Delta)^s u in symmetrized second-difference form (kernel order 2s)."""
    if not 0.0 < s < 1.0:
        raise ParameterError(f"s must lie in (0,1), got {s}")
    table = _resolve(u, 2.0 * s, table, cutoff_radius)
    return _signed_apply(u, 2.0 * s, table.norm_const, table)


def apply_frac_power(
    u: GridFunction,
    t: float,
    table: KernelTable | None = None,
    cutoff_radius: float | None = None,
) -> GridFunction:
    """(-Delta)^{t/2} u: same structure with kernel order t and constant a_{N,t/2}."""
    if not 0.0 < t < 1.0:
        raise ParameterError(f"t must lie in (0,1), got {t}")
    table = _resolve(u, t, table, cutoff_radius)
    return _signed_apply(u, t, table.norm_const, table)


def pair_power_sum(table: KernelTable, ui: np.ndarray, p: float) -> np.ndarray:
    """sum_j |u_i - u_j|^p w_ij over interior j, chunked over rows."""
    P = table.pair_matrix()
    n = len(ui)
    out = np.empty(n)
    for i0 in range(0, n, _PAIR_CHUNK):
        i1 = min(i0 + _PAIR_CHUNK, n)
        diff = np.abs(ui[i0:i1, None] - ui[None, :]) ** p
        out[i0:i1] = (diff * P[i0:i1]).sum(axis=1)
    return out


def apply_D_s2(
    u: GridFunction,
    s: float,
    table: KernelTable | None = None,
    cutoff_radius: float | None = None,
) -> GridFunction:
    """Nonlocal gradient square D_s^2(u); nonnegative at every node."""
    if not 0.0 < s < 1.0:
        raise ParameterError(f"s must lie in (0,1), got {s}")
    table = _resolve(u, 2.0 * s, table, cutoff_radius)
    ui = u.interior
    P = table.pair_matrix()
    grad = central_gradient(u)
    g2 = (grad**2).sum(axis=1)
    pair = ui**2 * (table.total_weight + table.tail) - 2.0 * ui * (P @ ui) + P @ (ui**2)
    out = 0.5 * table.norm_const * (pair + g2 * table.origin_moment(2.0))
    return u.domain.from_interior(np.maximum(out, 0.0))


def apply_B_sq(
    u: GridFunction,
    s: float,
    q: float,
    table: KernelTable | None = None,
    cutoff_radius: float | None = None,
) -> GridFunction:
    """q-th root nonlocal gradient B_s^q(u); reduces to sqrt(D_s^2) at q = 2.

    Uses the kernel of order s*q (exponent N + s*q), so s*q < 2 is required.
    """
    if not 0.0 < s < 1.0:
        raise ParameterError(f"s must lie in (0,1), got {s}")
    if q <= 1.0:
        raise ParameterError(f"q must exceed 1, got {q}")
    sigma = s * q
    if sigma >= 2.0:
        raise ParameterError(f"kernel order s*q = {sigma} is outside (0,2)")
    table = _resolve(u, sigma, table, cutoff_radius)
    ui = u.interior
    norm = normalization_constant(u.domain.dimension, s)
    grad = central_gradient(u)
    gq = ((grad**2).sum(axis=1)) ** (q / 2.0)
    body = (
        pair_power_sum(table, ui, q)
        + np.abs(ui) ** q * table.kappa
        + gq * table.origin_moment(q)
    )
    out = (norm / q * body) ** (1.0 / q)
    return u.domain.from_interior(out)


def apply_riesz_gradient(
    u: GridFunction,
    s: float,
    table: KernelTable | None = None,
    cutoff_radius: float | None = None,
) -> np.ndarray:
    """Riesz fractional gradient: N columns of values at interior nodes.

    Component k at node i is  sum_j (u_i - u_j) ((x_i - x_j)_k/|x_i - x_j|) w_ij
    with the zero exterior contribution folded in and the analytic far tail
    dropped by odd symmetry (kernel order sigma = s).
    """
    if not 0.0 < s < 1.0:
        raise ParameterError(f"s must lie in (0,1), got {s}")
    table = _resolve(u, s, table, cutoff_radius)
    dom = u.domain
    ij = dom.interior_index
    ui = u.interior
    P = table.pair_matrix()
    n = len(ui)
    out = np.zeros((n, dom.dimension))
    for i0 in range(0, n, _PAIR_CHUNK):
        i1 = min(i0 + _PAIR_CHUNK, n)
        d = ij[None, :, :] - ij[i0:i1, None, :]
        r = np.sqrt((d.astype(float) ** 2).sum(axis=-1))
        np.maximum(r, 1e-300, out=r)
        for k in range(dom.dimension):
            out[i0:i1, k] = ((d[..., k] / r) * P[i0:i1]) @ ui
    return out


def riesz_potential(
    g: GridFunction,
    lam: float,
) -> GridFunction:
    """Riesz potential J_lam(g)(x_i) = sum_j g_j * int_{cell j} |x_i - y|^-lam dy.

    The coincident cell is included; it is integrable since lam < N.
    """
    dom = g.domain
    if not 0.0 < lam < dom.dimension:
        raise ParameterError(f"lambda must lie in (0,N)=(0,{dom.dimension}), got {lam}")
    key = ("riesz", round(float(lam), 14))
    V = dom._tables.get(key)
    if V is None:
        ij = dom.interior_index
        d = ij[:, None, :] - ij[None, :, :]
        flat = d.reshape(-1, dom.dimension)
        nonzero = np.any(flat != 0, axis=1)
        vals = np.zeros(len(flat))
        vals[nonzero] = cell_kernel_integrals(flat[nonzero], -lam, dom.h)
        vals[~nonzero] = origin_cell_moment(dom.h, dom.dimension, -lam)
        V = vals.reshape(len(ij), len(ij))
        dom._tables[key] = V
    return dom.from_interior(V @ g.interior)


_KINDS = ("frac_laplacian", "frac_power_half", "D_s2", "B_sq", "riesz_gradient", "riesz_potential")


@dataclass(frozen=True)
class OperatorHandle:
    """Validated handle binding an operator kind to a domain and parameters."""

    kind: str
    domain: GridDomain
    s: float | None = None
    t: float | None = None
    q: float | None = None
    lam: float | None = None

    def apply(self, u: GridFunction):
        if self.kind == "frac_laplacian":
            return apply_frac_laplacian(u, self.s)
        if self.kind == "frac_power_half":
            return apply_frac_power(u, self.t)
        if self.kind == "D_s2":
            return apply_D_s2(u, self.s)
        if self.kind == "B_sq":
            return apply_B_sq(u, self.s, self.q)
        if self.kind == "riesz_gradient":
            return apply_riesz_gradient(u, self.s)
        return riesz_potential(u, self.lam)


def make_operator(kind: str, domain: GridDomain, **params) -> OperatorHandle:
    if kind not in _KINDS:
        raise ParameterError(f"unknown operator kind {kind!r}; choose from {_KINDS}")
    s = params.pop("s", None)
    t = params.pop("t", None)
    q = params.pop("q", None)
    lam = params.pop("lam", None)
    if params:
        raise ParameterError(f"unknown operator parameters {sorted(params)}")
    if kind in ("frac_laplacian", "D_s2", "B_sq", "riesz_gradient"):
        if s is None or not 0.0 < s < 1.0:
            raise ParameterError(f"{kind} requires s in (0,1), got {s}")
    if kind == "frac_power_half" and (t is None or not 0.0 < t < 1.0):
        raise ParameterError(f"frac_power_half requires t in (0,1), got {t}")
    if kind == "B_sq" and (q is None or q <= 1.0):
        raise ParameterError(f"B_sq requires q > 1, got {q}")
    if kind == "riesz_potential" and (lam is None or not 0.0 < lam < domain.dimension):
        raise ParameterError(f"riesz_potential requires lambda in (0,N), got {lam}")
    return OperatorHandle(kind=kind, domain=domain, s=s, t=t, q=q, lam=lam)
