"""Discrete L_p, Sobolev, boundary-strip and shift-modulus seminorms.

All integrals use the element Gauss rule of the mesh, so the norms are
genuine weighted l_p norms of point evaluations: homogeneity, triangle
inequality and mask additivity of the p-th powers hold to rounding.

The shift-modulus (Lipschitz/Besov type) seminorm replaces the continuum
supremum over all shifts by grid-aligned shifts at dyadic scales. That is
a lower bound of the true seminorm; it can undershoot for strongly
anisotropic fields, which reports should treat as a surrogate, not the
exact value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import (
    GridFunction,
    Mesh,
    MeshMismatch,
    RegionMask,
    boundary_strip_mask,
    grads_at_gauss,
    quadrature,
    values_at_gauss,
)

NORM_KINDS = ("lp", "w1p_semi", "w1p_full", "besov_semi", "strip_lp")


@dataclass(frozen=True)
class NormRequest:
    kind: str
    p: float
    mask: RegionMask | None = None
    r: float | None = None
    strip_eps: float | None = None

    def __post_init__(self):
        if self.kind not in NORM_KINDS:
            raise ValueError(f"unknown norm kind {self.kind!r}")
        if not (1.0 < self.p < np.inf):
            raise ValueError("p must lie in (1, inf)")
        if self.kind == "besov_semi" and not (self.r and 0.0 < self.r < 1.0):
            raise ValueError("besov_semi needs r in (0, 1)")
        if self.kind == "strip_lp" and not (self.strip_eps and self.strip_eps > 0):
            raise ValueError("strip_lp needs a positive strip_eps")


def _element_weights(mesh, mask=None):
    if mask is not None and mask.mesh is not mesh and mask.mesh != mesh:
        raise MeshMismatch("mask lives on a different mesh")
    if mask is None:
        return None
    return mask.included


def lp_norm(u, p, mask=None):
    q = quadrature(u.mesh)
    vals = values_at_gauss(u, q)
    integrand = np.abs(vals) ** p @ q.weights
    sel = _element_weights(u.mesh, mask)
    if sel is not None:
        integrand = integrand[sel]
    return float(integrand.sum() ** (1.0 / p))


def w1p_seminorm(u, p, mask=None):
    q = quadrature(u.mesh)
    g = grads_at_gauss(u, q)
    mag = np.sqrt(np.einsum("egd,egd->eg", g, g))
    integrand = mag**p @ q.weights
    sel = _element_weights(u.mesh, mask)
    if sel is not None:
        integrand = integrand[sel]
    return float(integrand.sum() ** (1.0 / p))


def w1p_norm(u, p, mask=None):
    a = lp_norm(u, p, mask)
    b = w1p_seminorm(u, p, mask)
    return float((a**p + b**p) ** (1.0 / p))


def norm(u, req):
    """Dispatch a NormRequest against a grid function."""
    if req.kind == "lp":
        return lp_norm(u, req.p, req.mask)
    if req.kind == "w1p_semi":
        return w1p_seminorm(u, req.p, req.mask)
    if req.kind == "w1p_full":
        return w1p_norm(u, req.p, req.mask)
    if req.kind == "besov_semi":
        return besov_seminorm(u, req.r, req.p)
    strip = boundary_strip_mask(u.mesh, req.strip_eps)
    return lp_norm(u, req.p, strip)


def _overlap_mesh(mesh, shift_cells):
    """Sub-mesh of the overlap when shifting by shift_cells (per axis)."""
    new_extents = []
    new_nodes = []
    for k in range(mesh.dim):
        s = shift_cells[k]
        lo, hi = mesh.extents[k]
        n = mesh.nodes_per_axis[k]
        keep = n - abs(s)
        if keep < 2:
            return None, None
        start = abs(s) if s < 0 else 0
        new_lo = lo + start * mesh.h[k]
        new_extents.append((new_lo, new_lo + (keep - 1) * mesh.h[k]))
        new_nodes.append(keep)
    return Mesh(mesh.dim, tuple(new_extents), tuple(new_nodes)), None


def _shift_difference(u, shift_cells):
    """u(.+h') - u on the overlap, as a GridFunction; None if empty."""
    vals = u.reshaped()
    sl_plus = []
    sl_base = []
    for k, s in enumerate(shift_cells):
        n = u.mesh.nodes_per_axis[k]
        if abs(s) >= n - 1:
            return None
        if s >= 0:
            sl_plus.append(slice(s, n))
            sl_base.append(slice(0, n - s))
        else:
            sl_plus.append(slice(0, n + s))
            sl_base.append(slice(-s, n))
    diff = vals[tuple(sl_plus)] - vals[tuple(sl_base)]
    sub, _ = _overlap_mesh(u.mesh, shift_cells)
    if sub is None:
        return None
    return GridFunction(sub, diff.ravel())


def shift_modulus(u, t_cells, p):
    """sup over grid shifts |h'| <= t of the L_p norm of u(.+h') - u.

    Shifts are axis-aligned multiples of the grid spacing; both axes are
    swept in 2D.
    """
    best = 0.0
    for axis in range(u.mesh.dim):
        for k in range(1, t_cells + 1):
            shift = [0] * u.mesh.dim
            shift[axis] = k
            d = _shift_difference(u, shift)
            if d is None:
                continue
            best = max(best, lp_norm(d, p))
    return best


def besov_seminorm(u, r, p):
    """Grid surrogate of sup_t t^(-r) * shift modulus at dyadic scales.

    Scales are t = h * 2^j with t at most a quarter of the shortest domain
    side. Constant fields give 0; Lipschitz fields stay bounded as r -> 1.
    """
    if not (0.0 < r < 1.0):
        raise ValueError("r must lie in (0, 1)")
    h = min(u.mesh.h)
    width = min(hi - lo for lo, hi in u.mesh.extents)
    best = 0.0
    j = 0
    while h * 2**j <= width / 4.0 + 1e-12:
        t = h * 2**j
        omega = shift_modulus(u, 2**j, p)
        best = max(best, t ** (-r) * omega)
        j += 1
    return best


@dataclass(frozen=True)
class StripRatio:
    eps: float
    strip_norm: float
    predictor: float
    ratio: float


def strip_lemma_check(u, q, eps_list):
    """Boundary-strip inequality probe: strip norm against its predictor.

    The predictor is eps^(1/q) * ||u||_{W^1_q}^(1/q) * ||u||_q^(1/q+),
    with both norms over the whole domain. The inequality bounds the
    strip norm uniformly; for each sample the ratio should stay within a
    factor of 2 between consecutive halvings of eps.
    """
    full = w1p_norm(u, q)
    glob = lp_norm(u, q)
    qplus = q / (q - 1.0)
    rows = []
    for eps in eps_list:
        strip = boundary_strip_mask(u.mesh, eps)
        sn = lp_norm(u, q, strip)
        pred = eps ** (1.0 / q) * full ** (1.0 / q) * glob ** (1.0 / qplus)
        rows.append(StripRatio(eps, sn, pred, sn / pred if pred > 0 else np.inf))
    return rows


def halving_factors(values):
    """Ratios value[i]/value[i+1] along a sweep (guarding zero division)."""
    out = []
    for a, b in zip(values, values[1:]):
        out.append(a / b if b != 0 else np.inf)
    return out
