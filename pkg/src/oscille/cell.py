"""Periodic cell problems, effective tensors and their macroscopic tables.

For each macroscopic sample x the cell problem asks for periodic,
zero-mean functions N_k with

    (a(x, .) (grad N_k + e_k), grad phi) = 0   for all periodic phi,

and the effective tensor is the cell average A0(x) e_k = int a (grad N_k
+ e_k) dy. In 1D this collapses to the harmonic mean of a(x, .). Tables
over a macroscopic grid with linear interpolation in x support corrector
evaluation at arbitrary points; the Lipschitz dependence of a on x keeps
that interpolation error dominated by the homogenization errors measured.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from . import linalg
from .mesh import Mesh, MeshMismatch, quadrature

X_TABLE_SPACING = 1.0 / 16.0


class EllipticityViolation(RuntimeError):
    pass


class TableCoverage(RuntimeError):
    pass


def default_cell_m(d):
    return 256 if d == 1 else 64


def _periodic_stiffness_and_loads(field, x, cell_mesh):
    """Stiffness matrix of a(x,.) on the periodic cell plus the d loads."""
    q = quadrature(cell_mesh)
    n_el, n_g, d = q.points.shape
    a_vals = field.eval_at_slow(x, q.points.reshape(-1, d)).reshape(n_el, n_g)
    if np.min(a_vals) <= 0.0:
        raise EllipticityViolation(f"coefficient nonpositive at x = {x}")
    grads = q.shape_grads
    stiff = np.einsum("eg,g,gcd,gkd->eck", a_vals, q.weights, grads, grads, optimize=True)
    n_c = q.corners.shape[1]
    rows = np.repeat(q.corners, n_c, axis=1).ravel()
    cols = np.tile(q.corners, (1, n_c)).ravel()
    matrix = linalg.SparseMatrix.from_coo(
        cell_mesh.n_nodes, cell_mesh.n_nodes, rows, cols, stiff.ravel(), symmetric=True
    )
    # loads: b_k[i] = -int a e_k . grad phi_i
    loads = np.zeros((d, cell_mesh.n_nodes))
    for k in range(d):
        contrib = -np.einsum("eg,g,gc->ec", a_vals, q.weights, grads[:, :, k])
        np.add.at(loads[k], q.corners.ravel(), contrib.ravel())
    return matrix, loads, q, a_vals


def _mean_functional(cell_mesh):
    """c_i = int phi_i over the unit cell (uniform: h^d per stored node)."""
    q = quadrature(cell_mesh)
    c = np.zeros(cell_mesh.n_nodes)
    contrib = np.einsum("g,gc->c", q.weights, q.shape_values)
    np.add.at(c, q.corners.ravel(), np.tile(contrib, q.corners.shape[0]))
    return c


@dataclass
class CellSolution:
    """Corrector cell functions N_k at one macroscopic anchor point."""

    x_anchor: np.ndarray
    cell_mesh: Mesh
    columns: np.ndarray  # (n_nodes, d) nodal values of N_k
    grad_gauss: np.ndarray  # (n_elements, n_gauss, d, d): d/dy_j of N_k
    stats: tuple

    def mean_defect(self):
        c = _mean_functional(self.cell_mesh)
        return float(np.max(np.abs(c @ self.columns)))

    def _locate(self, y):
        m = np.array(self.cell_mesh.nodes_per_axis)
        y = np.asarray(y, dtype=float).reshape(-1, self.cell_mesh.dim)
        y = y - np.floor(y)
        t = y * m
        idx = np.floor(t).astype(int)
        idx = np.minimum(idx, m - 1)
        loc = t - idx
        return idx, loc, m

    def eval_n(self, y):
        """N(y) by periodic multilinear interpolation, shape (n, d)."""
        idx, loc, m = self._locate(y)
        vals = self.columns
        d = self.cell_mesh.dim
        if d == 1:
            i0 = idx[:, 0]
            i1 = (i0 + 1) % m[0]
            t = loc[:, 0:1]
            return vals[i0] * (1 - t) + vals[i1] * t
        i0, j0 = idx[:, 0], idx[:, 1]
        i1 = (i0 + 1) % m[0]
        j1 = (j0 + 1) % m[1]
        tx = loc[:, 0:1]
        ty = loc[:, 1:2]
        n2 = self.cell_mesh.nodes_per_axis[1]
        v00 = vals[i0 * n2 + j0]
        v01 = vals[i0 * n2 + j1]
        v10 = vals[i1 * n2 + j0]
        v11 = vals[i1 * n2 + j1]
        return (
            v00 * (1 - tx) * (1 - ty)
            + v01 * (1 - tx) * ty
            + v10 * tx * (1 - ty)
            + v11 * tx * ty
        )

    def eval_grad_n(self, y):
        """d/dy_j N_k (y) from the element interpolant, shape (n, d, d)."""
        idx, loc, m = self._locate(y)
        vals = self.columns
        d = self.cell_mesh.dim
        h = self.cell_mesh.h
        if d == 1:
            i0 = idx[:, 0]
            i1 = (i0 + 1) % m[0]
            g = (vals[i1] - vals[i0]) / h[0]
            return g[:, None, :].transpose(0, 2, 1)  # (n, d=1, d=1)
        i0, j0 = idx[:, 0], idx[:, 1]
        i1 = (i0 + 1) % m[0]
        j1 = (j0 + 1) % m[1]
        tx = loc[:, 0:1]
        ty = loc[:, 1:2]
        n2 = self.cell_mesh.nodes_per_axis[1]
        v00 = vals[i0 * n2 + j0]
        v01 = vals[i0 * n2 + j1]
        v10 = vals[i1 * n2 + j0]
        v11 = vals[i1 * n2 + j1]
        gx = ((v10 - v00) * (1 - ty) + (v11 - v01) * ty) / h[0]
        gy = ((v01 - v00) * (1 - tx) + (v11 - v10) * tx) / h[1]
        out = np.empty((gx.shape[0], 2, 2))
        out[:, :, 0] = gx  # derivative in y_1 of N_k
        out[:, :, 1] = gy
        return out.transpose(0, 2, 1)  # (n, j, k): d/dy_j of N_k


def solve_cell(field, x, cell_mesh, tol=linalg.DEFAULT_TOL):
    """Solve the periodic cell problem at macroscopic point x."""
    if not cell_mesh.periodic:
        raise MeshMismatch("cell mesh must be periodic")
    x = np.asarray(x, dtype=float).reshape(field.dim)
    matrix, loads, q, _ = _periodic_stiffness_and_loads(field, x, cell_mesh)
    c = _mean_functional(cell_mesh)
    d = field.dim
    columns = np.zeros((cell_mesh.n_nodes, d))
    stats = []
    for k in range(d):
        sol, _lam, st = linalg.solve_saddle(matrix, c, loads[k], beta=0.0, tol=tol)
        columns[:, k] = sol
        stats.append(st)
    grads = q.shape_grads
    corner_vals = columns[q.corners]  # (E, c, d)
    grad_gauss = np.einsum("ecd,gcj->egjd", corner_vals, grads)
    return CellSolution(x, cell_mesh, columns, grad_gauss, tuple(stats))


def effective_tensor(field, x, cell_mesh, solution=None, tol=linalg.DEFAULT_TOL):
    """Effective tensor A0(x) = int a(x,y) (I + grad N) dy by cell quadrature."""
    sol = solution or solve_cell(field, x, cell_mesh, tol=tol)
    q = quadrature(cell_mesh)
    d = field.dim
    x = np.asarray(x, dtype=float).reshape(d)
    a_vals = field.eval_at_slow(x, q.points.reshape(-1, d)).reshape(q.points.shape[0], q.points.shape[1])
    ident = np.eye(d)[None, None, :, :]
    integrand = a_vals[:, :, None, None] * (ident + sol.grad_gauss)
    return np.einsum("g,egjk->jk", q.weights, integrand)


def locate_on_axes(x_axes, pts):
    """Linear-interpolation stencil: lower index and local weight per axis."""
    dim = len(x_axes)
    pts = np.asarray(pts, dtype=float).reshape(-1, dim)
    idx = []
    loc = []
    for k, ax in enumerate(x_axes):
        hk = ax[1] - ax[0]
        t = (pts[:, k] - ax[0]) / hk
        if np.any(t < -1e-9) or np.any(t > len(ax) - 1 + 1e-9):
            raise TableCoverage(
                f"point outside tabulated range on axis {k}: "
                f"[{ax[0]:g}, {ax[-1]:g}] queried at "
                f"[{pts[:, k].min():g}, {pts[:, k].max():g}]"
            )
        i = np.clip(np.floor(t).astype(int), 0, len(ax) - 2)
        idx.append(i)
        loc.append(np.clip(t - i, 0.0, 1.0))
    return idx, loc


@dataclass
class CellTable:
    """Cell solutions tabulated over a macroscopic grid (C-order)."""

    x_axes: tuple  # per-axis sample coordinates
    cell_mesh: Mesh
    cells: list  # CellSolution, C-order over the x grid

    @property
    def dim(self):
        return len(self.x_axes)

    def grid_shape(self):
        return tuple(len(a) for a in self.x_axes)

    def locate(self, pts):
        return locate_on_axes(self.x_axes, pts)


def x_axes_for(domain, margin, spacing=X_TABLE_SPACING):
    """Uniform x-grid covering the domain extended by margin on each side."""
    axes = []
    for lo, hi in domain:
        a = lo - margin
        b = hi + margin
        n = int(np.ceil((b - a) / spacing - 1e-12)) + 1
        axes.append(a + (b - a) * np.arange(n) / (n - 1))
    return tuple(axes)


def tabulate_cells(field, x_axes, cell_mesh, tol=linalg.DEFAULT_TOL):
    if field.dim == 1:
        points = [(x,) for x in x_axes[0]]
    else:
        points = [(x1, x2) for x1 in x_axes[0] for x2 in x_axes[1]]
    cells = [solve_cell(field, np.array(p), cell_mesh, tol=tol) for p in points]
    return CellTable(tuple(np.asarray(a, dtype=float) for a in x_axes), cell_mesh, cells)


@dataclass
class EffectiveField:
    """Tabulated effective tensors with linear-in-x interpolation."""

    x_axes: tuple
    tensors: np.ndarray  # grid_shape + (d, d)
    dim: int

    def tensor_at(self, pts):
        pts = np.asarray(pts, dtype=float).reshape(-1, self.dim)
        idx, loc = locate_on_axes(self.x_axes, pts)
        if self.dim == 1:
            i = idx[0]
            t = loc[0][:, None, None]
            return self.tensors[i] * (1 - t) + self.tensors[i + 1] * t
        i, j = idx
        tx = loc[0][:, None, None]
        ty = loc[1][:, None, None]
        t00 = self.tensors[i, j]
        t01 = self.tensors[i, j + 1]
        t10 = self.tensors[i + 1, j]
        t11 = self.tensors[i + 1, j + 1]
        return t00 * (1 - tx) * (1 - ty) + t01 * (1 - tx) * ty + t10 * tx * (1 - ty) + t11 * tx * ty

    def lipschitz_estimate(self):
        """Largest finite-difference slope of the tensor table (max-entry norm)."""
        best = 0.0
        for k in range(self.dim):
            ax = self.x_axes[k]
            d = np.diff(self.tensors, axis=k)
            hk = ax[1] - ax[0]
            if d.size:
                best = max(best, float(np.max(np.abs(d)) / hk))
        return best


def effective_from_cells(field, table, tol=linalg.DEFAULT_TOL):
    d = field.dim
    shape = table.grid_shape()
    tensors = np.empty(shape + (d, d))
    flat = tensors.reshape(-1, d, d)
    if d == 1:
        points = [(x,) for x in table.x_axes[0]]
    else:
        points = [(x1, x2) for x1 in table.x_axes[0] for x2 in table.x_axes[1]]
    for i, (p, sol) in enumerate(zip(points, table.cells)):
        flat[i] = effective_tensor(field, np.array(p), table.cell_mesh, solution=sol, tol=tol)
    return EffectiveField(table.x_axes, tensors, d)


def tabulate_effective(field, x_axes, cell_mesh, tol=linalg.DEFAULT_TOL):
    """Tabulate A0 over the x-grid; returns (EffectiveField, CellTable)."""
    table = tabulate_cells(field, x_axes, cell_mesh, tol=tol)
    return effective_from_cells(field, table, tol=tol), table


def closed_form_1d_effective(field, x):
    """Reference harmonic mean 1 / int dy / a(x, y) by adaptive quadrature."""
    if field.dim != 1:
        raise ValueError("closed form applies to d = 1 only")
    x_arr = np.asarray([x], dtype=float).reshape(1, 1)

    def integrand(y):
        return 1.0 / float(field.eval(x_arr, np.array([[y]]))[0])

    val, err = quad(integrand, 0.0, 1.0, epsabs=1e-12, epsrel=1e-12, limit=200)
    if err > 1e-9:
        raise RuntimeError(f"quadrature failed to converge (err {err:.2e})")
    return 1.0 / val


def dump_cell_csv(solution, path):
    """Write the nodal cell functions N_k of one solution to CSV."""
    mesh = solution.cell_mesh
    d = mesh.dim
    coords = mesh.node_coords()
    with open(path, "w", encoding="utf-8") as fh:
        head = [f"y{k+1}" for k in range(d)] + [f"n{k+1}" for k in range(d)]
        fh.write(",".join(head) + "\n")
        for i in range(mesh.n_nodes):
            row = [f"{coords[i, k]:.12g}" for k in range(d)]
            row += [f"{solution.columns[i, k]:.12g}" for k in range(d)]
            fh.write(",".join(row) + "\n")


def dump_tables_csv(eff, path):
    """Write the effective-tensor table to CSV for inspection."""
    d = eff.dim
    with open(path, "w", encoding="utf-8") as fh:
        head = [f"x{k+1}" for k in range(d)] + [f"a{j+1}{k+1}" for j in range(d) for k in range(d)]
        fh.write(",".join(head) + "\n")
        if d == 1:
            for i, x in enumerate(eff.x_axes[0]):
                row = [f"{x:.12g}", f"{eff.tensors[i, 0, 0]:.12g}"]
                fh.write(",".join(row) + "\n")
        else:
            for i, x1 in enumerate(eff.x_axes[0]):
                for j, x2 in enumerate(eff.x_axes[1]):
                    t = eff.tensors[i, j]
                    row = [f"{x1:.12g}", f"{x2:.12g}"] + [f"{t[a, b]:.12g}" for a in range(d) for b in range(d)]
                    fh.write(",".join(row) + "\n")
