"""P1 finite-element assembly for the sign-weighted diffusion pencil.

Builds the sigma-weighted stiffness matrix A (symmetric, indefinite once the
coefficient changes sign) and the consistent mass matrix M (symmetric positive
definite) for the generalized eigenproblem A x = lambda M x.  All element
integrals are closed-form (P1 basis, piecewise-constant coefficient), so the
assembly carries no quadrature error.  Dirichlet conditions are imposed by
eliminating boundary rows/columns; the reduced matrices are kept both as
sparse triplets and in symmetric lower-band storage under a bandwidth-friendly
node ordering.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import reverse_cuthill_mckee

from .errors import AssemblyError
from .material import MaterialContrast
from .mesh import MINUS, TriMesh, signed_areas

__all__ = [
    "AssembledSystem",
    "element_stiffness",
    "element_mass",
    "assemble_full",
    "assemble",
    "h1_seminorm",
    "load_piecewise_x",
    "band_from_csr",
]


def element_stiffness(coords: np.ndarray, sigma: float) -> np.ndarray:
    """Exact P1 stiffness sigma * area * (grad l_i . grad l_j) on one triangle."""
    x, y = coords[:, 0], coords[:, 1]
    b = np.array([y[1] - y[2], y[2] - y[0], y[0] - y[1]])
    c = np.array([x[2] - x[1], x[0] - x[2], x[1] - x[0]])
    area = 0.5 * (b[0] * c[1] - b[1] * c[0])  # = signed area
    return sigma * (np.outer(b, b) + np.outer(c, c)) / (4.0 * area)


def element_mass(coords: np.ndarray) -> np.ndarray:
    """Exact P1 consistent mass, area/12 * (1 + delta_ij)."""
    area = float(signed_areas(coords, np.array([[0, 1, 2]]))[0])
    return area / 12.0 * (np.ones((3, 3)) + np.eye(3))


@dataclass
class AssembledSystem:
    """Reduced (interior-dof) pencil with triplet and banded storage.

    Matrices are indexed by the reduced ordering `node_of_dof`; `dof_map`
    sends a mesh node to its reduced index (-1 for Dirichlet nodes).  The
    full-node matrices (no boundary elimination) are kept for norm checks and
    for moving boundary data to right-hand sides.
    """

    A: sp.csr_matrix
    M: sp.csr_matrix
    A_band: np.ndarray
    M_band: np.ndarray
    bandwidth: int
    dof_map: np.ndarray
    node_of_dof: np.ndarray
    h_max: float
    A_full: sp.csr_matrix
    M_full: sp.csr_matrix
    mesh: Optional[TriMesh] = None
    contrast: Optional[MaterialContrast] = None

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def triplets(self, which: str = "A"):
        """Sorted (row, col, value) triplets of the reduced matrix."""
        mat = {"A": self.A, "M": self.M}[which].tocoo()
        order = np.lexsort((mat.col, mat.row))
        return mat.row[order], mat.col[order], mat.data[order]

    def dump_matrix(self, path, which: str = "A") -> None:
        """Debug dump: text triplets `row col value`, sorted, 17 significant digits."""
        rows, cols, vals = self.triplets(which)
        with open(path, "w") as fh:
            for r, c, v in zip(rows, cols, vals):
                fh.write(f"{r} {c} {v:.17g}\n")

    def a_scale(self) -> float:
        """Magnitude scale of A (largest absolute entry), used for shift perturbations."""
        return float(np.max(np.abs(self.A.data))) if self.A.nnz else 1.0


def _element_arrays(mesh: TriMesh, contrast: MaterialContrast):
    """Vectorized per-triangle gradients, areas and sigma values."""
    p = mesh.nodes[mesh.triangles]
    x, y = p[:, :, 0], p[:, :, 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    area = 0.5 * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
    edge_len = np.stack([
        np.hypot(x[:, 1] - x[:, 0], y[:, 1] - y[:, 0]),
        np.hypot(x[:, 2] - x[:, 1], y[:, 2] - y[:, 1]),
        np.hypot(x[:, 0] - x[:, 2], y[:, 0] - y[:, 2]),
    ], axis=1)
    h_max = float(edge_len.max()) if edge_len.size else 0.0
    bad = area < 1e-14 * h_max * h_max
    if np.any(bad):
        t = int(np.argmax(bad))
        raise AssemblyError(
            f"triangle {t} is degenerate (area {area[t]:.3e} < 1e-14 * h_max^2); "
            "refusing to assemble"
        )
    sigma = np.where(mesh.regions == MINUS, contrast.sigma_minus, contrast.sigma_plus)
    return b, c, area, sigma, h_max


def assemble_full(mesh: TriMesh, contrast: MaterialContrast):
    """Assemble A, M over all nodes (no boundary elimination); returns CSR pair."""
    b, c, area, sigma, _ = _element_arrays(mesh, contrast)
    n = mesh.n_nodes
    tri = mesh.triangles

    ke = (sigma / (4.0 * area))[:, None, None] * (
        b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]
    )
    me = (area / 12.0)[:, None, None] * (np.ones((3, 3)) + np.eye(3))[None, :, :]

    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    A = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    M = sp.coo_matrix((me.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    M.sum_duplicates()
    return A, M


def band_from_csr(mat: sp.csr_matrix) -> tuple[np.ndarray, int]:
    """Symmetric lower-band storage band[d, j] = mat[j+d, j]; returns (band, bandwidth)."""
    coo = mat.tocoo()
    if coo.nnz == 0:
        return np.zeros((1, mat.shape[0])), 0
    bw = int(np.max(np.abs(coo.row - coo.col)))
    band = np.zeros((bw + 1, mat.shape[0]))
    lower = coo.row >= coo.col
    band[coo.row[lower] - coo.col[lower], coo.col[lower]] = coo.data[lower]
    return band, bw


def assemble(mesh: TriMesh, contrast: MaterialContrast) -> AssembledSystem:
    """Assemble the reduced pencil: eliminate Dirichlet dofs, order for small bandwidth.

    Structured meshes provide their natural ring-major ordering through
    `mesh.band_order`; ingested meshes get a reverse Cuthill-McKee ordering of
    the interior adjacency graph.
    """
    A_full, M_full = assemble_full(mesh, contrast)
    _, _, _, _, h_max = _element_arrays(mesh, contrast)

    is_boundary = np.zeros(mesh.n_nodes, dtype=bool)
    is_boundary[mesh.boundary_nodes] = True
    interior = np.nonzero(~is_boundary)[0]

    if mesh.band_order is not None:
        order_pos = np.empty(mesh.n_nodes, dtype=np.int64)
        order_pos[mesh.band_order] = np.arange(mesh.n_nodes)
        node_of_dof = interior[np.argsort(order_pos[interior], kind="stable")]
    else:
        A_int = A_full[interior][:, interior]
        perm = reverse_cuthill_mckee(A_int.tocsr(), symmetric_mode=True)
        node_of_dof = interior[perm]

    dof_map = np.full(mesh.n_nodes, -1, dtype=np.int64)
    dof_map[node_of_dof] = np.arange(node_of_dof.size)

    A = A_full[node_of_dof][:, node_of_dof].tocsr()
    M = M_full[node_of_dof][:, node_of_dof].tocsr()
    A.sum_duplicates()
    M.sum_duplicates()

    A_band, bw_a = band_from_csr(A)
    M_band, bw_m = band_from_csr(M)
    bw = max(bw_a, bw_m)
    if A_band.shape[0] < bw + 1:
        A_band = np.vstack([A_band, np.zeros((bw + 1 - A_band.shape[0], A.shape[0]))])
    if M_band.shape[0] < bw + 1:
        M_band = np.vstack([M_band, np.zeros((bw + 1 - M_band.shape[0], M.shape[0]))])

    return AssembledSystem(
        A=A, M=M, A_band=A_band, M_band=M_band, bandwidth=bw,
        dof_map=dof_map, node_of_dof=node_of_dof, h_max=h_max,
        A_full=A_full, M_full=M_full, mesh=mesh, contrast=contrast,
    )


def h1_seminorm(mesh: TriMesh, u: np.ndarray) -> float:
    """Broken-gradient norm sqrt(sum_T area_T |grad u|_T^2) of a nodal field.

    u must carry one value per mesh node (boundary values included).  For the
    homogeneous-Dirichlet fields produced by the solver this is the natural
    energy-space norm of the problem.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (mesh.n_nodes,):
        raise AssemblyError(f"expected {mesh.n_nodes} nodal values, got shape {u.shape}")
    p = mesh.nodes[mesh.triangles]
    x, y = p[:, :, 0], p[:, :, 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    area = 0.5 * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
    uv = u[mesh.triangles]
    gx = np.sum(uv * b, axis=1) / (2.0 * area)
    gy = np.sum(uv * c, axis=1) / (2.0 * area)
    return float(np.sqrt(np.sum(area * (gx * gx + gy * gy))))


def _clip_halfplane(poly: np.ndarray, x_cut: float) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex polygon against {x <= x_cut}."""
    out = []
    m = poly.shape[0]
    for i in range(m):
        p, q = poly[i], poly[(i + 1) % m]
        pin, qin = p[0] <= x_cut, q[0] <= x_cut
        if pin:
            out.append(p)
        if pin != qin:
            t = (x_cut - p[0]) / (q[0] - p[0])
            out.append(p + t * (q - p))
    return np.array(out) if out else np.zeros((0, 2))


def load_piecewise_x(mesh: TriMesh, value: float = 100.0, x_cut: float = -0.5) -> np.ndarray:
    """Exact P1 load vector for f = value on {x < x_cut}, 0 elsewhere.

    Triangles cut by the line x = x_cut are clipped exactly (polygon clipping,
    then a fan split); the integral of a barycentric basis function over each
    sub-triangle is subarea times the mean of its vertex values, which is
    exact for linears.  Returns one entry per mesh node.
    """
    rhs = np.zeros(mesh.n_nodes)
    p = mesh.nodes[mesh.triangles]
    xs = p[:, :, 0]
    area = signed_areas(mesh.nodes, mesh.triangles)

    inside = np.all(xs <= x_cut, axis=1)
    outside = np.all(xs >= x_cut, axis=1)
    full = inside & ~outside
    # fully loaded triangles: int lambda_i = area/3
    np.add.at(rhs, mesh.triangles[full].ravel(),
              np.repeat(value * area[full] / 3.0, 3))

    cut = np.nonzero(~inside & ~outside)[0]
    for t in cut:
        tri_pts = p[t]
        poly = _clip_halfplane(tri_pts, x_cut)
        if poly.shape[0] < 3:
            continue
        # barycentric coordinates of the clipped polygon's vertices
        T = np.column_stack([tri_pts[0] - tri_pts[2], tri_pts[1] - tri_pts[2]])
        lam12 = np.linalg.solve(T, (poly - tri_pts[2]).T).T
        lam = np.column_stack([lam12, 1.0 - lam12.sum(axis=1)])
        for s in range(1, poly.shape[0] - 1):
            sub = poly[[0, s, s + 1]]
            sub_area = 0.5 * abs(
                (sub[1, 0] - sub[0, 0]) * (sub[2, 1] - sub[0, 1])
                - (sub[2, 0] - sub[0, 0]) * (sub[1, 1] - sub[0, 1])
            )
            mean_lam = lam[[0, s, s + 1]].mean(axis=0)
            rhs[mesh.triangles[t]] += value * sub_area * mean_lam
    return rhs
