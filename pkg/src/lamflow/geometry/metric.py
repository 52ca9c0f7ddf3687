"""Discrete curvature and Laplacian of a conformal metric ``e^u g0``."""

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .mesh import NEXT, PREV, check_triangle_inequality

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class CurvatureField:
    """Per-vertex scalar curvature ``R = 2 * defect / area`` with lumped areas."""

    R: np.ndarray
    area: np.ndarray
    defect: np.ndarray

    @property
    def R_min(self):
        return float(self.R.min())

    @property
    def R_max(self):
        return float(self.R.max())

    @property
    def total_area(self):
        return float(self.area.sum())

    @property
    def mean(self):
        """Area-weighted mean of R; equals 4*pi*chi / total area."""
        return float(np.dot(self.R, self.area) / self.area.sum())

    @property
    def total_defect(self):
        return float(self.defect.sum())


def _face_geometry(mesh, u):
    fl = mesh.face_lengths(u)
    check_triangle_inequality(fl)
    # Kahan's stable Heron formula on sorted sides
    s = np.sort(fl, axis=1)[:, ::-1]
    x, y, z = s[:, 0], s[:, 1], s[:, 2]
    area = 0.25 * np.sqrt((x + (y + z)) * (z - (x - y)) * (z + (x - y)) * (x + (y - z)))
    sq = fl**2
    # 4*area*cot(angle_k) = l_{k+1}^2 + l_{k+2}^2 - l_k^2
    cos_num = sq[:, NEXT] + sq[:, PREV] - sq
    cot = cos_num / (4.0 * area[:, None])
    angles = np.arctan2(4.0 * area[:, None], cos_num)
    return fl, area, angles, cot


def face_angles(mesh, u=None):
    """(F, 3) interior angles, entry k at corner k."""
    return _face_geometry(mesh, u)[2]


def curvature(mesh, u=None):
    """Angle defects, lumped vertex areas and scalar curvature of ``e^u g0``.

    Raises TriangleInequalityViolation if a deformed face is not a strict
    Euclidean triangle.
    """
    _, area, angles, _ = _face_geometry(mesh, u)
    V = mesh.n_vertices
    angle_sum = np.bincount(mesh.faces.ravel(), weights=angles.ravel(), minlength=V)
    vertex_area = np.bincount(mesh.faces.ravel(), weights=np.repeat(area, 3), minlength=V) / 3.0
    defect = TWO_PI - angle_sum
    return CurvatureField(R=2.0 * defect / vertex_area, area=vertex_area, defect=defect)


def cotan_weights(mesh, u=None):
    """Per-edge weights ``(cot alpha + cot beta) / 2`` on the deformed metric."""
    _, _, _, cot = _face_geometry(mesh, u)
    return _edge_weights(mesh, cot)


def _edge_weights(mesh, cot):
    return np.bincount(mesh.face_edges.ravel(), weights=0.5 * cot.ravel(), minlength=mesh.n_edges)


def stiffness(mesh, u=None):
    """Symmetric matrix W with ``(W f)_i = sum_j w_ij (f_j - f_i)``, and the vertex areas.

    W is negative semi-definite on meshes with positive weights, and its
    rows sum to zero on every mesh.
    """
    _, area, _, cot = _face_geometry(mesh, u)
    w = _edge_weights(mesh, cot)
    indptr, indices, off_ij, off_ji, diag_i, diag_j, _ = mesh.csr_pattern
    nnz = len(indices)
    data = (
        np.bincount(off_ij, weights=w, minlength=nnz)
        + np.bincount(off_ji, weights=w, minlength=nnz)
        - np.bincount(diag_i, weights=w, minlength=nnz)
        - np.bincount(diag_j, weights=w, minlength=nnz)
    )
    V = mesh.n_vertices
    W = sparse.csr_matrix((data, indices, indptr), shape=(V, V))
    A = np.bincount(mesh.faces.ravel(), weights=np.repeat(area, 3), minlength=V) / 3.0
    return W, A


def shifted_stiffness(W, mesh, diag):
    """``diag(d) - W`` reusing W's sparsity pattern (every diagonal slot exists)."""
    *_, diag_slots = mesh.csr_pattern
    data = -W.data
    data[diag_slots] += diag
    return sparse.csr_matrix((data, W.indices, W.indptr), shape=W.shape)


def cotan_laplacian(mesh, u=None):
    """Cotangent Laplace-Beltrami operator ``L = diag(1/A) W`` as a CSR matrix."""
    W, A = stiffness(mesh, u)
    return sparse.diags(1.0 / A) @ W
