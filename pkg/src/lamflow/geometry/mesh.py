"""Closed oriented triangulated surfaces described by edge lengths only.

A mesh is stored as an explicit gluing: side ``k`` of face ``f`` is the edge
opposite corner ``k`` (running from corner ``k+1`` to corner ``k+2``), and
``face_edges[f, k]`` / ``face_signs[f, k]`` say which edge that is and whether
the face traverses it along (+1) or against (-1) the edge's canonical
direction ``edges[e] = (start, end)``. This admits loops and multi-edges, which
the coarsest genus-2 fixture needs.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse

from ..errors import MeshError, NonManifold, OrientationMismatch, TriangleInequalityViolation

NEXT = np.array([1, 2, 0])
PREV = np.array([2, 0, 1])


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Closed oriented triangle mesh with background edge lengths.

    Construct through :func:`build_mesh` for simplicial input, or call the
    constructor with an explicit gluing. Arrays are read-only after
    construction.
    """

    n_vertices: int
    faces: np.ndarray
    face_edges: np.ndarray
    face_signs: np.ndarray
    edges: np.ndarray
    lengths: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "n_vertices", int(self.n_vertices))
        object.__setattr__(self, "faces", _frozen(self.faces, np.int64).reshape(-1, 3))
        object.__setattr__(self, "face_edges", _frozen(self.face_edges, np.int64).reshape(-1, 3))
        object.__setattr__(self, "face_signs", _frozen(self.face_signs, np.int8).reshape(-1, 3))
        object.__setattr__(self, "edges", _frozen(self.edges, np.int64).reshape(-1, 2))
        object.__setattr__(self, "lengths", _frozen(self.lengths, np.float64).reshape(-1))
        self._validate()

    def __reduce__(self):
        # rebuild through the constructor so unpickled arrays are read-only again
        return (TriMesh, (self.n_vertices, self.faces, self.face_edges, self.face_signs, self.edges, self.lengths))

    # -- validation -------------------------------------------------------

    def _validate(self):
        V, F, E = self.n_vertices, len(self.faces), len(self.edges)
        if F == 0:
            raise MeshError("mesh has no faces")
        if self.faces.min() < 0 or self.faces.max() >= V:
            raise MeshError("face vertex index out of range")
        if self.edges.size and (self.edges.min() < 0 or self.edges.max() >= V):
            raise MeshError("edge vertex index out of range")
        if len(self.lengths) != E:
            raise MeshError(f"expected {E} edge lengths, got {len(self.lengths)}")
        if not np.all(np.isfinite(self.lengths)) or np.any(self.lengths <= 0):
            raise MeshError("edge lengths must be finite and positive")
        if self.face_edges.min() < 0 or self.face_edges.max() >= E:
            raise MeshError("face edge index out of range")
        if not np.all(np.abs(self.face_signs) == 1):
            raise MeshError("face signs must be +1 or -1")

        counts = np.bincount(self.face_edges.ravel(), minlength=E)
        bad = np.flatnonzero(counts != 2)
        if bad.size:
            e = int(bad[0])
            raise NonManifold(f"edge {e} {tuple(self.edges[e])} has {counts[e]} incident faces, expected 2")

        # each side's endpoints must match its edge, read in the side's direction
        start = self.faces[:, NEXT]
        end = self.faces[:, PREV]
        ce = self.edges[self.face_edges]
        fwd = self.face_signs > 0
        exp_start = np.where(fwd, ce[..., 0], ce[..., 1])
        exp_end = np.where(fwd, ce[..., 1], ce[..., 0])
        if np.any(exp_start != start) or np.any(exp_end != end):
            f, k = np.argwhere((exp_start != start) | (exp_end != end))[0]
            raise MeshError(f"side {k} of face {f} does not match edge {self.face_edges[f, k]}")

        sign_sum = np.zeros(E, dtype=np.int64)
        np.add.at(sign_sum, self.face_edges.ravel(), self.face_signs.ravel().astype(np.int64))
        bad = np.flatnonzero(sign_sum != 0)
        if bad.size:
            e = int(bad[0])
            raise OrientationMismatch(f"edge {e} {tuple(self.edges[e])} is traversed twice in the same direction")

        used = np.zeros(V, dtype=bool)
        used[self.faces.ravel()] = True
        if not used.all():
            raise MeshError(f"vertex {int(np.flatnonzero(~used)[0])} belongs to no face")

        check_triangle_inequality(self.lengths[self.face_edges])

    # -- derived quantities -----------------------------------------------

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_faces(self):
        return len(self.faces)

    @property
    def euler_characteristic(self):
        return self.n_vertices - self.n_edges + self.n_faces

    @property
    def genus(self):
        return (2 - self.euler_characteristic) // 2

    @property
    def is_simplicial(self):
        """True when every edge is determined by its (distinct) endpoints."""
        e = np.sort(self.edges, axis=1)
        if np.any(e[:, 0] == e[:, 1]):
            return False
        return len(np.unique(e, axis=0)) == len(e)

    def deformed_lengths(self, u=None):
        """Edge lengths of the metric ``e^u g0``: ``exp((u_i + u_j)/4) * l0``.

        ``u`` scales the metric, so squared lengths pick up the mean of the
        endpoint factors and a constant ``u = c`` multiplies areas by ``e^c``.
        """
        if u is None:
            return self.lengths
        u = np.asarray(u, dtype=np.float64)
        if u.shape != (self.n_vertices,):
            raise ValueError(f"conformal factor must have shape ({self.n_vertices},), got {u.shape}")
        if not np.all(np.isfinite(u)):
            raise ValueError("conformal factor must be finite")
        return np.exp(0.25 * (u[self.edges[:, 0]] + u[self.edges[:, 1]])) * self.lengths

    def face_lengths(self, u=None):
        """(F, 3) array; entry k is the deformed length of the side opposite corner k."""
        return self.deformed_lengths(u)[self.face_edges]

    def adjacency(self):
        """Symmetric 0/1 vertex adjacency, loops dropped."""
        i, j = self.edges[:, 0], self.edges[:, 1]
        keep = i != j
        i, j = i[keep], j[keep]
        a = sparse.coo_matrix(
            (np.ones(2 * len(i)), (np.r_[i, j], np.r_[j, i])), shape=(self.n_vertices,) * 2
        ).tocsr()
        a.data[:] = 1.0
        return a

    @cached_property
    def csr_pattern(self):
        """CSR structure of the vertex-vertex operator plus slot indices.

        Returns ``(indptr, indices, off_ij, off_ji, diag_i, diag_j)`` where the
        last four give, per edge, the position of entries (i, j), (j, i), (i, i)
        and (j, j) in the CSR data array.
        """
        V = self.n_vertices
        i, j = self.edges[:, 0], self.edges[:, 1]
        rows = np.r_[i, j, i, j, np.arange(V)]
        cols = np.r_[j, i, i, j, np.arange(V)]
        keys = rows * V + cols
        uniq, slot = np.unique(keys, return_inverse=True)
        indptr = np.searchsorted(uniq // V, np.arange(V + 1))
        indices = uniq % V
        E = len(i)
        slot = slot.reshape(-1)
        return indptr, indices, slot[:E], slot[E : 2 * E], slot[2 * E : 3 * E], slot[3 * E : 4 * E], slot[4 * E :]

    def hop_distance(self, source):
        from scipy.sparse.csgraph import shortest_path

        d = shortest_path(self.adjacency(), unweighted=True, indices=int(source))
        return d

    # -- derived meshes ---------------------------------------------------

    def with_lengths(self, lengths):
        return TriMesh(self.n_vertices, self.faces, self.face_edges, self.face_signs, self.edges, lengths)

    def scaled(self, factor):
        return self.with_lengths(self.lengths * float(factor))

    def relabel(self, perm):
        """Rename vertex ``v`` to ``perm[v]``. Fields transform as ``new[perm] = old``."""
        perm = np.asarray(perm, dtype=np.int64)
        if sorted(perm.tolist()) != list(range(self.n_vertices)):
            raise ValueError("perm must be a permutation of the vertex indices")
        return TriMesh(self.n_vertices, perm[self.faces], self.face_edges, self.face_signs, perm[self.edges], self.lengths)

    def same_background(self, other):
        return (
            self.n_vertices == other.n_vertices
            and np.array_equal(self.faces, other.faces)
            and np.array_equal(self.face_edges, other.face_edges)
            and self.lengths.tobytes() == other.lengths.tobytes()
        )


def check_triangle_inequality(face_lengths):
    """Raise :class:`TriangleInequalityViolation` naming the first bad face."""
    fl = np.asarray(face_lengths)
    ok = fl < fl[:, NEXT] + fl[:, PREV]
    if not ok.all():
        f = int(np.flatnonzero(~ok.all(axis=1))[0])
        raise TriangleInequalityViolation(f, fl[f])


def _length_lookup(lengths):
    if hasattr(lengths, "items"):
        table = {}
        for key, val in lengths.items():
            i, j = (int(x) for x in key)
            table[(min(i, j), max(i, j))] = float(val)
        return table.get
    if callable(lengths):
        return lambda key: float(lengths(*key))
    raise TypeError("lengths must be a mapping (i, j) -> length or a callable")


def build_mesh(faces, lengths):
    """Build a validated simplicial mesh.

    ``faces`` are oriented vertex triples. ``lengths`` maps an unordered vertex
    pair ``(i, j)`` to the background length of that edge (either key order is
    accepted), or is a callable ``f(i, j)``.
    """
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if faces.size == 0:
        raise MeshError("mesh has no faces")
    if np.any(faces[:, 0] == faces[:, 1]) or np.any(faces[:, 1] == faces[:, 2]) or np.any(faces[:, 0] == faces[:, 2]):
        raise MeshError("degenerate face with a repeated vertex")
    start = faces[:, NEXT]
    end = faces[:, PREV]
    lo = np.minimum(start, end)
    hi = np.maximum(start, end)
    keys = np.stack([lo, hi], axis=-1).reshape(-1, 2)
    edges, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    bad = np.flatnonzero(counts != 2)
    if bad.size:
        e = edges[bad[0]]
        raise NonManifold(f"edge {tuple(int(x) for x in e)} has {counts[bad[0]]} incident faces, expected 2")
    face_edges = inverse.reshape(-1, 3)
    face_signs = np.where(start < end, 1, -1)

    get = _length_lookup(lengths)
    vals = []
    for i, j in edges.tolist():
        v = get((i, j))
        if v is None:
            raise MeshError(f"no length given for edge ({i}, {j})")
        vals.append(v)
    n_vertices = int(faces.max()) + 1
    return TriMesh(n_vertices, faces, face_edges, face_signs, edges, np.array(vals))
