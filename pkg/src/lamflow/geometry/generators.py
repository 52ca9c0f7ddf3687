"""Built-in fixture surfaces: flat tori and genus-2 octagon meshes."""

import math

import numpy as np

from .mesh import NEXT, PREV, TriMesh, build_mesh

# Apex angle of the octagon fan triangles. With 75 degrees the centre and the
# identified corner vertex get the same discrete scalar curvature, so the
# unsubdivided surface has constant curvature.
GENUS2_APEX = 5 * math.pi / 12


def gen_flat_torus(n):
    """n x n square grid on a torus, each square cut along its main diagonal.

    Axis edges have length 1 and diagonals sqrt(2), so every vertex is flat.
    Vertex ``(i, j)`` has index ``i + n*j``.
    """
    n = int(n)
    if n < 3:
        raise ValueError(f"torus grid size must be >= 3, got {n}")

    def vid(i, j):
        return (i % n) + n * (j % n)

    faces = []
    for j in range(n):
        for i in range(n):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            faces.append((a, b, c))
            faces.append((a, c, d))

    diag = {tuple(sorted((vid(i, j), vid(i + 1, j + 1)))) for i in range(n) for j in range(n)}

    def length(i, j):
        return math.sqrt(2.0) if (min(i, j), max(i, j)) in diag else 1.0

    return build_mesh(faces, length)


def octagon_genus2(spoke_length=1.0):
    """Regular octagon with sides glued as a b a^-1 b^-1 c d c^-1 d^-1, fanned from its centre.

    Vertex 0 is the centre, vertex 1 the single class of octagon corners.
    Edges 0-3 are the rim letters a-d, edges 4-11 the spokes.
    """
    word = [(0, 1), (1, 1), (0, -1), (1, -1), (2, 1), (3, 1), (2, -1), (3, -1)]
    rim = 2.0 * spoke_length * math.sin(GENUS2_APEX / 2)
    faces, face_edges, face_signs = [], [], []
    for s, (letter, exponent) in enumerate(word):
        # triangle (centre, P_s, P_{s+1}); sides opposite corners 0, 1, 2
        faces.append((0, 1, 1))
        face_edges.append((letter, 4 + (s + 1) % 8, 4 + s))
        face_signs.append((exponent, -1, 1))
    edges = [(1, 1)] * 4 + [(0, 1)] * 8
    lengths = [rim] * 4 + [spoke_length] * 8
    return TriMesh(2, faces, face_edges, face_signs, edges, lengths)


def octagon_genus2_one_vertex():
    """Regular octagon (circumradius 1) with the same gluing, fanned from one corner.

    Every corner is identified, so the surface has a single vertex (V=1, E=9,
    F=6) and its discrete curvature is constant for any conformal factor.
    Edges 0-3 are the rim letters, edge ``4 + (k - 2)`` the diagonal P_0 -> P_k.
    """
    word = [(0, 1), (1, 1), (0, -1), (1, -1), (2, 1), (3, 1), (2, -1), (3, -1)]

    def side(s):  # octagon side P_s -> P_{s+1} as (edge, sign)
        letter, exponent = word[s]
        return letter, exponent

    faces, face_edges, face_signs = [], [], []
    for k in range(1, 7):
        # triangle (P_0, P_k, P_{k+1}); sides opposite corners 0, 1, 2
        e0, s0 = side(k)
        e1, s1 = side(7) if k == 6 else (4 + (k + 1) - 2, -1)
        e2, s2 = side(0) if k == 1 else (4 + k - 2, 1)
        faces.append((0, 0, 0))
        face_edges.append((e0, e1, e2))
        face_signs.append((s0, s1, s2))
    edges = [(0, 0)] * 9
    lengths = [2 * math.sin(math.pi / 8)] * 4 + [2 * math.sin(k * math.pi / 8) for k in range(2, 7)]
    return TriMesh(1, faces, face_edges, face_signs, edges, lengths)


def subdivide(mesh):
    """One round of 1->4 midpoint subdivision; every child edge is half its parent.

    Each triangle is refined flat, so old vertices keep their angle defect and
    new vertices are flat.
    """
    V, E, F = mesh.n_vertices, mesh.n_edges, mesh.n_faces
    faces, fe, fs = mesh.faces, mesh.face_edges, mesh.face_signs

    # old edge e -> halves 2e (start->mid) and 2e+1 (mid->end); interior edges after
    new_edges = np.empty((2 * E + 3 * F, 2), dtype=np.int64)
    new_lengths = np.empty(2 * E + 3 * F)
    mid = V + np.arange(E)
    new_edges[0 : 2 * E : 2] = np.stack([mesh.edges[:, 0], mid], axis=1)
    new_edges[1 : 2 * E : 2] = np.stack([mid, mesh.edges[:, 1]], axis=1)
    new_lengths[: 2 * E] = np.repeat(mesh.lengths / 2, 2)

    m = V + fe  # (F, 3) midpoint of side k
    fwd = fs > 0
    # half-edge from corner k+1 to the midpoint of side k, and from there on to corner k+2
    first_half = np.where(fwd, 2 * fe, 2 * fe + 1)
    second_half = np.where(fwd, 2 * fe + 1, 2 * fe)

    interior = 2 * E + 3 * np.arange(F)[:, None] + np.arange(3)[None, :]  # j_k joins m_{k+1} -> m_{k+2}
    new_edges[2 * E :] = np.stack([m[:, NEXT], m[:, PREV]], axis=-1).reshape(-1, 2)
    new_lengths[2 * E :] = (mesh.lengths[fe] / 2).reshape(-1)

    out_faces = np.empty((F, 4, 3), dtype=np.int64)
    out_fe = np.empty((F, 4, 3), dtype=np.int64)
    out_fs = np.empty((F, 4, 3), dtype=np.int64)
    for k in range(3):
        k1, k2 = NEXT[k], PREV[k]
        # corner triangle (corner k, m_{k+2}, m_{k+1})
        out_faces[:, k] = np.stack([faces[:, k], m[:, k2], m[:, k1]], axis=1)
        out_fe[:, k] = np.stack([interior[:, k], second_half[:, k1], first_half[:, k2]], axis=1)
        out_fs[:, k] = np.stack([-np.ones(F, dtype=np.int64), fs[:, k1], fs[:, k2]], axis=1)
    out_faces[:, 3] = m
    out_fe[:, 3] = interior
    out_fs[:, 3] = 1

    return TriMesh(V + E, out_faces.reshape(-1, 3), out_fe.reshape(-1, 3), out_fs.reshape(-1, 3), new_edges, new_lengths)


def gen_genus2(subdivisions=0, spoke_length=1.0):
    """Genus-2 surface (chi = -2) from the identified octagon, refined ``subdivisions`` times."""
    subdivisions = int(subdivisions)
    if subdivisions < 0:
        raise ValueError(f"subdivisions must be >= 0, got {subdivisions}")
    mesh = octagon_genus2(spoke_length)
    for _ in range(subdivisions):
        mesh = subdivide(mesh)
    return mesh
