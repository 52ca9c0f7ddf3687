"""File formats: meshes, conformal factors, configs and flow trajectories."""

from pathlib import Path

import numpy as np

from .errors import ConfigError, MeshError
from .flow import FlowConfig, Trajectory, make_state
from .geometry.mesh import TriMesh, build_mesh
from .jsonio import read_json, read_jsonl, write_json, write_jsonl


# -- meshes ---------------------------------------------------------------


def mesh_to_dict(mesh):
    """Mesh document ``{"faces", "edge_lengths"}``.

    Simplicial meshes list edges as sorted pairs in lexicographic order.
    Meshes with loops or multi-edges cannot be recovered from vertex pairs,
    so they carry the gluing explicitly in two extra keys, ``face_edges``
    and ``face_signs``, with ``edge_lengths`` in edge-index order and each
    edge written as ``(start, end)``.
    """
    doc = {"faces": mesh.faces}
    if mesh.is_simplicial:
        e = np.sort(mesh.edges, axis=1)
        order = np.lexsort((e[:, 1], e[:, 0]))
        doc["edge_lengths"] = [{"v": e[k], "l": mesh.lengths[k]} for k in order]
    else:
        doc["edge_lengths"] = [{"v": mesh.edges[k], "l": mesh.lengths[k]} for k in range(mesh.n_edges)]
        doc["face_edges"] = mesh.face_edges
        doc["face_signs"] = mesh.face_signs
    return doc


def mesh_from_dict(doc):
    try:
        faces = doc["faces"]
        entries = doc["edge_lengths"]
        pairs = [tuple(int(x) for x in ent["v"]) for ent in entries]
        lengths = [float(ent["l"]) for ent in entries]
    except (KeyError, TypeError, ValueError) as exc:
        raise MeshError(f"malformed mesh document: {exc}") from exc
    if "face_edges" in doc:
        faces = np.asarray(faces, dtype=np.int64)
        n_vertices = int(faces.max()) + 1 if faces.size else 0
        return TriMesh(n_vertices, faces, doc["face_edges"], doc["face_signs"], pairs, lengths)
    table = {}
    for (i, j), length in zip(pairs, lengths):
        key = (min(i, j), max(i, j))
        if key in table:
            raise MeshError(f"edge {key} listed twice")
        table[key] = length
    return build_mesh(faces, table)


def write_mesh(path, mesh):
    write_json(path, mesh_to_dict(mesh))


def read_mesh(path):
    return mesh_from_dict(read_json(path))


# -- conformal factors and configs ----------------------------------------


def write_conformal_factor(path, u, **extra):
    write_json(path, {"u": np.asarray(u, dtype=np.float64), **extra})


def read_conformal_factor(path, n_vertices=None):
    doc = read_json(path)
    u = np.asarray(doc["u"] if isinstance(doc, dict) else doc, dtype=np.float64)
    if n_vertices is not None and u.shape != (n_vertices,):
        raise MeshError(f"conformal factor has shape {u.shape}, mesh has {n_vertices} vertices")
    return u


def read_config(path):
    doc = read_json(path)
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return FlowConfig.from_dict(doc)


# -- trajectories ---------------------------------------------------------


def trajectory_records(traj):
    """One record per step: ``{"t", "R_min", "R_max", "sup_dev", "probes"}``."""
    keys = [str(int(v)) for v in traj.probe_vertices]
    for n in range(len(traj.times)):
        yield {
            "t": traj.times[n],
            "R_min": traj.R_min[n],
            "R_max": traj.R_max[n],
            "sup_dev": traj.sup_dev[n],
            "probes": {k: {"u": traj.probe_u[n, i], "R": traj.probe_R[n, i]} for i, k in enumerate(keys)},
        }


def write_trajectory(out_dir, traj, mesh_ref, extra=None):
    """Write ``trajectory.jsonl``, ``snapshots.jsonl`` and ``final_state.json`` into ``out_dir``."""
    out_dir = Path(out_dir)
    write_jsonl(out_dir / "trajectory.jsonl", trajectory_records(traj))
    write_jsonl(out_dir / "snapshots.jsonl", ({"t": s.t, "u": s.u} for s in traj.snapshots))
    final = traj.final
    doc = {
        "mesh": str(mesh_ref),
        "u": final.u,
        "r": traj.r,
        "t": final.t,
        "termination": traj.termination,
        "n_steps": traj.n_steps,
        "envelope_checked": traj.envelope_checked,
        "config": traj.config.to_dict(),
    }
    if extra:
        doc.update(extra)
    write_json(out_dir / "final_state.json", doc)


def read_trajectory(run_dir, mesh=None):
    """Rebuild a :class:`Trajectory` from the files of :func:`write_trajectory`.

    The mesh is loaded from the reference in ``final_state.json`` (relative
    paths resolve against ``run_dir``) unless given.
    """
    run_dir = Path(run_dir)
    final = read_json(run_dir / "final_state.json")
    if mesh is None:
        ref = Path(final["mesh"])
        mesh = read_mesh(ref if ref.is_absolute() else run_dir / ref)
    config = FlowConfig.from_dict(final["config"])
    records = read_jsonl(run_dir / "trajectory.jsonl")
    snaps = read_jsonl(run_dir / "snapshots.jsonl")
    probe_keys = list(records[0]["probes"]) if records else []
    snapshots = [make_state(mesh, np.asarray(s["u"], dtype=np.float64), config.r, t=s["t"]) for s in snaps]
    n = len(records)
    return Trajectory(
        mesh=mesh,
        config=config,
        u0=snapshots[0].u.copy(),
        times=np.array([rec["t"] for rec in records], dtype=np.float64),
        R_min=np.array([rec["R_min"] for rec in records], dtype=np.float64),
        R_max=np.array([rec["R_max"] for rec in records], dtype=np.float64),
        sup_dev=np.array([rec["sup_dev"] for rec in records], dtype=np.float64),
        dts=np.diff(np.r_[0.0, [rec["t"] for rec in records]]) if n else np.zeros(0),
        probe_vertices=np.array([int(k) for k in probe_keys], dtype=np.int64),
        probe_R=np.array([[rec["probes"][k]["R"] for k in probe_keys] for rec in records], dtype=np.float64).reshape(n, len(probe_keys)),
        probe_u=np.array([[rec["probes"][k]["u"] for k in probe_keys] for rec in records], dtype=np.float64).reshape(n, len(probe_keys)),
        snapshots=snapshots,
        termination=final["termination"],
        envelope_checked=bool(final.get("envelope_checked", True)),
    )


def write_envelope_csv(path, rows):
    header = "t,R_min,R_max,low,high,phi_low,phi_high\n"
    with open(path, "w") as f:
        f.write(header)
        for row in rows:
            f.write(",".join(format(float(x), ".17g") for x in row))
            f.write("\n")
