"""Families of leaves over a sampled circle transversal.

A family shares one combinatorial surface; each transversal sample
``zeta_k = k / K`` carries its own initial conformal factor and, optionally,
per-edge multipliers on the background lengths. Each leaf is flowed on its
own and continuity in ``zeta`` is measured on the limits.

Limits are compared through ``u_inf - u0``, the conformal factor of the
limit metric relative to the leaf's initial metric ``e^{u0} g0``.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import FamilyRangeError, InvalidGenerator, LamflowError, MeshError, NotConverged
from .flow import run
from .geometry.elliptic import precondition_negative
from .geometry.metric import curvature

logger = logging.getLogger(__name__)


def vertex_bump(mesh, center, radius):
    """``cos^2(pi d / (2 (radius + 1)))`` in the hop distance d from ``center``; zero beyond ``radius``."""
    d = mesh.hop_distance(center)
    b = np.cos(0.5 * np.pi * d / (radius + 1)) ** 2
    b[d > radius] = 0.0
    return b


@dataclass(frozen=True, eq=False)
class TransversalFamily:
    mesh: object
    u0: np.ndarray  # (K, V)
    length_scale: np.ndarray | None = None  # (K, E) multipliers on the background lengths
    generator: dict = field(default_factory=dict)

    @property
    def K(self):
        return len(self.u0)

    @property
    def zetas(self):
        return np.arange(self.K) / self.K

    def leaf_mesh(self, k):
        if self.length_scale is None:
            return self.mesh
        return self.mesh.with_lengths(self.mesh.lengths * self.length_scale[k])

    def lipschitz(self):
        """Measured ``max_k ||u0(zeta_{k+1}) - u0(zeta_k)||_inf * K`` around the circle."""
        diffs = np.abs(np.roll(self.u0, -1, axis=0) - self.u0).max(axis=1)
        return float(diffs.max() * self.K)

    def subsample(self, order):
        """Family re-indexed so that new sample j is old sample ``order[j]``."""
        order = np.asarray(order)
        scale = None if self.length_scale is None else self.length_scale[order]
        return TransversalFamily(self.mesh, self.u0[order], scale, dict(self.generator))


def build_family(mesh, K, generator):
    """Sample a generator spec at ``zeta_k = k / K``.

    Generator kinds:

    - ``{"kind": "constant", "u0": value-or-array}``
    - ``{"kind": "sine-bump", "amplitude": a, "bump_center": v, "bump_radius": hops,
      "stretch": s}``: ``u0 = a sin(2 pi zeta) bump``; a non-zero ``stretch``
      also multiplies each edge by ``exp(s sin(2 pi zeta) bump_edge)``, which
      moves the leaf out of the base conformal class.
    - ``{"kind": "tabulated", "u0": (K, V) array, "length_scale": optional (K, E) array}``
    """
    K = int(K)
    if K < 2:
        raise InvalidGenerator(f"need at least two transversal samples, got {K}")
    kind = generator.get("kind")
    V, E = mesh.n_vertices, mesh.n_edges
    zeta = np.arange(K) / K
    scale = None
    if kind == "constant":
        base = np.broadcast_to(np.asarray(generator.get("u0", 0.0), dtype=np.float64), (V,))
        u0 = np.tile(base, (K, 1))
    elif kind == "sine-bump":
        a = float(generator.get("amplitude", 0.0))
        if abs(a) > 0.5:
            raise InvalidGenerator(f"sine-bump amplitude must satisfy |a| <= 0.5, got {a}")
        bump = vertex_bump(mesh, int(generator.get("bump_center", 0)), int(generator.get("bump_radius", 2)))
        wave = np.sin(2 * np.pi * zeta)
        u0 = a * wave[:, None] * bump[None, :]
        s = float(generator.get("stretch", 0.0))
        if s:
            edge_bump = 0.5 * (bump[mesh.edges[:, 0]] + bump[mesh.edges[:, 1]])
            scale = np.exp(s * wave[:, None] * edge_bump[None, :])
    elif kind == "tabulated":
        u0 = np.asarray(generator["u0"], dtype=np.float64)
        if u0.shape != (K, V):
            raise InvalidGenerator(f"tabulated u0 must have shape ({K}, {V}), got {u0.shape}")
        if generator.get("length_scale") is not None:
            scale = np.asarray(generator["length_scale"], dtype=np.float64)
            if scale.shape != (K, E):
                raise InvalidGenerator(f"tabulated length_scale must have shape ({K}, {E}), got {scale.shape}")
    else:
        raise InvalidGenerator(f"unknown generator kind {kind!r}")

    fam = TransversalFamily(mesh, u0, scale, dict(generator))
    for k in range(K):
        try:
            if not np.all(np.isfinite(u0[k])):
                raise ValueError("non-finite initial data")
            curvature(fam.leaf_mesh(k), u0[k])
        except (MeshError, ValueError) as exc:
            raise InvalidGenerator(f"sample k={k} (zeta={zeta[k]:g}) is invalid: {exc}") from exc
    return fam


@dataclass
class FamilyResult:
    family: TransversalFamily
    config: object
    precondition: bool
    trajectories: list
    u_start: np.ndarray  # (K, V) after preconditioning
    u_inf: np.ndarray  # (K, V) final conformal factor, relative to the leaf's background
    convergence_times: np.ndarray

    @property
    def K(self):
        return self.family.K

    @property
    def r(self):
        return self.config.r

    @property
    def u_rel(self):
        """Limit factor relative to the leaf's initial metric ``e^{u0} g0``."""
        return self.u_inf - self.family.u0

    @property
    def moduli(self):
        return adjacency_moduli(self.u_rel)

    @property
    def all_converged(self):
        return all(t.converged for t in self.trajectories)


def adjacency_moduli(fields):
    """``m_k = ||f_{k+1} - f_k||_inf`` with indices mod K."""
    return np.abs(np.roll(fields, -1, axis=0) - fields).max(axis=1)


def _tagged(exc, k, zeta):
    exc.leaf = k
    exc.zeta = zeta
    return exc


def prepare_leaf(family, k, precondition=True):
    """Starting conformal factor of leaf k (preconditioned if requested)."""
    mesh = family.leaf_mesh(k)
    try:
        if precondition:
            return precondition_negative(mesh, family.u0[k]).u
        return family.u0[k].copy()
    except LamflowError as exc:
        raise _tagged(exc, k, family.zetas[k])


def run_leaf(family, k, config, u_start):
    try:
        return run(family.leaf_mesh(k), u_start, config)
    except LamflowError as exc:
        raise _tagged(exc, k, family.zetas[k])


def _prepare_task(args):
    return prepare_leaf(*args)


def _run_task(args):
    return run_leaf(*args)


def _map(fn, tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def choose_family_r(curvatures, margin=0.05):
    """One r for all leaves: mean of the leaves' mean curvatures, kept inside the common range.

    Raises FamilyRangeError when the leaves' [R_min, R_max] ranges do not overlap.
    """
    lo = max(c.R_min for c in curvatures)
    hi = min(c.R_max for c in curvatures)
    if lo > hi:
        raise FamilyRangeError(f"leaf curvature ranges have empty intersection ({lo:.6g} > {hi:.6g})")
    if lo == hi:  # every leaf already has the same constant curvature
        return float(lo)
    r = float(np.mean([c.mean for c in curvatures]))
    pad = margin * (hi - lo)
    return min(max(r, lo + pad), hi - pad)


def run_family(family, config, precondition=True, jobs=1):
    """Precondition (optionally) and flow every leaf with one shared config and r.

    Leaves may run in a process pool of ``jobs`` workers; results are keyed
    by sample index and do not depend on ``jobs``.
    """
    K = family.K
    starts = _map(_prepare_task, [(family, k, precondition) for k in range(K)], jobs)
    if config.r is None:
        curvs = [curvature(family.leaf_mesh(k), starts[k]) for k in range(K)]
        config = replace(config, r=choose_family_r(curvs))
    trajs = _map(_run_task, [(family, k, config, starts[k]) for k in range(K)], jobs)
    for k, tr in enumerate(trajs):
        if not tr.converged:
            logger.warning("leaf %d (zeta=%g) ended with %s", k, family.zetas[k], tr.termination)
    return FamilyResult(
        family=family,
        config=config,
        precondition=precondition,
        trajectories=trajs,
        u_start=np.array(starts),
        u_inf=np.array([tr.final.u for tr in trajs]),
        convergence_times=np.array([tr.final.t for tr in trajs]),
    )


def _state_at(traj, t):
    ts = traj.snapshot_times()
    if t <= ts[0]:
        return traj.snapshots[0].u
    if t >= ts[-1]:
        return traj.final.u
    j = int(np.searchsorted(ts, t))
    t0, t1 = ts[j - 1], ts[j]
    w = (t - t0) / (t1 - t0)
    return (1 - w) * traj.snapshots[j - 1].u + w * traj.snapshots[j].u


@dataclass(frozen=True)
class ModulusReport:
    max_modulus: float
    profile: np.ndarray
    time_moduli: dict  # t -> max adjacency modulus of u_t - u0

    def to_dict(self):
        return {
            "max_modulus": self.max_modulus,
            "profile": self.profile,
            "time_moduli": [{"t": t, "max_modulus": m} for t, m in self.time_moduli.items()],
        }


def transversal_modulus(result, times=None):
    """Discrete modulus of continuity of the limits (and of u_t at matched times) in zeta.

    ``times`` defaults to 1/4, 1/2 and 3/4 of the shortest convergence time;
    leaf states between snapshots are linearly interpolated.
    """
    if not result.all_converged:
        bad = [k for k, t in enumerate(result.trajectories) if not t.converged]
        raise NotConverged(f"leaves {bad} did not converge")
    profile = result.moduli
    if times is None:
        tmin = float(result.convergence_times.min())
        times = [f * tmin for f in (0.25, 0.5, 0.75)] if tmin > 0 else []
    time_moduli = {}
    for t in times:
        u_t = np.array([_state_at(tr, t) for tr in result.trajectories]) - result.family.u0
        time_moduli[float(t)] = float(adjacency_moduli(u_t).max())
    return ModulusReport(float(profile.max()) if len(profile) else 0.0, profile, time_moduli)


def spacing_ratio(coarse, fine):
    """Ratio of max adjacency moduli between two refinements of the same family."""
    if coarse == 0:
        return 0.0 if fine == 0 else math.inf
    return fine / coarse
