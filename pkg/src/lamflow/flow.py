"""Normalized Ricci flow on a conformal factor: du/dt = r - R(u)."""

import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .errors import ConfigError, InsufficientHistory, NonNegativeR, StepFloorHit, TriangleInequalityViolation
from .geometry.metric import CurvatureField, curvature, shifted_stiffness, stiffness

logger = logging.getLogger(__name__)

INTEGRATORS = ("explicit-euler", "rk4", "semi-implicit")
TERMINATIONS = ("converged", "t_max_reached", "step_floor_hit")


@dataclass(frozen=True)
class FlowConfig:
    """Flow parameters. ``r=None`` means: choose r from the initial curvature (see :func:`default_r`)."""

    r: float | None = None
    integrator: str = "semi-implicit"
    dt_init: float = 1.5e-5
    dt_min: float = 1e-9
    stop_tol: float = 1e-3
    t_max: float = 50.0
    record_every: int = 10

    def __post_init__(self):
        if self.integrator not in INTEGRATORS:
            raise ConfigError(f"integrator must be one of {INTEGRATORS}, got {self.integrator!r}")
        if not (self.dt_init > 0 and self.dt_min > 0):
            raise ConfigError("dt_init and dt_min must be positive")
        if self.dt_min > self.dt_init:
            raise ConfigError("dt_min must not exceed dt_init")
        if not self.stop_tol > 0:
            raise ConfigError("stop_tol must be positive")
        if not self.t_max >= 0:
            raise ConfigError("t_max must be non-negative")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ConfigError("record_every must be a positive integer")
        if self.r is not None and self.r > 0:
            raise ConfigError("r must be negative (or zero for flat fixtures)")

    @classmethod
    def from_dict(cls, doc):
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self):
        return asdict(self)

    def stop_threshold(self):
        return self.stop_tol * abs(self.r) if self.r else self.stop_tol


@dataclass(frozen=True)
class FlowState:
    t: float
    u: np.ndarray
    curv: CurvatureField
    sup_dev: float
    dt: float = 0.0  # step size that produced this state

    @property
    def R(self):
        return self.curv.R


def make_state(mesh, u, r, t=0.0, dt=0.0):
    cf = curvature(mesh, u)
    return FlowState(t=float(t), u=np.asarray(u, dtype=np.float64), curv=cf, sup_dev=float(np.abs(cf.R - r).max()), dt=dt)


def rhs(mesh, u, r):
    """Right-hand side ``r - R`` with R recomputed from the deformed lengths."""
    return r - curvature(mesh, u).R


def default_r(curv, margin=0.05):
    """Area-weighted mean curvature, pulled strictly inside (R_min, R_max).

    ``margin`` is the fraction of the range kept clear at each end.
    """
    lo, hi = curv.R_min, curv.R_max
    r = curv.mean
    if hi > lo:
        pad = margin * (hi - lo)
        r = min(max(r, lo + pad), hi - pad)
    return float(r)


def _advance(mesh, state, r, dt, integrator):
    u = state.u
    f = r - state.R
    if integrator == "explicit-euler":
        return u + dt * f
    if integrator == "rk4":
        k2 = rhs(mesh, u + 0.5 * dt * f, r)
        k3 = rhs(mesh, u + 0.5 * dt * k2, r)
        k4 = rhs(mesh, u + dt * k3, r)
        return u + dt / 6.0 * (f + 2 * k2 + 2 * k3 + k4)
    # semi-implicit: (I - dt L_u) du = dt f(u), where L_u = diag(1/A_u) W_u is the
    # Laplacian of the current metric (the discrete e^{-u} L0). Scaling rows by A_u
    # gives the symmetric positive definite system (A_u - dt W_u) du = dt A_u f.
    W, A = stiffness(mesh, u)
    lhs = shifted_stiffness(dt * W, mesh, A)
    return u + spsolve(lhs.tocsc(), dt * A * f)


def step(mesh, state, config, dt=None):
    """Advance one step of size ``dt`` (default ``config.dt_init``).

    A step that leaves the space of valid metrics (some face breaks the
    triangle inequality, possibly at an intermediate stage) is retried with
    half the step. The returned state records the step size actually used.
    """
    if config.r is None:
        raise ConfigError("step needs a concrete r; resolve it with default_r first")
    dt = config.dt_init if dt is None else float(dt)
    face = None
    while True:
        if dt < config.dt_min:
            raise StepFloorHit(f"step size fell below dt_min={config.dt_min:g} at t={state.t:g}", face=face, t=state.t)
        try:
            u_new = _advance(mesh, state, config.r, dt, config.integrator)
            if not np.all(np.isfinite(u_new)):
                raise FloatingPointError("non-finite conformal factor")
            return make_state(mesh, u_new, config.r, t=state.t + dt, dt=dt)
        except TriangleInequalityViolation as exc:
            face = exc.face
        except FloatingPointError:
            face = None
        logger.debug("halving dt=%g at t=%g", dt, state.t)
        dt *= 0.5


@dataclass
class Trajectory:
    """Per-step aggregates, per-step probe series, strided full snapshots."""

    mesh: object
    config: FlowConfig
    u0: np.ndarray
    times: np.ndarray
    R_min: np.ndarray
    R_max: np.ndarray
    sup_dev: np.ndarray
    dts: np.ndarray
    probe_vertices: np.ndarray
    probe_R: np.ndarray
    probe_u: np.ndarray
    snapshots: list = field(default_factory=list)
    termination: str = "converged"
    envelope_checked: bool = True

    @property
    def r(self):
        return self.config.r

    @property
    def final(self):
        return self.snapshots[-1]

    @property
    def n_steps(self):
        return len(self.times) - 1

    @property
    def converged(self):
        return self.termination == "converged"

    def snapshot_times(self):
        return np.array([s.t for s in self.snapshots])


def _probe_indices(mesh, probes):
    if probes is None:
        return np.arange(mesh.n_vertices)
    probes = np.asarray(probes, dtype=np.int64).reshape(-1)
    if probes.size and (probes.min() < 0 or probes.max() >= mesh.n_vertices):
        raise ValueError("probe vertex out of range")
    return probes


def run(mesh, u0=None, config=FlowConfig(), probes=None):
    """Integrate the flow from ``u0`` until convergence, ``t_max`` or the step floor.

    Convergence means ``max |R - r| < stop_tol * |r|``. Scalar aggregates and
    probe values are kept for every step; full states every
    ``record_every`` steps plus the first and last.
    """
    u0 = np.zeros(mesh.n_vertices) if u0 is None else np.asarray(u0, dtype=np.float64).copy()
    cf0 = curvature(mesh, u0)
    if config.r is None:
        config = replace(config, r=default_r(cf0))
    r = config.r
    envelope_checked = True
    if cf0.R_max >= 0:
        logger.warning("initial curvature is not negative everywhere; envelope checks disabled")
        envelope_checked = False
    elif not (cf0.R_min < r < cf0.R_max):
        envelope_checked = False

    probes = _probe_indices(mesh, probes)
    state = FlowState(0.0, u0, cf0, float(np.abs(cf0.R - r).max()))
    times, rmin, rmax, dev, dts, pR, pu = [], [], [], [], [], [], []
    snapshots = []

    def record(s, force_snapshot):
        times.append(s.t)
        rmin.append(s.curv.R_min)
        rmax.append(s.curv.R_max)
        dev.append(s.sup_dev)
        dts.append(s.dt)
        pR.append(s.R[probes])
        pu.append(s.u[probes])
        if force_snapshot:
            snapshots.append(s)

    record(state, True)
    threshold = config.stop_threshold()
    dt = config.dt_init
    n = 0
    t_eps = 1e-12 * max(1.0, config.t_max)
    while True:
        if state.sup_dev < threshold:
            termination = "converged"
            break
        if state.t >= config.t_max - t_eps:
            termination = "t_max_reached"
            break
        trial = min(dt, config.t_max - state.t)
        try:
            state = step(mesh, state, config, trial)
        except StepFloorHit as exc:
            logger.warning("%s", exc)
            termination = "step_floor_hit"
            break
        if state.dt < trial:
            dt = state.dt
        n += 1
        record(state, n % config.record_every == 0)
    if snapshots[-1] is not state:
        snapshots.append(state)

    return Trajectory(
        mesh=mesh,
        config=config,
        u0=u0,
        times=np.array(times),
        R_min=np.array(rmin),
        R_max=np.array(rmax),
        sup_dev=np.array(dev),
        dts=np.array(dts),
        probe_vertices=probes,
        probe_R=np.array(pR).reshape(len(times), len(probes)),
        probe_u=np.array(pu).reshape(len(times), len(probes)),
        snapshots=snapshots,
        termination=termination,
        envelope_checked=envelope_checked,
    )


def integral_identity_residual(traj):
    """Max over probes of ``|u(T) - u(0) - int_0^T (r - R(s)) ds|`` (trapezoidal rule)."""
    if traj.probe_vertices.size == 0:
        raise InsufficientHistory("trajectory has no probe vertices")
    if len(traj.times) < 2:
        return 0.0
    integral = np.trapezoid(traj.r - traj.probe_R, traj.times, axis=0)
    drift = traj.probe_u[-1] - traj.probe_u[0]
    return float(np.abs(drift - integral).max())


def rescale_to_minus_one(u, r):
    """Homothety taking constant curvature ``r < 0`` to ``-1``: returns ``u + ln(-r)``."""
    if not r < 0:
        raise NonNegativeR(f"rescaling to curvature -1 needs r < 0, got {r}")
    return np.asarray(u, dtype=np.float64) + math.log(-r)
