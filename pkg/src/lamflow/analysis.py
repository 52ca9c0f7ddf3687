"""A-priori estimates checked against recorded flow trajectories.

The comparison solution ``phi_c`` solves ``phi' = (phi - r) phi`` with
``phi(0) = c``. Curvature along the flow satisfies
``R_t = Lap R + (R - r) R``, so by the maximum principle
``phi_{R_min}(t) <= R(x, t) <= phi_{R_max}(t)``.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InsufficientHistory, MissingHistory
from .geometry.metric import cotan_laplacian


@dataclass(frozen=True)
class ComparisonEnvelope:
    r: float
    c_low: float
    c_high: float

    def __post_init__(self):
        if not self.r < 0:
            raise DomainError(f"envelope needs r < 0, got {self.r}")
        if not self.c_low <= self.c_high < 0:
            raise DomainError(f"envelope needs c_low <= c_high < 0, got {self.c_low}, {self.c_high}")

    @classmethod
    def from_trajectory(cls, traj):
        return cls(float(traj.r), float(traj.R_min[0]), float(traj.R_max[0]))

    def phi(self, c, t):
        t = np.asarray(t, dtype=np.float64)
        denom = 1.0 - (1.0 - self.r / c) * np.exp(self.r * t)
        if np.any(denom <= 0):
            raise DomainError("comparison solution denominator vanished")
        return self.r / denom

    def linear(self, c, t):
        return self.r + (c - self.r) * np.exp(self.r * np.asarray(t, dtype=np.float64))

    def low(self, t):
        return self.linear(self.c_low, t)

    def high(self, t):
        return self.linear(self.c_high, t)

    def upper(self, t):
        """Valid upper bound ``max(high, phi_high)``.

        For ``c > r`` the comparison solution lies above the linearised
        curve ``r + (c - r) e^{rt}``; the bound that actually holds is
        ``phi_high <= r + (r/c)(c - r) e^{rt}``.
        """
        return np.maximum(self.high(t), self.phi(self.c_high, t))

    def lower(self, t):
        return np.minimum(self.low(t), self.phi(self.c_low, t))


def envelope_eval(env, t):
    """Return ``(low, high, phi_low, phi_high)`` at time ``t >= 0``."""
    if t < 0:
        raise DomainError("envelope is defined for t >= 0")
    return (
        float(env.low(t)),
        float(env.high(t)),
        float(env.phi(env.c_low, t)),
        float(env.phi(env.c_high, t)),
    )


def smoothing_deviation(mesh, R):
    """Max deviation of R from one pass of uniform neighbour averaging."""
    adj = mesh.adjacency()
    deg = np.asarray(adj.sum(axis=1)).ravel()
    smoothed = (adj @ R) / deg
    return float(np.abs(R - smoothed).max())


@dataclass(frozen=True)
class EnvelopeReport:
    passed: bool
    worst_violation: float  # max over steps of (bound - value), clipped at 0
    slack: float
    eps_disc: float
    raw_violation: float  # same against the unwidened bounds
    linear_upper_violation: float  # against high(t) alone, unwidened

    def to_dict(self):
        return {
            "pass": bool(self.passed),
            "worst_violation": self.worst_violation,
            "slack": self.slack,
            "eps_disc": self.eps_disc,
            "raw_violation": self.raw_violation,
            "linear_upper_violation": self.linear_upper_violation,
        }


def check_envelope(traj, env=None, slack=0.1, eps_disc=None):
    """Check ``lower(t) <= R_min(t)`` and ``R_max(t) <= upper(t)`` at every recorded step.

    The band is widened on both sides by ``slack * |high - low| + eps_disc``;
    ``eps_disc`` defaults to :func:`smoothing_deviation` of the initial curvature.
    """
    if len(traj.times) == 0:
        raise MissingHistory("trajectory has no per-step history")
    env = ComparisonEnvelope.from_trajectory(traj) if env is None else env
    if eps_disc is None:
        eps_disc = smoothing_deviation(traj.mesh, traj.snapshots[0].R)
    t = traj.times
    widen = slack * np.abs(env.high(t) - env.low(t)) + eps_disc
    lo, hi = env.lower(t), env.upper(t)
    raw = np.maximum(lo - traj.R_min, traj.R_max - hi)
    worst = float(max(0.0, np.max(raw - widen)))
    return EnvelopeReport(
        passed=worst == 0.0,
        worst_violation=worst,
        slack=float(slack),
        eps_disc=float(eps_disc),
        raw_violation=float(max(0.0, raw.max())),
        linear_upper_violation=float(max(0.0, np.max(traj.R_max - env.high(t)))),
    )


def curvature_evolution_residual(traj, t_min=0.0, t_max=math.inf):
    """Max over interior snapshots of ``|dR/dt - (Lap R + (R - r) R)|``.

    dR/dt is the three-point central difference on (possibly uneven)
    snapshot times; the Laplacian is taken on the middle snapshot's metric.
    Only middle snapshots with ``t_min <= t <= t_max`` count.
    """
    snaps = traj.snapshots
    if len(snaps) < 3:
        raise InsufficientHistory("need at least three snapshots")
    r = traj.r
    worst = 0.0
    used = 0
    for a, b, c in zip(snaps, snaps[1:], snaps[2:]):
        if not t_min <= b.t <= t_max:
            continue
        used += 1
        h1, h2 = b.t - a.t, c.t - b.t
        dR = (
            -h2 / (h1 * (h1 + h2)) * a.R
            + (h2 - h1) / (h1 * h2) * b.R
            + h1 / (h2 * (h1 + h2)) * c.R
        )
        predicted = cotan_laplacian(traj.mesh, b.u) @ b.R + (b.R - r) * b.R
        worst = max(worst, float(np.abs(dR - predicted).max()))
    if used == 0:
        raise InsufficientHistory("no snapshot triple inside the requested window")
    return worst


def max_gradient_sq(mesh, state):
    """``max_e ((R_j - R_i) / l_ij)^2`` over non-loop edges on the state's metric."""
    i, j = mesh.edges[:, 0], mesh.edges[:, 1]
    keep = i != j
    lengths = mesh.deformed_lengths(state.u)[keep]
    dq = (state.R[j[keep]] - state.R[i[keep]]) / lengths
    return float(np.max(dq * dq))


@dataclass(frozen=True)
class GradientDecayReport:
    passed: bool
    exponent: float
    reference_exponent: float  # r / 2
    C1: float
    times: np.ndarray
    G: np.ndarray

    def to_dict(self):
        return {
            "pass": bool(self.passed),
            "exponent": self.exponent,
            "reference_exponent": self.reference_exponent,
            "C1": self.C1,
        }


def gradient_decay(traj, slack=0.5, transient=0.1):
    """Fit and check ``G(t) <= C1 e^{(r/2) t}`` after the initial transient.

    C1 is fixed from the first snapshot past ``transient * T``; the decay
    exponent is the least-squares slope of ``log G`` over the same range.
    Differences at roundoff level (relative 1e-12 of the curvature scale)
    count as zero.
    """
    snaps = traj.snapshots
    if len(snaps) < 2:
        raise InsufficientHistory("need at least two snapshots")
    t = np.array([s.t for s in snaps])
    G = np.array([max_gradient_sq(traj.mesh, s) for s in snaps])
    scale = max(float(np.abs(s.R).max()) for s in snaps) / float(traj.mesh.lengths.min())
    G[G <= (1e-12 * scale) ** 2] = 0.0
    post = t >= transient * t[-1]
    if post.sum() < 2:
        raise InsufficientHistory("fewer than two snapshots after the transient")
    tp, Gp = t[post], G[post]
    half_r = 0.5 * traj.r
    if np.all(Gp == 0):
        return GradientDecayReport(True, -math.inf, half_r, 0.0, t, G)
    C1 = float(Gp[0] * math.exp(-half_r * tp[0]))
    passed = bool(np.all(Gp <= C1 * np.exp(half_r * tp) * (1.0 + slack)))
    pos = Gp > 0
    if pos.sum() >= 2:
        exponent = float(np.polyfit(tp[pos], np.log(Gp[pos]), 1)[0])
    else:
        exponent = -math.inf
    return GradientDecayReport(passed, exponent, half_r, C1, t, G)


def gauss_bonnet_audit(traj):
    """Max over snapshots of ``|sum of angle defects - 2 pi chi|``."""
    target = 2.0 * math.pi * traj.mesh.euler_characteristic
    return float(max(abs(s.curv.defect.sum() - target) for s in traj.snapshots))


@dataclass(frozen=True)
class MetricBounds:
    u_max: float
    u_min: float
    upper: float  # ln(R_min / r)
    lower: float  # ln(R_max / r)

    @property
    def margin(self):
        """Amount by which the flow displacement leaves the band (0 if inside)."""
        return max(0.0, self.u_max - self.upper, self.lower - self.u_min)


def metric_bounds(traj):
    """Range of ``u(t) - u(0)`` over snapshots against ``[ln(R_max/r), ln(R_min/r)]``."""
    r = traj.r
    if not (r < 0 and traj.R_max[0] < 0):
        raise DomainError("metric bounds need negative curvature and r < 0")
    disp = np.array([s.u - traj.snapshots[0].u for s in traj.snapshots])
    return MetricBounds(
        u_max=float(disp.max()),
        u_min=float(disp.min()),
        upper=math.log(traj.R_min[0] / r),
        lower=math.log(traj.R_max[0] / r),
    )


def envelope_table(traj, env=None):
    """Rows ``(t, R_min, R_max, low, high, phi_low, phi_high)`` for every recorded step."""
    env = ComparisonEnvelope.from_trajectory(traj) if env is None else env
    t = traj.times
    return np.column_stack(
        [t, traj.R_min, traj.R_max, env.low(t), env.high(t), env.phi(env.c_low, t), env.phi(env.c_high, t)]
    )


def analysis_report(traj, slack=0.1):
    """Every applicable check, as a JSON-ready dict."""
    report = {}
    if traj.envelope_checked and traj.r < 0:
        report["envelope"] = check_envelope(traj, slack=slack).to_dict()
    else:
        report["envelope"] = None
    try:
        report["evolution_residual"] = curvature_evolution_residual(traj)
    except InsufficientHistory:
        report["evolution_residual"] = None
    try:
        report["gradient_decay"] = gradient_decay(traj).to_dict() if traj.r < 0 else None
    except InsufficientHistory:
        report["gradient_decay"] = None
    report["gauss_bonnet_audit"] = gauss_bonnet_audit(traj)
    report["integral_identity_residual"] = _integral_residual(traj)
    return report


def _integral_residual(traj):
    from .flow import integral_identity_residual

    try:
        return integral_identity_residual(traj)
    except InsufficientHistory:
        return None
