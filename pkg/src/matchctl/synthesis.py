"""Feedback assembly and closed-loop verification.

Given a plant and a shaped target that satisfy the matching identities,
the actuation that turns one into the other is explicit: each force
group of the plant minus the kinetic-ratio image of the target's group.
This module builds that law, integrates open- and closed-loop motion
with a fixed-step fourth-order scheme, audits the shaped energy against
its dissipation identity, linearizes about rest points, and compares
first-order germs of feedback laws.

Only the target's kinetic matrix is ever inverted.  The plant metric is
inverted solely when the plant itself is integrated, so degenerate
plants (singular mass matrix) still admit law construction, germ work,
and target-side simulation.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (BlowUpError, DomainError, MatchctlError,
                     NotAnEquilibriumError, ScopeError, SingularTargetError)
from .fields import fd_jacobian
from .geometry import (ChristoffelFirst, MechanicalSystem, State,
                       acceleration, christoffel_first,
                       christoffel_from_derivative, quadratic_velocity_force)
from .matching import matching_residual
from .targets import TargetSystem

EQUILIBRIUM_TOL = 1e-9
MATCH_CHECK_TOL = 1e-6
FD_STEP = 1e-6
MAX_STEPS = 20_000_000


def shaped_energy(target: TargetSystem, s: State) -> float:
    """Energy of the target system: half the shaped quadratic form plus
    the shaped potential.  This is the Lyapunov candidate for the loop."""
    g = target.metric_at(s.x)
    return float(0.5 * s.xdot @ g @ s.xdot + target.potential(s.x))


def target_acceleration(target: TargetSystem, s: State) -> np.ndarray:
    gam = christoffel_from_derivative(target.metric.derivative(s.x))
    rhs = -(np.einsum("jkr,j,k->r", gam, s.xdot, s.xdot)
            + target.dissipation(s.x, s.xdot)
            + target.potential.gradient(s.x))
    g = target.metric_at(s.x)
    try:
        return np.linalg.solve(g, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularTargetError(
            f"shaped kinetic matrix is singular at x={s.x}") from exc


def control_law(sys: MechanicalSystem, target: TargetSystem,
                s: State) -> np.ndarray:
    """Force vector that makes the plant follow the target dynamics.

    Three groups, each plant-minus-image: velocity-quadratic forces,
    dissipative forces, potential gradients, with the image taken through
    g(x) times the inverse shaped matrix.  For a matched pair the
    unactuated components vanish identically; they are returned as
    computed so callers can monitor the defect.
    """
    x, v = s.x, s.xdot
    g = sys.metric_at(x)
    ratio_map = g @ target.metric_inv(x)
    gam_p = christoffel_first(sys, x)
    gam_t = christoffel_from_derivative(target.metric.derivative(x))
    quad_p = quadratic_velocity_force(gam_p, v)
    quad_t = np.einsum("jkr,j,k->r", gam_t, v, v)
    return ((quad_p - ratio_map @ quad_t)
            + (sys.dissipation(x, v) - ratio_map @ target.dissipation(x, v))
            + (sys.potential.gradient(x) - ratio_map @ target.potential.gradient(x)))


def matched_controller(sys: MechanicalSystem,
                       target: TargetSystem) -> Callable[[State], np.ndarray]:
    """State-feedback closure of control_law for use with simulate."""
    def controller(s: State) -> np.ndarray:
        return control_law(sys, target, s)
    return controller


@dataclass(frozen=True)
class Trajectory:
    """Fixed-step trajectory record.  states stacks (x, xdot) per row."""

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray

    @property
    def n(self) -> int:
        return self.states.shape[1] // 2

    def positions(self) -> np.ndarray:
        return self.states[:, :self.n]

    def velocities(self) -> np.ndarray:
        return self.states[:, self.n:]

    def state_at(self, i: int) -> State:
        return State(self.states[i, :self.n], self.states[i, self.n:])


def _step_count(T: float, dt: float) -> int:
    if dt <= 0 or T <= 0:
        raise DomainError("T and dt must be positive")
    k = int(round(T / dt))
    if k == 0 or abs(k * dt - T) > 1e-9 * max(1.0, abs(T)):
        raise DomainError(f"T={T} is not an integer multiple of dt={dt}")
    if k > MAX_STEPS:
        raise DomainError(f"{k} steps exceeds the {MAX_STEPS} step budget")
    return k


def simulate(model: MechanicalSystem | TargetSystem, s0: State, T: float,
             dt: float, controller: Callable[[State], np.ndarray] | None = None,
             blowup: float = 1e6) -> Trajectory:
    """Integrate the model with a fixed-step classical Runge-Kutta scheme.

    A MechanicalSystem runs open loop (controller None means zero force)
    or closed loop with the controller evaluated at every internal stage.
    A TargetSystem integrates its own dynamics; its recorded controls are
    zero and passing a controller with one is an error.

    Raises BlowUpError when any state component leaves [-blowup, blowup];
    the exception carries .time and .state for the last good node.
    """
    n = s0.n
    k = _step_count(T, dt)
    zero_u = np.zeros(n)

    if isinstance(model, TargetSystem):
        if controller is not None:
            raise DomainError("a target system integrates its own dynamics; "
                              "controller must be None")

        def rhs(z):
            return np.concatenate(
                (z[n:], target_acceleration(model, State(z[:n], z[n:]))))

        def control_at(z):
            return zero_u
    elif isinstance(model, MechanicalSystem):
        if model.n != n:
            raise DomainError("initial state dimension does not match the system")

        def control_at(z):
            if controller is None:
                return zero_u
            return np.asarray(controller(State(z[:n], z[n:])), dtype=float)

        def rhs(z):
            s = State(z[:n], z[n:])
            return np.concatenate((z[n:], acceleration(model, s, control_at(z))))
    else:
        raise DomainError(f"cannot simulate a {type(model).__name__}")

    times = np.linspace(0.0, k * dt, k + 1)
    states = np.empty((k + 1, 2 * n))
    controls = np.empty((k + 1, n))
    z = np.concatenate((np.asarray(s0.x, dtype=float),
                        np.asarray(s0.xdot, dtype=float)))
    states[0] = z
    controls[0] = control_at(z)
    for i in range(k):
        k1 = rhs(z)
        k2 = rhs(z + 0.5 * dt * k1)
        k3 = rhs(z + 0.5 * dt * k2)
        k4 = rhs(z + dt * k3)
        z = z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(z)) or np.max(np.abs(z)) > blowup:
            raise BlowUpError(
                f"state left the +-{blowup:g} box at t={times[i + 1]:g}",
                t=times[i],
                state=State(states[i, :n].copy(), states[i, n:].copy()))
        states[i + 1] = z
        controls[i + 1] = control_at(z)
    return Trajectory(times=times, states=states, controls=controls)


def trajectory_csv(traj: Trajectory, energy: Callable[[State], float],
                   path=None) -> str | None:
    """Serialize a trajectory with 17-significant-digit decimal fields.

    Columns: t, positions, velocities, controls, energy.  Identical
    inputs produce byte-identical output.  Returns the text when path is
    None, otherwise writes the file.
    """
    n = traj.n
    header = (["t"] + [f"x{i}" for i in range(n)] + [f"xd{i}" for i in range(n)]
              + [f"u{i}" for i in range(n)] + ["energy"])
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for i in range(traj.times.shape[0]):
        row = [traj.times[i], *traj.states[i], *traj.controls[i],
               energy(traj.state_at(i))]
        buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
    text = buf.getvalue()
    if path is None:
        return text
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return None


@dataclass(frozen=True)
class LyapunovAudit:
    """Shaped-energy audit along a trajectory.

    defects[i] pairs with interior_times[i] and is the centered time
    derivative of the energy plus the dissipation power; both vanish to
    discretization error when the loop follows the target dynamics.
    """

    times: np.ndarray
    energies: np.ndarray
    powers: np.ndarray
    interior_times: np.ndarray
    defects: np.ndarray

    @property
    def max_defect(self) -> float:
        return float(np.max(np.abs(self.defects)))

    @property
    def monotone_drop(self) -> float:
        """Largest single-step energy increase (0 for non-increasing runs)."""
        return float(max(0.0, np.max(np.diff(self.energies))))


def lyapunov_audit(target: TargetSystem, traj: Trajectory) -> LyapunovAudit:
    k = traj.times.shape[0]
    if k < 3:
        raise DomainError("need at least three nodes to audit")
    dt = traj.times[1] - traj.times[0]
    energies = np.array([shaped_energy(target, traj.state_at(i))
                         for i in range(k)])
    powers = np.empty(k)
    for i in range(k):
        s = traj.state_at(i)
        powers[i] = float(target.dissipation(s.x, s.xdot) @ s.xdot)
    ddt = (energies[2:] - energies[:-2]) / (2.0 * dt)
    return LyapunovAudit(times=traj.times, energies=energies, powers=powers,
                         interior_times=traj.times[1:-1],
                         defects=ddt + powers[1:-1])


@dataclass(frozen=True)
class Linearization:
    matrix: np.ndarray
    spectrum: np.ndarray      # eigenvalues sorted by real part, descending

    @property
    def stable(self) -> bool:
        return bool(np.all(self.spectrum.real < 0.0))


def _require_matched(sys: MechanicalSystem, target: TargetSystem,
                     x_star: np.ndarray) -> None:
    probes = np.vstack((np.eye(sys.n), np.ones((1, sys.n))))
    worst = max(np.max(np.abs(matching_residual(sys, None, target,
                                                State(x_star, v))))
                for v in probes)
    if worst > MATCH_CHECK_TOL:
        raise MatchctlError(
            "plant and target do not satisfy the matching identities near "
            f"the rest point (defect {worst:.2e}); the closed loop would not "
            "follow the target dynamics")


def linearize_closed_loop(sys: MechanicalSystem, target: TargetSystem,
                          x_star, step: float = FD_STEP) -> Linearization:
    """First-order model of the controlled plant about a rest point.

    Preconditions: the law produces no force at (x_star, 0), the shaped
    potential is critical there, the shaped dissipation vanishes at zero
    velocity, and the pair satisfies the matching identities.  Under
    those the closed loop coincides with the target dynamics, so the
    derivative is taken through the target field; this stays valid for
    plants whose own mass matrix is degenerate.
    """
    x_star = np.asarray(x_star, dtype=float)
    n = x_star.shape[0]
    rest = State(x_star, np.zeros(n))
    u0 = control_law(sys, target, rest)
    if np.max(np.abs(u0)) > EQUILIBRIUM_TOL:
        raise NotAnEquilibriumError(
            f"law output at rest is {np.max(np.abs(u0)):.2e}, not zero")
    if np.max(np.abs(target.potential.gradient(x_star))) > EQUILIBRIUM_TOL:
        raise NotAnEquilibriumError("shaped potential is not critical at x_star")
    if np.max(np.abs(target.dissipation(x_star, np.zeros(n)))) > EQUILIBRIUM_TOL:
        raise NotAnEquilibriumError(
            "shaped dissipation does not vanish at zero velocity")
    _require_matched(sys, target, x_star)

    def field(z):
        return np.concatenate(
            (z[n:], target_acceleration(target, State(z[:n], z[n:]))))

    z0 = np.concatenate((x_star, np.zeros(n)))
    mat = np.empty((2 * n, 2 * n))
    for j in range(2 * n):
        e = np.zeros(2 * n)
        e[j] = step
        mat[:, j] = (field(z0 + e) - field(z0 - e)) / (2.0 * step)
    eig = np.linalg.eigvals(mat)
    order = np.argsort(-eig.real, kind="stable")
    return Linearization(matrix=mat, spectrum=eig[order])


def analytic_rest_linearization(target: TargetSystem, x_star) -> Linearization:
    """Block form [[0, I], [-G^-1 H, -G^-1 B]] of the target about rest,
    with H the shaped-potential Hessian and B the velocity Jacobian of
    the shaped dissipation.  Reference for the finite-difference path."""
    x_star = np.asarray(x_star, dtype=float)
    n = x_star.shape[0]
    ginv = target.metric_inv(x_star)
    hess = fd_jacobian(target.potential.gradient, x_star)
    hess = 0.5 * (hess + hess.T)
    bmat = target.dissipation.jac_v(x_star, np.zeros(n))
    mat = np.zeros((2 * n, 2 * n))
    mat[:n, n:] = np.eye(n)
    mat[n:, :n] = -ginv @ hess
    mat[n:, n:] = -ginv @ bmat
    eig = np.linalg.eigvals(mat)
    order = np.argsort(-eig.real, kind="stable")
    return Linearization(matrix=mat, spectrum=eig[order])


@dataclass(frozen=True)
class GermReport:
    """First-order comparison of the assembled law against linear gains.

    Gains are (hold force, position gain matrix, velocity gain matrix)
    for u(x, xd) = v + a (x - x_star) + b xd.  Defects are max-abs
    differences between those and the actual law's first-order data.
    """

    value_defect: float
    position_defect: float
    velocity_defect: float
    law_value: np.ndarray
    law_position: np.ndarray
    law_velocity: np.ndarray

    @property
    def max_defect(self) -> float:
        return max(self.value_defect, self.position_defect,
                   self.velocity_defect)


def germ_check(sys: MechanicalSystem, target: TargetSystem, x_star,
               gains, step: float = FD_STEP) -> GermReport:
    """Compare the matching law's germ at a rest point with linear gains.

    Scope is two-degree-of-freedom systems.  The plant's dissipative
    force and its position Jacobian must vanish at (x_star, 0); without
    that the first-order data mixes in plant drag and the comparison
    identity does not hold.
    """
    if sys.n != 2:
        raise ScopeError("germ comparison is defined for two-degree-of-"
                         f"freedom systems, got n={sys.n}")
    x_star = np.asarray(x_star, dtype=float)
    zero = np.zeros(2)
    if np.max(np.abs(sys.dissipation(x_star, zero))) > EQUILIBRIUM_TOL:
        raise MatchctlError("plant dissipation does not vanish at rest")
    if np.max(np.abs(sys.dissipation.jac_x(x_star, zero))) > EQUILIBRIUM_TOL:
        raise MatchctlError(
            "plant dissipation has a position gradient at rest")
    v_ref, a_ref, b_ref = (np.asarray(g, dtype=float) for g in gains)

    value = control_law(sys, target, State(x_star, zero))
    pos = np.empty((2, 2))
    vel = np.empty((2, 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = step
        pos[:, j] = (control_law(sys, target, State(x_star + e, zero))
                     - control_law(sys, target, State(x_star - e, zero))) / (2 * step)
        vel[:, j] = (control_law(sys, target, State(x_star, e))
                     - control_law(sys, target, State(x_star, -e))) / (2 * step)
    return GermReport(
        value_defect=float(np.max(np.abs(value - v_ref))),
        position_defect=float(np.max(np.abs(pos - a_ref))),
        velocity_defect=float(np.max(np.abs(vel - b_ref))),
        law_value=value, law_position=pos, law_velocity=vel)


def linear_gains_from_blocks(sys: MechanicalSystem, x_star,
                             metric0: np.ndarray, potential_hess: np.ndarray,
                             dissipation_lin: np.ndarray):
    """Gains whose linear law has the same germ as the matching law built
    from the given constant target blocks at x_star.

    metric0 is the shaped kinetic matrix at x_star, potential_hess the
    shaped-potential Hessian (critical point assumed), dissipation_lin
    the shaped velocity-gain matrix.  Returns (v, a, b)."""
    x_star = np.asarray(x_star, dtype=float)
    n = x_star.shape[0]
    w = sys.metric_at(x_star) @ np.linalg.inv(np.asarray(metric0, dtype=float))
    hess = fd_jacobian(sys.potential.gradient, x_star)
    hess = 0.5 * (hess + hess.T)
    v = sys.potential.gradient(x_star)
    a = hess - w @ np.asarray(potential_hess, dtype=float)
    b = (sys.dissipation.jac_v(x_star, np.zeros(n))
         - w @ np.asarray(dissipation_lin, dtype=float))
    return v, a, b
