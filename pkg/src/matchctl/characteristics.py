"""Transport of target data along the flow of the kinetic ratio.

With one unactuated coordinate the compatibility equations for the
shaped kinetic matrix and the shaped potential become transport
equations along the integral curves of the single ratio row.  This
module integrates that transport from data prescribed on a coordinate
hyperplane, completes metric rows pointwise from an actuated block,
and audits the row identity that the transport is supposed to
propagate.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import (AsymmetryError, DomainError, ScopeError,
                     SingularFieldError, SingularLocusError,
                     TransversalityError)
from .geometry import MechanicalSystem
from .matching import RatioField

STEP_LIMIT = 10_000_000
FIELD_FLOOR = 1e-12
TRANSVERSALITY_FLOOR = 1e-3   # radians between the flow and the seed plane
SYMMETRY_TOL = 1e-9
RESIDUAL_WARN = 1e-5
POTENTIAL_RESIDUAL_WARN = 1e-6
PLANE_HIT_TOL = 1e-10


def _drive_row(ratio: RatioField, x: np.ndarray) -> np.ndarray:
    """First ratio row as the flow velocity, guarded against vanishing."""
    v = ratio.value(x)[0]
    norm = float(np.linalg.norm(v))
    if not np.isfinite(norm) or norm < FIELD_FLOOR:
        raise SingularFieldError(
            "transport direction vanished along the flow (|row| = %.3e)" % norm)
    return v


def _rk4_step(f, x, h):
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def flow_map(ratio: RatioField, x0, t: float, dt: float = 1e-3) -> np.ndarray:
    """Advance x0 by time t along the first ratio row.

    Classical fixed-step 4th-order integration; the final step is
    shortened so the endpoint lands exactly on t.  Raises DomainError
    when |t|/dt would exceed the step budget and SingularFieldError if
    the row vanishes en route.
    """
    x = np.asarray(x0, dtype=float).copy()
    if dt <= 0.0:
        raise DomainError("flow step dt must be positive")
    if abs(t) / dt > STEP_LIMIT:
        raise DomainError("flow horizon %.3g needs more than %d steps at dt=%.3g"
                          % (t, STEP_LIMIT, dt))
    remaining = float(t)
    sgn = 1.0 if t >= 0.0 else -1.0
    vel = lambda y: _drive_row(ratio, y)
    while abs(remaining) > 1e-15:
        h = sgn * min(dt, abs(remaining))
        x = _rk4_step(vel, x, h)
        remaining -= h
    return x


def complete_metric_rows(sys: MechanicalSystem, ratio: RatioField,
                         block, x) -> np.ndarray:
    """Fill the unactuated rows of the shaped kinetic matrix at x.

    The actuated block is given; the remaining rows are forced by the
    identity g_unactuated = ratio @ ghat.  The leading m-by-m corner is
    over-determined for m > 1, and a corner that comes out asymmetric
    beyond tolerance means the (ratio, block) pair is not jointly
    admissible at x.
    """
    x = np.asarray(x, dtype=float)
    m, n = sys.m, sys.n
    block = np.asarray(block, dtype=float)
    if block.shape != (n - m, n - m):
        raise DomainError("actuated block must be %d x %d, got %s"
                          % (n - m, n - m, block.shape))
    scale = max(1.0, float(np.max(np.abs(block))))
    if np.max(np.abs(block - block.T)) > SYMMETRY_TOL * scale:
        raise AsymmetryError("actuated block is not symmetric")

    lam = ratio.value(x)
    g = sys.metric_at(x)
    lead = lam[:, :m]
    svals = np.linalg.svd(lead, compute_uv=False)
    if svals[-1] < 1e-12 * max(1.0, svals[0]):
        raise SingularLocusError(
            "leading ratio block is singular at the queried point")

    gh = np.zeros((n, n))
    gh[m:, m:] = 0.5 * (block + block.T)
    gh[:m, m:] = np.linalg.solve(lead, g[:m, m:] - lam[:, m:] @ gh[m:, m:])
    gh[m:, :m] = gh[:m, m:].T
    corner = np.linalg.solve(lead, g[:m, :m] - lam[:, m:] @ gh[m:, :m])
    cscale = max(1.0, float(np.max(np.abs(corner))))
    if np.max(np.abs(corner - corner.T)) > SYMMETRY_TOL * cscale:
        raise AsymmetryError(
            "row completion produced an asymmetric leading corner; "
            "the ratio and block are not admissible together at this point")
    gh[:m, :m] = 0.5 * (corner + corner.T)
    return gh


@dataclass(frozen=True)
class CharacteristicGrid:
    """Per-seed flows of the ratio row with transported payload.

    states[k, j] is the position of seed k at times[j]; metric[k, j]
    and potential[k, j] are the shaped kinetic matrix and shaped
    potential transported to that node.  Immutable once built; queries
    are read-only.
    """

    seed_points: np.ndarray          # (k, n)
    times: np.ndarray                # (T,)
    states: np.ndarray               # (k, T, n)
    metric: np.ndarray               # (k, T, n, n)
    potential: np.ndarray            # (k, T)
    plane_axis: int
    plane_value: float
    seed_axes: tuple                 # coordinate axes spanning the seed lattice
    seed_values: tuple               # 1-D sorted coordinate arrays, one per axis
    field: RatioField
    dt: float
    residual_metric: float           # worst transport-equation defect at interior nodes
    residual_potential: float
    symmetry_defect: float
    warnings: tuple = ()

    @property
    def n(self) -> int:
        return self.seed_points.shape[1]

    @property
    def seed_count(self) -> int:
        return self.seed_points.shape[0]

    @property
    def seed_shape(self) -> tuple:
        return tuple(v.size for v in self.seed_values)

    def time_index(self, t: float) -> int:
        j = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[j] - t) > 1e-12:
            raise DomainError("%.6g is not a stored flow time" % t)
        return j

    def interpolate(self, x, dt: float | None = None):
        """Payload at an off-grid point: (shaped metric, shaped potential).

        The query is walked back to the seed plane along the flow, then
        the payload is combined multilinearly in the seed-plane
        coordinates and the flow time.  Seed axes carrying a single
        value admit no variation, so the query must sit on them.
        """
        x = np.asarray(x, dtype=float)
        step = self.dt if dt is None else float(dt)
        t_star, hit = _plane_time(self.field, x, self.plane_axis,
                                  self.plane_value, step,
                                  float(self.times[0]), float(self.times[-1]))
        if not (self.times[0] - 1e-12 <= t_star <= self.times[-1] + 1e-12):
            raise DomainError("query lies at flow time %.4g outside the grid"
                              % t_star)

        factors = []
        for axis, vals in zip(self.seed_axes, self.seed_values):
            c = hit[axis]
            if vals.size == 1:
                if abs(c - vals[0]) > 1e-8:
                    raise DomainError(
                        "no seed variation along axis %d but the query "
                        "projects to %.6g != %.6g" % (axis, c, vals[0]))
                factors.append(((0, 1.0),))
                continue
            if c < vals[0] - 1e-12 or c > vals[-1] + 1e-12:
                raise DomainError("query projects outside the seed lattice "
                                  "on axis %d" % axis)
            factors.append(_line_weights(vals, c))
        factors.append(_line_weights(self.times, t_star))

        shape = self.seed_shape
        gh = np.zeros((self.n, self.n))
        vh = 0.0
        for corner in itertools.product(*factors):
            idx = tuple(c[0] for c in corner)
            w = 1.0
            for c in corner:
                w *= c[1]
            if w == 0.0:
                continue
            flat = int(np.ravel_multi_index(idx[:-1], shape)) if shape else 0
            gh += w * self.metric[flat, idx[-1]]
            vh += w * self.potential[flat, idx[-1]]
        return gh, vh


def _line_weights(vals: np.ndarray, c: float):
    """Linear-interpolation stencil on a sorted 1-D grid, clamped to the ends."""
    i = int(np.searchsorted(vals, c))
    i = min(max(i, 1), vals.size - 1)
    w = (c - vals[i - 1]) / (vals[i] - vals[i - 1])
    w = min(max(w, 0.0), 1.0)
    return ((i - 1, 1.0 - w), (i, w))


def _plane_time(ratio: RatioField, x: np.ndarray, axis: int, value: float,
                dt: float, t_lo: float, t_hi: float):
    """Flow time of x measured from the seed plane, plus the plane point.

    Marches x along the flow in the direction that approaches the
    plane, brackets the crossing, and bisects inside the bracketing
    step.  Returns (t_star, hit) with flow_map(hit, t_star) == x up to
    integrator error.
    """
    gap = float(x[axis] - value)
    if abs(gap) <= PLANE_HIT_TOL:
        return 0.0, x.copy()
    v = _drive_row(ratio, x)
    if abs(v[axis]) < FIELD_FLOOR:
        raise TransversalityError(
            "the flow is tangent to the seed plane at the query point")
    # Walking against the flow by u > 0 moves the gap by -v[axis] * u.
    direction = -1.0 if gap * v[axis] > 0.0 else 1.0
    budget = (t_hi - t_lo) + 2.0 * dt
    vel = lambda y: _drive_row(ratio, y)

    u, cur, g_cur = 0.0, x.copy(), gap
    while abs(u) <= budget:
        nxt = _rk4_step(vel, cur, direction * dt)
        g_nxt = float(nxt[axis] - value)
        if abs(g_nxt) <= PLANE_HIT_TOL:
            return -(u + direction * dt), nxt
        if g_cur * g_nxt < 0.0:
            lo, hi = 0.0, dt
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                probe = _rk4_step(vel, cur, direction * mid)
                g_mid = float(probe[axis] - value)
                if abs(g_mid) <= PLANE_HIT_TOL:
                    break
                if g_cur * g_mid < 0.0:
                    hi = mid
                else:
                    lo = mid
            return -(u + direction * mid), probe
        u += direction * dt
        cur, g_cur = nxt, g_nxt
    raise DomainError("query does not reach the seed plane within the "
                      "grid horizon")


def _seed_lattice(anchor: np.ndarray, plane_axis: int, seed_values, n: int):
    axes, vals = [], []
    for axis, values in seed_values:
        axis = int(axis)
        values = np.asarray(values, dtype=float).ravel()
        if axis == plane_axis or not 0 <= axis < n:
            raise DomainError("seed axis %d is unusable for plane axis %d"
                              % (axis, plane_axis))
        if axis in axes:
            raise DomainError("seed axis %d listed twice" % axis)
        if values.size == 0 or (values.size > 1 and np.any(np.diff(values) <= 0)):
            raise DomainError("seed values on axis %d must be strictly "
                              "increasing" % axis)
        axes.append(axis)
        vals.append(values)
    shape = tuple(v.size for v in vals)
    count = int(np.prod(shape)) if shape else 1
    pts = np.tile(anchor, (count, 1))
    if vals:
        mesh = np.meshgrid(*vals, indexing="ij")
        for axis, sheet in zip(axes, mesh):
            pts[:, axis] = sheet.reshape(-1)
    return pts, tuple(axes), tuple(vals)


def transport_target_data(sys: MechanicalSystem, ratio: RatioField,
                          initial_block, initial_potential, *,
                          anchor, times, seed_values, plane_axis: int = 0,
                          dt: float = 1e-3) -> CharacteristicGrid:
    """Integrate the shaped metric and potential along the ratio flow.

    Seeds form a rectangular lattice on the coordinate hyperplane
    through `anchor` normal to `plane_axis`: `seed_values` is a list of
    (axis, sorted values) pairs spanning the lattice, the remaining
    coordinates are held at the anchor.  At each seed the actuated
    block from `initial_block(x)` is completed to a full matrix and
    `initial_potential(x)` sets the potential, then both are carried to
    every entry of `times` (which must contain 0, where the seeds sit).

    Only the single-unactuated-coordinate case is defined: the
    transport direction must be one row.
    """
    if sys.m != 1:
        raise ScopeError("transport needs exactly one unactuated coordinate; "
                         "no recipe is available for m = %d" % sys.m)
    if dt <= 0.0:
        raise DomainError("transport step dt must be positive")
    anchor = np.asarray(anchor, dtype=float)
    if anchor.shape != (sys.n,):
        raise DomainError("anchor must be a configuration of length %d" % sys.n)
    times = np.asarray(times, dtype=float).ravel()
    if times.size < 2 or np.any(np.diff(times) <= 0.0):
        raise DomainError("flow times must be strictly increasing, length >= 2")
    if (times[-1] - times[0]) / dt > STEP_LIMIT:
        raise DomainError("flow-time span needs more than %d steps at dt=%.3g"
                          % (STEP_LIMIT, dt))
    hits = np.flatnonzero(np.abs(times) <= 1e-15)
    if hits.size != 1:
        raise DomainError("flow times must contain t = 0 exactly once "
                          "(the seeds live there)")
    j0 = int(hits[0])
    times = times.copy()
    times[j0] = 0.0

    plane_value = float(anchor[plane_axis])
    seeds, axes, vals = _seed_lattice(anchor, plane_axis, seed_values, sys.n)

    min_angle = np.inf
    for p in seeds:
        row = _drive_row(ratio, p)
        angle = float(np.arcsin(min(1.0, abs(row[plane_axis])
                                    / np.linalg.norm(row))))
        min_angle = min(min_angle, angle)
    if min_angle < TRANSVERSALITY_FLOOR:
        raise TransversalityError(
            "flow meets the seed plane at %.2e rad < %.0e rad"
            % (min_angle, TRANSVERSALITY_FLOOR))

    k, n, T = seeds.shape[0], sys.n, times.size
    states = np.zeros((k, T, n))
    metric = np.zeros((k, T, n, n))
    potential = np.zeros((k, T))

    for i, p in enumerate(seeds):
        gh0 = complete_metric_rows(sys, ratio, initial_block(p), p)
        vh0 = float(initial_potential(p))
        states[i, j0], metric[i, j0], potential[i, j0] = p, gh0, vh0
        x, gh, vh = p.copy(), gh0.copy(), vh0
        for j in range(j0 + 1, T):
            x, gh, vh = _carry(sys, ratio, x, gh, vh,
                               times[j] - times[j - 1], dt)
            states[i, j], metric[i, j], potential[i, j] = x, gh, vh
        x, gh, vh = p.copy(), gh0.copy(), vh0
        for j in range(j0 - 1, -1, -1):
            x, gh, vh = _carry(sys, ratio, x, gh, vh,
                               times[j] - times[j + 1], dt)
            states[i, j], metric[i, j], potential[i, j] = x, gh, vh

    res_g, res_v = _transport_defect(sys, ratio, times, states,
                                     metric, potential)
    sym = float(np.max(np.abs(metric - metric.transpose(0, 1, 3, 2))))
    warnings = []
    if res_g > RESIDUAL_WARN:
        warnings.append("metric transport defect %.3e exceeds %.0e; "
                        "refine the flow-time grid" % (res_g, RESIDUAL_WARN))
    if res_v > POTENTIAL_RESIDUAL_WARN:
        warnings.append("potential transport defect %.3e exceeds %.0e"
                        % (res_v, POTENTIAL_RESIDUAL_WARN))
    crossing = _crossing_gap(states, vals)
    if crossing is not None:
        warnings.append(crossing)

    return CharacteristicGrid(
        seed_points=seeds, times=times, states=states, metric=metric,
        potential=potential, plane_axis=int(plane_axis),
        plane_value=plane_value, seed_axes=axes, seed_values=vals,
        field=ratio, dt=float(dt), residual_metric=res_g,
        residual_potential=res_v, symmetry_defect=sym,
        warnings=tuple(warnings))


def _carry(sys, ratio, x, gh, vh, span, dt):
    """One stored-node hop of the coupled (position, metric, potential) system.

    d(gh)/dt = d0(g)(x) - J^T gh - gh J with J the Jacobian of the
    transport row, d(vh)/dt the unactuated potential slope; both follow
    from contracting the compatibility equations with the row.
    """
    def rhs(x_, gh_, vh_):
        lam = _drive_row(ratio, x_)
        jac = ratio.derivative(x_)[0]
        dg0 = sys.metric.derivative(x_)[:, :, 0]
        return lam, dg0 - jac.T @ gh_ - gh_ @ jac, sys.potential.gradient(x_)[0]

    remaining = float(span)
    sgn = 1.0 if span >= 0.0 else -1.0
    while abs(remaining) > 1e-15:
        h = sgn * min(dt, abs(remaining))
        ax, ag, av = rhs(x, gh, vh)
        bx, bg, bv = rhs(x + 0.5 * h * ax, gh + 0.5 * h * ag, vh + 0.5 * h * av)
        cx, cg, cv = rhs(x + 0.5 * h * bx, gh + 0.5 * h * bg, vh + 0.5 * h * bv)
        dx, dg, dv = rhs(x + h * cx, gh + h * cg, vh + h * cv)
        x = x + (h / 6.0) * (ax + 2.0 * bx + 2.0 * cx + dx)
        gh = gh + (h / 6.0) * (ag + 2.0 * bg + 2.0 * cg + dg)
        vh = vh + (h / 6.0) * (av + 2.0 * bv + 2.0 * cv + dv)
        remaining -= h
    return x, gh, vh


def _time_slope(series, times, j):
    """FD time derivative of stored payload at interior node j.

    Five-point stencil where four uniformly spaced neighbors exist (the
    three-point error is quadratic in the node spacing and can swamp a
    1e-5 audit on steep data), otherwise plain centered difference.
    """
    if 2 <= j <= times.size - 3:
        h = times[j + 1] - times[j]
        gaps = np.diff(times[j - 2:j + 3])
        if np.max(np.abs(gaps - h)) <= 1e-9 * max(abs(h), 1e-300):
            return (-series[j + 2] + 8.0 * series[j + 1]
                    - 8.0 * series[j - 1] + series[j - 2]) / (12.0 * h)
    return (series[j + 1] - series[j - 1]) / (times[j + 1] - times[j - 1])


def _transport_defect(sys, ratio, times, states, metric, potential):
    """Worst transport-equation residual at interior nodes.

    Along a characteristic the directional derivative in the equations
    is the plain time derivative, so differencing the stored payload
    against the local source terms measures how well the carried data
    satisfies the equations themselves, independent of the integrator.
    """
    worst_g, worst_v = 0.0, 0.0
    lo, hi = (2, times.size - 2) if times.size >= 5 else (1, times.size - 1)
    for i in range(states.shape[0]):
        for j in range(lo, hi):
            x = states[i, j]
            jac = ratio.derivative(x)[0]
            dg0 = sys.metric.derivative(x)[:, :, 0]
            gdot = _time_slope(metric[i], times, j)
            vdot = _time_slope(potential[i], times, j)
            lhs_g = gdot + jac.T @ metric[i, j] + metric[i, j] @ jac - dg0
            lhs_v = vdot - sys.potential.gradient(x)[0]
            worst_g = max(worst_g, float(np.max(np.abs(lhs_g))))
            worst_v = max(worst_v, abs(float(lhs_v)))
    return worst_g, worst_v


def _crossing_gap(states, seed_values):
    """Warning text if two characteristics pass closer than the lattice can resolve."""
    if states.shape[0] < 2:
        return None
    spacings = [np.min(np.diff(v)) for v in seed_values if v.size > 1]
    if not spacings:
        return None
    resolution = 0.5 * min(spacings)
    for j in range(states.shape[1]):
        sheet = states[:, j, :]
        diff = sheet[:, None, :] - sheet[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=-1))
        dist[np.diag_indices_from(dist)] = np.inf
        gap = float(dist.min())
        if gap < resolution:
            return ("characteristics approach within %.3e (< %.3e lattice "
                    "resolution) near stored node %d; interpolation is "
                    "unreliable there" % (gap, resolution, j))
    return None


@dataclass(frozen=True)
class RowIdentityReport:
    """Propagation audit of g_unactuated = ratio @ ghat over a grid."""

    max_defect: float
    seed_defect: float
    worst_seed: int
    worst_time: float
    tol: float
    passed: bool

    def __str__(self):
        state = "pass" if self.passed else "FAIL"
        return ("row identity %s: max defect %.3e (tol %.0e, seed rows "
                "%.3e, worst at seed %d, t=%.4g)"
                % (state, self.max_defect, self.tol, self.seed_defect,
                   self.worst_seed, self.worst_time))


def row_identity_check(sys: MechanicalSystem, ratio: RatioField,
                       grid: CharacteristicGrid,
                       tol: float = 1e-7) -> RowIdentityReport:
    """Evaluate the row identity at every grid node; verdict, not exception.

    The identity holds everywhere once it holds on the seed plane, so
    growth beyond integration error flags payload inconsistent with
    the plant and ratio.
    """
    j0 = grid.time_index(0.0)
    worst, seed_worst = -1.0, 0.0
    w_seed, w_time = 0, 0.0
    for i in range(grid.seed_count):
        for j in range(grid.times.size):
            x = grid.states[i, j]
            lam = ratio.value(x)
            g = sys.metric.value(x)
            defect = float(np.max(np.abs(g[:sys.m, :] - lam @ grid.metric[i, j])))
            if j == j0:
                seed_worst = max(seed_worst, defect)
            if defect > worst:
                worst, w_seed, w_time = defect, i, float(grid.times[j])
    return RowIdentityReport(max_defect=worst, seed_defect=seed_worst,
                             worst_seed=w_seed, worst_time=w_time,
                             tol=float(tol), passed=bool(worst <= tol))


def grid_csv(grid: CharacteristicGrid, path=None) -> str:
    """Render the grid as CSV; deterministic, 17 significant digits.

    Columns: seed, t, the configuration, the upper triangle of the
    shaped kinetic matrix row-major, the shaped potential.
    """
    n = grid.n
    cols = ["seed", "t"] + ["x%d" % i for i in range(n)]
    cols += ["metric%d%d" % (i, j) for i in range(n) for j in range(i, n)]
    cols.append("potential")
    lines = [",".join(cols)]
    for i in range(grid.seed_count):
        for j in range(grid.times.size):
            vals = [float(grid.times[j])]
            vals += [float(v) for v in grid.states[i, j]]
            gh = grid.metric[i, j]
            vals += [float(gh[a, b]) for a in range(n) for b in range(a, n)]
            vals.append(float(grid.potential[i, j]))
            lines.append(str(i) + "," + ",".join("%.17g" % v for v in vals))
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text
