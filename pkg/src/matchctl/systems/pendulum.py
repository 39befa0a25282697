"""Tilting-body fixture: an unactuated tilt angle over a fully driven base.

Coordinates: x[0] is the tilt from upright, x[1] and x[2] the two base
axes.  The rescaled kinetic matrix couples tilt rate to base motion
through a single constant a; the potential climbs the second base axis
with slope b and drops with the cosine of the tilt.  Only the base is
actuated, so the tilt row of every candidate target must satisfy the
matching equations.

The module ships the one-parameter ratio family this model admits in
closed form, the full shaped target built on the invariant chart of that
family, and the sufficient-condition checker for asymptotic stability of
the upright equilibrium.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from ..errors import DomainError, SingularLocusError
from ..fields import DissipationField, MatrixField, ScalarField
from ..geometry import Box, MechanicalSystem
from ..matching import RatioField
from ..shapes import Profile, constant_profile, quadratic_profile
from ..targets import TargetSystem

SIN_GUARD = 1e-6


def pendulum_cart(a: float = 0.5, b: float = 0.5, domain: Box | None = None,
                  name: str = "pendulum-cart") -> MechanicalSystem:
    """Plant with metric [[1, -a cos, -a sin], [., 1, 0], [., 0, 1]].

    Positive definite iff a^2 < 1; a = 1 is the degenerate massless-base
    limit, still constructible for target-side work but not integrable as
    a plant.
    """
    a, b = float(a), float(b)
    if a <= 0:
        raise DomainError("coupling constant a must be positive")

    def gval(x):
        c, s = np.cos(x[0]), np.sin(x[0])
        return np.array([[1.0, -a * c, -a * s],
                         [-a * c, 1.0, 0.0],
                         [-a * s, 0.0, 1.0]])

    def gder(x):
        c, s = np.cos(x[0]), np.sin(x[0])
        d = np.zeros((3, 3, 3))
        d[0, 1, 0] = d[1, 0, 0] = a * s
        d[0, 2, 0] = d[2, 0, 0] = -a * c
        return d

    if domain is None:
        domain = Box(lo=(-0.4, -1.0, -1.0), hi=(0.4, 1.0, 1.0))
    return MechanicalSystem(
        n=3, m=1,
        metric=MatrixField(gval, gder),
        potential=ScalarField(lambda x: b * x[2] + np.cos(x[0]),
                              lambda x: np.array([-np.sin(x[0]), 0.0, b])),
        dissipation=DissipationField.zero(3),
        params={"a": a, "b": b},
        domain=domain,
        name=name)


@dataclass(frozen=True)
class PendulumParams:
    """Model constants plus the shaping choices for the closed-form target.

    tilt_ratio is the constant tilt entry of the ratio row; sway_ratio
    weights the cosine coupling into the first base axis.  The three block
    profiles and the potential well live on the invariant chart
    (x1 - (sway/tilt) sin x0, x2); the damping gain is a function of x.
    Unset shaping entries resolve to the reference choices.
    """

    a: float = 0.5
    b: float = 0.5
    tilt_ratio: float = -1.0
    sway_ratio: float = -3.0
    block22: Profile | None = None
    block23: Profile | None = None
    block33: Profile | None = None
    well: Profile | None = None
    gain: Profile | None = None
    domain: Box | None = None

    def resolved(self) -> "PendulumParams":
        if self.tilt_ratio == 0.0:
            raise DomainError("tilt_ratio must be nonzero")
        fill = {}
        if self.block22 is None:
            fill["block22"] = constant_profile(2.0)
        if self.block23 is None:
            fill["block23"] = constant_profile(0.0)
        if self.block33 is None:
            fill["block33"] = constant_profile(1.0)
        if self.well is None:
            # offset pins the shaped potential to zero at the origin
            fill["well"] = quadratic_profile(np.eye(2),
                                             offset=-1.0 / self.tilt_ratio)
        if self.gain is None:
            fill["gain"] = constant_profile(1.0, dim=3)
        if self.domain is None:
            fill["domain"] = Box(lo=(-0.4, -1.0, -1.0), hi=(0.4, 1.0, 1.0))
        return replace(self, **fill) if fill else self

    @classmethod
    def stable_reference(cls) -> "PendulumParams":
        """The audited parameter set that passes every stability condition.

        b = 0 so the upright rest point needs no standing force and the
        closed loop has a genuine zero-control equilibrium there.
        """
        return cls(a=1.0, b=0.0, tilt_ratio=-1.0, sway_ratio=-2.0,
                   block22=constant_profile(2.0),
                   block23=constant_profile(0.0),
                   block33=constant_profile(1.0),
                   well=quadratic_profile(np.eye(2), offset=1.0),
                   gain=constant_profile(1.0, dim=3))


def _chart(p: PendulumParams, x):
    """Invariant chart (u, v) of the ratio flow and its x-gradient rows."""
    slope = p.sway_ratio / p.tilt_ratio
    c = np.cos(x[0])
    u = x[1] - slope * np.sin(x[0])
    v = x[2]
    du = np.array([-slope * c, 1.0, 0.0])
    dv = np.array([0.0, 0.0, 1.0])
    return np.array([u, v]), du, dv


def pendulum_fixture(p: PendulumParams
                     ) -> tuple[MechanicalSystem, RatioField, TargetSystem]:
    """Closed-form matching solution for the tilting-body plant.

    Ratio row (tilt_ratio, sway_ratio cos x0, 0); target kinetic matrix
    reconstructed from the free block on the invariant chart through the
    unactuated-row identity g_0i = r^j G_ji; shaped potential
    (1/tilt_ratio) cos x0 + well; dissipation a rank-one positive form
    annihilated by the ratio row.
    """
    p = p.resolved()
    a, t0, m0 = p.a, p.tilt_ratio, p.sway_ratio
    sys = pendulum_cart(p.a, p.b, domain=p.domain)
    slope = m0 / t0          # chart slope, also the dissipation direction weight
    ca = a / t0

    def rval(x):
        return np.array([[t0, m0 * np.cos(x[0]), 0.0]])

    def rder(x):
        d = np.zeros((1, 3, 3))
        d[0, 1, 0] = -m0 * np.sin(x[0])
        return d

    ratio = RatioField(rval, rder)

    def tmetric_val(x):
        c, s = np.cos(x[0]), np.sin(x[0])
        y, _, _ = _chart(p, x)
        f22, f23, f33 = p.block22(y), p.block23(y), p.block33(y)
        g = np.empty((3, 3))
        g[1, 1], g[1, 2], g[2, 2] = f22, f23, f33
        g[0, 1] = -ca * c - slope * c * f22
        g[0, 2] = -ca * s - slope * c * f23
        g[0, 0] = 1.0 / t0 + ca * slope * c * c + slope * slope * c * c * f22
        g[1, 0], g[2, 0], g[2, 1] = g[0, 1], g[0, 2], g[1, 2]
        return g

    def tmetric_der(x):
        c, s = np.cos(x[0]), np.sin(x[0])
        y, du, dv = _chart(p, x)
        f22, f23 = p.block22(y), p.block23(y)
        g22u, g22v = p.block22.gradient(y)
        g23u, g23v = p.block23.gradient(y)
        g33u, g33v = p.block33.gradient(y)
        d22 = g22u * du + g22v * dv
        d23 = g23u * du + g23v * dv
        d33 = g33u * du + g33v * dv
        d = np.zeros((3, 3, 3))
        d[1, 1] = d22
        d[1, 2] = d23
        d[2, 2] = d33
        d[0, 1] = -slope * c * d22
        d[0, 1, 0] += ca * s + slope * s * f22
        d[0, 2] = -slope * c * d23
        d[0, 2, 0] += -ca * c + slope * s * f23
        d[0, 0] = slope * slope * c * c * d22
        d[0, 0, 0] += -2.0 * ca * slope * c * s - 2.0 * slope * slope * c * s * f22
        d[1, 0], d[2, 0], d[2, 1] = d[0, 1], d[0, 2], d[1, 2]
        return d

    def tpot_val(x):
        y, _, _ = _chart(p, x)
        return np.cos(x[0]) / t0 + p.well(y)

    def tpot_grad(x):
        y, du, dv = _chart(p, x)
        wu, wv = p.well.gradient(y)
        out = wu * du + wv * dv
        out[0] += -np.sin(x[0]) / t0
        return out

    def drag_direction(x):
        return np.array([-slope * np.cos(x[0]), 1.0, 1.0])

    def tdis_val(x, v):
        wvec = drag_direction(x)
        return -t0 * p.gain(x) * wvec * (wvec @ v)

    def tdis_jac_v(x, v):
        wvec = drag_direction(x)
        return -t0 * p.gain(x) * np.outer(wvec, wvec)

    def tdis_jac_x(x, v):
        wvec = drag_direction(x)
        dw0 = np.array([slope * np.sin(x[0]), 0.0, 0.0])  # d wvec / d x0
        gr = p.gain.gradient(x)
        proj = wvec @ v
        out = -t0 * np.outer(wvec, gr) * proj
        out[:, 0] += -t0 * p.gain(x) * (dw0 * proj + wvec * (dw0 @ v))
        return out

    target = TargetSystem(
        metric=MatrixField(tmetric_val, tmetric_der),
        potential=ScalarField(tpot_val, tpot_grad),
        dissipation=DissipationField(tdis_val, tdis_jac_x, tdis_jac_v),
        name="pendulum-cart-shaped")
    return sys, ratio, target


def pendulum_ratio_family(p: PendulumParams, overlap: Callable,
                          overlap_rate: Callable,
                          free3: Callable | None = None) -> RatioField:
    """General ratio family from scalar overlap data depending on the tilt.

    overlap and overlap_rate map the tilt angle to the overlap value and
    its derivative; free3 (a function of x, default zero) is the free third
    component.  The family divides by sin(tilt): evaluation inside the
    guard band raises, so prefer pendulum_fixture's closed form, whose
    specific overlap choice cancels the singularity.
    """
    p = p.resolved()
    a = p.a

    def rval(x):
        c, s = np.cos(x[0]), np.sin(x[0])
        if abs(s) < SIN_GUARD:
            raise SingularLocusError(
                f"ratio family is singular at tilt {x[0]!r} (|sin| < {SIN_GUARD})")
        f3 = float(free3(x)) if free3 is not None else 0.0
        nv, npr = float(overlap(x[0])), float(overlap_rate(x[0]))
        l2 = npr / (2.0 * a * s) + (c / s) * f3
        l1 = nv + 0.5 * (c / s) * npr + a * f3 / s
        return np.array([[l1, l2, f3]])

    return RatioField(rval)


@dataclass(frozen=True)
class StabilityCondition:
    name: str
    kind: str        # "positive" | "negative" | "equal"
    value: float
    reference: float
    ok: bool

    @property
    def margin(self) -> float:
        if self.kind == "positive":
            return self.value
        if self.kind == "negative":
            return -self.value
        return -abs(self.value - self.reference)


@dataclass(frozen=True)
class StabilityVerdict:
    conditions: tuple
    passed: bool

    def condition(self, name: str) -> StabilityCondition:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)


EQ_TOL = 1e-12


def upright_stability_check(p: PendulumParams) -> StabilityVerdict:
    """Sufficient conditions for the upright rest point to attract locally.

    Sign conditions on the shaping data at the origin plus two coupled
    inequalities on (a, tilt_ratio, sway_ratio, block22(0)).  All margins
    are reported; the verdict passes only if every condition holds.
    """
    p = p.resolved()
    y0 = np.zeros(2)
    b22 = p.block22(y0)
    wh = p.well.hessian(y0)
    a, t0, m0 = p.a, p.tilt_ratio, p.sway_ratio

    def cond(name, kind, value, reference=0.0):
        if kind == "positive":
            ok = value > 0.0
        elif kind == "negative":
            ok = value < 0.0
        else:
            ok = abs(value - reference) <= EQ_TOL
        return StabilityCondition(name, kind, float(value), float(reference), ok)

    conditions = (
        cond("block22_origin_positive", "positive", b22),
        cond("block23_origin_zero", "equal", p.block23(y0)),
        cond("block33_origin_unit", "equal", p.block33(y0), 1.0),
        cond("well_curv_first_positive", "positive", wh[0, 0]),
        cond("well_curv_cross_zero", "equal", wh[0, 1]),
        cond("well_curv_second_positive", "positive", wh[1, 1]),
        cond("gain_origin_positive", "positive", p.gain(np.zeros(3))),
        cond("tilt_ratio_negative", "negative", t0),
        cond("shaped_inertia_margin_positive", "positive",
             b22 * m0 * m0 + a * m0 + t0),
        cond("coupling_margin_negative", "negative",
             b22 * (a * m0 - t0) + a * a),
    )
    return StabilityVerdict(conditions=conditions,
                            passed=all(c.ok for c in conditions))
