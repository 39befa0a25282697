"""Worked fixtures: plants with known matching solutions used across the tests."""
from .double_pendulum import chained_pendulums, terminal_family
from .pendulum import (PendulumParams, pendulum_cart, pendulum_fixture,
                       pendulum_ratio_family, upright_stability_check)
from .rigidity import (JetReport, basic_jet_residual, jet_dimension,
                       rigidity_probe, transport_coefficients)
from .rollercoaster import (TrackCurve, bead_on_track, curvature_integral,
                            helix_track, incline_chart, incline_ratio_family,
                            planar_ratio_family, validate_curve,
                            vertical_circle_track)
from .seesaw import seesaw_cart, seesaw_ratio_family, unit_overlap_ratio

__all__ = [
    "PendulumParams", "pendulum_cart", "pendulum_fixture",
    "pendulum_ratio_family", "upright_stability_check",
    "seesaw_cart", "seesaw_ratio_family", "unit_overlap_ratio",
    "TrackCurve", "bead_on_track", "curvature_integral", "helix_track",
    "incline_chart", "incline_ratio_family", "planar_ratio_family",
    "validate_curve", "vertical_circle_track",
    "chained_pendulums", "terminal_family",
    "JetReport", "basic_jet_residual", "jet_dimension", "rigidity_probe",
    "transport_coefficients",
]
