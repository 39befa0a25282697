"""Flow transport of the shaped blocks: node accuracy, guards, interpolation."""
import dataclasses

import numpy as np
import pytest

from matchctl import (RatioField, State, complete_metric_rows, flow_map,
                      row_identity_check, scaling_solution,
                      transport_target_data)
from matchctl.characteristics import CharacteristicGrid, grid_csv
from matchctl.errors import (AsymmetryError, DomainError, ScopeError,
                             SingularFieldError, SingularLocusError,
                             TransversalityError)
from matchctl.systems import (PendulumParams, chained_pendulums,
                              pendulum_fixture)

rng = np.random.default_rng(12)

SYS, RATIO, TARGET = pendulum_fixture(PendulumParams().resolved())
P = PendulumParams().resolved()


def _closed_flow(x0, t):
    """Integral curve of the fixture ratio: tilt moves linearly, the base
    coordinate follows the sine primitive, the arm stays put."""
    t0, m0 = P.tilt_ratio, P.sway_ratio
    tilt = x0[0] + t0 * t
    base = x0[1] + (m0 / t0) * (np.sin(tilt) - np.sin(x0[0]))
    return np.array([tilt, base, x0[2]])


def test_flow_map_matches_the_closed_form():
    for _ in range(5):
        x0 = rng.uniform(-0.5, 0.5, 3)
        for t in (-0.8, 0.35, 1.0):
            got = flow_map(RATIO, x0, t, dt=1e-3)
            assert np.allclose(got, _closed_flow(x0, t), atol=5e-11)
    # flowing forward then back returns to the start
    x0 = np.array([0.2, -0.1, 0.4])
    there = flow_map(RATIO, x0, 0.7)
    back = flow_map(RATIO, there, -0.7)
    assert np.allclose(back, x0, atol=1e-12)


def test_flow_map_step_validation():
    x0 = np.zeros(3)
    with pytest.raises(DomainError):
        flow_map(RATIO, x0, 1.0, dt=0.0)
    with pytest.raises(DomainError):
        flow_map(RATIO, x0, 1e9, dt=1e-6)  # would need too many steps


def test_flow_map_refuses_a_dying_field():
    decaying = RatioField(lambda x: np.array([[0.0, -x[1], 0.0]]))
    with pytest.raises(SingularFieldError):
        flow_map(decaying, np.array([0.0, 0.2, 0.0]), 40.0, dt=1e-2)


def test_complete_metric_rows_reproduces_the_target():
    for _ in range(20):
        x = rng.uniform(-1, 1, 3)
        gh_full = TARGET.metric.value(x)
        got = complete_metric_rows(SYS, RATIO, gh_full[1:, 1:], x)
        assert np.allclose(got, gh_full, atol=1e-12)
        assert np.allclose(got, got.T, atol=0)


def test_complete_metric_rows_rejects_bad_blocks():
    x = np.array([0.3, 0.1, -0.2])
    with pytest.raises(AsymmetryError):
        complete_metric_rows(SYS, RATIO, np.array([[2.0, 0.3], [0.2, 1.0]]), x)
    with pytest.raises(DomainError):
        complete_metric_rows(SYS, RATIO, np.eye(3), x)
    sideways = RatioField.constant(np.array([[0.0, 1.0, 0.0]]))
    with pytest.raises(SingularLocusError):
        complete_metric_rows(SYS, sideways, np.eye(2), x)


def _fixture_grid(times, seeds_per_axis=3, dt=2e-3, span=0.5):
    vals = np.linspace(-span, span, seeds_per_axis)
    return transport_target_data(
        SYS, RATIO,
        initial_block=lambda x: TARGET.metric.value(x)[1:, 1:],
        initial_potential=lambda x: float(TARGET.potential(x)),
        anchor=np.zeros(3), times=times,
        seed_values=[(1, vals), (2, vals)], plane_axis=0, dt=dt)


def test_transport_reproduces_the_closed_form_at_nodes():
    grid = _fixture_grid(np.linspace(-1.0, 1.0, 201))
    assert grid.warnings == ()
    assert grid.symmetry_defect == 0.0
    # the self-audit differences the stored payload in time, so it carries
    # the node spacing squared; the closed-form comparison below is exact
    assert grid.residual_metric <= 1e-6
    assert grid.residual_potential <= 1e-8
    worst_g = worst_v = 0.0
    for k in range(grid.seed_count):
        for j in range(len(grid.times)):
            x = grid.states[k, j]
            worst_g = max(worst_g, np.max(np.abs(
                grid.metric[k, j] - TARGET.metric.value(x))))
            worst_v = max(worst_v, abs(
                grid.potential[k, j] - float(TARGET.potential(x))))
    assert worst_g <= 1e-10
    assert worst_v <= 1e-10


def test_row_identity_verdict_and_corruption():
    grid = _fixture_grid(np.linspace(-0.5, 0.5, 21))
    rep = row_identity_check(SYS, RATIO, grid, tol=1e-7)
    assert rep.passed and rep.max_defect <= 1e-10
    assert "pass" in str(rep)

    # pushing the payload off the solution surface away from the seed plane
    # must trip the verdict while the seed rows stay clean
    bumped = grid.metric.copy()
    mask = np.abs(grid.times) > 1e-12
    bumped[:, mask, 0, 0] += 0.01
    corrupted = dataclasses.replace(grid, metric=bumped)
    rep_bad = row_identity_check(SYS, RATIO, corrupted, tol=1e-7)
    assert not rep_bad.passed
    assert rep_bad.max_defect > 1e-3
    assert rep_bad.seed_defect <= 1e-10
    assert "FAIL" in str(rep_bad)


def test_transport_step_refinement_is_fourth_order():
    times = np.linspace(-0.25, 0.25, 3)
    coarse = _fixture_grid(times, dt=5e-2)
    fine = _fixture_grid(times, dt=2.5e-2)
    ref = _fixture_grid(times, dt=1.25e-2)
    e1 = np.max(np.abs(coarse.metric - ref.metric))
    e2 = np.max(np.abs(fine.metric - ref.metric))
    assert e1 / e2 > 12.0


def test_transport_requires_scope_and_a_zero_time():
    dp = chained_pendulums(np.array([[2.0, 1.0, 0.5], [1.0, 2.0, 1.4],
                                     [0.5, 1.4, 3.0]]))
    dp_ratio, _ = scaling_solution(dp, 1.0)
    with pytest.raises(ScopeError):
        transport_target_data(dp, dp_ratio, lambda x: np.eye(1),
                              lambda x: 0.0, anchor=np.zeros(3),
                              times=[0.0, 0.1], seed_values=[(2, [0.0])])
    with pytest.raises(DomainError):
        _fixture_grid(np.array([0.1, 0.2, 0.3]))
    with pytest.raises(DomainError):
        _fixture_grid(np.array([-0.1, 0.1, 0.05]))  # not increasing


def test_seed_lattice_validation():
    good = np.linspace(-0.2, 0.2, 3)
    with pytest.raises(DomainError):
        transport_target_data(
            SYS, RATIO, lambda x: np.eye(2), lambda x: 0.0,
            anchor=np.zeros(3), times=[-0.1, 0.0, 0.1],
            seed_values=[(0, good), (2, good)])  # axis equals the plane axis
    with pytest.raises(DomainError):
        transport_target_data(
            SYS, RATIO, lambda x: np.eye(2), lambda x: 0.0,
            anchor=np.zeros(3), times=[-0.1, 0.0, 0.1],
            seed_values=[(1, good), (1, good)])
    with pytest.raises(DomainError):
        transport_target_data(
            SYS, RATIO, lambda x: np.eye(2), lambda x: 0.0,
            anchor=np.zeros(3), times=[-0.1, 0.0, 0.1],
            seed_values=[(1, good[::-1]), (2, good)])


def test_transversality_guard():
    # the third ratio component vanishes identically, so a lattice seeded
    # across that plane never leaves it
    with pytest.raises(TransversalityError):
        transport_target_data(
            SYS, RATIO,
            initial_block=lambda x: TARGET.metric.value(x)[1:, 1:],
            initial_potential=lambda x: float(TARGET.potential(x)),
            anchor=np.zeros(3), times=[-0.1, 0.0, 0.1],
            seed_values=[(0, np.linspace(-0.2, 0.2, 3)),
                         (1, np.linspace(-0.2, 0.2, 3))],
            plane_axis=2)


def test_grid_properties_and_time_index():
    grid = _fixture_grid(np.linspace(-0.5, 0.5, 21))
    assert grid.n == 3
    assert grid.seed_count == 9
    assert grid.seed_shape == (3, 3)
    assert grid.time_index(0.0) == 10
    with pytest.raises(DomainError):
        grid.time_index(0.123)


def test_interpolation_at_nodes_and_off_grid_convergence():
    """Queries are pulled back to the seed plane and combined multilinearly,
    so each lattice axis contributes its spacing squared.  On this fixture
    the metric payload varies only with the flow time while the potential
    varies across the seed plane, so the two refinements are split."""
    coarse = _fixture_grid(np.linspace(-0.5, 0.5, 11), seeds_per_axis=5,
                           dt=5e-3)
    fine_t = _fixture_grid(np.linspace(-0.5, 0.5, 21), seeds_per_axis=5,
                           dt=5e-3)
    fine_s = _fixture_grid(np.linspace(-0.5, 0.5, 21), seeds_per_axis=9,
                           dt=5e-3)

    # node queries reproduce stored payload
    k, j = 7, 3
    node = coarse.states[k, j]
    gh, vh = coarse.interpolate(node)
    assert np.max(np.abs(gh - coarse.metric[k, j])) <= 1e-9
    assert abs(vh - coarse.potential[k, j]) <= 1e-9

    def worst_err(grid, queries):
        wg = wv = 0.0
        for q in queries:
            gh, vh = grid.interpolate(q)
            wg = max(wg, np.max(np.abs(gh - TARGET.metric.value(q))))
            wv = max(wv, abs(vh - float(TARGET.potential(q))))
        return wg, wv

    queries = []
    qrng = np.random.default_rng(3)
    for _ in range(12):
        u, v = qrng.uniform(-0.45, 0.45, 2)
        t = qrng.uniform(-0.45, 0.45)
        queries.append(flow_map(RATIO, np.array([0.0, u, v]), t))
    g_coarse, _ = worst_err(coarse, queries)
    g_fine, v_seed5 = worst_err(fine_t, queries)
    _, v_seed9 = worst_err(fine_s, queries)
    assert g_coarse < 0.2
    assert g_coarse / max(g_fine, 1e-15) > 2.5   # halved time spacing
    assert v_seed5 / max(v_seed9, 1e-15) > 2.5   # halved seed spacing

    with pytest.raises(DomainError):
        coarse.interpolate(np.array([0.0, 2.0, 0.0]))  # beyond the lattice
    far = flow_map(RATIO, np.array([0.0, 0.1, 0.1]), 0.9)
    with pytest.raises(DomainError):
        coarse.interpolate(far)  # beyond the stored flow-time range


def test_transport_reproduces_a_scaling_family():
    ratio_s, target_s = scaling_solution(SYS, 2.0)
    vals = np.linspace(-0.3, 0.3, 3)
    grid = transport_target_data(
        SYS, ratio_s,
        initial_block=lambda x: target_s.metric.value(x)[1:, 1:],
        initial_potential=lambda x: float(target_s.potential(x)),
        anchor=np.zeros(3), times=np.linspace(-0.3, 0.3, 7),
        seed_values=[(1, vals), (2, vals)], dt=5e-3)
    worst = max(np.max(np.abs(grid.metric[k, j]
                              - target_s.metric.value(grid.states[k, j])))
                for k in range(grid.seed_count)
                for j in range(len(grid.times)))
    assert worst <= 1e-9


def test_grid_csv_layout_and_determinism(tmp_path):
    grid = _fixture_grid(np.linspace(-0.2, 0.2, 5))
    text = grid_csv(grid)
    lines = text.splitlines()
    header = lines[0].split(",")
    assert header[:2] == ["seed", "t"]
    assert header[2:5] == ["x0", "x1", "x2"]
    assert "potential" in header[-1]
    assert len(header) == 2 + 3 + 6 + 1  # upper-triangle metric payload
    assert len(lines) == 1 + grid.seed_count * len(grid.times)
    assert text.endswith("\n")
    assert grid_csv(grid) == text

    out = tmp_path / "grid.csv"
    grid_csv(grid, path=str(out))
    assert out.read_text() == text
