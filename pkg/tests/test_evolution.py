import csv
import io
import warnings

import numpy as np
import pytest

from qgraph_nls.boundary_system import build_delta_prime_loop
from qgraph_nls.evolution import (EvolutionConfig, Propagator, _h1_inner, _kinetic_matrix,
                                  conserved_quantities, load_state, operator_for,
                                  orbit_distance, orbital_experiment, refine_profile,
                                  save_state, step, symmetric_instability_direction,
                                  track_standing_wave)
from qgraph_nls.graph_model import GraphFunction, zeros
from qgraph_nls.spectral import default_grid
from qgraph_nls.standing_waves import loop_only_wave, mass, solve_shift

EXT = build_delta_prime_loop(-1.0, 2)


@pytest.fixture(scope="module")
def wave():
    return solve_shift(4.2, 2, -1.0, 2.0)


def _cfg(wave, dt, t_end, n0=401, n1=None, **kw):
    graph, n0, n1 = default_grid(wave, n0, n1)
    return EvolutionConfig(dt, t_end, EXT, n0, n1, graph.R, **kw), graph


def test_config_validation_and_dt_warning(wave):
    with pytest.raises(ValueError):
        EvolutionConfig(-1.0, 1.0, EXT, 101, 101, 10.0)
    with pytest.raises(ValueError):
        EvolutionConfig(1e-3, 1.0, EXT, 101, 101, 10.0, scheme="RK4")
    cfg, _ = _cfg(wave, 1e-2, 1.0)
    with pytest.warns(RuntimeWarning, match="exceeds"):
        cfg.check_dt(wave.omega)
    cfg, _ = _cfg(wave, 1e-3, 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        cfg.check_dt(wave.omega)
    assert cfg.steps == 1000


def test_zero_data_stays_zero(wave):
    cfg, graph = _cfg(wave, 1e-3, 1e-2)
    u = zeros(graph, cfg.n0, cfg.n1)
    for _ in range(5):
        u = step(u, cfg)
    assert np.max(np.abs(u.to_vector())) == 0


def test_phase_equivariance(wave):
    cfg, graph = _cfg(wave, 1e-3, 1e-2)
    op = operator_for(cfg, graph)
    prop = Propagator(op, cfg.dt)
    rng = np.random.default_rng(0)
    u = rng.normal(size=op.size) + 1j * rng.normal(size=op.size)
    a = np.exp(0.83j)
    assert np.max(np.abs(prop.step(a * u) - a * prop.step(u))) <= 1e-12 * np.max(np.abs(u))


def test_linear_step_keeps_sectors_separate(wave):
    cfg, graph = _cfg(wave, 1e-3, 1e-2)
    op = operator_for(cfg, graph)
    prop = Propagator(op, cfg.dt)
    u = op.from_graph_function(wave.sample(graph, cfg.n0, cfg.n1))
    rays = op.dof_map[:, 0] > 0
    u[rays] = 0
    for _ in range(10):
        u = prop.step(u, nonlinear=False)
    assert np.max(np.abs(u[rays])) == 0


def test_discrete_conserved_quantities_match_dof_form(wave):
    cfg, graph = _cfg(wave, 1e-3, 1e-2)
    op = operator_for(cfg, graph)
    theta = refine_profile(op, wave)
    c = conserved_quantities(op.to_graph_function(theta), EXT)
    m = float(theta @ (op.mass * theta))
    e = float(0.5 * theta @ (op.matrix @ theta) - 0.25 * np.sum(op.mass * theta**4))
    assert c.mass == pytest.approx(m, rel=1e-12)
    assert c.energy == pytest.approx(e, rel=1e-10)
    # and close to the closed-form mass of the continuous profile
    assert c.mass == pytest.approx(mass(wave), rel=1e-4)


def test_refined_profile_is_stationary(wave):
    cfg, graph = _cfg(wave, 1e-3, 1e-2)
    op = operator_for(cfg, graph)
    theta = refine_profile(op, wave)
    F = op.matrix @ theta + wave.omega * op.mass * theta - op.mass * theta**3
    assert np.max(np.abs(F / op.mass)) <= 1e-9 * wave.omega
    sampled = op.from_graph_function(wave.sample(graph, cfg.n0, cfg.n1)).real
    assert np.max(np.abs(theta - sampled)) <= 1e-2 * np.max(sampled)


def test_mass_and_energy_drift(wave):
    cfg, _ = _cfg(wave, 1e-3, 0.5)
    r = track_standing_wave(wave, cfg)
    assert r.mass_drift <= 1e-10
    assert r.energy_drift <= 1e-6


def test_tracking_error_second_order(wave):
    errs = []
    for dt in (2e-3, 1e-3):
        cfg, _ = _cfg(wave, dt, 0.4, monitor_every=50)
        errs.append(track_standing_wave(wave, cfg).error_l2)
    assert 3.5 <= errs[0] / errs[1] <= 4.5


def test_membership_residual_fine_grid(wave):
    # the residual is O(h^2) in the coarser of the two spacings, so match them
    graph = wave.default_graph()
    n1 = int(round(graph.R / (2 * graph.L / 1600))) + 1
    cfg = EvolutionConfig(1e-3, 0.05, EXT, 1601, n1, graph.R, monitor_every=10)
    r = track_standing_wave(wave, cfg, membership_every=1)
    assert 0 < r.membership_max <= 1e-5


def test_initial_relative_distance_is_epsilon(wave):
    cfg, _ = _cfg(wave, 1e-3, 2e-3, monitor_every=1)
    for eps in (1e-3, 1e-2):
        res = orbital_experiment(wave, "generic", cfg, eps, seed=3)
        assert res.series[0].d_rel == pytest.approx(eps, rel=1e-8)
        assert res.series[0].t == 0.0


def test_symmetric_direction_needs_even_N():
    w = solve_shift(10.0, 1, -0.8, 2.0)
    with pytest.raises(ValueError):
        symmetric_instability_direction(w, w.default_graph(), 101, 101)


def test_symmetric_direction_is_domain_compatible():
    w = solve_shift(64.0, 2, -1.0, 2.0)
    g = w.default_graph()
    p = symmetric_instability_direction(w, g, 201, 4001)
    h = p.h_ray
    a, b = p.ray_values
    assert np.allclose(a, -b)
    raw = symmetric_instability_direction(w, g, 201, 4001, domain_compatible=False)
    r = raw.ray_values[0]
    assert abs(r[0] - a[0]) <= 1e-12
    # one-sided vertex slope: order Psi''(L) before the correction, O(h^2) after
    slope = lambda v: (-3 * v[0] + 4 * v[1] - v[2]) / (2 * h)
    assert abs(slope(r)) > 100
    assert abs(slope(a)) <= 1e-3 * abs(slope(r))


def test_golden_section_matches_analytic_phase(wave):
    cfg, graph = _cfg(wave, 1e-3, 1e-2)
    op = operator_for(cfg, graph)
    K0 = _kinetic_matrix(op)
    theta = refine_profile(op, wave).astype(complex)
    rng = np.random.default_rng(5)
    for phi0 in (0.7, -2.9, 3.1):
        u = np.exp(1j * phi0) * theta + 0.05 * (rng.normal(size=op.size)
                                                + 1j * rng.normal(size=op.size))
        phi, d = orbit_distance(op, K0, u, theta)
        exact = np.angle(_h1_inner(op, K0, u, theta))
        # a bracketing minimiser resolves the phase only to ~sqrt(machine eps)
        assert abs(np.angle(np.exp(1j * (phi - exact)))) <= 1e-6
        diff = u - np.exp(1j * exact) * theta
        assert d == pytest.approx(np.sqrt(np.real(_h1_inner(op, K0, diff, diff))), rel=1e-10)


def test_orbital_csv_columns(wave):
    cfg, _ = _cfg(wave, 1e-3, 5e-3, monitor_every=1)
    res = orbital_experiment(wave, "generic", cfg, 1e-3)
    rows = list(csv.reader(io.StringIO(res.to_csv())))
    assert rows[0] == ["t", "mass", "energy", "d_H1", "theta_star", "max_amplitude"]
    assert len(rows) == 1 + len(res.series) == 7
    assert res.summary()["n_records"] == 6
    with pytest.raises(ValueError):
        orbital_experiment(wave, "bogus", cfg, 1e-3)


def test_state_round_trip(wave):
    g = wave.default_graph()
    u = wave.sample(g, 101, 201)
    u = GraphFunction(g, u.loop_values * np.exp(0.3j), u.ray_values)
    back = load_state(save_state(u))
    assert np.array_equal(back.loop_values, u.loop_values)
    assert all(np.array_equal(a, b) for a, b in zip(back.ray_values, u.ray_values))


def test_loop_only_evolution_keeps_rays_empty():
    w = loop_only_wave(6.0, 2.0, 2, -1.0)
    graph, n0, n1 = default_grid(w, 401)
    cfg = EvolutionConfig(1e-3, 0.05, EXT, n0, n1, graph.R)
    r = track_standing_wave(w, cfg)
    assert r.error_l2 <= 1e-4 and r.mass_drift <= 1e-10
