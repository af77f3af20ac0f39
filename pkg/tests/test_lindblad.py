import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qmpemba.lindblad import (
    IntegrationError,
    LindbladParams,
    NO_RELAXATION,
    Trajectory,
    gibbs_state,
    propagate_analytic,
    propagate_ode,
    rates,
)
from qmpemba.qubit import (
    BlochState,
    Frame,
    density_to_bloch,
    relative_entropy_bloch,
    trace_distance_bloch,
)


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def random_params(rng, gamma_dep=False):
    n = rng.uniform(0, 3)
    return LindbladParams(
        omega=rng.uniform(0.2, 3),
        gamma=rng.uniform(0.05, 2),
        gamma_dep=rng.uniform(0, 1) if gamma_dep else 0.0,
        n_beta=n,
    )


def random_state(rng, pure=False):
    v = unit(rng.normal(size=3))
    return BlochState(v if pure else rng.uniform() ** (1 / 3) * v)


class TestParams:
    def test_default_equilibrium(self):
        assert LindbladParams(n_beta=0).r_z_eq == -1.0
        assert LindbladParams(n_beta=1.5).r_z_eq == pytest.approx(-0.25)

    def test_thermal_matches_gibbs(self):
        p = LindbladParams.thermal(temperature=10.0)
        assert p.r_z_eq == pytest.approx(-math.tanh(0.05), rel=1e-14)
        # detailed balance default agrees with the Gibbs value
        assert -1 / (2 * p.n_beta + 1) == pytest.approx(p.r_z_eq, rel=1e-12)

    @pytest.mark.parametrize("kw", [dict(omega=0), dict(gamma=-1), dict(gamma_dep=-0.1), dict(r_z_eq=1.5)])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            LindbladParams(**kw)

    @pytest.mark.parametrize("gamma,gamma_dep,n_beta,expected", [
        (1.0, 0.0, 0.0, (1.0, 2.0)),
        (1.0, 1.0, 0.0, (0.5, 2.0)),
        (1.0, 0.0, 0.5, (0.5, 1.0)),
    ])
    def test_rates(self, gamma, gamma_dep, n_beta, expected):
        t_pop, t_coh = rates(LindbladParams(gamma=gamma, gamma_dep=gamma_dep, n_beta=n_beta))
        assert (t_pop, t_coh) == pytest.approx(expected, rel=1e-15)
        assert t_pop < t_coh

    def test_no_relaxation(self):
        assert rates(LindbladParams(gamma=0.0, gamma_dep=0.3)) == NO_RELAXATION


class TestGibbs:
    def test_infinite_temperature(self):
        assert np.allclose(density_to_bloch(gibbs_state(1.0, math.inf)).r, 0)

    def test_zero_temperature(self):
        assert np.array_equal(density_to_bloch(gibbs_state(1.0, 0.0)).r, [0, 0, -1])

    def test_t10(self):
        assert density_to_bloch(gibbs_state(1.0, 10.0)).r[2] == pytest.approx(-math.tanh(0.05), rel=1e-14)

    def test_boltzmann_weights(self):
        from scipy.linalg import expm

        h = 0.5 * 1.3 * np.diag([1.0, -1.0])
        rho = expm(-h / 0.7)
        rho /= np.trace(rho)
        assert np.allclose(gibbs_state(1.3, 0.7), rho, atol=1e-15)


class TestAnalytic:
    def test_t0(self):
        s = BlochState((0.3, -0.4, 0.5))
        assert propagate_analytic(s, LindbladParams(), 0.0) == s

    def test_fixed_point(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            p = random_params(rng, gamma_dep=True)
            fp = BlochState((0, 0, p.r_z_eq))
            for t in (0.1, 1.0, 17.0):
                assert np.max(np.abs(propagate_analytic(fp, p, t).r - fp.r)) < 1e-12

    def test_closed_form_value(self):
        # T_coh = 2, so r_x(ln 2) = exp(-ln2/2) cos(ln 2)
        p = LindbladParams(omega=1, gamma=1)
        r = propagate_analytic(BlochState((1, 0, 0)), p, math.log(2)).r
        assert r[0] == pytest.approx(2 ** -0.5 * math.cos(math.log(2)), rel=1e-14)
        assert r[1] == pytest.approx(2 ** -0.5 * math.sin(math.log(2)), rel=1e-14)
        assert r[2] == pytest.approx(-1 + 1 * 0.5, abs=1e-15)  # z: exp(-ln2)(0+1)-1

    def test_rejects_spin_frame(self):
        with pytest.raises(ValueError):
            propagate_analytic(BlochState((0, 0, 1), Frame.SPIN), LindbladParams(), 1.0)

    def test_semigroup(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            p = random_params(rng)
            s = random_state(rng)
            t1, t2 = rng.uniform(0, 5, size=2)
            a = propagate_analytic(s, p, t1 + t2).r
            b = propagate_analytic(propagate_analytic(s, p, t1), p, t2).r
            assert np.max(np.abs(a - b)) < 1e-12


class TestODE:
    def test_matches_analytic(self):
        rng = np.random.default_rng(2)
        grid = np.linspace(0, 15, 151)
        for _ in range(25):
            p = random_params(rng, gamma_dep=bool(rng.integers(2)))
            if p.gamma_dep:
                p = LindbladParams(p.omega, p.gamma, p.gamma_dep, p.n_beta, r_z_eq=0.0)
            s = random_state(rng)
            traj = propagate_ode(s, p, grid)
            exact = np.array([propagate_analytic(s, p, t).r for t in grid])
            assert np.max(np.abs(traj.vectors - exact)) < 1e-8

    def test_closed_system_precession(self):
        p = LindbladParams(omega=1.7, gamma=0.0, gamma_dep=0.0)
        s = BlochState(unit([0.4, -0.3, 0.6]))
        traj = propagate_ode(s, p, np.linspace(0, 40, 401))
        assert np.max(np.abs(np.linalg.norm(traj.vectors, axis=1) - 1)) < 1e-10

    def test_zero_temperature_decay(self):
        p = LindbladParams(gamma=1.0)
        traj = propagate_ode(BlochState((0, 0, 1)), p, np.linspace(0, 40, 5))
        assert traj.vectors[-1, 2] == pytest.approx(-1.0, abs=1e-10)

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            propagate_ode(BlochState((0, 0, 1)), LindbladParams(), [0.0, 2.0, 1.0])

    def test_failure_reports_time(self, monkeypatch):
        import qmpemba.lindblad as lb

        class Failed:
            status = -1
            message = "Required step size is less than spacing between numbers."
            t = np.array([0.0, 0.5, 1.25])

        monkeypatch.setattr(lb, "solve_ivp", lambda *a, **k: Failed())
        with pytest.raises(IntegrationError) as err:
            propagate_ode(BlochState((0, 0, 1)), LindbladParams(), [0.0, 1.0, 2.0])
        assert err.value.time == 1.25


class TestMonotonicity:
    """Contractivity and Spohn monotonicity on 1000 randomised instances."""

    def test_trace_distance_contracts(self):
        rng = np.random.default_rng(3)
        grid = np.linspace(0, 12, 241)
        for _ in range(1000):
            p = random_params(rng, gamma_dep=bool(rng.integers(2)))
            a, b = random_state(rng), random_state(rng)
            from qmpemba.lindblad import analytic_vectors

            ra = analytic_vectors(a.r, p, grid)
            rb = analytic_vectors(b.r, p, grid)
            d = trace_distance_bloch(ra, rb)
            assert np.all(np.diff(d) <= 1e-10)

    def test_spohn(self):
        from qmpemba.lindblad import analytic_vectors

        rng = np.random.default_rng(4)
        grid = np.linspace(0, 12, 241)
        for _ in range(1000):
            p = random_params(rng)
            s = random_state(rng)
            traj = analytic_vectors(s.r, p, grid)
            rel = relative_entropy_bloch(traj, p.fixed_point.r)
            assert np.all(np.diff(rel) <= 1e-10)

    def test_trajectory_rejects_unphysical(self):
        with pytest.raises(ValueError):
            Trajectory(np.array([0.0, 1.0]), np.array([[0, 0, 1.0], [0, 0, 1.1]]))
        with pytest.raises(ValueError):
            Trajectory(np.array([1.0, 0.0]), np.zeros((2, 3)))
