import math

import numpy as np
import pytest

from nl4s.evolution import (
    EvolveConfig,
    Trajectory,
    detect_blowup_fit,
    fit_blowup_rate,
    linear_step,
    nonlinear_step,
    rescale_field,
    scaling_test,
    strang_evolve,
    strang_step,
)
from nl4s.observables import NonlinearityParams, ObservableSeries, mass
from nl4s.spectral import GridSpec, PhysicalField

from conftest import smooth_random_field

P8 = NonlinearityParams(8.0)


class TestSubsteps:
    def test_linear_plane_wave(self):
        """e^{ikx} picks up the phase exp(i t (k^4 - eps k^2))."""
        g = GridSpec(1, 64, math.pi)
        P = NonlinearityParams(8.0, epsilon=1.0)
        u = PhysicalField(g, np.exp(3j * g.axis))
        out = linear_step(u, 0.37, P)
        np.testing.assert_allclose(out.values, np.exp(0.37j * (81 - 9)) * u.values, atol=1e-12)

    def test_linear_group_and_unitary(self, grid2d, rng):
        P = NonlinearityParams(4.0)
        u = smooth_random_field(grid2d, rng)
        a = linear_step(linear_step(u, 0.1, P), 0.2, P)
        b = linear_step(u, 0.3, P)
        np.testing.assert_allclose(a.values, b.values, atol=1e-12)
        assert mass(b) == pytest.approx(mass(u), rel=1e-13)

    def test_nonlinear_keeps_modulus(self, grid1d, rng):
        u = smooth_random_field(grid1d, rng)
        out = nonlinear_step(u, 0.5, P8)
        np.testing.assert_allclose(np.abs(out.values), np.abs(u.values), rtol=1e-14)

    def test_nonlinear_phase_sign(self):
        """Focusing: u_t = -i |u|^p u, so a constant 1 rotates to exp(-i tau)."""
        g = GridSpec(1, 16, 1.0)
        out = nonlinear_step(PhysicalField(g, np.ones(16, dtype=complex)), 0.25, P8)
        np.testing.assert_allclose(out.values, np.exp(-0.25j), atol=1e-15)

    def test_time_reversal(self, grid1d, rng):
        u = smooth_random_field(grid1d, rng)
        v = strang_step(strang_step(u, 1e-3, P8), -1e-3, P8)
        np.testing.assert_allclose(v.values, u.values, atol=1e-13)


class TestEvolve:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            EvolveConfig(P8, dt0=0.0)
        with pytest.raises(ValueError):
            EvolveConfig(P8, record_every=0)
        assert EvolveConfig(P8, dt0=1e-3).c == pytest.approx(1e-4)

    def test_lands_on_T_max(self, gs256):
        traj = strang_evolve(gs256.Q * 0.5, EvolveConfig(P8, dt0=1e-2, c_dt=5e-2, T_max=0.123))
        assert traj.stop_reason == "T_max"
        assert traj.t_final == pytest.approx(0.123, abs=1e-15)
        assert np.all(np.diff(traj.series.times) > 0)

    def test_small_amplitude_is_linear(self, grid1d):
        u = PhysicalField(grid1d, 1e-3 * np.exp(-(grid1d.axis**2)))
        traj = strang_evolve(u, EvolveConfig(P8, dt0=1e-2, T_max=0.3))
        lin = linear_step(u, 0.3, P8)
        rel = np.linalg.norm(traj.final.values - lin.values) / np.linalg.norm(lin.values)
        assert rel < 1e-12

    def test_ground_state_rotates(self, gs256):
        """Q evolves to exp(-i t) Q; the splitting error is second order in the step."""
        errs = []
        for dt in (2e-4, 1e-4):
            cfg = EvolveConfig(P8, dt0=dt, c_dt=10.0, T_max=0.2)
            traj = strang_evolve(gs256.Q, cfg)
            exact = np.exp(-0.2j) * gs256.Q.values
            errs.append(np.linalg.norm(traj.final.values - exact) / np.linalg.norm(exact))
        assert errs[0] < 1e-5
        assert math.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.2)

    def test_conserves_mass_and_energy(self, gs256):
        u0 = gs256.Q * 0.9
        traj = strang_evolve(u0, EvolveConfig(P8, dt0=1e-3, c_dt=1e-4, T_max=0.3))
        m = traj.series.array("mass")
        e = traj.series.array("energy")
        # roundoff accumulates over about 3000 steps
        assert np.max(np.abs(m - m[0])) / m[0] < 1e-11
        assert np.max(np.abs(e - e[0])) < 1e-6

    def test_max_steps(self, gs256):
        traj = strang_evolve(gs256.Q, EvolveConfig(P8, dt0=1e-3, c_dt=1.0, max_steps=7, record_every=3))
        assert traj.stop_reason == "max_steps" and traj.steps == 7
        assert traj.t_final == pytest.approx(7e-3)

    def test_dt_underflow(self, gs256):
        traj = strang_evolve(gs256.Q, EvolveConfig(P8, dt0=1e-3, c_dt=1e-6, dt_min=1e-6))
        assert traj.stop_reason == "dt_underflow" and traj.steps == 0
        assert traj.blew_up

    def test_modified_energy_column(self, gs256):
        traj = strang_evolve(gs256.Q * 0.5, EvolveConfig(P8, dt0=1e-2, T_max=0.05, N=4.0))
        assert np.all(np.isfinite(traj.series.array("modified_energy")))

    def test_snapshots_and_callback(self, gs256):
        seen = []
        cfg = EvolveConfig(P8, dt0=1e-2, c_dt=1.0, T_max=0.1, record_every=1, snapshot_every=2)
        traj = strang_evolve(gs256.Q * 0.5, cfg, on_record=lambda t, u: seen.append(t))
        assert seen == list(traj.series.times)
        assert [t for t, _ in traj.snapshots] == list(traj.series.times[::2])

    def test_energy_drift_second_order(self, gs256):
        drift = []
        for c in (4e-4, 2e-4):
            traj = strang_evolve(gs256.Q * 0.9, EvolveConfig(P8, dt0=1.0, c_dt=c, T_max=0.5))
            e = traj.series.array("energy")
            drift.append(np.max(np.abs(e - e[0])))
        assert math.log2(drift[0] / drift[1]) == pytest.approx(2.0, abs=0.2)


class TestBlowupFit:
    def test_synthetic_recovery(self):
        T, beta, C = 0.8, 0.45, 2.0
        t = 0.8 - np.geomspace(0.2, 1e-4, 60)
        fit = fit_blowup_rate(t, C * (T - t) ** (-beta))
        assert fit["T_star"] == pytest.approx(T, rel=1e-6)
        assert fit["beta"] == pytest.approx(beta, rel=1e-5)
        assert fit["log_C"] == pytest.approx(math.log(C), rel=1e-4)

    def test_noisy_synthetic(self):
        rng = np.random.default_rng(5)
        T, beta = 1.3, 0.6
        t = T - np.geomspace(0.5, 1e-3, 80)
        y = (T - t) ** (-beta) * np.exp(1e-3 * rng.normal(size=t.size))
        fit = fit_blowup_rate(t, y)
        assert abs(fit["T_star"] - T) / T < 0.01
        assert abs(fit["beta"] - beta) / beta < 0.04

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            fit_blowup_rate([0.0, 1.0], [1.0, 2.0])

    def _traj(self, t, h, reason="norm_threshold"):
        g = GridSpec(1, 16, 1.0)
        s = ObservableSeries()
        for ti, hi in zip(t, h):
            s.append(times=float(ti), hgamma=float(hi), tail=0.0)
        traj = Trajectory(g, EvolveConfig(P8, gamma=1.5), s, stop_reason=reason)
        traj.initial_hgamma = float(h[0])
        return traj

    def test_detect_on_synthetic_trajectory(self):
        t = np.concatenate([[0.0], 1.0 - np.geomspace(0.9, 1e-5, 60)])
        h = (1.0 - t) ** (-0.5)
        rep = detect_blowup_fit(self._traj(t, h))
        assert rep.detected and rep.rate_ok
        assert rep.rate_exponent == pytest.approx(0.5, rel=1e-4)
        assert rep.lower_bound == 0.375

    def test_not_detected_without_stop_rule(self):
        t = np.linspace(0, 1, 30)
        rep = detect_blowup_fit(self._traj(t, 1 + t, reason="T_max"))
        assert not rep.detected and "T_max" in rep.reason

    def test_non_monotone_rejected(self):
        t = np.linspace(0, 1, 40)
        h = 10 + np.sin(20 * t) * 5
        h[0] = 1.0
        rep = detect_blowup_fit(self._traj(t, h))
        assert not rep.detected


class TestScaling:
    def test_rescale_preserves_mass(self, gs256):
        v = rescale_field(gs256.Q, 2.0)
        assert mass(v) == pytest.approx(gs256.mass, rel=1e-14)
        assert v.grid.L == 2 * gs256.grid.L

    def test_lambda_one_exact(self, gs256):
        rep = scaling_test(gs256.Q * 0.9, 1.0, EvolveConfig(P8, dt0=1e-3, c_dt=1e-3), t=0.02)
        assert rep.discrepancy == 0.0 and rep.ok

    def test_requires_mass_critical(self, gs256):
        with pytest.raises(ValueError):
            scaling_test(gs256.Q, 2.0, EvolveConfig(NonlinearityParams(4.0)), t=0.01)

    def test_rejects_other_lambda(self, gs256):
        with pytest.raises(ValueError):
            scaling_test(gs256.Q, 3.0, EvolveConfig(P8), t=0.01)
