import dataclasses
import math

import numpy as np
import pytest

from infocbo.diagnostics import (
    DiagnosticsError,
    constant_test_function,
    coordinate_window,
    g_phi_residual,
    g_phi_scaling_study,
    gaussian_bump,
    gronwall_envelope_constant,
    concentration_sweep,
    lambda_persistence_check,
    mass_bound_fit,
    mean_decay_check,
    second_moment_bound_check,
    second_moment_constant,
    second_moment_envelope_check,
)
from infocbo.infokernel import KernelSpec, logistic_closed_form
from infocbo.objectives import ObservableMap, quadratic
from infocbo.sde import InitialLaw, SimConfig, simulate
from infocbo.trajectory import TrajectoryRecord
from infocbo.util import rng_from_seed

SYMMETRIC_KERNEL = KernelSpec("logistic", a=1.0, b=1.0)
ABSORBING_KERNEL = KernelSpec("logistic", a=1.0, b=0.0)


def make_config(**overrides):
    base = dict(
        d=1,
        n_particles=200,
        dt=1e-2,
        t_end=2.0,
        seed=7,
        objective=quadratic(1),
        observable=ObservableMap(),
        kernel=SYMMETRIC_KERNEL,
        init=InitialLaw.gaussian(center=(1.0,), sigma=1.0, lambda_lo=0.2),
        mode="auxiliary",
    )
    base.update(overrides)
    return SimConfig(**base)


def synthetic_record(times, mean_x, mean_lambda, mode="auxiliary", m2_sq=None):
    times = np.asarray(times, dtype=float)
    mean_x = np.asarray(mean_x, dtype=float)
    if mean_x.ndim == 1:
        mean_x = mean_x[:, None]
    return TrajectoryRecord(
        times=times,
        m2_sq=np.asarray(m2_sq, dtype=float) if m2_sq is not None else (mean_x**2).sum(axis=1),
        mean_x=mean_x,
        mean_lambda=np.asarray(mean_lambda, dtype=float),
        mass_ball={},
        consensus_point=None,
        clamp_events=0,
        mode=mode,
        lambda_min=float(np.min(mean_lambda)),
        lambda_max=float(np.max(mean_lambda)),
    )


# ---------------------------------------------------------------------------
# decay law


def test_zero_information_record_predicts_a_constant_mean():
    t = np.linspace(0.0, 1.0, 11)
    rec = synthetic_record(t, np.full(11, 0.8), np.zeros(11))
    report = mean_decay_check(rec)
    assert report.max_rel_error == 0.0


def test_decay_check_rejects_full_mode_records():
    t = np.linspace(0.0, 1.0, 11)
    rec = synthetic_record(t, np.full(11, 0.8), np.zeros(11), mode="full")
    with pytest.raises(DiagnosticsError):
        mean_decay_check(rec)


def test_decay_check_flags_a_wrong_decay_rate():
    t = np.linspace(0.0, 2.0, 21)
    # mean decays at rate 1 while the information series claims rate 1/2
    rec = synthetic_record(t, 0.9 * np.exp(-t), np.full(21, 0.5))
    report = mean_decay_check(rec)
    assert report.max_rel_error > 0.5


def test_frozen_full_information_run_decays_at_unit_rate():
    cfg = make_config(kernel=ABSORBING_KERNEL, dt=1e-3, n_particles=2,
                      init=InitialLaw.point(center=(1.0,), lambda_lo=1.0))
    report = mean_decay_check(simulate(cfg))
    assert report.max_rel_error <= 5e-3
    assert report.predicted_final == pytest.approx(math.exp(-cfg.t_end), rel=1e-4)


def test_noisy_ensemble_tracks_the_decay_law_within_tolerance():
    cfg = make_config(n_particles=5000, noise_strength=0.5,
                      init=InitialLaw.gaussian(center=(2.0,), sigma=1.0, lambda_lo=0.0))
    report = mean_decay_check(simulate(cfg))
    assert report.max_rel_error <= 0.05


# ---------------------------------------------------------------------------
# second-moment ceiling


def test_ceiling_constant_endpoint_values():
    assert second_moment_constant(0.0, 3) == 2.0
    assert second_moment_constant(1.0, 1) == 3.0
    assert second_moment_constant(1.0 / math.sqrt(2.0), 2) == pytest.approx(3.0)


def test_ceiling_constant_is_at_least_one_and_blows_up_at_the_margin():
    for s2d in np.linspace(0.0, 1.9, 20):
        assert second_moment_constant(math.sqrt(s2d), 1) >= 1.0
    assert second_moment_constant(math.sqrt(1.999), 1) > 1e5


def test_ceiling_constant_requires_subcritical_noise():
    with pytest.raises(DiagnosticsError, match="noise_strength"):
        second_moment_constant(math.sqrt(2.0), 1)


def test_second_moment_stays_under_the_ceiling_on_a_calm_run():
    cfg = make_config(n_particles=2000, noise_strength=0.5)
    report = second_moment_bound_check(simulate(cfg), cfg)
    assert report.ok
    assert report.peak_ratio <= report.slack * report.ceiling_constant


def test_second_moment_check_is_scoped_to_auxiliary_runs():
    cfg = make_config(mode="full", n_particles=50)
    with pytest.raises(DiagnosticsError):
        second_moment_bound_check(simulate(cfg), cfg)


def test_second_moment_check_flags_a_fabricated_violation():
    t = np.linspace(0.0, 1.0, 11)
    rec = synthetic_record(t, np.ones(11), np.zeros(11),
                           m2_sq=np.linspace(1.0, 50.0, 11))
    cfg = make_config(n_particles=10, noise_strength=0.5)
    report = second_moment_bound_check(rec, cfg)
    assert not report.ok
    assert report.violated_at is not None


# ---------------------------------------------------------------------------
# information persistence


def test_persistence_of_a_symmetric_kernel_from_zero_information():
    cfg = make_config(n_particles=500, t_end=3.0,
                      init=InitialLaw.gaussian(center=(1.0,), sigma=1.0, lambda_lo=0.0))
    record = simulate(cfg)
    report = lambda_persistence_check(record)
    assert report.ok
    # floor is assessed after the start: the run begins at zero information
    assert report.min_mean_lambda == record.mean_lambda[1]
    # Euler tracks (1 - exp(-2t)) / 2 to first order
    expected = float(logistic_closed_form(SYMMETRIC_KERNEL, 0.0, cfg.t_end))
    assert record.mean_lambda[-1] == pytest.approx(expected, abs=2.0 * cfg.dt)
    assert report.integral_mean_lambda > 0.0


def test_persistence_report_integrates_the_information_series():
    t = np.linspace(0.0, 1.0, 101)
    rec = synthetic_record(t, np.ones(101), np.full(101, 0.25))
    report = lambda_persistence_check(rec)
    assert report.integral_mean_lambda == pytest.approx(0.25)


# ---------------------------------------------------------------------------
# mass floor


def test_frozen_cloud_keeps_unit_mass_and_zero_rate():
    cfg = make_config(mode="full", n_particles=10, t_end=1.0,
                      init=InitialLaw.point(center=(0.0,), lambda_lo=0.5))
    record = simulate(cfg, snapshot_stride=cfg.n_steps, ball_radii=(1.0,))
    report = mass_bound_fit(record, 1.0)
    assert report.floor_ok
    assert report.fitted_rate == 0.0
    assert report.initial_smoothed_mass == pytest.approx(1.0, abs=1e-12)
    assert not report.vacuous


def test_mass_fit_is_vacuous_when_the_ball_starts_empty():
    cfg = make_config(mode="full", n_particles=10, t_end=1.0,
                      init=InitialLaw.point(center=(5.0,), lambda_lo=0.5))
    record = simulate(cfg, snapshot_stride=cfg.n_steps, ball_radii=(1.0,))
    report = mass_bound_fit(record, 1.0)
    assert report.vacuous
    assert report.initial_smoothed_mass == 0.0


def test_mass_fit_needs_the_initial_snapshot():
    cfg = make_config(n_particles=10, t_end=1.0)
    record = simulate(cfg, ball_radii=(1.0,))
    with pytest.raises(DiagnosticsError):
        mass_bound_fit(record, 1.0)


def test_mass_fit_needs_the_matching_ball_series():
    cfg = make_config(n_particles=10, t_end=1.0)
    record = simulate(cfg, snapshot_stride=cfg.n_steps, ball_radii=(2.0,))
    with pytest.raises(DiagnosticsError):
        mass_bound_fit(record, 1.0)


def test_fitted_rate_makes_the_exponential_floor_tight():
    cfg = make_config(mode="full", n_particles=400, t_end=2.0, noise_strength=0.5,
                      init=InitialLaw.gaussian(center=(1.0,), sigma=1.0, lambda_lo=0.2))
    record = simulate(cfg, record_stride=10, snapshot_stride=cfg.n_steps,
                      ball_radii=(0.5,))
    report = mass_bound_fit(record, 0.5)
    assert report.floor_ok and not report.vacuous
    floor = report.initial_smoothed_mass * np.exp(-report.fitted_rate * record.times)
    assert np.all(np.asarray(record.mass_ball[0.5]) >= floor - 1e-12)


# ---------------------------------------------------------------------------
# envelope


def test_envelope_constant_assembles_from_gain_and_noise():
    assert gronwall_envelope_constant(1.0, 0.0, 2, 1.0) == 8.0
    assert gronwall_envelope_constant(1.0, 0.5, 2, 2.0) == pytest.approx(12.0 + 0.25 * 2 * 30.0)


def test_envelope_check_requires_truncation():
    cfg = make_config(n_particles=20)
    with pytest.raises(DiagnosticsError):
        second_moment_envelope_check(simulate(cfg), cfg, m_f=1.0)


def test_truncated_run_respects_the_envelope():
    obs = ObservableMap(variant="saturated", m_g=2.0)
    cfg = make_config(mode="full", observable=obs, truncation_radius=3.0,
                      n_particles=300, noise_strength=0.5, t_end=1.0)
    report = second_moment_envelope_check(simulate(cfg), cfg, m_f=obs.m_g)
    assert report.ok
    assert report.a_constant == gronwall_envelope_constant(1.0, 0.5, 1, 2.0)


# ---------------------------------------------------------------------------
# test-function catalog


def finite_difference_check(phi, d, seed):
    rng = rng_from_seed(seed)
    h = 1e-6
    for _ in range(10):
        x = rng.standard_normal(d)
        lam = float(rng.uniform(0.05, 0.95))
        grad = phi.grad_x(x[None, :], np.array([lam]))[0]
        lap = float(phi.laplacian_x(x[None, :], np.array([lam]))[0])
        glam = float(phi.grad_lambda(x[None, :], np.array([lam]))[0])
        num_lap = 0.0
        for k in range(d):
            e = np.zeros(d)
            e[k] = h
            up = float(phi.value((x + e)[None, :], np.array([lam]))[0])
            dn = float(phi.value((x - e)[None, :], np.array([lam]))[0])
            mid = float(phi.value(x[None, :], np.array([lam]))[0])
            assert (up - dn) / (2 * h) == pytest.approx(grad[k], abs=1e-5)
            num_lap += (up - 2 * mid + dn) / h**2
        assert num_lap == pytest.approx(lap, abs=2e-3)
        up = float(phi.value(x[None, :], np.array([lam + h]))[0])
        dn = float(phi.value(x[None, :], np.array([lam - h]))[0])
        assert (up - dn) / (2 * h) == pytest.approx(glam, abs=1e-5)


@pytest.mark.parametrize("d", [1, 3])
def test_gaussian_bump_derivatives_match_finite_differences(d):
    finite_difference_check(gaussian_bump(1.3), d, seed=31)


@pytest.mark.parametrize("d", [1, 2])
def test_coordinate_window_derivatives_match_finite_differences(d):
    finite_difference_check(coordinate_window(), d, seed=32)


def test_constant_test_function_has_vanishing_derivatives():
    phi = constant_test_function()
    x = np.zeros((3, 2))
    lam = np.full(3, 0.5)
    assert np.all(phi.value(x, lam) == 1.0)
    assert np.all(phi.grad_x(x, lam) == 0.0)
    assert np.all(phi.grad_lambda(x, lam) == 0.0)
    assert np.all(phi.laplacian_x(x, lam) == 0.0)


# ---------------------------------------------------------------------------
# weak-form residual


def full_config(**overrides):
    base = dict(mode="full", n_particles=100, noise_strength=0.5, d=2,
                objective=quadratic(2),
                init=InitialLaw.gaussian(center=(1.0, 1.0), sigma=1.0, lambda_lo=0.2))
    base.update(overrides)
    return make_config(**base)


def test_constant_test_function_has_exactly_zero_residual():
    cfg = full_config(t_end=1.0)
    record = simulate(cfg, snapshot_stride=1)
    assert g_phi_residual(record.snapshots, cfg, constant_test_function()) == 0.0


def test_residual_needs_at_least_two_snapshots():
    cfg = full_config(t_end=1.0)
    record = simulate(cfg, record_stride=cfg.n_steps, snapshot_stride=cfg.n_steps)
    with pytest.raises(DiagnosticsError):
        g_phi_residual(record.snapshots[:1], cfg, gaussian_bump())


def test_noise_free_residual_shrinks_linearly_with_the_step():
    values = {}
    for dt in (2e-2, 1e-2, 5e-3):
        cfg = full_config(noise_strength=0.0, dt=dt, t_end=1.0, n_particles=50)
        record = simulate(cfg, snapshot_stride=1)
        values[dt] = abs(g_phi_residual(record.snapshots, cfg, gaussian_bump()))
    assert values[2e-2] > values[1e-2] > values[5e-3]
    assert values[2e-2] / values[1e-2] == pytest.approx(2.0, rel=0.35)


def test_scaling_study_requires_enough_replicas():
    with pytest.raises(DiagnosticsError):
        g_phi_scaling_study(full_config(), (50,), 5, gaussian_bump())


def test_noise_free_point_start_has_zero_replica_variance():
    cfg = full_config(noise_strength=0.0, t_end=0.5, n_particles=20,
                      init=InitialLaw.point(center=(1.0, 1.0), lambda_lo=0.2))
    stats = g_phi_scaling_study(cfg, (20,), 30, gaussian_bump())
    assert stats[20].variance == 0.0
    assert stats[20].stderr == 0.0


def test_residual_variance_scales_inversely_with_ensemble_size():
    cfg = full_config(t_end=1.0)
    stats = g_phi_scaling_study(cfg, (50, 200), 40, gaussian_bump(2.0))
    ratio = stats[50].variance / stats[200].variance
    assert 2.0 <= ratio <= 8.0


# ---------------------------------------------------------------------------
# concentration sweep hypotheses


def test_sweep_requires_the_full_system():
    with pytest.raises(DiagnosticsError, match="full"):
        concentration_sweep(make_config(), (1.0,))


def test_sweep_requires_initial_information():
    cfg = full_config(init=InitialLaw.gaussian(center=(1.0, 1.0), sigma=1.0, lambda_lo=0.0))
    with pytest.raises(DiagnosticsError, match="information"):
        concentration_sweep(cfg, (1.0,))


def test_sweep_requires_mass_near_the_minimizer():
    cfg = full_config(init=InitialLaw.point(center=(1.0, 1.0), lambda_lo=0.2))
    with pytest.raises(DiagnosticsError, match="ball"):
        concentration_sweep(cfg, (1.0,))


def test_sweep_requires_subcritical_noise():
    cfg = full_config(noise_strength=1.2)
    with pytest.raises(DiagnosticsError, match="noise"):
        concentration_sweep(cfg, (1.0,))


def test_cloud_started_at_the_minimizer_stays_there():
    cfg = full_config(noise_strength=0.5,
                      init=InitialLaw.point(center=(0.0, 0.0), lambda_lo=0.2),
                      t_end=0.5)
    # a point cloud at the minimizer has zero drift and zero noise amplitude
    table = concentration_sweep(cfg, (1.0, 16.0))
    assert table == {1.0: 0.0, 16.0: 0.0}
