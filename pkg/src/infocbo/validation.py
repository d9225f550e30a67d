"""Committed validation suites behind `infocbo validate <suite>`.

Every suite runs fixed configurations (parameters and seeds committed here,
once) and applies fixed thresholds. The acceptance tests call the same
functions, so the CLI gate and the test gate cannot drift apart.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from functools import cache

import numpy as np

from .diagnostics import (
    concentration_sweep,
    g_phi_scaling_study,
    gaussian_bump,
    mass_bound_fit,
    mean_decay_check,
    second_moment_bound_check,
    second_moment_constant,
    second_moment_envelope_check,
)
from .gibbs import ConsensusParams, consensus_from_energies, weighted_consensus
from .infokernel import KernelSpec, check_kernel_contract, logistic_closed_form
from .measures import EmpiricalMeasure, mean_point
from .objectives import ObservableMap, custom_objective, quadratic, rastrigin_like, verify_growth
from .sde import InitialLaw, SimConfig, simulate
from .util import rng_from_seed

# one committed master seed per suite family; never reused across families
SEED_CONSTRAINT = 0x1C0FFEE
SEED_DECAY = 0x2D0C5
SEED_CONCENTRATION = 0x3BEB1
SEED_MEANFIELD = 0x4FEED
SEED_ORACLE = 0x5ACE

CI_Z_99 = 2.5758293035489004  # two-sided 99% normal quantile


def constraint_config() -> SimConfig:
    """Long full-mode run at the largest admissible lambda step (dt = theta/2)."""
    return SimConfig(
        d=2,
        n_particles=500,
        dt=0.25,
        t_end=2500.0,
        seed=SEED_CONSTRAINT,
        objective=quadratic(2),
        observable=ObservableMap(),
        kernel=KernelSpec("logistic", a=1.0, b=1.0),
        init=InitialLaw.gaussian(center=(1.0, 1.0), sigma=1.0, lambda_lo=0.2),
        sharpness=8.0,
        noise_strength=0.5,
        mode="full",
    )


def decay_config() -> SimConfig:
    """Large consensus-free ensemble for the mean decay law (sigma^2 d = 0.5)."""
    return SimConfig(
        d=2,
        n_particles=10_000,
        dt=1e-2,
        t_end=5.0,
        seed=SEED_DECAY,
        objective=quadratic(2),
        observable=ObservableMap(),
        kernel=KernelSpec("logistic", a=1.0, b=1.0),
        init=InitialLaw.gaussian(center=(2.0, 2.0), sigma=1.0, lambda_lo=0.0),
        noise_strength=0.5,
        mode="auxiliary",
    )


def concentration_config() -> SimConfig:
    """Full-system base for the sharpness sweep; sigma^2 d = 0.5, lambda_0 = 0.2.

    The kernel here saturates fast (b = 0, so lambda -> 1 with time constant
    1/16): once information is full the drift follows the weighted consensus
    alone, which is what lets the sharp sweep end concentrate near the
    minimizer. A symmetric kernel stalls near lambda = 1/2 and leaves half the
    drift pointed at the crowd mean.
    """
    return SimConfig(
        d=2,
        n_particles=2000,
        dt=1e-2,
        t_end=10.0,
        seed=SEED_CONCENTRATION,
        objective=quadratic(2),
        observable=ObservableMap(),
        kernel=KernelSpec("logistic", a=16.0, b=0.0),
        init=InitialLaw.gaussian(center=(1.0, 1.0), sigma=1.0, lambda_lo=0.2),
        sharpness=1.0,
        noise_strength=0.5,
        mode="full",
    )


def meanfield_config() -> SimConfig:
    """Base for the weak-form residual study; N is swept by the study itself.

    The kernel is deliberately slow (a = b = 1/4). The residual mean must sit
    inside its own confidence band, and the dominant Euler bias at this step
    size enters through the rate term's quadratic variation against the test
    function's lambda curvature; a slow rate keeps that bias far below the
    replica noise floor while every term of the generator stays exercised.
    """
    return SimConfig(
        d=2,
        n_particles=250,
        dt=1e-2,
        t_end=2.0,
        seed=SEED_MEANFIELD,
        objective=quadratic(2),
        observable=ObservableMap(),
        kernel=KernelSpec("logistic", a=0.25, b=0.25),
        init=InitialLaw.gaussian(center=(1.0, 1.0), sigma=1.0, lambda_lo=0.2),
        sharpness=4.0,
        noise_strength=math.sqrt(0.5),
        mode="full",
    )


MEANFIELD_SIZES = (250, 1000)
MEANFIELD_REPLICAS = 200
MEANFIELD_BUMP_SCALE = 2.0
CONCENTRATION_SHARPNESS = (1.0, 4.0, 16.0, 64.0)
MASS_RADIUS = 0.5


@cache
def constraint_record():
    cfg = constraint_config()
    start = time.perf_counter()
    record = simulate(cfg, record_stride=1)
    return record, time.perf_counter() - start


@cache
def decay_record():
    cfg = decay_config()
    start = time.perf_counter()
    record = simulate(cfg, record_stride=1)
    return cfg, record, time.perf_counter() - start


@cache
def concentration_table():
    cfg = concentration_config()
    start = time.perf_counter()
    table = concentration_sweep(cfg, CONCENTRATION_SHARPNESS, record_stride=5)
    return table, time.perf_counter() - start


@cache
def concentration_record_sharp():
    """The sweep's sharpest run, re-recorded with mass series and snapshots."""
    cfg = replace(concentration_config(), sharpness=CONCENTRATION_SHARPNESS[-1])
    record = simulate(
        cfg,
        record_stride=5,
        snapshot_stride=cfg.n_steps,
        ball_radii=(MASS_RADIUS,),
    )
    return cfg, record


@cache
def meanfield_stats():
    cfg = meanfield_config()
    start = time.perf_counter()
    stats = g_phi_scaling_study(
        cfg,
        MEANFIELD_SIZES,
        MEANFIELD_REPLICAS,
        gaussian_bump(MEANFIELD_BUMP_SCALE),
        snapshot_stride=1,
    )
    return stats, time.perf_counter() - start


# ---------------------------------------------------------------------------
# suite plumbing


@dataclass(frozen=True)
class CheckOutcome:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


@dataclass(frozen=True)
class SuiteResult:
    suite: str
    outcomes: tuple[CheckOutcome, ...]

    @property
    def passed(self) -> bool:
        return all(o.passed for o in self.outcomes)

    def lines(self) -> list[str]:
        return [o.line() for o in self.outcomes]


def _outcome(name: str, passed: bool, detail: str) -> CheckOutcome:
    return CheckOutcome(name=name, passed=bool(passed), detail=detail)


# ---------------------------------------------------------------------------
# suites


def suite_contracts() -> SuiteResult:
    outcomes = []

    rep = check_kernel_contract(KernelSpec("logistic", a=1.0, b=1.0), rng_seed=SEED_ORACLE)
    outcomes.append(
        _outcome(
            "logistic kernel contract",
            rep.ok and rep.t1_lipschitz_estimate <= 2.0 + 1e-9,
            f"T1 estimate {rep.t1_lipschitz_estimate:.4f} (analytic 2), "
            f"T2/T3 violations {rep.t2_violations}/{rep.t3_violations}",
        )
    )
    rep = check_kernel_contract(
        KernelSpec("crowd-coupled", a=1.0, b=1.0), rng_seed=SEED_ORACLE + 1
    )
    outcomes.append(
        _outcome(
            "crowd-coupled kernel contract",
            rep.ok and math.isfinite(rep.t1_lipschitz_estimate),
            f"T1 estimate {rep.t1_lipschitz_estimate:.4f}, "
            f"T2/T3 violations {rep.t2_violations}/{rep.t3_violations}",
        )
    )

    for spec in (quadratic(3), rastrigin_like(3)):
        report = verify_growth(spec, sample_count=4000, radius=8.0, rng_seed=SEED_ORACLE)
        outcomes.append(
            _outcome(
                f"growth envelope: {spec.name}",
                report.ok,
                f"{report.sample_count} samples in radius {report.radius:g}, "
                f"{len(report.violations)} violations",
            )
        )
    lying = custom_objective(
        "overclaimed_quadratic", 2, lambda p: np.sum(p * p, axis=-1),
        c2=2.0, c3=1.0, growth_exponent=2.0, vectorized=True,
    )
    report = verify_growth(lying, sample_count=500, radius=4.0, rng_seed=SEED_ORACLE)
    outcomes.append(
        _outcome(
            "growth envelope audit catches a false claim",
            not report.ok,
            f"{len(report.violations)} violations flagged for c2 = 2 on ||x||^2",
        )
    )

    record, elapsed = constraint_record()
    cfg = constraint_config()
    outcomes.append(
        _outcome(
            "lambda range preserved at dt = theta/2",
            record.clamp_events == 0
            and record.lambda_min >= 0.0
            and record.lambda_max <= 1.0,
            f"{cfg.n_steps} steps, clamp events {record.clamp_events}, "
            f"lambda in [{record.lambda_min:.3g}, {record.lambda_max:.3g}], "
            f"{elapsed:.1f}s",
        )
    )

    err = _logistic_euler_error()
    outcomes.append(
        _outcome(
            "logistic relaxation matches closed form to O(dt)",
            err["max_error"] <= 2.0 * err["dt"],
            f"max |lambda - exact| = {err['max_error']:.2e} <= 2 dt = {2 * err['dt']:.2e}",
        )
    )

    outcomes.extend(_gibbs_algebra_outcomes())

    return SuiteResult("contracts", tuple(outcomes))


def _gibbs_algebra_outcomes() -> list[CheckOutcome]:
    rng = rng_from_seed(SEED_ORACLE + 2)
    atoms = rng.normal(size=(40, 2))
    measure = EmpiricalMeasure.uniform(atoms)
    base = quadratic(2)
    identity = ObservableMap()

    # a shifted objective cannot pass the E(0) = 0 constructor, so the shift
    # invariance is probed at the energy level where it actually matters
    shift_worst = 0.0
    for offset in (1.0, math.e, 100.0):
        for sharpness in (0.5, 1.0, 5.0):
            params = ConsensusParams(sharpness, base, identity)
            ref = weighted_consensus(params, measure)
            energies = np.sum(atoms * atoms, axis=-1) + offset
            moved = consensus_from_energies(params, atoms, measure.masses, energies)
            shift_worst = max(
                shift_worst,
                float(np.linalg.norm(moved - ref) / max(np.linalg.norm(ref), 1e-30)),
            )

    single = EmpiricalMeasure.uniform(np.array([[0.7, -1.3]]))
    dirac_exact = np.array_equal(
        weighted_consensus(ConsensusParams(3.0, base, identity), single),
        single.atoms[0],
    )

    flat = weighted_consensus(ConsensusParams(0.0, base, identity), measure)
    flat_err = float(np.linalg.norm(flat - mean_point(measure)))

    five = EmpiricalMeasure.uniform(
        np.array([[0.1, 0.2], [1.0, -0.4], [-0.8, 0.9], [0.5, 0.5], [-1.2, -1.1]])
    )
    energies = np.sum(five.atoms * five.atoms, axis=1)
    best = five.atoms[int(np.argmin(energies))]
    laplace = weighted_consensus(ConsensusParams(1000.0, base, identity), five)
    laplace_err = float(np.linalg.norm(laplace - best))

    return [
        _outcome(
            "consensus invariant under energy shifts",
            shift_worst <= 1e-12,
            f"worst relative drift {shift_worst:.1e} over shifts up to 100",
        ),
        _outcome(
            "consensus of a single atom returns it exactly",
            dirac_exact,
            "bitwise equality on a one-atom measure",
        ),
        _outcome(
            "sharpness 0 reduces to the plain mean",
            flat_err <= 1e-14,
            f"||f_0 - mean|| = {flat_err:.1e}",
        ),
        _outcome(
            "large sharpness selects the best atom",
            laplace_err <= 1e-6,
            f"||f_1000 - argmin atom|| = {laplace_err:.1e}",
        ),
    ]


def _logistic_euler_error(dt: float = 0.05, t_end: float = 5.0) -> dict:
    kernel = KernelSpec("logistic", a=1.0, b=1.0, theta=None)
    cfg = SimConfig(
        d=1,
        n_particles=1,
        dt=dt,
        t_end=t_end,
        seed=SEED_ORACLE,
        objective=quadratic(1),
        observable=ObservableMap(),
        kernel=kernel,
        init=InitialLaw.point(center=(0.0,), lambda_lo=0.0),
        noise_strength=0.0,
        mode="auxiliary",
    )
    record = simulate(cfg, record_stride=1)
    exact = logistic_closed_form(kernel, 0.0, record.times)
    return {"dt": dt, "max_error": float(np.abs(record.mean_lambda - exact).max())}


def suite_decay() -> SuiteResult:
    cfg, record, elapsed = decay_record()
    report = mean_decay_check(record)
    outcomes = (
        _outcome(
            "mean decay tracks exp(-integral of mean lambda)",
            report.max_rel_error <= 0.05,
            f"max rel error {report.max_rel_error:.3%} (tolerance 5%), "
            f"final ||mean|| {report.actual_final:.4f} vs predicted "
            f"{report.predicted_final:.4f}, N = {cfg.n_particles}, {elapsed:.1f}s",
        ),
    )
    return SuiteResult("decay", outcomes)


def suite_bounds() -> SuiteResult:
    outcomes = []
    c_zero = second_moment_constant(0.0, 3)
    c_unit = second_moment_constant(1.0, 1)
    outcomes.append(
        _outcome(
            "ceiling constant endpoints",
            abs(c_zero - 2.0) < 1e-14 and abs(c_unit - 3.0) < 1e-14,
            f"C(sigma=0) = {c_zero:g}, C(sigma^2 d = 1) = {c_unit:g}",
        )
    )
    cfg, record, _ = decay_record()
    report = second_moment_bound_check(record, cfg)
    outcomes.append(
        _outcome(
            "second moment under 1.1 * C * m2_sq(0)",
            report.ok,
            f"peak ratio {report.peak_ratio:.3f} vs ceiling "
            f"{report.slack * report.ceiling_constant:.3f}",
        )
    )
    env_cfg, env_record = _truncated_run()
    env_report = second_moment_envelope_check(env_record, env_cfg, m_f=env_cfg.observable.m_g)
    outcomes.append(
        _outcome(
            "Gronwall envelope on a truncated run",
            env_report.ok,
            f"A = {env_report.a_constant:.2f}, no crossing"
            if env_report.ok
            else f"violated at t = {env_report.violated_at}",
        )
    )
    return SuiteResult("bounds", tuple(outcomes))


@cache
def _truncated_run():
    cfg = SimConfig(
        d=2,
        n_particles=400,
        dt=1e-2,
        t_end=2.0,
        seed=SEED_DECAY + 1,
        objective=quadratic(2),
        observable=ObservableMap("saturated", m_g=2.0),
        kernel=KernelSpec("logistic", a=1.0, b=1.0),
        init=InitialLaw.gaussian(center=(1.0, 1.0), sigma=1.0, lambda_lo=0.3),
        sharpness=4.0,
        noise_strength=0.5,
        mode="full",
        truncation_radius=3.0,
    )
    return cfg, simulate(cfg, record_stride=1)


def suite_meanfield() -> SuiteResult:
    stats, elapsed = meanfield_stats()
    outcomes = []
    for size in MEANFIELD_SIZES:
        s = stats[size]
        half_width = CI_Z_99 * s.stderr
        outcomes.append(
            _outcome(
                f"residual mean compatible with 0 at N = {size}",
                abs(s.mean) <= half_width,
                f"mean {s.mean:+.2e}, 99% CI half-width {half_width:.2e}, "
                f"{s.replicas} replicas",
            )
        )
    ratio = stats[MEANFIELD_SIZES[0]].variance / stats[MEANFIELD_SIZES[1]].variance
    outcomes.append(
        _outcome(
            "residual variance scales like 1/N",
            2.5 <= ratio <= 6.5,
            f"Var({MEANFIELD_SIZES[0]}) / Var({MEANFIELD_SIZES[1]}) = {ratio:.2f} "
            f"(expect about 4), {elapsed:.0f}s total",
        )
    )
    return SuiteResult("meanfield", tuple(outcomes))


def suite_concentration() -> SuiteResult:
    table, elapsed = concentration_table()
    values = [table[n] for n in CONCENTRATION_SHARPNESS]
    monotone = all(a >= b for a, b in zip(values, values[1:]))
    outcomes = [
        _outcome(
            "terminal spread non-increasing in sharpness",
            monotone,
            ", ".join(f"n={n:g}: {table[n]:.3g}" for n in CONCENTRATION_SHARPNESS)
            + f" ({elapsed:.0f}s)",
        ),
        _outcome(
            "terminal spread small at the sharpest setting",
            values[-1] <= 1e-2,
            f"m2_sq(T) = {values[-1]:.3g} <= 1e-2 at n = {CONCENTRATION_SHARPNESS[-1]:g}",
        ),
    ]
    cfg, record = concentration_record_sharp()
    fit = mass_bound_fit(record, MASS_RADIUS)
    floor = fit.initial_smoothed_mass * np.exp(-fit.fitted_rate * record.times)
    series = record.mass_ball[MASS_RADIUS]
    outcomes.append(
        _outcome(
            "mass near the minimizer stays positive with an exponential floor",
            fit.floor_ok
            and not fit.vacuous
            and fit.initial_smoothed_mass > 0
            and bool(np.all(series >= floor - 1e-12)),
            f"min mass {series.min():.3g}, smoothed initial "
            f"{fit.initial_smoothed_mass:.3g}, fitted rate {fit.fitted_rate:.3g}",
        )
    )
    return SuiteResult("concentration", tuple(outcomes))


SUITES = {
    "contracts": suite_contracts,
    "decay": suite_decay,
    "bounds": suite_bounds,
    "meanfield": suite_meanfield,
    "concentration": suite_concentration,
}


def run_suite(name: str) -> SuiteResult:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; known: {', '.join(SUITES)}")
    return SUITES[name]()
