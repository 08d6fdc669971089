"""
Acceptance checks run by `verify`. Each check returns a CheckResult; a suite is an ordered
tuple of checks sharing one master seed.
"""
import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from loguru import logger
from scipy import stats

from lab.core import analytic, coalescing, ising, voter
from lab.core.clocks import derive_seed
from lab.core.errors import ConfigError
from lab.core.protocol import CheckResult, GuardSettings
from shared.logger import add_error_sink, ensure_global_logger

ensure_global_logger()
add_error_sink("checks.py")


@dataclass(frozen=True)
class CheckContext:
    """
    :param seed: master seed of the suite
    :param workers: worker processes for Monte Carlo estimates
    :param full: True for the full suite, which uses acceptance-scale sample sizes
    """
    seed: int
    workers: int = 1
    full: bool = False
    guards: GuardSettings = GuardSettings()

    def sub_seed(self, tag: int) -> int:
        return derive_seed(self.seed, tag) & (2**64 - 1)

    @property
    def samples(self) -> int:
        return 100_000 if self.full else 20_000


def brute_force_majority_flip(p: float) -> float:
    """Probability the majority of three fair votes changes when each vote flips w.p. p."""
    total = 0.0
    for votes in itertools.product((-1, 1), repeat=3):
        for flips in itertools.product((False, True), repeat=3):
            weight = math.prod(p if f else 1 - p for f in flips) / 8
            after = [-v if f else v for v, f in zip(votes, flips)]
            if voter.majority3(*votes) != voter.majority3(*after):
                total += weight
    return total


def check_rho1_law(ctx: CheckContext) -> CheckResult:
    measured = {}
    passed = True
    for T in (0.5, 1.0, 2.0):
        est = coalescing.estimate_rho(1, T, ctx.samples, ctx.sub_seed(1), workers=ctx.workers, guards=ctx.guards)
        target = -math.expm1(-T)
        measured[str(T)] = {"estimate": est.value, "standard_error": est.standard_error, "target": target}
        passed &= est.within(target)
    return CheckResult("rho1_law", passed, measured, "3 SE")


def check_closed_form(ctx: CheckContext) -> CheckResult:
    at_zero = analytic.closed_form_rho_inf(0.0)
    delta = 1e-4
    r = analytic.closed_form_rho_inf
    slope = (-3 * r(0.0) + 4 * r(delta) - r(2 * delta)) / (2 * delta)
    residual = analytic.ode_residual(analytic.ModelSpec.coalescing(), analytic.closed_form_grid(1e-3, 15.0))
    passed = abs(at_zero) < 1e-12 and abs(slope - 1 / math.sqrt(3)) < 1e-6 and residual < 1e-5
    measured = {"rho_inf_0": at_zero, "slope_0": slope, "ode_residual": residual}
    return CheckResult("closed_form", passed, measured, {"rho_inf_0": 1e-12, "slope_0": 1e-6, "ode_residual": 1e-5})


def check_fixed_point_residual(ctx: CheckContext) -> CheckResult:
    model = analytic.ModelSpec.coalescing()
    residual = analytic.fixed_point_residual(model, analytic.closed_form_grid(0.01, 15.0))
    return CheckResult("fixed_point_residual", residual < 5e-3, residual, 5e-3)


def check_agreement_triangle(ctx: CheckContext) -> CheckResult:
    model = analytic.ModelSpec.coalescing()
    limit = analytic.chi_iterate(model, 200, 0.01, 15.0)[-1]
    ode = analytic.solve_heteroclinic(model, 0.01, 15.0)
    closed = analytic.closed_form_grid(0.01, 15.0)
    measured = {
        "iterate_vs_ode": analytic.sup_distance(limit, ode, upto=10.0),
        "iterate_vs_closed": analytic.sup_distance(limit, closed, upto=10.0),
        "ode_vs_closed": analytic.sup_distance(ode, closed, upto=10.0),
    }
    return CheckResult("agreement_triangle", max(measured.values()) < 5e-3, measured, 5e-3)


def check_majority_polynomial(ctx: CheckContext) -> CheckResult:
    grid = np.round(np.linspace(0.0, 1.0, 11), 12)
    worst = max(abs(voter.majority_flip_prob(p) - brute_force_majority_flip(p)) for p in grid)
    return CheckResult("majority_polynomial", worst < 1e-12, worst, 1e-12)


def check_voter_ode_slope(ctx: CheckContext) -> CheckResult:
    solution = analytic.solve_heteroclinic(analytic.ModelSpec.voter(), 0.01, 25.0)
    slope = analytic.log_decay_slope(solution, 10.0, 20.0)
    return CheckResult("voter_ode_slope", abs(slope + 0.5) <= 0.01, slope, {"target": -0.5, "tolerance": 0.01})


def check_rate_sum(ctx: CheckContext) -> CheckResult:
    result = ising.infection_rate_sum(2.0, ising.schedule_by_id("ksq"), 1e-6)
    target = math.exp(-4) / (1 - 3 * math.exp(-8)) ** 2
    passed = abs(result.value - target) < 1e-6 and result.bounded
    measured = {"value": result.value, "terms": result.terms, "bounded": result.bounded, "target": target}
    return CheckResult("rate_sum", passed, measured, 1e-6)


def check_infection(ctx: CheckContext) -> CheckResult:
    run = ising.infection_simulate(12, 2.0, ising.schedule_by_id("ksq"), 200.0, ctx.sub_seed(2), guards=ctx.guards)
    passed = run.time_average < 0.1 and run.violations == 0 and run.max_jump <= 13
    measured = {
        "time_average": run.time_average,
        "violations": run.violations,
        "originations": run.originations,
        "cures": run.cures,
    }
    return CheckResult("infection", passed, measured, {"time_average": 0.1, "violations": 0})


def check_monotone_couplings(ctx: CheckContext) -> CheckResult:
    # chi_iterate raises if an iterate rises above its predecessor
    analytic.chi_iterate(analytic.ModelSpec.coalescing(), 20, 0.01, 15.0)
    analytic.chi_iterate(analytic.ModelSpec.voter(), 20, 0.01, 15.0)
    pairs = 10_000 if ctx.full else 2_000
    violations = coalescing.coupling_violations(pairs, 2, 4, 1.0, ctx.sub_seed(3))
    return CheckResult("monotone_couplings", violations == 0, {"coupling_violations": violations, "pairs": pairs}, 0)


def check_lattice_demo(ctx: CheckContext) -> CheckResult:
    density = coalescing.lattice_density_decay(32, 2, 50, ctx.sub_seed(4), guards=ctx.guards)
    monotone = bool(np.all(np.diff(density) <= 0))
    final = float(density[-1])
    return CheckResult("lattice_demo", monotone and final < 0.2, {"final_density": final, "non_increasing": monotone}, 0.2)


def check_sibling_independence(ctx: CheckContext) -> CheckResult:
    samples = 20_000 if ctx.full else 4_000
    corr, se = coalescing.sibling_block_correlation(2, samples, ctx.sub_seed(5))
    return CheckResult("sibling_independence", abs(corr) <= 4 * se, corr, 4 * se)


def check_voter_marginal(ctx: CheckContext) -> CheckResult:
    seed = ctx.sub_seed(6)
    run = ising.coupled_simulate(4, 3.0, ising.schedule_by_id("ksq"), 10.0, seed, guards=ctx.guards)
    matches = ising.voter_marginal_matches(run, 10.0, seed)
    passed = matches and run.disagreements[0] == 0
    return CheckResult("voter_marginal", passed, {"matches": matches, "initial_disagreements": run.disagreements[0]}, 0)


def check_coalescing_vs_quadrature(ctx: CheckContext) -> CheckResult:
    target = analytic.grid_value(analytic.rho_n(analytic.ModelSpec.coalescing(), 8), 1.0)
    est = coalescing.estimate_rho(8, 1.0, ctx.samples, ctx.sub_seed(7), workers=ctx.workers, guards=ctx.guards)
    measured = {"estimate": est.value, "standard_error": est.standard_error, "target": target}
    return CheckResult("coalescing_n8_vs_quadrature", est.within(target), measured, "3 SE")


def check_voter_vs_quadrature(ctx: CheckContext) -> CheckResult:
    target = analytic.grid_value(analytic.rho_bar_n(analytic.ModelSpec.voter(), 6), 1.0)
    est = voter.estimate_autocorr(6, 1.0, 10_000, ctx.sub_seed(8), workers=ctx.workers, guards=ctx.guards)
    measured = {"estimate": est.value, "standard_error": est.standard_error, "target": target}
    return CheckResult("voter_n6_vs_quadrature", est.within(target), measured, "3 SE")


def check_voter_mixing(ctx: CheckContext) -> CheckResult:
    times = np.array([2.0, 3.0, 4.0, 5.0, 6.0])
    curve = voter.estimate_autocorr_curve(
        6, times.tolist(), 6_000, ctx.sub_seed(9), workers=ctx.workers, guards=ctx.guards
    )
    values = np.array([est.value for est in curve])
    if np.any(values <= 0):
        return CheckResult("voter_mixing", False, values.tolist(), [-1.0, -0.25], "non-positive autocorrelation")
    slope = float(np.polyfit(times, np.log(values), 1)[0])
    return CheckResult("voter_mixing", -1.0 <= slope <= -0.25, slope, [-1.0, -0.25])


def check_ising_bound(ctx: CheckContext) -> CheckResult:
    schedule = ising.schedule_by_id("ksq")
    measured = {}
    passed = True
    for beta in (1.0, 3.0):
        run = ising.coupled_simulate(8, beta, schedule, 50.0, ctx.sub_seed(10), guards=ctx.guards)
        for layer, opportunities in sorted(run.opportunities.items()):
            if opportunities == 0:
                continue
            created = run.creations[layer]
            bound = ising.disagreement_bound(layer, beta, schedule)
            p_value = stats.binomtest(created, opportunities, bound, alternative="greater").pvalue
            measured[f"beta={beta},layer={layer}"] = {
                "creations": created,
                "opportunities": opportunities,
                "bound": bound,
                "p_value": float(p_value),
            }
            passed &= p_value >= 0.01
    return CheckResult("ising_disagreement_bound", passed, measured, "one-sided p >= 0.01")


def check_rho_decreasing(ctx: CheckContext) -> CheckResult:
    estimates = [
        coalescing.estimate_rho(n, 1.0, 20_000, ctx.sub_seed(11), workers=ctx.workers, guards=ctx.guards)
        for n in range(1, 9)
    ]
    passed = all(
        b.value <= a.value + 3 * math.hypot(a.standard_error, b.standard_error)
        for a, b in zip(estimates, estimates[1:])
    )
    return CheckResult("rho_n_decreasing", passed, [e.value for e in estimates], "3 SE")


def check_layer_independence(ctx: CheckContext) -> CheckResult:
    samples = 4_000
    stat = voter.layer_independence_stat(2, 4, samples, ctx.sub_seed(12))
    limit = 4 / math.sqrt(samples)
    return CheckResult("voter_layer_independence", stat <= limit, stat, limit)


FAST_SUITE: tuple[Callable[[CheckContext], CheckResult], ...] = (
    check_rho1_law,
    check_closed_form,
    check_fixed_point_residual,
    check_agreement_triangle,
    check_majority_polynomial,
    check_voter_ode_slope,
    check_rate_sum,
    check_infection,
    check_monotone_couplings,
    check_lattice_demo,
    check_sibling_independence,
    check_voter_marginal,
)

FULL_SUITE = FAST_SUITE + (
    check_coalescing_vs_quadrature,
    check_voter_vs_quadrature,
    check_voter_mixing,
    check_ising_bound,
    check_rho_decreasing,
    check_layer_independence,
)

SUITES = {"fast": FAST_SUITE, "full": FULL_SUITE}


def run_suite(
    name: str,
    seed: int,
    *,
    workers: int = 1,
    guards: GuardSettings = GuardSettings(),
) -> list[CheckResult]:
    suite = SUITES.get(name)
    if suite is None:
        raise ConfigError(f"unknown suite '{name}' (known: {', '.join(SUITES)})")
    ctx = CheckContext(seed, workers, name == "full", guards)
    results = []
    for check in suite:
        result = check(ctx)
        if result.passed:
            logger.info(f"check {result.name}: pass")
        else:
            logger.error(f"check {result.name}: FAIL (measured {result.measured}, tolerance {result.tolerance})")
        results.append(result)
    return results
