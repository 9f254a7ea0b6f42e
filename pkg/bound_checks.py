"""Checks of the bounds the limit theorem is built on, one function per bound.

    Each check takes plain parameters, does its own sampling from fixed seeds and
    returns a Verdict: a name, pass/fail, and a JSON-friendly detail dict with the
    numbers behind the decision.

    Analytic checks (exact up to quadrature tolerance):
        - tail bound         P(|X| >= t) <= C_alpha sigma**alpha t**-alpha over the t grid
        - Cauchy tail        tail_probability at alpha=1 against 1 - (2/pi) atan(t/sigma)
        - variance bound     Var(X 1[|X| <= K]) <= c K**(2-alpha) sigma**alpha over the K grid

    Monte Carlo checks (3 standard errors of slack):
        - large part         P(S_n^L != 0) + analytic remainder decreasing in n, below the union bound
        - under-truncation   second moment of n**(-1/alpha) V_under stays within a factor 2 of c/log2(n)
        - dispersion         ECF estimate of sigma**alpha within 2%; 2**alpha for the doubled variable

    Per-replica hard invariants (counted, must be zero):
        - split identity     X = Y + over + under entry by entry, summed exactly
        - quantizer          |Z - Y| <= 1/d_k, Z = 0 <=> Y = 0, Z on the grid
        - Z/Y gap            |S_n^M(Z) - S_n^M(Y)| <= (1/alpha) log2(n)

    inject_fault=True moves one quantized entry off the grid before counting, so
    the quantizer check can be seen to fail.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from typing import List, Optional, Sequence

import numpy as np

import array_builder as ab
import clt_simulator as sim
import gof_stats
import stable_core

log = logging.getLogger(__name__)

BOUND_RTOL = 1e-8
# quadrature noise allowed when comparing a computed probability with its bound

CAUCHY_ATOL = 1e-6

DISPERSION_RTOL = 0.02

DISPERSION_THETAS = (0.25, 0.5, 0.75)

DEPENDENT_PAIR_ALPHA = 0.7


@dataclasses.dataclass(frozen=True)
class Verdict:
    name: str
    passed: bool
    detail: dict = dataclasses.field(default_factory=dict)

    def to_json(self) -> dict:
        return {"name": self.name, "pass": bool(self.passed), "detail": self.detail}


def tail_bound_check(alpha: float, sigma_steps: Sequence[int] = (0, 4, 8)) -> Verdict:
    """
    Tail bound over the calibration grid, at sigma = 2**(-j/4) for j in sigma_steps.
    Scaling keeps t/sigma on (or beyond) the grid the constant was calibrated on.
    """
    cert = stable_core.calibrate_tail_constant(alpha)
    worst_ratio, violations = 0.0, []
    for j in sigma_steps:
        params = stable_core.make_params(alpha, 2.0 ** (-j / 4))
        for t in cert.t_grid:
            probability = stable_core.tail_probability(params, t)
            bound = stable_core.tail_bound(params, t, cert)
            worst_ratio = max(worst_ratio, probability / bound)
            if probability > bound * (1 + BOUND_RTOL) + stable_core.CDF_TOLERANCE:
                violations.append([params.sigma, t, probability, bound])
    return Verdict(
        "tail_bound",
        not violations,
        {"certificate": cert.to_dict(), "worst_ratio": worst_ratio, "violations": violations},
    )


def cauchy_tail_check(sigma: float = 1.0, exponents: Sequence[int] = range(17)) -> Verdict:
    """
    tail_probability at alpha=1 against the closed-form Cauchy tail, t = 2**i.
    """
    params = stable_core.make_params(1.0, sigma)
    worst = 0.0
    for i in exponents:
        t = 2.0**i
        exact = 1 - 2 / math.pi * math.atan(t / sigma)
        worst = max(worst, abs(stable_core.tail_probability(params, t) - exact))
    return Verdict("cauchy_tail", worst <= CAUCHY_ATOL, {"max_abs_error": worst, "tolerance": CAUCHY_ATOL})


def variance_bound_check(alpha: float) -> Verdict:
    """
    Truncated variance against its bound over the K grid at sigma = 1 and 1/2 (the
    latter stopping where K/sigma leaves the grid).
    """
    cert = stable_core.calibrate_variance_constant(alpha)
    violations, worst_ratio = [], 0.0
    for sigma in (1.0, 0.5):
        params = stable_core.make_params(alpha, sigma)
        for K in cert.k_grid:
            if K / sigma > cert.k_grid[-1]:
                continue
            variance = stable_core.truncated_variance(params, K)
            bound = stable_core.variance_bound(params, K, cert)
            worst_ratio = max(worst_ratio, variance / bound)
            if variance > bound * (1 + BOUND_RTOL):
                violations.append([sigma, K, variance, bound])
    return Verdict(
        "variance_bound",
        not violations,
        {"certificate": cert.to_dict(), "worst_ratio": worst_ratio, "violations": violations},
    )


def large_part_check(
    alpha: float,
    n_grid: Sequence[int],
    replicas: int,
    master_seed: int = 0,
    epsilon_tail: float = sim.DEFAULT_EPSILON_TAIL,
    budget_draws: int = sim.DEFAULT_BUDGET_DRAWS,
    workers: int = 1,
) -> Verdict:
    """
    Empirical P(S_n^L != 0) plus the remainder beyond the cap must decrease along
    n and stay under 2 n C_alpha sum_{k > k_mid} 2**(-alpha k)/k.
    """
    spec = ab.ArraySpec(alpha, master_seed)
    cert = stable_core.calibrate_tail_constant(alpha)
    values, errors, rows = [], [], []
    for n in n_grid:
        run = sim.simulate(
            spec,
            n,
            replicas,
            parts=(sim.Part.LARGE,),
            epsilon_tail=epsilon_tail,
            budget_draws=budget_draws,
            workers=workers,
        )
        frequency = run.large_nonzero_fraction()
        se = math.sqrt(max(frequency * (1 - frequency), 1.0 / replicas) / replicas)
        estimate = frequency + run.ranges.large_tail_bound
        union = sim.large_union_bound(alpha, n, cert)
        values.append((n, estimate))
        errors.append(se)
        rows.append(
            {
                "n": n,
                "nonzero_fraction": frequency,
                "remainder": run.ranges.large_tail_bound,
                "union_bound": union,
                "se": se,
                "within_union_bound": estimate <= union + 3 * se,
                "tail_target_met": run.ranges.tail_target_met,
            }
        )
    trend = gof_stats.trend_check(values, gof_stats.Trend.DECREASING, errors)
    passed = trend.passed and all(row["within_union_bound"] for row in rows)
    return Verdict("large_part_vanishing", passed, {"grid": rows, "trend": trend.to_json()})


def under_truncation_trend_check(
    alpha: float, n_grid: Sequence[int], replicas: int, master_seed: int = 0
) -> Verdict:
    """
    Second moment of n**(-1/alpha) V_under along n, expected to behave like c/log2(n).
    The same statistic for the small part's G_under is reported alongside.
    """
    spec = ab.ArraySpec(alpha, master_seed)
    values, errors, rows = [], [], []
    for n in n_grid:
        scale = n ** (-1.0 / alpha)
        v_under = np.array([sim.v_split_diagnostics(spec, n, r).v_under for r in range(replicas)]) * scale
        g_under = np.array([sim.g_split_diagnostics(spec, n, r).g_under for r in range(replicas)]) * scale
        squares = v_under**2
        moment = float(squares.mean())
        se = float(squares.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else 0.0
        values.append((n, moment))
        errors.append(se)
        rows.append({"n": n, "v_under_second_moment": moment, "se": se, "g_under_second_moment": float((g_under**2).mean())})
    trend = gof_stats.trend_check(values, gof_stats.Trend.INVERSE_LOG, errors)
    return Verdict("v_under_trend", trend.passed, {"grid": rows, "trend": trend.to_json()})


def dispersion_check(master_seed: int = 0, draws: int = 10**6, alpha: Optional[float] = None) -> Verdict:
    """
    ECF dispersion estimate on i.i.d. SaS(1) draws, and on the fully dependent pair
    X + X at alpha=0.7, whose dispersion 2**alpha stays below 2 = 1 + 1.
    """
    rows = []
    passed = True
    for a in sorted({1.0, DEPENDENT_PAIR_ALPHA} | ({alpha} if alpha else set())):
        x = ab.iid_sample(stable_core.make_params(a), master_seed, draws)
        single = stable_core.dispersion_estimate(gof_stats.EmpiricalSample(x), a, DISPERSION_THETAS)
        doubled = stable_core.dispersion_estimate(gof_stats.EmpiricalSample(2 * x), a, DISPERSION_THETAS)
        ratio = doubled / single
        ok = abs(single - 1) <= DISPERSION_RTOL and abs(ratio - 2**a) <= DISPERSION_RTOL * 2**a
        if a == DEPENDENT_PAIR_ALPHA:
            ok = ok and ratio <= 2
        passed = passed and ok
        rows.append({"alpha": a, "estimate": single, "doubled_ratio": ratio, "expected_ratio": 2**a, "pass": ok})
    return Verdict("dispersion_estimate", passed, {"draws": draws, "rows": rows})


def identity_check(alpha: float, n: int, replicas: int, master_seed: int = 0) -> Verdict:
    """
    The over/under split of the medium part must be exact for every replica.
    """
    spec = ab.ArraySpec(alpha, master_seed)
    failures = []
    over_nonzero = 0
    for replica in range(replicas):
        split = sim.v_split_diagnostics(spec, n, replica)
        over_nonzero += split.v_over != 0
        if split.identity_residual != 0.0:
            failures.append([replica, split.identity_residual])
    cert = stable_core.calibrate_tail_constant(alpha)
    return Verdict(
        "split_identity",
        not failures,
        {
            "n": n,
            "violations": len(failures),
            "failures": failures[:10],
            "v_over_nonzero_fraction": over_nonzero / replicas,
            "v_over_union_bound": sim.v_over_union_bound(alpha, n, cert),
        },
    )


def quantizer_check(
    alpha: float, n: int, replicas: int, master_seed: int = 0, inject_fault: bool = False
) -> Verdict:
    """
    Every Y and Z entry the medium part of a run reads, checked against the
    quantizer's contract.
    """
    spec = ab.ArraySpec(alpha, master_seed)
    k_small_max, k_mid_max = sim.range_bounds(alpha, n)
    violations = 0
    checked = 0
    for replica in range(replicas):
        for k in range(k_small_max + 1, k_mid_max + 1):
            d = ab.row_length(spec, k)
            for columns in (range(1, n + 1), range(d + 1, d + n + 1)):
                y = ab.window_array(spec, k, columns, replica, ab.Variant.Y, n_max=n)
                z = ab.quantize_array(spec, k, y)
                if inject_fault and replica == 0 and checked == 0:
                    z = z.copy()
                    z[0] += 0.5 / d if z[0] else ab.lower_cutoff(k) + 0.5 / d
                    log.warning(f"injected an off-grid entry into row {k}, column {columns.start}")
                violations += ab.quantizer_violations(spec, k, y, z)
                checked += len(columns)
    return Verdict(
        "quantizer", violations == 0, {"n": n, "entries": checked, "violations": violations, "inject_fault": inject_fault}
    )


def gap_check(run: sim.SimulationRun) -> Verdict:
    """
    Hard per-replica invariants of a finished run: exact total, Z/Y gap, quantizer.
    """
    counts = run.invariant_violations()
    return Verdict(
        "run_invariants",
        not any(counts.values()),
        {
            "n": run.ranges.n,
            "gap_bound": math.log2(run.ranges.n) / run.spec.alpha,
            "max_gap": max(s.mid_zy_gap for s in run.sums),
            **counts,
        },
    )


def run_bound_suite(
    alpha: float,
    n_grid: Sequence[int],
    replicas: int,
    master_seed: int = 0,
    epsilon_tail: float = sim.DEFAULT_EPSILON_TAIL,
    budget_draws: int = sim.DEFAULT_BUDGET_DRAWS,
    workers: int = 1,
    inject_fault: bool = False,
    dispersion_draws: int = 10**6,
) -> List[Verdict]:
    verdicts = [
        tail_bound_check(alpha),
        cauchy_tail_check(),
        variance_bound_check(alpha),
        dispersion_check(master_seed, dispersion_draws, alpha),
        large_part_check(alpha, n_grid, replicas, master_seed, epsilon_tail, budget_draws, workers),
        under_truncation_trend_check(alpha, n_grid, replicas, master_seed),
    ]
    for n in n_grid:
        verdicts.append(identity_check(alpha, n, replicas, master_seed))
        verdicts.append(quantizer_check(alpha, n, min(replicas, 100), master_seed, inject_fault))
        run = sim.simulate(
            ab.ArraySpec(alpha, master_seed),
            n,
            min(replicas, 100),
            parts=(sim.Part.MEDIUM,),
            budget_draws=budget_draws,
            workers=workers,
        )
        verdicts.append(gap_check(run))
    for verdict in verdicts:
        log.info(f"{verdict.name}: pass={verdict.passed}")
    return verdicts
