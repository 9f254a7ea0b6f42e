# -*- coding: utf-8 -*-
r"""Monte Carlo of n**(-1/alpha) S_n(f) through its small / medium / large split.

    The Birkhoff sum of f = sum_k (f_k - f_k o T**d_k) over n steps is simulated in
    distribution from the triangular array, one scale index k at a time:

        small   k in [1, k_small_max]              k_small_max = floor((1/alpha - 1/2) log2 n)
        medium  k in (k_small_max, k_mid_max]      k_mid_max   = floor((1/alpha) log2 n)
        large   k in (k_mid_max, k_large_cap]      cap chosen so the neglected tail
                                                   2 n C_alpha sum_{k > cap} 2**(-alpha k)/k
                                                   is below epsilon_tail

    medium and large rows contribute sum_{j=1..n} W_k(j) - W_k(j + d_k), which needs
    columns 1..n and d_k+1..d_k+n (d_k >= n there).

    the small part has two modes:
        g_only   G_n = sum_k sum_{j=1..d_k} W_k(j)
        coupled  sum_{j=1..n} W_k(j) - W_k(j + d_k) on rows extended to d_k + n,
                 computed as sum_{j<=d_k} W_k(j) - sum_{j<=d_k} W_k(n + j)

    Sums are taken with math.fsum, so a per-replica value is the correctly rounded
    sum of its entries regardless of order, and the result of a run doesn't depend
    on how replicas were split between worker threads.

    Typical usage:

    import array_builder as ab
    import clt_simulator as sim

    spec = ab.ArraySpec(alpha=1.0, master_seed=42)
    run = sim.simulate(spec, n=4096, replicas=1000, variant="Z", workers=4)
    run.sample().values  # sorted n**(-1/alpha) S_n
"""
from __future__ import annotations

import dataclasses
import enum
import logging
import math
import threading
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

import array_builder as ab
import gof_stats
import stable_core

log = logging.getLogger(__name__)

DEFAULT_EPSILON_TAIL = 1e-3

DEFAULT_BUDGET_DRAWS = 2 * 10**10


class BudgetError(RuntimeError):
    """Raised before any work when a run would need more draws than the configured budget"""

    def __init__(self, estimated_draws: int, budget_draws: int):
        super().__init__(f"run needs an estimated {estimated_draws:,} draws, budget is {budget_draws:,}")
        self.estimated_draws = estimated_draws
        self.budget_draws = budget_draws


@enum.unique
class Part(str, enum.Enum):
    SMALL = "S"
    MEDIUM = "M"
    LARGE = "L"


ALL_PARTS = (Part.SMALL, Part.MEDIUM, Part.LARGE)


@enum.unique
class Mode(str, enum.Enum):
    G_ONLY = "g_only"
    COUPLED = "coupled"


def _snap_floor(x: float) -> int:
    """floor, ignoring representation noise just below an integer"""
    nearest = round(x)
    if abs(x - nearest) < 1e-9:
        return int(nearest)
    return math.floor(x)


def range_bounds(alpha: float, n: int) -> Tuple[int, int]:
    """(k_small_max, k_mid_max) for a sum of n steps"""
    if n < 2:
        raise stable_core.DomainError(f"n must be >= 2: {n}")
    log_n = math.log2(n)
    return _snap_floor((1 / alpha - 0.5) * log_n), _snap_floor(log_n / alpha)


def _tail_sum(alpha: float, start: int) -> float:
    """sum_{k >= start} 2**(-alpha k) / k"""
    total, k = 0.0, start
    while True:
        term = 2.0 ** (-alpha * k) / k
        total += term
        if term <= 1e-17 * total:
            return total
        k += 1


def large_remainder(alpha: float, n: int, cap: int, cert: stable_core.TailBoundCert) -> float:
    """2 n C_alpha sum_{k > cap} 2**(-alpha k) / k: union bound on any nonzero entry beyond cap"""
    return 2 * n * cert.c_alpha * _tail_sum(alpha, cap + 1)


@dataclasses.dataclass(frozen=True)
class ScaleRanges:
    alpha: float
    n: int
    k_small_max: int
    k_mid_max: int
    k_large_cap: int
    large_tail_bound: float
    """analytic bound on P(some entry beyond the cap is nonzero)"""
    epsilon_tail: float
    tail_target_met: bool = True
    """False when the row-length guard stopped the cap before large_tail_bound < epsilon_tail"""

    @property
    def small(self) -> range:
        return range(1, self.k_small_max + 1)

    @property
    def medium(self) -> range:
        return range(self.k_small_max + 1, self.k_mid_max + 1)

    @property
    def large(self) -> range:
        return range(self.k_mid_max + 1, self.k_large_cap + 1)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def scale_ranges(
    alpha: float,
    n: int,
    epsilon_tail: float = DEFAULT_EPSILON_TAIL,
    cert: Optional[stable_core.TailBoundCert] = None,
) -> ScaleRanges:
    if not 0 < epsilon_tail < 1:
        raise stable_core.DomainError(f"epsilon_tail must be inside (0, 1): {epsilon_tail}")
    k_small_max, k_mid_max = range_bounds(alpha, n)
    guard = ab.max_guarded_k(alpha)
    if k_mid_max > guard:
        raise ab.RangeError(
            f"medium rows up to k={k_mid_max} exceed the row-length guard (k <= {guard}) at alpha={alpha}, n={n}"
        )
    cert = cert or stable_core.calibrate_tail_constant(alpha)
    cap = k_mid_max
    remainder = large_remainder(alpha, n, cap, cert)
    while remainder >= epsilon_tail and cap < guard:
        cap += 1
        remainder = large_remainder(alpha, n, cap, cert)
    met = remainder < epsilon_tail
    if not met:
        log.warning(
            f"large range capped at k={cap} by the row-length guard: tail bound {remainder:.3g} >= {epsilon_tail}"
        )
    return ScaleRanges(
        alpha=alpha,
        n=n,
        k_small_max=k_small_max,
        k_mid_max=k_mid_max,
        k_large_cap=cap,
        large_tail_bound=remainder,
        epsilon_tail=epsilon_tail,
        tail_target_met=met,
    )


# theory -------------------------------------------------------------------------------- #


def theoretical_sigma_n(alpha: float, n: int) -> float:
    """sigma_n**alpha = 2 sum_{k in medium} 1/k, the exact dispersion of n**(-1/alpha) S_n^M(X)"""
    k_small_max, k_mid_max = range_bounds(alpha, n)
    if k_mid_max <= k_small_max:
        raise stable_core.DomainError(f"medium range is empty at alpha={alpha}, n={n}")
    return math.fsum(2.0 / k for k in range(k_small_max + 1, k_mid_max + 1))


def limit_sigma_alpha(alpha: float) -> float:
    """2 ln(2 / (2 - alpha)), the limit of sigma_n**alpha"""
    return 2 * math.log(2 / (2 - alpha))


def theoretical_sigma_small(alpha: float, n: int) -> float:
    """(1/n) sum_{k <= k_small_max} d_k / k, the exact dispersion of n**(-1/alpha) G_n(X)"""
    k_small_max, _ = range_bounds(alpha, n)
    return math.fsum(ab.row_length(ab.ArraySpec(alpha), k) / k for k in range(1, k_small_max + 1)) / n


def large_union_bound(alpha: float, n: int, cert: stable_core.TailBoundCert) -> float:
    """2 n C_alpha sum_{k > k_mid_max} 2**(-alpha k) / k"""
    return large_remainder(alpha, n, range_bounds(alpha, n)[1], cert)


def v_over_union_bound(alpha: float, n: int, cert: stable_core.TailBoundCert) -> float:
    """sum over medium k of 2 d_k C_alpha 2**(-alpha k**2) / k, bounding P(v_over != 0)"""
    k_small_max, k_mid_max = range_bounds(alpha, n)
    return math.fsum(
        2 * ab.row_length(ab.ArraySpec(alpha), k) * cert.c_alpha * 2.0 ** (-alpha * k * k) / k
        for k in range(k_small_max + 1, k_mid_max + 1)
    )


def target_scale(alpha: float, target_sigma: Optional[float]) -> float:
    """factor taking the limit law SaS(sigma_limit) to SaS(target_sigma)"""
    if target_sigma is None:
        return 1.0
    stable_core.make_params(alpha, target_sigma)
    return target_sigma / limit_sigma_alpha(alpha) ** (1 / alpha)


# per-replica parts --------------------------------------------------------------------- #


def _variant(spec: ab.ArraySpec, k: int, x: np.ndarray, variant: ab.Variant) -> np.ndarray:
    if variant is ab.Variant.X:
        return x
    y = ab.truncate_array(k, x)
    if variant is ab.Variant.Y:
        return y
    return ab.quantize_array(spec, k, y)


def _coboundary_raw(spec: ab.ArraySpec, k: int, n: int, replica: int) -> Tuple[np.ndarray, np.ndarray]:
    """raw entries at columns 1..n and d_k+1..d_k+n"""
    d = ab.row_length(spec, k)
    plus = ab.window_array(spec, k, range(1, n + 1), replica, ab.Variant.X, n_max=n)
    minus = ab.window_array(spec, k, range(d + 1, d + n + 1), replica, ab.Variant.X, n_max=n)
    return plus, minus


@dataclasses.dataclass(frozen=True)
class MediumPart:
    value: float
    zy_gap: float
    """|S_n^M(Z) - S_n^M(Y)|"""
    v_over_nonzero: bool
    quantizer_violations: int = 0


def _medium(
    spec: ab.ArraySpec, n: int, replica: int, variant: ab.Variant, ks: range
) -> MediumPart:
    signed_w: List[np.ndarray] = []
    signed_gap: List[np.ndarray] = []
    over = False
    violations = 0
    for k in ks:
        for x, sign in zip(_coboundary_raw(spec, k, n, replica), (1.0, -1.0)):
            over = over or bool(np.any(np.abs(x) > ab.upper_cutoff(k)))
            y = ab.truncate_array(k, x)
            z = ab.quantize_array(spec, k, y)
            violations += ab.quantizer_violations(spec, k, y, z)
            w = {ab.Variant.X: x, ab.Variant.Y: y, ab.Variant.Z: z}[variant]
            signed_w.append(sign * w)
            # z - y is exact: both are within 1/d_k of each other
            nonzero = y != 0
            signed_gap.append(sign * (z[nonzero] - y[nonzero]))
    value = math.fsum(np.concatenate(signed_w)) if signed_w else 0.0
    gap = abs(math.fsum(np.concatenate(signed_gap))) if signed_gap else 0.0
    return MediumPart(value=value, zy_gap=gap, v_over_nonzero=over, quantizer_violations=violations)


def sum_medium(
    spec: ab.ArraySpec, n: int, replica: int, variant: Union[ab.Variant, str] = ab.Variant.Z
) -> float:
    k_small_max, k_mid_max = range_bounds(spec.alpha, n)
    return _medium(spec, n, replica, ab.Variant(variant), range(k_small_max + 1, k_mid_max + 1)).value


def sum_small(
    spec: ab.ArraySpec,
    n: int,
    replica: int,
    variant: Union[ab.Variant, str] = ab.Variant.Z,
    mode: Union[Mode, str] = Mode.COUPLED,
) -> float:
    variant, mode = ab.Variant(variant), Mode(mode)
    k_small_max, _ = range_bounds(spec.alpha, n)
    terms: List[np.ndarray] = []
    for k in range(1, k_small_max + 1):
        d = ab.row_length(spec, k)
        terms.append(ab.window_array(spec, k, range(1, d + 1), replica, variant, n_max=n))
        if mode is Mode.COUPLED:
            terms.append(-ab.window_array(spec, k, range(n + 1, n + d + 1), replica, variant, n_max=n))
    return math.fsum(np.concatenate(terms)) if terms else 0.0


def _large(
    spec: ab.ArraySpec, n: int, replica: int, variant: ab.Variant, ks: range
) -> Tuple[float, bool]:
    terms: List[np.ndarray] = []
    nonzero = False
    for k in ks:
        plus, minus = (_variant(spec, k, x, variant) for x in _coboundary_raw(spec, k, n, replica))
        nonzero = nonzero or bool(np.any(plus != 0) or np.any(minus != 0))
        terms.extend((plus, -minus))
    return (math.fsum(np.concatenate(terms)) if terms else 0.0), nonzero


def sum_large(
    spec: ab.ArraySpec,
    n: int,
    replica: int,
    variant: Union[ab.Variant, str] = ab.Variant.Z,
    ranges: Optional[ScaleRanges] = None,
) -> Tuple[float, bool]:
    """(value, nonzero) over the large range up to the cap"""
    ranges = ranges or scale_ranges(spec.alpha, n)
    return _large(spec, n, replica, ab.Variant(variant), ranges.large)


@dataclasses.dataclass(frozen=True)
class VSplit:
    v_over: float
    """medium contribution of entries with |X| > 2**(k*k)"""
    v_under: float
    """medium contribution of entries with |X| < 2**k"""
    medium_x: float
    medium_y: float
    identity_residual: float
    """exact sum of all signed entries of X - Y - over - under; 0.0 when the split is exact"""

    def __iter__(self):
        return iter((self.v_over, self.v_under))


def v_split_diagnostics(spec: ab.ArraySpec, n: int, replica: int) -> VSplit:
    """Split S_n^M(X) - S_n^M(Y) into its over- and under-truncated parts.

    The strict inequalities make X = Y + over + under entry by entry, so the
    identity is exact (the boundary values have probability 0 either way).
    """
    k_small_max, k_mid_max = range_bounds(spec.alpha, n)
    parts: Dict[str, List[np.ndarray]] = {"x": [], "y": [], "over": [], "under": []}
    for k in range(k_small_max + 1, k_mid_max + 1):
        lower, upper = ab.lower_cutoff(k), ab.upper_cutoff(k)
        for x, sign in zip(_coboundary_raw(spec, k, n, replica), (1.0, -1.0)):
            magnitude = np.abs(x)
            y = ab.truncate_array(k, x)
            over = np.where(magnitude > upper, x, 0.0)
            under = np.where(magnitude < lower, x, 0.0)
            assert np.array_equal(x, y + over + under), f"row {k}: truncation split is not a partition"
            for name, values in zip(parts, (x, y, over, under)):
                parts[name].append(sign * values)
    if not parts["x"]:
        return VSplit(0.0, 0.0, 0.0, 0.0, 0.0)
    joined = {name: np.concatenate(values) for name, values in parts.items()}
    residual = math.fsum(
        np.concatenate([joined["x"], -joined["y"], -joined["over"], -joined["under"]])
    )
    return VSplit(
        v_over=math.fsum(joined["over"]),
        v_under=math.fsum(joined["under"]),
        medium_x=math.fsum(joined["x"]),
        medium_y=math.fsum(joined["y"]),
        identity_residual=residual,
    )


@dataclasses.dataclass(frozen=True)
class GSplit:
    g_over: float
    """G_n contribution of entries with |X| > 2**(k*k)"""
    g_under: float
    """G_n contribution of entries with |X| < 2**k"""


def g_split_diagnostics(spec: ab.ArraySpec, n: int, replica: int) -> GSplit:
    k_small_max, _ = range_bounds(spec.alpha, n)
    over, under = [], []
    for k in range(1, k_small_max + 1):
        d = ab.row_length(spec, k)
        x = ab.window_array(spec, k, range(1, d + 1), replica, ab.Variant.X, n_max=n)
        magnitude = np.abs(x)
        over.append(x[magnitude > ab.upper_cutoff(k)])
        under.append(x[magnitude < ab.lower_cutoff(k)])
    if not over:
        return GSplit(0.0, 0.0)
    return GSplit(math.fsum(np.concatenate(over)), math.fsum(np.concatenate(under)))


def support_depth(spec: ab.ArraySpec, n: int, replica: int, k_cap: int) -> int:
    """Largest k <= k_cap with a nonzero Z_k entry among the columns the first n steps read.

    Only finitely many f_k are nonzero along an orbit; for a fixed seed this is
    the deepest one reached.
    """
    depth = 0
    for k in range(1, k_cap + 1):
        d = ab.row_length(spec, k)
        windows = [range(1, n + d + 1)] if d < n else [range(1, n + 1), range(d + 1, d + n + 1)]
        if any(np.any(ab.window_array(spec, k, w, replica, ab.Variant.Z, n_max=n) != 0) for w in windows):
            depth = k
    return depth


# runs ---------------------------------------------------------------------------------- #


@dataclasses.dataclass(frozen=True)
class DecomposedSum:
    replica: int
    part_small: float
    part_medium: float
    part_large: float
    total: float
    v_over_nonzero: bool
    mid_zy_gap: float
    large_nonzero: bool = False
    quantizer_violations: int = 0

    def identity_holds(self) -> bool:
        return self.total == self.part_small + self.part_medium + self.part_large


def decompose(
    spec: ab.ArraySpec,
    n: int,
    replica: int,
    ranges: ScaleRanges,
    variant: Union[ab.Variant, str] = ab.Variant.Z,
    mode: Union[Mode, str] = Mode.COUPLED,
    parts: Sequence[Part] = ALL_PARTS,
) -> DecomposedSum:
    variant, mode = ab.Variant(variant), Mode(mode)
    small = sum_small(spec, n, replica, variant, mode) if Part.SMALL in parts else 0.0
    if Part.MEDIUM in parts:
        medium = _medium(spec, n, replica, variant, ranges.medium)
    else:
        medium = MediumPart(value=0.0, zy_gap=0.0, v_over_nonzero=False)
    if Part.LARGE in parts:
        large, large_nonzero = _large(spec, n, replica, variant, ranges.large)
    else:
        large, large_nonzero = 0.0, False
    return DecomposedSum(
        replica=replica,
        part_small=small,
        part_medium=medium.value,
        part_large=large,
        total=small + medium.value + large,
        v_over_nonzero=medium.v_over_nonzero,
        mid_zy_gap=medium.zy_gap,
        large_nonzero=large_nonzero,
        quantizer_violations=medium.quantizer_violations,
    )


def estimate_draws(
    spec: ab.ArraySpec,
    ranges: ScaleRanges,
    replicas: int,
    mode: Union[Mode, str] = Mode.COUPLED,
    parts: Sequence[Part] = ALL_PARTS,
) -> int:
    """entries generated by a run, the budget currency"""
    per_replica = 2 * ranges.n * len(ranges.medium)
    if Part.SMALL in parts:
        per_small_row = 2 if Mode(mode) is Mode.COUPLED else 1
        per_replica += per_small_row * sum(ab.row_length(spec, k) for k in ranges.small)
    if Part.LARGE in parts:
        per_replica += 2 * ranges.n * len(ranges.large)
    return per_replica * replicas


@dataclasses.dataclass(frozen=True, eq=False)
class SimulationRun:
    spec: ab.ArraySpec
    ranges: ScaleRanges
    variant: ab.Variant
    mode: Mode
    parts: Tuple[Part, ...]
    sums: Tuple[DecomposedSum, ...]
    """in replica order"""
    scale: float
    """n**(-1/alpha), times the target-sigma factor if one was requested"""

    def sample(self, part: Optional[Part] = None) -> gof_stats.EmpiricalSample:
        field = {None: "total", Part.SMALL: "part_small", Part.MEDIUM: "part_medium", Part.LARGE: "part_large"}[part]
        meta = gof_stats.SampleMeta(
            alpha=self.spec.alpha,
            n_sum=self.ranges.n,
            variant=self.variant.value,
            seed=self.spec.master_seed,
            part=part.value if part else "total",
        )
        return gof_stats.EmpiricalSample(
            np.array([getattr(s, field) for s in self.sums]) * self.scale, meta
        )

    def to_frame(self) -> pd.DataFrame:
        """scaled per-replica values: replica,total,part_S,part_M,part_L"""
        return pd.DataFrame(
            {
                "replica": [s.replica for s in self.sums],
                "total": [s.total * self.scale for s in self.sums],
                "part_S": [s.part_small * self.scale for s in self.sums],
                "part_M": [s.part_medium * self.scale for s in self.sums],
                "part_L": [s.part_large * self.scale for s in self.sums],
            }
        )

    def invariant_violations(self) -> Dict[str, int]:
        gap_bound = math.log2(self.ranges.n) / self.spec.alpha
        return {
            "total_identity": sum(not s.identity_holds() for s in self.sums),
            "zy_gap": sum(s.mid_zy_gap > gap_bound for s in self.sums),
            "quantizer": sum(s.quantizer_violations for s in self.sums),
        }

    def large_nonzero_fraction(self) -> float:
        return sum(s.large_nonzero for s in self.sums) / len(self.sums)


def simulate(
    spec: ab.ArraySpec,
    n: int,
    replicas: int,
    variant: Union[ab.Variant, str] = ab.Variant.Z,
    mode: Union[Mode, str] = Mode.COUPLED,
    parts: Sequence[Union[Part, str]] = ALL_PARTS,
    epsilon_tail: float = DEFAULT_EPSILON_TAIL,
    budget_draws: int = DEFAULT_BUDGET_DRAWS,
    workers: int = 1,
    target_sigma: Optional[float] = None,
) -> SimulationRun:
    """Sample n**(-1/alpha) S_n over replicas 0..replicas-1.

    Replicas are split into contiguous chunks, one thread each; every replica is a
    pure function of (spec, n, replica), so the result doesn't depend on workers.
    """
    if replicas < 1:
        raise stable_core.DomainError(f"replicas must be >= 1: {replicas}")
    variant, mode = ab.Variant(variant), Mode(mode)
    parts = tuple(Part(p) for p in parts)
    ranges = scale_ranges(spec.alpha, n, epsilon_tail)
    estimated = estimate_draws(spec, ranges, replicas, mode, parts)
    if estimated > budget_draws:
        raise BudgetError(estimated, budget_draws)
    log.info(
        f"simulating {replicas} replicas of n={n}, alpha={spec.alpha}, variant {variant.value}, "
        f"mode {mode.value}, parts {''.join(p.value for p in parts)}: ~{estimated:,} draws"
    )

    results: List[Optional[DecomposedSum]] = [None] * replicas
    errors: List[BaseException] = []

    def work(chunk: Sequence[int]):
        try:
            for replica in chunk:
                results[replica] = decompose(spec, n, int(replica), ranges, variant, mode, parts)
        except BaseException as exc:
            log.exception(f"replica chunk starting at {chunk[0]} failed")
            errors.append(exc)

    chunks = [c for c in np.array_split(np.arange(replicas), max(1, min(workers, replicas))) if len(c)]
    threads = [
        threading.Thread(target=work, args=(chunk,), name=f"replicas-{chunk[0]}") for chunk in chunks
    ]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    if errors:
        raise errors[0]

    return SimulationRun(
        spec=spec,
        ranges=ranges,
        variant=variant,
        mode=mode,
        parts=parts,
        sums=tuple(results),
        scale=n ** (-1.0 / spec.alpha) * target_scale(spec.alpha, target_sigma),
    )
