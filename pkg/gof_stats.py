# -*- coding: utf-8 -*-
r"""Goodness-of-fit machinery for Monte Carlo samples against SaS reference laws.

    - EmpiricalSample: an immutable, sorted sample plus where it came from
    - ks_distance: one-sample KS statistic against cdf_sas through scipy.stats.kstest
    - QQ points at p = 1/100 .. 99/100, reference quantiles by bisection on cdf_sas
    - empirical characteristic function magnitudes, input to the dispersion estimate
    - trend_check: verdict on a statistic tracked along a grid of n

    KS thresholds are multiples of 1.36/sqrt(count), the asymptotic 95% point of
    the Kolmogorov distribution, so tolerances follow the replica count.
"""
from __future__ import annotations

import dataclasses
import enum
import logging
import math
import pathlib
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import stats

import stable_core

log = logging.getLogger(__name__)

KOLMOGOROV_95 = 1.36

KOLMOGOROV_SD = 0.26
# standard deviation of sqrt(count) * KS under the null, for trend slack

QQ_POINTS = 99

FLOAT_FORMAT = "%.17g"


@dataclasses.dataclass(frozen=True)
class SampleMeta:
    alpha: Optional[float] = None
    n_sum: Optional[int] = None
    """n of the Birkhoff sum the sample was scaled from"""
    variant: Optional[str] = None
    seed: Optional[int] = None
    part: str = "total"


@dataclasses.dataclass(frozen=True, eq=False)
class EmpiricalSample:
    """Sorted, read-only sample values with provenance"""

    values: np.ndarray
    meta: SampleMeta = SampleMeta()

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).ravel()
        values.sort()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_values(cls, values: Iterable[float], meta: Optional[SampleMeta] = None) -> EmpiricalSample:
        if not isinstance(values, np.ndarray):
            values = np.fromiter(values, dtype=np.float64)
        return cls(values, meta or SampleMeta())

    @property
    def n(self) -> int:
        return int(self.values.size)

    def second_moment(self) -> float:
        return math.fsum(self.values**2) / self.n if self.n else math.nan

    def __repr__(self):
        return f"{self.__class__.__name__}(n={self.n}, meta={self.meta})"


@dataclasses.dataclass(frozen=True)
class GoFReport:
    ks: float
    reference: stable_core.AlphaStableParams
    sample_count: int
    qq: Tuple[Tuple[float, float], ...]
    """(theoretical quantile, empirical quantile) at p = i/100, i = 1..99"""
    passed: bool
    threshold: float

    def to_json(self) -> dict:
        return {
            "ks": self.ks,
            "reference": {"alpha": self.reference.alpha, "sigma": self.reference.sigma},
            "sample_count": self.sample_count,
            "pass": self.passed,
            "threshold": self.threshold,
            "qq": [list(pair) for pair in self.qq],
        }

    @classmethod
    def from_json(cls, data: dict) -> GoFReport:
        return cls(
            ks=float(data["ks"]),
            reference=stable_core.make_params(data["reference"]["alpha"], data["reference"]["sigma"]),
            sample_count=int(data["sample_count"]),
            qq=tuple((float(a), float(b)) for a, b in data.get("qq", [])),
            passed=bool(data["pass"]),
            threshold=float(data["threshold"]),
        )


def ks_threshold(count: int, multiple: float = 1.0) -> float:
    return multiple * KOLMOGOROV_95 / math.sqrt(count)


def ks_standard_error(count: int) -> float:
    return KOLMOGOROV_SD / math.sqrt(count)


def reference_cdf(sample: EmpiricalSample, ref: stable_core.AlphaStableParams) -> np.ndarray:
    """cdf_sas at every sample point; tied values are only integrated once"""
    unique, inverse = np.unique(sample.values, return_inverse=True)
    cdf = np.array([stable_core.cdf_sas(ref, x) for x in unique])
    return cdf[inverse]


def ks_distance(sample: EmpiricalSample, ref: stable_core.AlphaStableParams) -> float:
    if not sample.n:
        raise stable_core.DomainError("KS distance needs a nonempty sample")
    cached = dict(zip(sample.values.tolist(), reference_cdf(sample, ref).tolist()))
    result = stats.kstest(sample.values, lambda x: np.array([cached[v] for v in np.atleast_1d(x).tolist()]))
    return float(result.statistic)


def ks_two_sample(a: Sequence[float], b: Sequence[float]) -> float:
    return float(stats.ks_2samp(np.asarray(a), np.asarray(b)).statistic)


def qq_probabilities(count: int = QQ_POINTS) -> np.ndarray:
    return np.arange(1, count + 1) / (count + 1)


def qq_points(
    sample: EmpiricalSample, ref: stable_core.AlphaStableParams, count: int = QQ_POINTS
) -> Tuple[Tuple[float, float], ...]:
    probabilities = qq_probabilities(count)
    empirical = np.quantile(sample.values, probabilities)
    return tuple(
        (stable_core.quantile_sas(ref, float(p)), float(q)) for p, q in zip(probabilities, empirical)
    )


def gof_report(
    sample: EmpiricalSample,
    ref: stable_core.AlphaStableParams,
    multiple: float = 1.0,
    with_qq: bool = True,
) -> GoFReport:
    ks = ks_distance(sample, ref)
    threshold = ks_threshold(sample.n, multiple)
    report = GoFReport(
        ks=ks,
        reference=ref,
        sample_count=sample.n,
        qq=qq_points(sample, ref) if with_qq else (),
        passed=ks <= threshold,
        threshold=threshold,
    )
    log.info(f"KS {ks:.5f} vs {ref} over {sample.n} points: threshold {threshold:.5f}, pass={report.passed}")
    return report


def ecf(sample: EmpiricalSample, theta_grid: Sequence[float]) -> List[Tuple[float, float]]:
    """|(1/n) sum exp(i theta x)| for each theta"""
    if not sample.n or not len(theta_grid):
        raise stable_core.DomainError("empirical CF needs a nonempty sample and grid")
    result = []
    for theta in theta_grid:
        if theta == 0:
            result.append((0.0, 1.0))
            continue
        phase = theta * sample.values
        magnitude = math.hypot(np.cos(phase).mean(), np.sin(phase).mean())
        result.append((float(theta), min(1.0, magnitude)))
    return result


# trends -------------------------------------------------------------------------------- #


@enum.unique
class Trend(str, enum.Enum):
    DECREASING = "decreasing"
    INVERSE_LOG = "bounded_by_c_over_log_n"


@dataclasses.dataclass(frozen=True)
class TrendVerdict:
    passed: bool
    expected: Trend
    fitted_c: float
    """least-squares c in statistic ~ c / log2(n)"""
    monotone: bool
    violations: Tuple[Tuple[int, int], ...]
    """consecutive (n, n') where the statistic rose by more than the slack"""
    scaled: Tuple[float, ...]
    """statistic * log2(n) along the grid"""

    def to_json(self) -> dict:
        return {
            "pass": self.passed,
            "expected": self.expected.value,
            "fitted_c": self.fitted_c,
            "monotone": self.monotone,
            "violations": [list(v) for v in self.violations],
            "scaled": list(self.scaled),
        }


def trend_check(
    values_by_n: Sequence[Tuple[int, float]],
    expected: Union[Trend, str],
    standard_errors: Optional[Sequence[float]] = None,
    slack_se: float = 3.0,
) -> TrendVerdict:
    """Verdict on a statistic along an n grid.

    DECREASING passes when no step up exceeds slack_se combined standard errors.
    INVERSE_LOG passes when the statistic is also nonincreasing in that sense and
    statistic*log2(n) stays within a factor 2 of the fitted c, with the same slack.
    """
    expected = Trend(expected)
    if len(values_by_n) < 3:
        raise stable_core.DomainError(f"trend check needs at least 3 grid points: {len(values_by_n)}")
    if standard_errors is None:
        standard_errors = [0.0] * len(values_by_n)
    rows = sorted(zip(values_by_n, standard_errors), key=lambda row: row[0][0])
    n_grid = [int(n) for (n, _), _ in rows]
    if n_grid[0] < 2:
        raise stable_core.DomainError(f"trend check needs n >= 2: {n_grid}")
    stat = np.array([float(s) for (_, s), _ in rows])
    se = np.array([float(e) for _, e in rows])
    logs = np.log2(n_grid)

    fitted_c = float(np.sum(stat / logs) / np.sum(1.0 / logs**2))
    violations = tuple(
        (n_grid[i], n_grid[i + 1])
        for i in range(len(n_grid) - 1)
        if stat[i + 1] > stat[i] + slack_se * math.hypot(se[i], se[i + 1])
    )
    monotone = not violations
    scaled = stat * logs
    if expected is Trend.DECREASING:
        passed = monotone
    else:
        slack = slack_se * se * logs
        in_band = np.all(scaled - slack <= 2 * fitted_c) and np.all(scaled + slack >= fitted_c / 2)
        passed = bool(monotone and in_band)
    return TrendVerdict(
        passed=passed,
        expected=expected,
        fitted_c=fitted_c,
        monotone=monotone,
        violations=violations,
        scaled=tuple(float(s) for s in scaled),
    )


# csv ----------------------------------------------------------------------------------- #


def write_qq_csv(path: Union[str, pathlib.Path], report: GoFReport) -> pathlib.Path:
    path = pathlib.Path(path)
    frame = pd.DataFrame(
        {
            "p": qq_probabilities(len(report.qq)),
            "q_theory": [a for a, _ in report.qq],
            "q_empirical": [b for _, b in report.qq],
        }
    )
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def write_samples_csv(path: Union[str, pathlib.Path], frame: pd.DataFrame) -> pathlib.Path:
    """replica,total,part_S,part_M,part_L"""
    path = pathlib.Path(path)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def read_samples_csv(path: Union[str, pathlib.Path], column: str = "total") -> EmpiricalSample:
    frame = pd.read_csv(path, float_precision="round_trip")
    return EmpiricalSample(frame[column].to_numpy(dtype=np.float64), SampleMeta(part=column))


def write_ecf_csv(path: Union[str, pathlib.Path], points: Sequence[Tuple[float, float]]) -> pathlib.Path:
    path = pathlib.Path(path)
    frame = pd.DataFrame(points, columns=["theta", "ecf_abs"])
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path
