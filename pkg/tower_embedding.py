# -*- coding: utf-8 -*-
r"""Embedding the array rows as functions on a rank-one (cutting-and-stacking) system.

    Some design notes:
    - RankOneSystem: stage s+1 is built by cutting the stage-s tower into r_s
      columns, putting spacers[s][i] new levels on top of column i, and stacking
      the columns left to right
        - h_{s+1} = r_s h_s + sum_i spacers[s][i], h_0 = 1
        - level widths are exact Fractions; w_0 is chosen so that continuing the
          last stage's layout forever stacks all of the unit interval, so
          stacked + unstacked = 1 at every stage
        - the default is Chacon's layout: r = 3, one spacer on the middle column

    - a point of the final-stage tower is (level L, base coordinate V), V uniform
      on [0, 1); seen from stage m < M it sits at some level of a copy of the
      stage-m tower with base coordinate u_m = (a + V) / R, where a and R collect
      the column indices and cut counts crossed on the way down

    - LabeledTower: f_k lives on the first stage m with h_m >= 2 d_k (strictly above
      the stage used for k - 1). Its base is subdivided depth by depth with the
      dyadic counts of a coarsened Z_k law, letters in an order permuted per depth;
      the letter at level j is the depth-j digit of u_m in that mixed expansion, so
      for u_m uniform the level word is exactly i.i.d. with the law
        - digits are decoded with integers only; V is revealed 64 bits at a time,
          only as far as the digits asked for need it

    - cross-k independence comes from the separation of stages and the independent
      letter orders, and is checked statistically, not proven

    Typical usage:

    import tower_embedding as te

    system = te.build_system(stages=7)
    laws = [te.coarsened_z_law(1.0, k, alphabet_cap=9, prob_denominator=2**16) for k in (1, 2, 3)]
    towers = te.assign_functions(system, laws, alpha=1.0, master_seed=42)
    sums, rejected = te.orbit_sums(system, towers, n=256, orbits=1000, master_seed=42)
"""
from __future__ import annotations

import bisect
import dataclasses
import itertools
import logging
import math
import pathlib
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

import array_builder as ab
import gof_stats
import stable_core

log = logging.getLogger(__name__)

MAX_HEIGHT = 10**6

MAX_ALPHABET = 64

CHACON_CUTS = 3
CHACON_SPACERS = (0, 1, 0)

DEFAULT_STAGES = 7


class DegeneracyError(ValueError):
    """Raised when a coarsened law can't carry any nonzero value"""

    pass


class CoverageError(RuntimeError):
    """Raised when an orbit leaves the part of the space covered by the final tower"""

    def __init__(self, message: str, uncovered_measure: Fraction):
        super().__init__(f"{message} (uncovered measure {float(uncovered_measure):.6g})")
        self.uncovered_measure = uncovered_measure


# the system ---------------------------------------------------------------------------- #


@dataclasses.dataclass(frozen=True)
class RankOneSystem:
    cut_counts: Tuple[int, ...]
    spacer_layout: Tuple[Tuple[int, ...], ...]
    heights: Tuple[int, ...]
    """h_0 .. h_M"""
    widths: Tuple[Fraction, ...]
    """level width at each stage"""
    column_offsets: Tuple[Tuple[int, ...], ...]
    """first level of each column inside the next stage's tower"""

    @property
    def stages(self) -> int:
        return len(self.cut_counts)

    @property
    def height(self) -> int:
        return self.heights[-1]

    def stacked(self, stage: int) -> Fraction:
        return self.heights[stage] * self.widths[stage]

    def unstacked(self, stage: int) -> Fraction:
        return 1 - self.stacked(stage)

    def locate(self, level: int, stage: int) -> Optional[Tuple[int, int, int]]:
        """Where final-stage level `level` sits in the stage-`stage` tower.

        Returns (a, R, level at that stage), the base coordinate there being
        (a + V) / R, or None if the level is a spacer added above that stage.
        """
        a, R = 0, 1
        for s in range(self.stages - 1, stage - 1, -1):
            offsets = self.column_offsets[s]
            column = bisect.bisect_right(offsets, level) - 1
            level -= offsets[column]
            if level >= self.heights[s]:
                return None
            a += column * R
            R *= self.cut_counts[s]
        return a, R, level

    def to_json(self) -> dict:
        return system_to_json(self)


def build_system(
    cut_counts: Union[int, Sequence[int], None] = None,
    spacer_layout: Optional[Sequence[Sequence[int]]] = None,
    stages: Optional[int] = None,
) -> RankOneSystem:
    """Rank-one system with exact level widths; Chacon's layout by default."""
    if cut_counts is None and spacer_layout is None:
        stages = DEFAULT_STAGES if stages is None else stages
        cut_counts = [CHACON_CUTS] * stages
        spacer_layout = [CHACON_SPACERS] * stages
    else:
        if isinstance(cut_counts, int):
            if stages is None:
                raise ab.RangeError("stages is needed when a single cut count is given")
            cut_counts = [cut_counts] * stages
        cut_counts = list(cut_counts or [])
        if spacer_layout is None:
            spacer_layout = [[0] * r for r in cut_counts]
        spacer_layout = [list(s) for s in spacer_layout]
        if stages is not None and stages != len(cut_counts):
            raise ab.RangeError(f"{len(cut_counts)} cut counts given for {stages} stages")
    if stages is not None and stages < 0:
        raise ab.RangeError(f"stages must be >= 0: {stages}")
    if len(spacer_layout) != len(cut_counts):
        raise ab.RangeError(f"{len(spacer_layout)} spacer layouts for {len(cut_counts)} stages")
    for s, (r, spacers) in enumerate(zip(cut_counts, spacer_layout)):
        if r < 2 or len(spacers) != r or any(x < 0 for x in spacers):
            raise ab.RangeError(f"stage {s}: need r >= 2 and r nonnegative spacer counts: {r}, {spacers}")

    heights = [1]
    offsets = []
    for r, spacers in zip(cut_counts, spacer_layout):
        h = heights[-1]
        starts = [i * h + sum(spacers[:i]) for i in range(r)]
        offsets.append(tuple(starts))
        heights.append(r * h + sum(spacers))
        if heights[-1] > MAX_HEIGHT:
            raise ab.RangeError(f"tower height {heights[-1]} at stage {len(heights) - 1} exceeds {MAX_HEIGHT}")

    if cut_counts:
        r_last, s_last = cut_counts[-1], sum(spacer_layout[-1])
        # the last layout repeated forever adds s_last w_M / (r_last - 1) more levels of mass
        final_width = 1 / (heights[-1] + Fraction(s_last, r_last - 1))
        widths = [final_width]
        for r in reversed(cut_counts):
            widths.append(widths[-1] * r)
        widths.reverse()
    else:
        widths = [Fraction(1)]

    system = RankOneSystem(
        cut_counts=tuple(cut_counts),
        spacer_layout=tuple(tuple(s) for s in spacer_layout),
        heights=tuple(heights),
        widths=tuple(widths),
        column_offsets=tuple(offsets),
    )
    for stage in range(len(heights)):
        assert 0 <= system.unstacked(stage) <= 1, f"stage {stage}: stacked measure exceeds 1"
        assert system.stacked(stage) + system.unstacked(stage) == 1
    log.info(f"rank-one system: heights {system.heights}, unstacked {float(system.unstacked(system.stages)):.3g}")
    return system


def system_to_json(system: RankOneSystem) -> dict:
    return {
        "cut_counts": list(system.cut_counts),
        "spacer_layout": [list(s) for s in system.spacer_layout],
        "heights": list(system.heights),
        "widths": [[w.numerator, w.denominator] for w in system.widths],
        "unstacked": [
            [u.numerator, u.denominator] for u in (system.unstacked(s) for s in range(len(system.heights)))
        ],
    }


# coarsened laws ------------------------------------------------------------------------ #


@dataclasses.dataclass(frozen=True)
class CoarsenedLaw:
    alpha: float
    k: int
    alphabet: Tuple[float, ...]
    """sorted, symmetric, contains 0"""
    counts: Tuple[int, ...]
    """probability of alphabet[i] is counts[i] / denominator"""
    denominator: int
    tv_distance: float
    """total variation distance to the unrounded coarsened law"""
    collapsed: bool = False
    """True when rounding left only the point mass at 0"""

    @property
    def pmf(self) -> Tuple[Fraction, ...]:
        return tuple(Fraction(c, self.denominator) for c in self.counts)

    @property
    def probabilities(self) -> np.ndarray:
        return np.array(self.counts, dtype=float) / self.denominator

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "k": self.k,
            "alphabet": list(self.alphabet),
            "counts": list(self.counts),
            "denominator": self.denominator,
            "tv_distance": self.tv_distance,
            "collapsed": self.collapsed,
        }


def _tail_at(params: stable_core.AlphaStableParams, t: float) -> float:
    return 0.0 if math.isinf(t) else stable_core.tail_probability(params, t)


def coarsened_z_law(
    alpha: float, k: int, alphabet_cap: int = 9, prob_denominator: int = 2**16
) -> CoarsenedLaw:
    """Law of Z_k floored onto the sub-grid 2**k, 2**(k+1), .. (capped at 2**(k*k)).

    The positive side is rounded to multiples of 1/prob_denominator and mirrored,
    so the law is exactly symmetric and the mass at 0 takes up the rounding.
    """
    if alphabet_cap < 3:
        raise DegeneracyError(f"alphabet_cap={alphabet_cap}: need room for 0 and +-one grid value")
    if alphabet_cap > MAX_ALPHABET:
        raise ab.RangeError(f"alphabet_cap={alphabet_cap} is above {MAX_ALPHABET}")
    if prob_denominator < 2 or prob_denominator & (prob_denominator - 1):
        raise stable_core.ParamsError(f"prob_denominator must be a power of 2: {prob_denominator}")
    spec = ab.ArraySpec(alpha)
    params = spec.row_params(k)
    top = ab.upper_cutoff(k)

    values = []
    v = ab.lower_cutoff(k)
    while len(values) < (alphabet_cap - 1) // 2 and v <= top:
        # powers of 2 above 2**k are on the quantization grid
        values.append(ab.quantize_entry(spec, k, v))
        v *= 2
    edges = values[1:] + [top]
    exact = [_tail_at(params, lo) - _tail_at(params, hi) for lo, hi in zip(values, edges)]
    counts = [round(prob_denominator * p / 2) for p in exact]
    zero_count = prob_denominator - 2 * sum(counts)
    assert zero_count >= 0, f"rounded nonzero mass exceeds 1 at alpha={alpha}, k={k}"

    alphabet = tuple([-x for x in reversed(values)] + [0.0] + values)
    full_counts = tuple(list(reversed(counts)) + [zero_count] + counts)
    exact_pmf = [p / 2 for p in reversed(exact)] + [1 - math.fsum(exact)] + [p / 2 for p in exact]
    tv = 0.5 * math.fsum(abs(c / prob_denominator - p) for c, p in zip(full_counts, exact_pmf))
    collapsed = zero_count == prob_denominator
    if collapsed:
        log.warning(
            f"Z_{k} law at alpha={alpha} rounds to the point mass at 0 with denominator {prob_denominator}"
        )
    return CoarsenedLaw(
        alpha=alpha,
        k=k,
        alphabet=alphabet,
        counts=full_counts,
        denominator=prob_denominator,
        tv_distance=tv,
        collapsed=collapsed,
    )


# labeled towers ------------------------------------------------------------------------ #


@dataclasses.dataclass(frozen=True, eq=False)
class LabeledTower:
    k: int
    stage: int
    height: int
    d_k: int
    law: CoarsenedLaw
    letters: Tuple[float, ...]
    """the values with nonzero probability"""
    counts: Tuple[int, ...]
    cells: Tuple[Tuple[Tuple[int, ...], Tuple[int, ...]], ...]
    """per depth: (letter order, cumulative count at the start of each cell)"""

    @property
    def max_abs(self) -> float:
        return max(abs(x) for x in self.letters)

    @property
    def constant(self) -> bool:
        return len(self.letters) == 1


def assign_function(
    system: RankOneSystem,
    k: int,
    law: CoarsenedLaw,
    alpha: float,
    master_seed: int = 0,
    min_stage: int = 0,
) -> LabeledTower:
    d = ab.row_length(ab.ArraySpec(alpha), k)
    stage = next(
        (m for m in range(min_stage, len(system.heights)) if system.heights[m] >= 2 * d), None
    )
    if stage is None:
        raise ab.RangeError(
            f"f_{k} needs a stage at or above {min_stage} with h >= 2 d_k = {2 * d}; "
            f"tallest stage has h = {system.height}"
        )
    positive = [i for i, c in enumerate(law.counts) if c]
    letters = tuple(law.alphabet[i] for i in positive)
    counts = tuple(law.counts[i] for i in positive)
    height = system.heights[stage]
    rng = ab.RandomKey(master_seed, k, 1, 0, ab.StreamTag.TOWER).generator()
    cells = []
    for _ in range(height):
        order = tuple(int(i) for i in rng.permutation(len(letters)))
        starts = tuple(itertools.accumulate((counts[i] for i in order[:-1]), initial=0))
        cells.append((order, starts))
    log.debug(f"f_{k} on stage {stage} (h={height}, d_k={d}) with {len(letters)} letters")
    return LabeledTower(
        k=k, stage=stage, height=height, d_k=d, law=law, letters=letters, counts=counts, cells=tuple(cells)
    )


def assign_functions(
    system: RankOneSystem, laws: Sequence[CoarsenedLaw], alpha: float, master_seed: int = 0
) -> List[LabeledTower]:
    """One tower per law, in increasing k, on strictly increasing stages"""
    towers: List[LabeledTower] = []
    for law in sorted(laws, key=lambda law: law.k):
        min_stage = towers[-1].stage + 1 if towers else 0
        towers.append(assign_function(system, law.k, law, alpha, master_seed, min_stage))
    return towers


def level_words(tower: LabeledTower, depth: int) -> List[Tuple[Tuple[float, ...], Fraction]]:
    """Every base cell down to `depth`, left to right, as (word, width)"""
    if depth > tower.height:
        raise ab.RangeError(f"depth {depth} exceeds tower height {tower.height}")
    total = tower.law.denominator
    words: List[Tuple[Tuple[float, ...], Fraction]] = [((), Fraction(1))]
    for j in range(depth):
        order, _ = tower.cells[j]
        words = [
            (word + (tower.letters[i],), width * Fraction(tower.counts[i], total))
            for word, width in words
            for i in order
        ]
    return words


def word_at(tower: LabeledTower, u: Fraction, depth: int) -> Tuple[float, ...]:
    """Letters at levels 0..depth-1 above base coordinate u, with exact rationals"""
    total = tower.law.denominator
    word = []
    for j in range(depth):
        order, starts = tower.cells[j]
        x = total * u
        cell = bisect.bisect_right(starts, math.floor(x)) - 1
        letter = order[cell]
        word.append(tower.letters[letter])
        u = (x - starts[cell]) / tower.counts[letter]
    return tuple(word)


class LazyUniform:
    """V uniform on [0, 1), known to lie in [numerator / 2**bits, (numerator + 1) / 2**bits)"""

    def __init__(self, bit_generator: np.random.BitGenerator):
        self._bit_generator = bit_generator
        self.numerator = 0
        self.bits = 0

    def refine(self) -> None:
        self.numerator = (self.numerator << 64) | int(self._bit_generator.random_raw())
        self.bits += 64

    def lower(self) -> Fraction:
        return Fraction(self.numerator, 1 << self.bits)


def decode_letters(
    tower: LabeledTower, a: int, R: int, uniform: LazyUniform, depth: int
) -> List[int]:
    """Letter indices at levels 0..depth-1 above base coordinate (a + V) / R.

    The coordinate after j digits is (num + beta V) / den; a digit is accepted
    once both ends of V's known interval land in the same cell.
    """
    if tower.constant:
        return [0] * depth
    total = tower.law.denominator
    num, beta, den = a, 1, R
    letters = []
    for j in range(depth):
        order, starts = tower.cells[j]
        while True:
            scale = 1 << uniform.bits
            low = total * (num * scale + beta * uniform.numerator)
            high = low + total * beta
            denominator = den * scale
            cell = bisect.bisect_right(starts, low // denominator) - 1
            if cell == bisect.bisect_right(starts, -(-high // denominator) - 1) - 1:
                break
            uniform.refine()
        letter = order[cell]
        letters.append(letter)
        num = total * num - starts[cell] * den
        beta *= total
        den *= tower.counts[letter]
    return letters


# orbits -------------------------------------------------------------------------------- #


@dataclasses.dataclass(eq=False)
class OrbitPoint:
    """A point of the final-stage tower, its base coordinate revealed lazily"""

    level: int
    uniform: LazyUniform
    step: int = 0

    def advance(self, steps: int) -> OrbitPoint:
        return OrbitPoint(self.level + steps, self.uniform, self.step + steps)


def sample_orbit_point(
    system: RankOneSystem, horizon: int, master_seed: int, orbit: int
) -> Tuple[OrbitPoint, Fraction]:
    """Uniform point among those whose next `horizon` steps stay in the final tower.

    Returns the point and the measure rejected to get it (unstacked mass plus
    the top `horizon` levels).
    """
    usable = system.height - horizon
    if usable <= 0:
        raise CoverageError(f"horizon {horizon} is not below the final height {system.height}", Fraction(1))
    rng = ab.RandomKey(master_seed, 1, 1, orbit, ab.StreamTag.ORBIT).generator()
    level = int(rng.integers(usable))
    point = OrbitPoint(level, LazyUniform(rng.bit_generator))
    return point, 1 - usable * system.widths[-1]


def tower_values(
    system: RankOneSystem, tower: LabeledTower, point: OrbitPoint, count: int
) -> List[float]:
    """f_k along the orbit: values at the point and its next count - 1 images"""
    last = point.level + count - 1
    if last >= system.height:
        raise CoverageError(
            f"orbit from level {point.level} needs level {last}, final height is {system.height}",
            system.unstacked(system.stages),
        )
    located = [system.locate(point.level + j, tower.stage) for j in range(count)]
    deepest: Dict[Tuple[int, int], int] = {}
    for spot in located:
        if spot is not None:
            a, R, level = spot
            deepest[a, R] = max(deepest.get((a, R), -1), level)
    words = {
        (a, R): decode_letters(tower, a, R, point.uniform, level + 1) for (a, R), level in deepest.items()
    }
    # spacers above the tower's stage are outside its support
    return [0.0 if spot is None else tower.letters[words[spot[:2]][spot[2]]] for spot in located]


def orbit_sum(system: RankOneSystem, towers: Sequence[LabeledTower], point: OrbitPoint, n: int) -> float:
    """sum_{j<n} f(T**j x) for f = sum_k f_k - f_k o T**d_k"""
    terms = []
    for tower in towers:
        d = tower.d_k
        values = np.array(tower_values(system, tower, point, n + d))
        partial = math.fsum(np.concatenate([values[:n], -values[d : d + n]]))
        assert abs(partial) <= 2 * d * tower.max_abs, f"coboundary sum of f_{tower.k} does not telescope"
        terms.append(partial)
    return math.fsum(terms)


def orbit_sums(
    system: RankOneSystem,
    towers: Sequence[LabeledTower],
    n: int,
    orbits: int,
    master_seed: int = 0,
    alpha: Optional[float] = None,
) -> Tuple[np.ndarray, float]:
    """n**(-1/alpha) orbit_sum over `orbits` random points, and the rejected measure"""
    horizon = n + max(t.d_k for t in towers)
    alpha = alpha if alpha is not None else towers[0].law.alpha
    sums = np.empty(orbits)
    rejected = Fraction(0)
    for orbit in range(orbits):
        point, rejected = sample_orbit_point(system, horizon, master_seed, orbit)
        sums[orbit] = orbit_sum(system, towers, point, n)
    log.info(f"{orbits} orbit sums of n={n}, rejected measure {float(rejected):.4f}")
    return sums * n ** (-1.0 / alpha), float(rejected)


def oracle_orbit_sums(
    towers: Sequence[LabeledTower], alpha: float, n: int, samples: int, master_seed: int = 0
) -> np.ndarray:
    """Same sums with every letter drawn i.i.d. from its law, scaled by n**(-1/alpha)"""
    rng = ab.RandomKey(master_seed, 1, 1, 0, ab.StreamTag.ORACLE).generator()
    out = np.empty(samples)
    for i in range(samples):
        terms = []
        for tower in towers:
            d = tower.d_k
            w = rng.choice(tower.law.alphabet, size=n + d, p=tower.law.probabilities)
            terms.append(math.fsum(np.concatenate([w[:n], -w[d : d + n]])))
        out[i] = math.fsum(terms)
    return out * n ** (-1.0 / alpha)


def write_orbit_csv(path: Union[str, pathlib.Path], sums: Sequence[float]) -> pathlib.Path:
    path = pathlib.Path(path)
    frame = pd.DataFrame({"orbit": np.arange(len(sums)), "sum": np.asarray(sums)})
    frame.to_csv(path, index=False, float_format=gof_stats.FLOAT_FORMAT)
    return path


# validation ---------------------------------------------------------------------------- #


@dataclasses.dataclass(frozen=True)
class TowerReport:
    k: int
    samples: int
    levels: int
    chi2: float
    df: int
    chi2_threshold: float
    level_correlations: Dict[str, float]
    correlation_threshold: float
    passed: bool

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


@dataclasses.dataclass(frozen=True)
class EmbeddingReport:
    towers: Tuple[TowerReport, ...]
    cross_k_correlations: Dict[str, float]
    cross_k_threshold: float
    passed: bool

    def to_json(self) -> dict:
        return {
            "towers": [t.to_json() for t in self.towers],
            "cross_k_correlations": self.cross_k_correlations,
            "cross_k_threshold": self.cross_k_threshold,
            "pass": self.passed,
        }


def _indicator_correlation(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson correlation of two 0/1 columns; 0 when either is constant"""
    if a.std() == 0 or b.std() == 0:
        return 0.0
    return float(np.corrcoef(a, b)[0, 1])


def _pooled_chi2(letters: np.ndarray, values: Tuple[float, ...], law: CoarsenedLaw) -> Tuple[float, int]:
    """chi-square of every level's letter counts against the law, summed over levels"""
    expected_p = dict(zip(law.alphabet, law.probabilities))
    support = [x for x in law.alphabet if expected_p[x] > 0]
    samples, levels = letters.shape
    observed_values = np.asarray(values)[letters]
    chi2 = 0.0
    for level in range(levels):
        column = observed_values[:, level]
        if np.any(~np.isin(column, support)):
            return math.inf, max(1, levels * (len(support) - 1))
        for x in support:
            expected = samples * expected_p[x]
            chi2 += (np.count_nonzero(column == x) - expected) ** 2 / expected
    return float(chi2), levels * (len(support) - 1)


def validate_tower(
    tower: LabeledTower,
    samples: int,
    master_seed: int = 0,
    expected: Optional[CoarsenedLaw] = None,
) -> TowerReport:
    """Level marginals and level-pair independence over uniform base points"""
    law = expected or tower.law
    d = tower.d_k
    depth = min(tower.height, d + 1)
    rng = ab.RandomKey(master_seed, tower.k, 1, 0, ab.StreamTag.LEVELS).generator()
    letters = np.array(
        [decode_letters(tower, 0, 1, LazyUniform(rng.bit_generator), depth) for _ in range(samples)],
        dtype=np.intp,
    ).reshape(samples, depth)
    chi2, df = _pooled_chi2(letters, tower.letters, law)
    chi2_threshold = df + 3 * math.sqrt(2 * df) if df else 0.0

    nonzero = np.asarray(tower.letters)[letters] != 0
    pairs = sorted({(0, 1), (0, d), (d - 1, d)} & {(i, j) for i in range(depth) for j in range(depth) if i < j})
    correlations = {f"{i},{j}": _indicator_correlation(nonzero[:, i], nonzero[:, j]) for i, j in pairs}
    threshold = 3 / math.sqrt(samples)
    passed = bool(chi2 <= chi2_threshold and all(abs(c) <= threshold for c in correlations.values()))
    if df == 0:
        passed = passed and chi2 == 0.0
    log.info(f"f_{tower.k}: chi2 {chi2:.1f} on {df} df (threshold {chi2_threshold:.1f}), pass={passed}")
    return TowerReport(
        k=tower.k,
        samples=samples,
        levels=depth,
        chi2=chi2,
        df=df,
        chi2_threshold=chi2_threshold,
        level_correlations=correlations,
        correlation_threshold=threshold,
        passed=passed,
    )


def embedding_validation(
    system: RankOneSystem,
    towers: Sequence[LabeledTower],
    samples: int,
    master_seed: int = 0,
    expected: Optional[Dict[int, CoarsenedLaw]] = None,
    cross_k_samples: int = 2000,
) -> EmbeddingReport:
    """Per-tower marginal and level-pair checks, plus indicator correlations across k.

    `expected` replaces the law a tower is checked against, by k (negative controls).
    """
    expected = expected or {}
    reports = tuple(validate_tower(t, samples, master_seed, expected.get(t.k)) for t in towers)

    cross: Dict[str, float] = {}
    threshold = 3 / math.sqrt(cross_k_samples)
    if len(towers) > 1:
        indicators = np.zeros((cross_k_samples, len(towers)), dtype=bool)
        for i in range(cross_k_samples):
            point, _ = sample_orbit_point(system, 1, master_seed, samples + i)
            for col, tower in enumerate(towers):
                indicators[i, col] = tower_values(system, tower, point, 1)[0] != 0
        for (p, a), (q, b) in itertools.combinations(enumerate(towers), 2):
            cross[f"{a.k},{b.k}"] = _indicator_correlation(indicators[:, p], indicators[:, q])
    passed = bool(all(r.passed for r in reports) and all(abs(c) <= threshold for c in cross.values()))
    return EmbeddingReport(
        towers=reports, cross_k_correlations=cross, cross_k_threshold=threshold, passed=passed
    )


def orbit_oracle_ks(
    system: RankOneSystem,
    towers: Sequence[LabeledTower],
    alpha: float,
    n: int,
    orbits: int,
    oracle_samples: int,
    master_seed: int = 0,
) -> Tuple[float, np.ndarray, float]:
    """(two-sample KS, orbit sums, rejected measure) of orbit sums against the array oracle"""
    sums, rejected = orbit_sums(system, towers, n, orbits, master_seed, alpha)
    oracle = oracle_orbit_sums(towers, alpha, n, oracle_samples, master_seed)
    return gof_stats.ks_two_sample(sums, oracle), sums, rejected
