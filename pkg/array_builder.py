# -*- coding: utf-8 -*-
r"""The triangular array: raw SaS entries, their truncation and their quantization.

    Row k (k >= 1) holds entries X_k(j) ~ SaS(k**(-1/alpha)), i.i.d. along the row
    and independent across rows. Rows are conceptually of length
    max(2 d_k, d_k + n), with d_k = floor(2**(2 alpha k / (2 - alpha))), but are
    never stored: any window of columns is generated on demand.

        X_k(j)  raw entry
        Y_k(j)  X_k(j) if 2**k <= |X_k(j)| <= 2**(k*k), else 0
        Z_k(j)  Y_k(j) rounded down to the grid 2**k + m / d_k (up to sign), with
                2**(k*k) mapping to itself

    Randomness is counter-keyed:
    - (master_seed, stream tag, k, replica) are hashed by numpy's SeedSequence into
      a 128-bit Philox key
    - column j is Philox counter block j: four 64-bit words, the first two giving
      the uniform and the exponential of the CMS transform
    - so X_k(j) is a pure function of its key, and a window starting at any column
      reproduces exactly the entries of a longer window covering it

    Columns are 1-based.

    Typical usage:

    import array_builder as ab

    spec = ab.ArraySpec(alpha=1.0, master_seed=42)
    ab.row_length(spec, 3)  # 64
    z = ab.window_array(spec, k=3, columns=range(1, 129), replica=0, variant=ab.Variant.Z)
"""
from __future__ import annotations

import dataclasses
import enum
import functools
import json
import logging
import math
import pathlib
from typing import Iterator, Tuple, Union

import numpy as np

import stable_core

log = logging.getLogger(__name__)

ROW_EXPONENT_CAP = 62
# d_k = 2**(2 alpha k/(2 - alpha)) is refused above 2**62

CHUNK_COLUMNS = 1 << 16
# columns generated per numpy call in window_entries

MAX_SEED = 2**64 - 1


class RangeError(ValueError):
    """Raised when a scale index or column window is outside what can be generated"""

    pass


class ContractError(ValueError):
    """Raised when the quantizer gets a value that can't have come out of truncation"""

    pass


@enum.unique
class StreamTag(enum.IntEnum):
    """Separates independent uses of the same master seed."""

    RAW = 0
    # entries X_k(j) of the array
    SAMPLER = 1
    # free-standing i.i.d. draws, used as oracles
    ORBIT = 2
    # random starting points of orbits in the tower system
    TOWER = 3
    # orderings used when subdividing labeled towers
    ORACLE = 4
    # i.i.d. letters of the array oracle for orbit sums
    LEVELS = 5
    # base points for the level checks of a labeled tower


@enum.unique
class Variant(str, enum.Enum):
    X = "X"
    # raw entries
    Y = "Y"
    # truncated entries
    Z = "Z"
    # quantized entries


@functools.lru_cache(maxsize=2**14)
def _row_key(master_seed: int, stream_tag: int, k: int, replica: int) -> np.ndarray:
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(stream_tag, k, replica))
    return seq.generate_state(2, dtype=np.uint64)


def _raw_blocks(row_key: np.ndarray, first_column: int, count: int) -> np.ndarray:
    """Philox output blocks for columns first_column .. first_column + count - 1, shape (count, 4)"""
    bitgen = np.random.Philox(counter=first_column - 1, key=row_key)
    return bitgen.random_raw(4 * count).reshape(count, 4)


def _open_unit(words: np.ndarray) -> np.ndarray:
    """53-bit uniforms on the open interval (0, 1)"""
    return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def _cms_inputs(blocks: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    u = np.pi * (_open_unit(blocks[:, 0]) - 0.5)
    e = -np.log(_open_unit(blocks[:, 1]))
    return u, e


@dataclasses.dataclass(frozen=True)
class RandomKey:
    """Address of one deterministic substream: one variate per key."""

    master_seed: int
    k: int
    j: int
    replica: int = 0
    stream_tag: StreamTag = StreamTag.RAW

    def __post_init__(self):
        if not 0 <= self.master_seed <= MAX_SEED:
            raise RangeError(f"master_seed must be a 64-bit unsigned integer: {self.master_seed}")
        if self.k < 1:
            raise stable_core.DomainError(f"scale index k starts at 1: {self.k}")
        if self.j < 1 or self.replica < 0:
            raise RangeError(f"key indices out of range: k={self.k}, j={self.j}, replica={self.replica}")

    def row_key(self) -> np.ndarray:
        return _row_key(self.master_seed, int(self.stream_tag), self.k, self.replica)

    def raw_block(self) -> np.ndarray:
        """The four 64-bit words owned by this key"""
        return _raw_blocks(self.row_key(), self.j, 1)[0]

    def uniform_pair(self) -> Tuple[float, float]:
        """(U, E): U uniform on (-pi/2, pi/2), E unit-mean exponential"""
        u, e = _cms_inputs(self.raw_block()[np.newaxis, :])
        return float(u[0]), float(e[0])

    def generator(self) -> np.random.Generator:
        """A sequential generator private to this key, for draws that aren't one-per-column"""
        return np.random.Generator(np.random.Philox(counter=self.j - 1, key=self.row_key()))


@dataclasses.dataclass(frozen=True)
class ArraySpec:
    """alpha and seed of a triangular array; d_k and the row laws are derived."""

    alpha: float
    master_seed: int = 0

    def __post_init__(self):
        stable_core.make_params(self.alpha)  # raises on invalid alpha
        if not 0 <= self.master_seed <= MAX_SEED:
            raise RangeError(f"master_seed must be a 64-bit unsigned integer: {self.master_seed}")

    def row_params(self, k: int) -> stable_core.AlphaStableParams:
        """law of X_k(j): SaS(k**(-1/alpha))"""
        return stable_core.make_params(self.alpha, k ** (-1.0 / self.alpha))


# row geometry -------------------------------------------------------------------------- #


def _row_exponent(alpha: float, k: int) -> float:
    exponent = 2 * alpha * k / (2 - alpha)
    nearest = round(exponent)
    if abs(exponent - nearest) < 1e-9:
        # e.g. alpha=1.5: 6k computed as 17.999999999999996
        return float(nearest)
    return exponent


@functools.lru_cache(maxsize=4096)
def _row_length(alpha: float, k: int) -> int:
    if k < 1:
        raise RangeError(f"scale index must be >= 1: {k}")
    exponent = _row_exponent(alpha, k)
    if exponent > ROW_EXPONENT_CAP:
        raise RangeError(
            f"d_k = 2**{exponent:.3f} for alpha={alpha}, k={k} is above the 2**{ROW_EXPONENT_CAP} cap"
        )
    if exponent.is_integer():
        return 1 << int(exponent)
    return math.floor(2.0**exponent)


def row_length(spec: ArraySpec, k: int) -> int:
    """d_k = floor(2**(2 alpha k / (2 - alpha)))"""
    return _row_length(spec.alpha, k)


def max_guarded_k(alpha: float) -> int:
    """largest k whose row length passes the overflow guard"""
    k = max(1, math.floor(ROW_EXPONENT_CAP * (2 - alpha) / (2 * alpha)))
    while _row_exponent(alpha, k + 1) <= ROW_EXPONENT_CAP:
        k += 1
    while k > 1 and _row_exponent(alpha, k) > ROW_EXPONENT_CAP:
        k -= 1
    return k


def lower_cutoff(k: int) -> float:
    return math.ldexp(1.0, k)


def upper_cutoff(k: int) -> float:
    """2**(k*k), or inf once that no longer fits in a double"""
    return math.ldexp(1.0, k * k) if k * k < 1024 else math.inf


def row_nonzero_bound(alpha: float, k: int, cert: stable_core.TailBoundCert) -> float:
    """C_alpha 2**(-alpha k) / k, bounding P(Z_k(j) != 0) <= P(|X_k(j)| >= 2**k)"""
    return cert.c_alpha * 2.0 ** (-alpha * k) / k


# entries ------------------------------------------------------------------------------- #


def raw_entry(spec: ArraySpec, k: int, j: int, replica: int = 0) -> float:
    key = RandomKey(spec.master_seed, k, j, replica, StreamTag.RAW)
    return stable_core.sample_sas(spec.row_params(k), key)


def truncate_entry(spec: ArraySpec, k: int, x: float) -> float:
    magnitude = abs(x)
    if lower_cutoff(k) <= magnitude <= upper_cutoff(k):
        return x
    return 0.0


def _grid_floor(magnitude: float, lower: float, upper: float, d: int) -> float:
    if magnitude >= upper:
        return upper
    steps = math.floor((magnitude - lower) * d)
    z = min(lower + steps / d, upper)
    # at large magnitudes the grid is finer than the doubles around it: step to the
    # nearest double that is still within 1/d
    while abs(magnitude - z) > 1.0 / d:
        z = math.nextafter(z, magnitude)
    return z


def quantize_entry(spec: ArraySpec, k: int, y: float) -> float:
    if y == 0:
        return 0.0
    lower, upper = lower_cutoff(k), upper_cutoff(k)
    magnitude = abs(y)
    if not lower <= magnitude <= upper:
        raise ContractError(
            f"|y| = {magnitude} is outside [2**{k}, 2**{k * k}] and nonzero: not a truncated entry"
        )
    return math.copysign(_grid_floor(magnitude, lower, upper, row_length(spec, k)), y)


def z_entry(spec: ArraySpec, k: int, j: int, replica: int = 0) -> float:
    return quantize_entry(spec, k, truncate_entry(spec, k, raw_entry(spec, k, j, replica)))


# windows ------------------------------------------------------------------------------- #


def _raw_window(spec: ArraySpec, k: int, first: int, count: int, replica: int) -> np.ndarray:
    blocks = _raw_blocks(_row_key(spec.master_seed, int(StreamTag.RAW), k, replica), first, count)
    u, e = _cms_inputs(blocks)
    return stable_core.cms_transform(spec.alpha, spec.row_params(k).sigma, u, e)


def truncate_array(k: int, x: np.ndarray) -> np.ndarray:
    magnitude = np.abs(x)
    keep = (magnitude >= lower_cutoff(k)) & (magnitude <= upper_cutoff(k))
    return np.where(keep, x, 0.0)


def quantize_array(spec: ArraySpec, k: int, y: np.ndarray) -> np.ndarray:
    z = np.zeros_like(y)
    # nonzero truncated entries are rare, so the scalar quantizer is applied to them only
    for idx in np.flatnonzero(y):
        z[idx] = quantize_entry(spec, k, float(y[idx]))
    return z


def row_limit(spec: ArraySpec, k: int, n_max: int = 0) -> int:
    """last generable column of row k for runs with n <= n_max"""
    d = row_length(spec, k)
    return max(2 * d, d + n_max)


def _check_columns(spec: ArraySpec, k: int, columns: range, n_max: int) -> None:
    if columns.step != 1:
        raise RangeError(f"column windows must be contiguous: {columns}")
    if not len(columns):
        return
    limit = row_limit(spec, k, n_max)
    if columns.start < 1 or columns[-1] > limit:
        raise RangeError(
            f"columns {columns.start}..{columns[-1]} outside row {k}, which has columns 1..{limit}"
        )


def window_array(
    spec: ArraySpec,
    k: int,
    columns: range,
    replica: int = 0,
    variant: Union[Variant, str] = Variant.Z,
    n_max: int = 0,
) -> np.ndarray:
    """Entries of row k over a contiguous 1-based column range, as one array"""
    variant = Variant(variant)
    _check_columns(spec, k, columns, n_max)
    if not len(columns):
        return np.zeros(0)
    x = _raw_window(spec, k, columns.start, len(columns), replica)
    if variant is Variant.X:
        return x
    y = truncate_array(k, x)
    if variant is Variant.Y:
        return y
    return quantize_array(spec, k, y)


def window_entries(
    spec: ArraySpec,
    k: int,
    columns: range,
    replica: int = 0,
    variant: Union[Variant, str] = Variant.Z,
    n_max: int = 0,
) -> Iterator[float]:
    """Entries of row k over a column range, generated lazily in chunks"""
    _check_columns(spec, k, columns, n_max)
    for start in range(columns.start, columns.stop, CHUNK_COLUMNS):
        chunk = range(start, min(start + CHUNK_COLUMNS, columns.stop))
        yield from window_array(spec, k, chunk, replica, variant, n_max).tolist()


def iid_sample(
    params: stable_core.AlphaStableParams, master_seed: int, count: int, replica: int = 0
) -> np.ndarray:
    """count i.i.d. SaS draws from the sampler stream (not part of any array row)"""
    key = _row_key(master_seed, int(StreamTag.SAMPLER), 1, replica)
    out = np.empty(count)
    for start in range(0, count, CHUNK_COLUMNS * 16):
        stop = min(count, start + CHUNK_COLUMNS * 16)
        u, e = _cms_inputs(_raw_blocks(key, start + 1, stop - start))
        out[start:stop] = stable_core.cms_transform(params.alpha, params.sigma, u, e)
    return out


def quantizer_violations(spec: ArraySpec, k: int, y: np.ndarray, z: np.ndarray) -> int:
    """Number of entries breaking |Z - Y| <= 1/d_k, (Z = 0 <=> Y = 0) or grid membership"""
    d = row_length(spec, k)
    lower, upper = lower_cutoff(k), upper_cutoff(k)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    bad = (np.abs(z - y) > 1.0 / d) | ((z == 0) != (y == 0))
    magnitude = np.abs(z[z != 0])
    steps = (magnitude - lower) * d
    # a double near 2**(k*k) can be coarser than the grid; allow one ulp of slack
    slack = np.maximum(1e-6, np.spacing(magnitude) * d)
    off_grid = (
        (magnitude < lower)
        | (magnitude > upper)
        | ((np.abs(steps - np.round(steps)) > slack) & (magnitude != upper))
    )
    return int(bad.sum() + off_grid.sum())


# binary dump --------------------------------------------------------------------------- #


def dump_window(
    spec: ArraySpec,
    k: int,
    columns: range,
    path: Union[str, pathlib.Path],
    replica: int = 0,
    variant: Union[Variant, str] = Variant.Z,
    n_max: int = 0,
) -> pathlib.Path:
    """Write a window as little-endian float64 to <path>.bin with a JSON sidecar <path>.json"""
    variant = Variant(variant)
    path = pathlib.Path(path).with_suffix(".bin")
    path.parent.mkdir(parents=True, exist_ok=True)
    values = window_array(spec, k, columns, replica, variant, n_max)
    values.astype("<f8").tofile(path)
    sidecar = {
        "alpha": spec.alpha,
        "k": k,
        "j_range": [columns.start, columns.stop - 1],
        "replica": replica,
        "variant": variant.value,
        "master_seed": spec.master_seed,
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))
    log.info(f"dumped {len(values)} {variant.value} entries of row {k} to {path}")
    return path


def load_window(path: Union[str, pathlib.Path]) -> Tuple[np.ndarray, dict]:
    path = pathlib.Path(path).with_suffix(".bin")
    sidecar = json.loads(path.with_suffix(".json").read_text())
    return np.fromfile(path, dtype="<f8"), sidecar
