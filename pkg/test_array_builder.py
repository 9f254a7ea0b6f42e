import math

import numpy as np
import pytest

import array_builder as ab
import stable_core as sc


def test_row_lengths():
    spec = ab.ArraySpec(1.0)
    assert [ab.row_length(spec, k) for k in (1, 2, 3, 6)] == [4, 16, 64, 4096], "d_k = 4**k at alpha=1"
    # 6k exactly, despite 2*1.5*k/0.5 rounding below the integer
    assert ab.row_length(ab.ArraySpec(1.5), 3) == 2**18
    assert ab.row_length(ab.ArraySpec(0.5), 3) == math.floor(2.0**2)
    with pytest.raises(ab.RangeError):
        ab.row_length(spec, 0)


def test_row_length_guard():
    guard = ab.max_guarded_k(1.0)
    assert guard == 31, "2**(2k) <= 2**62 up to k=31"
    ab.row_length(ab.ArraySpec(1.0), guard)
    with pytest.raises(ab.RangeError):
        ab.row_length(ab.ArraySpec(1.0), guard + 1)


def test_cutoffs():
    assert ab.lower_cutoff(3) == 8.0 and ab.upper_cutoff(3) == 512.0
    assert ab.upper_cutoff(32) == math.inf, "2**1024 doesn't fit in a double"


def test_seed_range():
    with pytest.raises(ab.RangeError):
        ab.ArraySpec(1.0, -1)
    with pytest.raises(ab.RangeError):
        ab.ArraySpec(1.0, 2**64)
    with pytest.raises(sc.ParamsError):
        ab.ArraySpec(2.0)
    ab.ArraySpec(1.0, 2**64 - 1)


def test_entries_are_counter_keyed():
    spec = ab.ArraySpec(1.2, master_seed=42)
    whole = ab.window_array(spec, 3, range(1, 101), replica=5, variant=ab.Variant.X)
    part = ab.window_array(spec, 3, range(40, 61), replica=5, variant=ab.Variant.X)
    assert np.array_equal(whole[39:60], part), "a sub-window must reproduce the same entries"
    assert ab.raw_entry(spec, 3, 50, 5) == whole[49], "scalar and window access disagree"
    other = ab.window_array(spec, 3, range(1, 101), replica=6, variant=ab.Variant.X)
    assert not np.array_equal(whole, other), "replicas must be independent streams"


def test_truncate_inclusive_bounds():
    spec = ab.ArraySpec(1.0)
    k = 2
    assert ab.truncate_entry(spec, k, 4.0) == 4.0, "2**k itself is kept"
    assert ab.truncate_entry(spec, k, -16.0) == -16.0, "2**(k*k) itself is kept"
    assert ab.truncate_entry(spec, k, 3.999) == 0.0
    assert ab.truncate_entry(spec, k, 16.5) == 0.0
    x = np.array([1.0, -4.0, 10.0, 17.0, -20.0])
    assert np.array_equal(ab.truncate_array(k, x), np.array([0.0, -4.0, 10.0, 0.0, 0.0]))


def test_quantize_floors_to_grid():
    spec = ab.ArraySpec(1.0)
    k, d = 2, 16
    assert ab.quantize_entry(spec, k, 0.0) == 0.0
    assert ab.quantize_entry(spec, k, 4.0) == 4.0
    assert ab.quantize_entry(spec, k, 5.03) == 4.0 + 16 / d, "floor onto 4 + m/16"
    assert ab.quantize_entry(spec, k, -5.03) == -(4.0 + 16 / d), "quantization is odd"
    assert ab.quantize_entry(spec, k, 16.0) == 16.0, "the upper cutoff maps to itself"
    with pytest.raises(ab.ContractError):
        ab.quantize_entry(spec, k, 3.0)


def test_quantizer_contract_on_window():
    spec = ab.ArraySpec(0.8, master_seed=1)
    k = 2
    d = ab.row_length(spec, k)
    y = ab.window_array(spec, k, range(1, 2001), variant=ab.Variant.Y, n_max=2000)
    z = ab.window_array(spec, k, range(1, 2001), variant=ab.Variant.Z, n_max=2000)
    assert np.count_nonzero(y), "row 2 at alpha=0.8 should have some nonzero truncated entries"
    assert ab.quantizer_violations(spec, k, y, z) == 0
    assert np.all(np.abs(z - y) <= 1 / d)
    assert np.array_equal(z == 0, y == 0)
    broken = z.copy()
    first = np.flatnonzero(y)[0]
    broken[first] += 0.5 / d
    assert ab.quantizer_violations(spec, k, y, broken) >= 1, "an off-grid entry must be counted"


def test_z_entry_matches_window():
    spec = ab.ArraySpec(0.8, master_seed=9)
    z = ab.window_array(spec, 2, range(1, 301), replica=1, variant=ab.Variant.Z, n_max=300)
    assert [ab.z_entry(spec, 2, j, 1) for j in range(1, 301)] == z.tolist()


def test_window_limits():
    spec = ab.ArraySpec(1.0)
    assert ab.row_limit(spec, 2, 0) == 32
    assert ab.row_limit(spec, 2, 100) == 116
    with pytest.raises(ab.RangeError):
        ab.window_array(spec, 2, range(0, 5))
    with pytest.raises(ab.RangeError):
        ab.window_array(spec, 2, range(30, 34))
    with pytest.raises(ab.RangeError):
        ab.window_array(spec, 2, range(1, 10, 2))
    assert ab.window_array(spec, 2, range(30, 34), n_max=100).shape == (4,)
    assert ab.window_array(spec, 2, range(5, 5)).size == 0


def test_window_entries_is_lazy_window_array():
    spec = ab.ArraySpec(1.0, master_seed=3)
    columns = range(1, ab.CHUNK_COLUMNS + 11)
    lazy = list(ab.window_entries(spec, 9, columns, variant=ab.Variant.X))
    assert lazy == ab.window_array(spec, 9, columns, variant=ab.Variant.X).tolist()


def test_random_key_validation():
    with pytest.raises(ab.RangeError):
        ab.RandomKey(0, 1, 0)
    with pytest.raises(sc.DomainError, match="k starts at 1"):
        ab.RandomKey(0, 0, 1)
    key = ab.RandomKey(0, 1, 1, stream_tag=ab.StreamTag.TOWER)
    assert key.raw_block().shape == (4,)
    u, e = key.uniform_pair()
    assert -math.pi / 2 < u < math.pi / 2 and e > 0


def test_row_nonzero_bound():
    cert = sc.calibrate_tail_constant(1.0)
    bound = ab.row_nonzero_bound(1.0, 4, cert)
    spec = ab.ArraySpec(1.0)
    assert sc.tail_probability(spec.row_params(4), 16.0) <= bound * (1 + 1e-8)


def test_dump_and_load_window(tmp_path):
    spec = ab.ArraySpec(1.0, master_seed=5)
    path = ab.dump_window(spec, 2, range(3, 20), tmp_path / "row2", replica=1, variant=ab.Variant.Y)
    values, sidecar = ab.load_window(path)
    assert np.array_equal(values, ab.window_array(spec, 2, range(3, 20), 1, ab.Variant.Y))
    assert sidecar["j_range"] == [3, 19] and sidecar["variant"] == "Y" and sidecar["master_seed"] == 5


def test_iid_sample_is_reproducible():
    params = sc.make_params(1.5, 0.5)
    a = ab.iid_sample(params, 17, 1000)
    assert np.array_equal(a, ab.iid_sample(params, 17, 1000))
    assert np.array_equal(a[:10], ab.iid_sample(params, 17, 10)), "prefixes agree"
