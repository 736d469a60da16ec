from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from hybridmap.graph import LayerKind
from hybridmap.hardware import VCK190, HardwareProfile, peak_tops
from hybridmap.perf import (DDR, AccConfig, CommEdge, HmmType, aie_footprint, comm_overhead,
                            divisible_parallelism, edge_conflict_free, force_partition, mm_cycles,
                            nonlinear_latency, throughput, utilization)

P1 = VCK190.with_(eff=1.0)


def loop_cycles(m, k, n, cfg, mac, eff):
    """Count array-tile steps by walking the loops."""
    steps = 0
    for _ in range(0, m, cfg.h1 * cfg.a):
        for _ in range(0, k, cfg.w1 * cfg.b):
            for _ in range(0, n, cfg.w2 * cfg.c):
                steps += 1
    return Fraction(steps * cfg.h1 * cfg.w1 * cfg.w2) / (mac * Fraction(eff).limit_denominator(10**6))


def test_utilization_examples():
    u = utilization(AccConfig(8, 8, 8, 4, 2, 4), [], VCK190)
    assert (u.aie, u.plio) == (32, 16)
    u = utilization(AccConfig(8, 8, 8, 2, 1, 2, 2, 1, 2), [], VCK190)
    assert u.ram_banks == 4
    assert utilization(AccConfig(8, 8, 8, 4, 10, 10), [], VCK190).aie == 400
    t1 = utilization(AccConfig(8, 8, 8, 4, 2, 4, hmm_type=HmmType.Type1), [], VCK190)
    assert t1.plio == 16 + 16


def test_dsp_rounds_up_to_array():
    u = utilization(AccConfig(8, 8, 8, 3, 1, 5), ["LayerNorm", "Softmax"], VCK190)
    assert u.dsp == 15 * -(-(512 + 336) // 15)
    assert utilization(AccConfig(8, 8, 8, 3, 1, 5), ["GeLU"], VCK190).dsp == 0


def test_mm_cycles_examples():
    cfg = AccConfig(64, 96, 144, 4, 2, 4)
    assert mm_cycles(256, 192, 576, cfg, P1) == 6912
    assert throughput(2 * 256 * 192 * 576, 6912, P1) == pytest.approx(8.192e12)
    assert mm_cycles(1, 1, 1, cfg, P1) == Fraction(64 * 96 * 144, 128)
    assert throughput(2, 1, VCK190.with_(freq_aie_hz=1.0)) == 2.0
    assert throughput(0, 5, P1) == 0.0


def test_full_array_reaches_peak():
    cfg = AccConfig(8, 8, 8, 10, 4, 10)
    m, k, n = 80 * 3, 32 * 5, 80 * 2
    assert throughput(2 * m * k * n, mm_cycles(m, k, n, cfg, P1), P1) == peak_tops(P1)


def test_footprint_examples():
    assert aie_footprint(AccConfig(32, 32, 32, 1, 1, 1, hmm_type=HmmType.Type1), 1, 1) == 6144
    assert aie_footprint(AccConfig(32, 32, 32, 1, 1, 8), 192, 768) == 18432 + 4096
    assert aie_footprint(AccConfig(32, 32, 32, 1, 1, 1), 192, 768) == 147456 + 4096


def test_partition_examples():
    assert divisible_parallelism((2, 2), (4, 1))
    assert not divisible_parallelism((2, 2), (3, 1))
    assert divisible_parallelism((4, 4), (4, 4))
    assert force_partition((2, 2), (4, 1)) == (4, 2)
    assert force_partition((2, 2), (2, 2)) == (2, 2)
    assert force_partition((2, 2), (3, 1)) is None


def test_comm_examples():
    prod = AccConfig(8, 8, 8, 2, 1, 2)
    forced = AccConfig(8, 8, 8, 4, 1, 1, 4, 2, 1)
    plain = AccConfig(8, 8, 8, 4, 1, 1)
    e = CommEdge(0, 1, 65536)
    assert edge_conflict_free(e, {0: prod, 1: forced})
    assert not edge_conflict_free(e, {0: prod, 1: plain})
    over = comm_overhead([e], {0: prod, 1: plain}, VCK190)
    assert over == [Fraction(65536, 4 * 8) / Fraction(230_000_000)]
    assert float(over[0]) == pytest.approx(8.9e-6, rel=0.01)
    assert comm_overhead([e], {0: prod, 1: forced}, VCK190) == [0]
    load = CommEdge(DDR, 0, 1 << 20)
    assert float(comm_overhead([load], {}, VCK190)[0]) == pytest.approx(40.96e-6)
    with pytest.raises(ValueError):
        CommEdge(0, 1, 0)


def test_nonlinear_examples():
    ln_plain = nonlinear_latency(LayerKind.LayerNorm, 197, 192, 8, False)
    ln_bypass = nonlinear_latency(LayerKind.LayerNorm, 197, 192, 8, True)
    assert (ln_plain, ln_bypass) == (9456, 4752)
    assert float(ln_bypass / ln_plain) == pytest.approx(0.502, abs=0.001)
    assert nonlinear_latency(LayerKind.LayerNorm, 1, 64, 8, True) == 2 * 64 // 8
    for bypass in (True, False):
        assert nonlinear_latency(LayerKind.GeLU, 197, 768, 8, bypass) == Fraction(197 * 768, 8)
    with pytest.raises(ValueError):
        nonlinear_latency(LayerKind.MatMul, 4, 4, 4, True)


def test_bad_config():
    with pytest.raises(ValueError):
        AccConfig(8, 8, 8, 2, 1, 2, part_a=3)
    with pytest.raises(ValueError):
        AccConfig(0, 8, 8, 1, 1, 1)


small = st.integers(1, 8)
dim = st.integers(1, 200)
effs = st.sampled_from([1.0, 0.8, 0.5, 0.25])


@given(dim, dim, dim, small, small, small, st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), effs)
def test_cycles_match_loop_oracle(m, k, n, h1, w1, w2, a, b, c, eff):
    cfg = AccConfig(h1, w1, w2, a, b, c)
    p = VCK190.with_(eff=eff)
    assert mm_cycles(m, k, n, cfg, p) == loop_cycles(m, k, n, cfg, 128, eff)
    ops = 2 * m * k * n
    assert throughput(ops, mm_cycles(m, k, n, cfg, p), p) <= peak_tops(p) * (1 + 1e-12)


@given(small, small, small, st.integers(1, 5), st.integers(1, 5), st.integers(1, 5),
       st.integers(1, 4), st.integers(1, 4), st.integers(1, 4))
def test_divisible_cycles_identity(h1, w1, w2, a, b, c, x, y, z):
    cfg = AccConfig(h1, w1, w2, a, b, c)
    m, k, n = h1 * a * x, w1 * b * y, w2 * c * z
    assert mm_cycles(m, k, n, cfg, P1) * (a * b * c * 128) == m * k * n
    for bigger in (AccConfig(h1, w1, w2, 2 * a, b, c), AccConfig(h1, w1, w2, a, 2 * b, c),
                   AccConfig(h1, w1, w2, a, b, 2 * c)):
        assert mm_cycles(m * 2, k * 2, n * 2, bigger, P1) <= mm_cycles(m * 2, k * 2, n * 2, cfg, P1)


pairs = st.tuples(st.integers(1, 16), st.integers(1, 16))


@given(pairs, pairs)
def test_force_partition_divides_both(prod, cons):
    fp = force_partition(prod, cons)
    if fp is None:
        assert not divisible_parallelism(prod, cons)
        return
    rows, cols = fp
    assert rows % prod[0] == 0 and rows % cons[0] == 0
    assert cols % prod[1] == 0 and cols % cons[1] == 0
    assert rows == max(prod[0], cons[0]) and cols == max(prod[1], cons[1])


@given(st.sampled_from([k for k in LayerKind if not k.is_hmm]), st.integers(1, 300),
       st.integers(1, 800), st.integers(1, 64))
def test_bypass_never_slower(kind, rows, row_len, lanes):
    assert nonlinear_latency(kind, rows, row_len, lanes, True) <= nonlinear_latency(kind, rows, row_len, lanes, False)


@given(st.integers(1, 8), st.integers(1, 8), st.integers(1, 8), st.booleans())
def test_utilization_is_eq1(a, b, c, t1):
    ht = HmmType.Type1 if t1 else HmmType.Type0
    u = utilization(AccConfig(8, 8, 8, a, b, c, hmm_type=ht), [], VCK190)
    assert u.aie == a * b * c
    assert u.plio == (a + c) * b + (a * c if t1 else 0)


def test_profile_field_used_for_bank_size():
    p = HardwareProfile(bank_bytes=128)
    assert utilization(AccConfig(8, 8, 8, 1, 1, 1), [], p).ram_banks == 1
    assert utilization(AccConfig(16, 8, 16, 1, 1, 1), [], p).ram_banks == 4
