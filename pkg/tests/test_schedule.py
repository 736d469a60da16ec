import itertools
import random
from fractions import Fraction
from functools import lru_cache

import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_mm_graph
from hybridmap.graph import MODELS, build_transformer, chain_graph
from hybridmap.hardware import VCK190
from hybridmap.perf import DDR, HmmType
from hybridmap.schedule import (Assignment, InfeasibleError, Schedule, acc_types,
                                assignment_from_genome, canonical_genome, check_schedule,
                                comm_edges, evaluate, hw_partition, largest_remainder,
                                layer_acc_schedule, mem_allocation, min_array, spatial_genome)

CHAIN4 = chain_graph([(4, 4, 4)] * 4)
UNIT = {i: 1 for i in range(4)}


def optimal_unit_makespan(acc_of, n_layers, n_bat):
    """Exact optimum for a unit-time chain by search over per-step choices."""
    jobs = [(b, lid) for b in range(n_bat) for lid in range(n_layers)]
    accs = sorted(set(acc_of))

    @lru_cache(maxsize=None)
    def best(done):
        if len(done) == len(jobs):
            return 0
        ready = [j for j in jobs if j not in done and (j[1] == 0 or (j[0], j[1] - 1) in done)]
        per_acc = [[j for j in ready if acc_of[j[1]] == a] + [None] for a in accs]
        out = None
        for pick in itertools.product(*per_acc):
            chosen = [j for j in pick if j is not None]
            if not chosen:
                continue
            v = 1 + best(done | frozenset(chosen))
            out = v if out is None else min(out, v)
        return out

    return best(frozenset())


def test_chain_reference_assignment_takes_six():
    a = Assignment({0: 0, 1: 1, 2: 1, 3: 0})
    sched, _ = layer_acc_schedule(a, CHAIN4, 2, UNIT, boundary_io=False)
    assert sched.makespan == 6
    check_schedule(sched, CHAIN4)


def test_chain_enumeration_finds_five():
    spans, opt = {}, {}
    for acc in itertools.product((0, 1), repeat=4):
        sched, _ = layer_acc_schedule(Assignment(dict(enumerate(acc))), CHAIN4, 2, UNIT, boundary_io=False)
        spans[acc] = sched.makespan
        opt[acc] = optimal_unit_makespan(acc, 4, 2)
        assert sched.makespan >= opt[acc]
    assert len(spans) == 16
    assert min(spans.values()) == 5
    assert min(opt.values()) == 5  # no assignment or ordering beats 5
    assert spans[(0, 1, 0, 1)] == 5
    assert spans[(0, 0, 0, 0)] == 8


def test_schedule_tie_break_and_roundtrip():
    a = Assignment({0: 0, 1: 1, 2: 0, 3: 1})
    sched, _ = layer_acc_schedule(a, CHAIN4, 2, UNIT, boundary_io=False)
    first = [(e.batch, e.layer, e.acc, e.start) for e in sched.entries[:3]]
    assert first == [(0, 0, 0, 0), (0, 1, 1, 1), (1, 0, 0, 1)]
    again = Schedule.from_dict(sched.to_dict())
    assert again.entries == sched.entries and again.makespan == sched.makespan
    assert sched.to_csv().splitlines()[0] == "acc,batch,layer,start_us,end_us"
    assert len(sched.to_jsonl().splitlines()) == 8
    lat, thr = evaluate(sched)
    assert lat == 5.0 and thr == pytest.approx(2 * sched.ops_per_batch / 5)


def test_comm_edges_cross_acc_and_boundary():
    a = Assignment({0: 0, 1: 1, 2: 1, 3: 0})
    edges = comm_edges(a, CHAIN4, boundary_io=True)
    pairs = [(e.producer_acc, e.consumer_acc) for e in edges]
    assert pairs == [(DDR, 0), (0, 1), (1, 0), (0, DDR)]
    assert all(e.bytes == 16 for e in edges)
    assert len(comm_edges(a, CHAIN4, boundary_io=False)) == 2


def test_genome_helpers(deit_t):
    assert canonical_genome((3, 3, 1, 0, 1)) == (0, 0, 1, 2, 1)
    a = assignment_from_genome(deit_t, (0, 1, 1, 2, 3, 3, 4))
    a.validate(deit_t, 5)
    for layer in deit_t.layers:
        if not layer.is_hmm and layer.deps:
            assert a.acc_of[layer.id] == a.acc_of[layer.deps[0]]
    types = acc_types(a, deit_t)
    assert types[1] == HmmType.Type1 and types[2] == HmmType.Type1 and types[0] == HmmType.Type0
    assert spatial_genome(deit_t) == tuple(range(7))
    assert spatial_genome(deit_t, 3) == (0, 1, 2, 0, 1, 2, 0)
    with pytest.raises(ValueError):
        assignment_from_genome(deit_t, (0, 1))
    with pytest.raises(ValueError):
        Assignment({0: 0}).validate(deit_t)


def test_largest_remainder():
    assert largest_remainder(10, [1, 1, 1]) == [4, 3, 3]
    assert largest_remainder(10, [0, 0]) == [5, 5]
    assert largest_remainder(10, [9, 1], [0, 3]) == [7, 3]
    with pytest.raises(InfeasibleError):
        largest_remainder(3, [1, 1], [2, 2])


@given(st.integers(0, 500), st.lists(st.integers(0, 1000), min_size=1, max_size=8))
def test_largest_remainder_sums(total, weights):
    out = largest_remainder(total, weights)
    assert sum(out) == total
    wsum = sum(weights)
    for o, w in zip(out, weights):
        q = Fraction(total * w, wsum) if wsum else Fraction(total, len(weights))
        assert abs(o - q) < 1


def test_hw_partition_respects_device(deit_t):
    a = assignment_from_genome(deit_t, tuple(range(7)))
    sched, edges = layer_acc_schedule(a, deit_t, 1, {})
    mem = mem_allocation(edges, deit_t, a, VCK190.bank_bytes)
    part = hw_partition(mem, sched, deit_t, a, VCK190)
    tot = part.totals()
    assert tot["aie"] == 400 and tot["plio"] == VCK190.plio_budget
    assert tot["ram_banks"] == VCK190.ram_banks_total and tot["dsp"] == VCK190.dsp_total
    for acc in a.accs:
        aie, plio, _ = min_array(deit_t, a.layers_on(acc), acc_types(a, deit_t)[acc], VCK190)
        assert part.aie[acc] >= aie and part.plio[acc] >= plio
        assert part.ram_banks[acc] >= mem.ram_banks_min[acc]


def test_hw_partition_rejects_tiny_device(deit_t):
    a = assignment_from_genome(deit_t, (0,) * 7)
    sched, edges = layer_acc_schedule(a, deit_t, 1, {})
    mem = mem_allocation(edges, deit_t, a, VCK190.bank_bytes)
    with pytest.raises(InfeasibleError):
        hw_partition(mem, sched, deit_t, a, VCK190.with_(bram_total=10, uram_total=0))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 7), st.integers(1, 4), st.integers(1, 3))
def test_random_schedules_are_valid(seed, n_layers, n_bat, n_acc):
    rng = random.Random(seed)
    g = random_mm_graph(rng, n_layers)
    a = Assignment({lid: rng.randrange(n_acc) for lid in g.ids})
    dur = {lid: Fraction(rng.randint(0, 9), rng.randint(1, 3)) for lid in g.ids}
    sched, _ = layer_acc_schedule(a, g, n_bat, dur)
    check_schedule(sched, g)
    # no accelerator can finish before its own total work
    for acc in a.accs:
        assert sched.makespan >= n_bat * sum(dur[lid] for lid in a.layers_on(acc))
    # the critical path of one batch is a lower bound too
    finish = {}
    for lid in g.ids:
        finish[lid] = dur[lid] + max((finish[d] for d in g[lid].deps), default=0)
    assert sched.makespan >= max(finish.values())


def test_negative_duration_rejected():
    with pytest.raises(ValueError):
        layer_acc_schedule(Assignment({i: 0 for i in range(4)}), CHAIN4, 1, {0: -1})
    with pytest.raises(ValueError):
        layer_acc_schedule(Assignment({i: 0 for i in range(4)}), CHAIN4, 0, UNIT)


def test_check_schedule_catches_overlap():
    a = Assignment({i: 0 for i in range(4)})
    sched, _ = layer_acc_schedule(a, CHAIN4, 1, UNIT)
    from hybridmap.schedule import Entry
    bad = Schedule([Entry(0, e.layer, 0, Fraction(0), Fraction(1)) for e in sched.entries], 1,
                   sched.ops_per_batch, sched.acc_busy)
    with pytest.raises(AssertionError):
        check_schedule(bad, CHAIN4)


def test_lvvit_builds():
    g = build_transformer(MODELS["lvvit_t"])
    assert g.slots()[0] == "patch"
