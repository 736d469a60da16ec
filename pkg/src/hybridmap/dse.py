"""Two-level design search.

The outer level is an evolutionary search over which accelerator runs each
compute slot. The inner level fixes the resource split and exhaustively picks
the tiling, array shape and RAM partitioning of every accelerator.
"""

from __future__ import annotations

import json
import math
import os
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from math import ceil, lcm

import numpy as np

from .graph import BYTES_PER_ELEM, Graph
from .hardware import HardwareProfile
from .perf import AccConfig, CommEdge, HmmType, edge_conflict_free, edge_seconds, exact, layer_cycles
from .schedule import (Assignment, HwPartition, InfeasibleError, MemPlan, Schedule, acc_types,
                       assignment_from_genome, canonical_genome, evaluate, hw_partition,
                       layer_acc_schedule, mem_allocation, sequential_genome, spatial_genome)

MODES = ("sequential", "spatial", "hybrid")


@dataclass(frozen=True)
class EaParams:
    n_acc: int = 2
    n_bat: int = 1
    n_pop: int = 16
    n_child: int = 16
    n_iter: int = 50
    seed: int = 0
    lat_cons: float = math.inf
    inter_acc_flag: bool = True
    mutation_rate: float = 0.5
    tile_min: int = 8
    tile_cap: int = 256
    eval_budget: int | None = None  # evaluated configs per design, None = exhaustive
    boundary_io: bool = True
    bypass_nonlinear: bool = True
    workers: int = 1

    def validate(self) -> "EaParams":
        if self.n_acc < 1 or self.n_bat < 1:
            raise ValueError("n_acc and n_bat must be >= 1")
        if self.n_pop < 2:
            raise ValueError("n_pop must be >= 2")
        if self.n_child < 2 or self.n_child % 2:
            raise ValueError("n_child must be a positive even number")
        if self.n_iter < 1:
            raise ValueError("n_iter must be >= 1")
        if not self.lat_cons > 0:
            raise ValueError("lat_cons must be positive")
        if self.tile_min < 1 or self.tile_cap < self.tile_min:
            raise ValueError("need 1 <= tile_min <= tile_cap")
        return self


@dataclass
class DesignPoint:
    genome: tuple
    assignment: Assignment
    cfgs: dict
    schedule: Schedule | None
    latency: float
    throughput: float
    feasible: bool
    n_bat: int = 1
    mode: str = "hybrid"
    partition: HwPartition | None = None
    evaluated: int = 0
    reason: str = ""
    boundary_io: bool = True

    @property
    def n_acc(self) -> int:
        return len(set(self.genome))

    @property
    def fitness(self) -> float:
        return self.throughput if self.feasible else 0.0

    def to_dict(self) -> dict:
        return {
            "genome": list(self.genome),
            "assignment": self.assignment.to_dict(),
            "cfgs": {str(a): c.to_dict() for a, c in sorted(self.cfgs.items())},
            "schedule": self.schedule.to_dict() if self.schedule is not None else None,
            "latency": self.latency,
            "throughput": self.throughput,
            "feasible": self.feasible,
            "n_bat": self.n_bat,
            "mode": self.mode,
            "partition": self.partition.to_dict() if self.partition is not None else None,
            "evaluated": self.evaluated,
            "reason": self.reason,
            "boundary_io": self.boundary_io,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DesignPoint":
        part = d.get("partition")
        if part is not None:
            part = HwPartition(**{k: {int(a): v for a, v in part[k].items()}
                                  for k in ("aie", "plio", "ram_banks", "dsp")})
        sched = d.get("schedule")
        return cls(
            genome=tuple(d["genome"]),
            assignment=Assignment.from_dict(d["assignment"]),
            cfgs={int(a): AccConfig.from_dict(c) for a, c in d["cfgs"].items()},
            schedule=Schedule.from_dict(sched) if sched is not None else None,
            latency=float(d["latency"]),
            throughput=float(d["throughput"]),
            feasible=bool(d["feasible"]),
            n_bat=int(d.get("n_bat", 1)),
            mode=d.get("mode", "hybrid"),
            partition=part,
            evaluated=int(d.get("evaluated", 0)),
            reason=d.get("reason", ""),
            boundary_io=bool(d.get("boundary_io", True)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DesignPoint":
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# per-accelerator exhaustive customization


@dataclass(frozen=True)
class AccProblem:
    """Everything the search of one accelerator depends on (hashable, cacheable)."""

    groups: tuple  # (m, k, n, heads, count) of the compute layers
    hmm_type: int
    dsp_cost: int
    aie: int
    plio: int
    ram_avail: int  # banks left for partitioned buffers
    dsp: int
    in_partners: tuple = ()  # (a, c) of fixed producers
    out_partners: tuple = ()  # (a, b, part_a, part_b, part_c, ram_util, ram_avail) of fixed consumers
    flag: bool = True
    budget: int | None = None
    local_mem: int = 32768
    bank_bytes: int = 4608
    tile_min: int = 8
    tile_cap: int = 256


@dataclass(frozen=True)
class AccChoice:
    cfg: AccConfig | None
    evaluated: int
    cycles_key: int  # cycles * mac * eff of the chosen config


def _divisors(n: int) -> list[int]:
    small, large = [], []
    i = 1
    while i * i <= n:
        if n % i == 0:
            small.append(i)
            if i * i != n:
                large.append(n // i)
        i += 1
    return small + large[::-1]


def tile_candidates(dims, tile_min: int, tile_cap: int) -> np.ndarray:
    """Divisors of the layer dimensions plus powers of two, within [lo, cap]."""
    lo = min(tile_min, min(dims))
    hi = min(tile_cap, 1 << (max(dims) - 1).bit_length())
    vals = {t for d in dims for t in _divisors(d) if lo <= t <= hi}
    t = 1
    while t <= hi:
        if t >= lo:
            vals.add(t)
        t *= 2
    return np.array(sorted(vals), dtype=np.int64)


def _ceil_div(x, y):
    return -(-x // y)


# part multipliers {1,2,4} per axis: number of (ja, jb, jc) whose product is 2**s
_PART_MULT_COUNT = [1, 3, 6, 7, 6, 3, 1]
PART_MULTIPLIERS = (1, 2, 4)


def _parallel_grid(prob: AccProblem, lo_m, lo_k, lo_n, max_m, max_k, max_n):
    a_hi = min(prob.aie, _ceil_div(max_m, lo_m))
    b_hi = min(prob.aie, _ceil_div(max_k, lo_k))
    c_hi = min(prob.aie, _ceil_div(max_n, lo_n))
    A, B, C = np.meshgrid(np.arange(1, a_hi + 1), np.arange(1, b_hi + 1), np.arange(1, c_hi + 1),
                          indexing="ij")
    A, B, C = A.ravel(), B.ravel(), C.ravel()
    ok = A * B * C <= prob.aie
    plio = (A + C) * B + (A * C if prob.hmm_type == HmmType.Type1 else 0)
    ok &= plio <= prob.plio
    if prob.dsp_cost:
        ac = A * C
        ok &= ac * _ceil_div(prob.dsp_cost, ac) <= prob.dsp
    A, B, C, plio = A[ok], B[ok], C[ok], plio[ok]
    util_ok = np.ones(len(A), dtype=bool)
    pa, pb = A.copy(), B.copy()
    if prob.flag:
        for (qa, qc) in prob.in_partners:
            util_ok &= ((A % qa == 0) | (qa % A == 0)) & ((B % qc == 0) | (qc % B == 0))
            pa = np.lcm(pa, qa)
            pb = np.lcm(pb, qc)
        for (qa, qb, qpa, qpb, qpc, qru, qavail) in prob.out_partners:
            util_ok &= ((A % qa == 0) | (qa % A == 0)) & ((C % qb == 0) | (qb % C == 0))
            util_ok &= np.lcm(qpa, A) * np.lcm(qpb, C) * qpc * qru <= qavail
    return A, B, C, plio, pa, pb, util_ok


def search_acc(prob: AccProblem) -> AccChoice:
    return _search_acc_cached(prob)


@lru_cache(maxsize=65536)
def _search_acc_cached(prob: AccProblem) -> AccChoice:
    if not prob.groups:
        # nothing to compute: the smallest array that exists
        cfg = AccConfig(1, 1, 1, 1, 1, 1, hmm_type=HmmType(prob.hmm_type))
        return AccChoice(cfg, 0, 0)
    ms = [g[0] for g in prob.groups]
    ks = [g[1] for g in prob.groups]
    ns = [g[2] for g in prob.groups]
    H1 = tile_candidates(ms, prob.tile_min, prob.tile_cap)
    W1 = tile_candidates(ks, prob.tile_min, prob.tile_cap)
    W2 = tile_candidates(ns, prob.tile_min, prob.tile_cap)
    A, B, C, plio, PA, PB, par_ok = _parallel_grid(prob, H1[0], W1[0], W2[0], max(ms), max(ks), max(ns))
    nH, nW1, nW2 = len(H1), len(W1), len(W2)
    T = nH * nW1 * nW2
    th1 = np.repeat(H1, nW1 * nW2)
    tw1 = np.tile(np.repeat(W1, nW2), nH)
    tw2 = np.tile(W2, nH * nW1)
    ru = _ceil_div(2 * th1 * tw2, prob.bank_bytes)
    type1 = prob.hmm_type == HmmType.Type1
    if type1:
        fp_tile = 2 * (th1 * tw1 + tw1 * tw2 + th1 * tw2)
        pinned = np.zeros(len(A), dtype=np.int64)
    else:
        fp_tile = 2 * (th1 * tw1 + th1 * tw2)
        pinned = np.zeros(len(A), dtype=np.int64)
        for m, k, n, h, cnt in prob.groups:
            pinned = np.maximum(pinned, _ceil_div(k, B) * _ceil_div(n, C))

    budget = prob.budget
    used = 0
    best = None  # (cycles, aie, plio, ram, global index) + config
    chunk = max(1, 4_000_000 // max(T, 1))
    for s in range(0, len(A), chunk):
        if budget is not None and used >= budget:
            break
        sl = slice(s, s + chunk)
        a, b, c = A[sl][:, None], B[sl][:, None], C[sl][:, None]
        mask = par_ok[sl][:, None] & (fp_tile[None, :] + pinned[sl][:, None] <= prob.local_mem)
        if prob.flag:
            base = PA[sl][:, None] * PB[sl][:, None] * c
            ram = base * ru[None, :]
            mask &= ram <= prob.ram_avail
            n_eval = mask.astype(np.int64)
        else:
            ram = a * b * c * ru[None, :]
            n_eval = np.zeros(mask.shape, dtype=np.int64)
            for sh, cnt in enumerate(_PART_MULT_COUNT):
                n_eval += cnt * ((ram << sh) <= prob.ram_avail)
            n_eval *= mask
            mask &= n_eval > 0
        flat = n_eval.ravel()
        if budget is not None:
            cum = np.cumsum(flat)
            first = cum - flat  # evals spent before each candidate
            inside = first < (budget - used)
            mask &= inside.reshape(mask.shape)
            used += int(min(cum[-1] if len(cum) else 0, budget - used))
        else:
            used += int(flat.sum())
        if not mask.any():
            continue
        cyc = np.zeros(mask.shape, dtype=np.int64)
        h1 = H1[None, :]
        w1 = W1[None, :]
        w2 = W2[None, :]
        for m, k, n, heads, cnt in prob.groups:
            fm = _ceil_div(m, h1 * a) * h1  # (chunk, nH)
            fk = _ceil_div(k, w1 * b) * w1
            fn = _ceil_div(n, w2 * c) * w2
            term = fm[:, :, None, None] * fk[:, None, :, None] * fn[:, None, None, :]
            cyc += (heads * cnt) * term.reshape(len(a), T)
        big = np.iinfo(np.int64).max
        cyc = np.where(mask, cyc, big)
        cmin = cyc.min()
        cand = cyc == cmin
        aie = (a * b * c) * np.ones((1, T), dtype=np.int64)
        pl = plio[sl][:, None] * np.ones((1, T), dtype=np.int64)
        for arr in (aie, pl, ram):
            arr = np.where(cand, arr, big)
            cand &= arr == arr.min()
        idx = int(np.flatnonzero(cand.ravel())[0])
        pi, ti = divmod(idx, T)
        row = s + pi
        ram_v = int(ram.ravel()[idx])
        key = (int(cmin), int(A[row] * B[row] * C[row]), int(plio[row]), ram_v, row * T + ti)
        if best is None or key < best[0]:
            if prob.flag:
                parts = (int(PA[row]), int(PB[row]), int(C[row]))
            else:
                parts = (int(A[row]), int(B[row]), int(C[row]))
            cfg = AccConfig(int(th1[ti]), int(tw1[ti]), int(tw2[ti]),
                            int(A[row]), int(B[row]), int(C[row]), *parts,
                            hmm_type=HmmType(prob.hmm_type))
            best = (key, cfg)
    if best is None:
        return AccChoice(None, used, 0)
    return AccChoice(best[1], used, best[0][0])


@dataclass
class AccDseResult:
    cfgs: dict
    evaluated: dict
    order: list
    feasible: bool
    reason: str = ""


def acc_groups(assign: Assignment, g: Graph, acc: int) -> tuple:
    counts: dict[tuple, int] = {}
    for lid in assign.layers_on(acc):
        layer = g[lid]
        if layer.is_hmm:
            key = (layer.m, layer.k, layer.n, layer.heads)
            counts[key] = counts.get(key, 0) + 1
    return tuple(k + (v,) for k, v in sorted(counts.items()))


def fused_kinds(assign: Assignment, g: Graph, acc: int) -> list[str]:
    return sorted({g[lid].kind.value for lid in assign.layers_on(acc) if not g[lid].is_hmm})


def _ram_util(h1: int, w2: int, bank_bytes: int) -> int:
    return _ceil_div(2 * h1 * w2, bank_bytes)


def acc_dse(part: HwPartition, schedule: Schedule, assign: Assignment, edges, inter_acc_flag: bool,
            p: HardwareProfile, g: Graph, mem: MemPlan | None = None, *, tile_min: int = 8,
            tile_cap: int = 256, eval_budget: int | None = None) -> AccDseResult:
    """Pick every accelerator's configuration, in order of first use.

    With ``inter_acc_flag`` the array shape must divide evenly against
    partners already fixed, and RAM partitions are forced to the common
    multiple so transfers overlap with compute. Without it the partition
    factors are a free search dimension and conflicts are only found (and
    paid for as serialized copies) afterwards.
    """
    types = acc_types(assign, g)
    order = [a for a in schedule.acc_order() if a in types]
    order += [a for a in assign.accs if a not in order]
    pairs = sorted({(e.producer_acc, e.consumer_acc) for e in edges if not e.is_boundary})
    weight_banks = {a: 0 for a in assign.accs}
    if mem is not None:
        weight_banks = {a: _ceil_div(mem.weight_bytes.get(a, 0), p.bank_bytes) for a in assign.accs}
    avail = {a: part.ram_banks[a] - weight_banks[a] for a in assign.accs}
    cfgs: dict[int, AccConfig] = {}
    evaluated: dict[int, int] = {}
    left = eval_budget
    for i, acc in enumerate(order):
        ins, outs = (), ()
        if inter_acc_flag:
            ins = tuple(sorted({cfgs[pa].write_pattern for pa, ca in pairs if ca == acc and pa in cfgs}))
            outs = tuple(sorted({(cfgs[ca].a, cfgs[ca].b, cfgs[ca].part_a, cfgs[ca].part_b,
                                  cfgs[ca].part_c, _ram_util(cfgs[ca].h1, cfgs[ca].w2, p.bank_bytes),
                                  avail[ca])
                                 for pa, ca in pairs if pa == acc and ca in cfgs}))
        budget = None
        if left is not None:
            budget = max(0, left // (len(order) - i))
        kinds = fused_kinds(assign, g, acc)
        prob = AccProblem(
            groups=acc_groups(assign, g, acc), hmm_type=int(types[acc]),
            dsp_cost=p.dsp_cost(kinds), aie=part.aie[acc], plio=part.plio[acc],
            ram_avail=avail[acc], dsp=part.dsp[acc], in_partners=ins, out_partners=outs,
            flag=inter_acc_flag, budget=budget, local_mem=p.aie_local_mem_bytes,
            bank_bytes=p.bank_bytes, tile_min=tile_min, tile_cap=tile_cap)
        choice = search_acc(prob)
        evaluated[acc] = choice.evaluated
        if left is not None:
            left -= choice.evaluated
        if choice.cfg is None:
            return AccDseResult(cfgs, evaluated, order, False, f"no configuration fits accelerator {acc}")
        cfg = choice.cfg
        cfgs[acc] = cfg
        if inter_acc_flag:
            # widen the partitions of consumers fixed earlier
            for pa, ca in pairs:
                if pa == acc and ca in cfgs and ca != acc:
                    q = cfgs[ca]
                    cfgs[ca] = replace(q, part_a=lcm(q.part_a, cfg.a), part_b=lcm(q.part_b, cfg.c))
    return AccDseResult(cfgs, evaluated, order, True)


# ---------------------------------------------------------------------------
# durations and the composed evaluation


def provisional_durations(g: Graph, p: HardwareProfile) -> dict:
    """Work-proportional durations used before configurations exist."""
    rate = p.aie_total * p.mac_per_aie_per_cycle * exact(p.eff) * exact(p.freq_aie_hz)
    return {layer.id: Fraction(layer.macs) / rate for layer in g.layers}


def design_durations(g: Graph, assign: Assignment, cfgs: dict, edges, p: HardwareProfile,
                     compute: dict | None = None) -> dict:
    """Seconds each layer holds its accelerator, communication included.

    Inbound copies and DMA loads precede a layer, DMA stores follow it.
    Nonlinear kernels stream behind the matrix engine and are taken as fully
    hidden here; the simulator checks that assumption.
    """
    f_aie = exact(p.freq_aie_hz)
    comm: dict[int, Fraction] = {lid: Fraction(0) for lid in g.ids}
    for e in edges:
        t = edge_seconds(e, cfgs, p)
        if e.dst is not None:
            comm[e.dst] += t
        else:
            comm[e.src] += t
    dur: dict[int, Fraction] = {}
    for layer in g.layers:
        lid = layer.id
        if compute is not None:
            dur[lid] = exact(compute.get(lid, 0)) + comm[lid]
        elif layer.is_hmm:
            dur[lid] = layer_cycles(layer, cfgs[assign.acc_of[lid]], p) / f_aie + comm[lid]
        else:
            dur[lid] = comm[lid]
    return dur


def hce_lanes(cfg: AccConfig, p: HardwareProfile) -> int:
    """Elements per PL cycle reaching the fused kernels: one beat per output port."""
    return cfg.a * cfg.c * p.plio_width_bytes // BYTES_PER_ELEM


def _infeasible(genome, assign, n_bat, mode, reason, part=None, evaluated=0,
                boundary_io=True) -> DesignPoint:
    return DesignPoint(tuple(genome), assign, {}, None, math.inf, 0.0, False, n_bat, mode,
                       part, evaluated, reason, boundary_io)


def ssr_dse(assign: Assignment, g: Graph, p: HardwareProfile, params: EaParams,
            genome=None, mode: str = "hybrid") -> DesignPoint:
    """schedule -> memory -> resource split -> per-acc search -> evaluation."""
    genome = tuple(genome) if genome is not None else tuple(assign.acc_of[lid] for lid in g.ids)
    sched0, edges = layer_acc_schedule(assign, g, params.n_bat, provisional_durations(g, p),
                                       boundary_io=params.boundary_io)
    mem = mem_allocation(edges, g, assign, p.bank_bytes)
    try:
        part = hw_partition(mem, sched0, g, assign, p)
    except InfeasibleError as exc:
        return _infeasible(genome, assign, params.n_bat, mode, str(exc), boundary_io=params.boundary_io)
    res = acc_dse(part, sched0, assign, edges, params.inter_acc_flag, p, g, mem,
                  tile_min=params.tile_min, tile_cap=params.tile_cap, eval_budget=params.eval_budget)
    n_eval = sum(res.evaluated.values())
    if not res.feasible:
        return _infeasible(genome, assign, params.n_bat, mode, res.reason, part, n_eval,
                           params.boundary_io)
    cfgs = res.cfgs
    dur = design_durations(g, assign, cfgs, edges, p)
    sched, _ = layer_acc_schedule(assign, g, params.n_bat, dur, boundary_io=params.boundary_io)
    lat, thr = evaluate(sched, cfgs, p, edges)
    feasible = lat <= params.lat_cons
    reason = "" if feasible else "latency constraint violated"
    return DesignPoint(genome, assign, cfgs, sched, lat, thr, feasible, params.n_bat, mode,
                       part, n_eval, reason, params.boundary_io)


def design_for_genome(g: Graph, p: HardwareProfile, params: EaParams, genome,
                      mode: str = "hybrid") -> DesignPoint:
    genome = canonical_genome(genome)
    return ssr_dse(assignment_from_genome(g, genome), g, p, params, genome, mode)


def design_edges(design: DesignPoint, g: Graph, boundary_io: bool = True) -> list[CommEdge]:
    from .schedule import comm_edges
    return [e.bind(design.cfgs) for e in comm_edges(design.assignment, g, boundary_io)]


def conflicting_edges(design: DesignPoint, g: Graph) -> list[CommEdge]:
    return [e for e in design_edges(design, g, False) if not edge_conflict_free(e, design.cfgs)]


# ---------------------------------------------------------------------------
# outer evolutionary search


@dataclass
class SearchResult:
    best: DesignPoint | None
    archive: list = field(default_factory=list)
    generations: int = 0

    @property
    def found(self) -> bool:
        return self.best is not None


def _rank_key(d: DesignPoint):
    return (-d.fitness, d.latency, d.genome)


def _tournament(pop: list, rng: random.Random) -> DesignPoint:
    x, y = rng.choice(pop), rng.choice(pop)
    return x if _rank_key(x) <= _rank_key(y) else y


def crossover(p1, p2, rng: random.Random) -> tuple[tuple, tuple]:
    n = len(p1)
    if n < 2:
        return tuple(p1), tuple(p2)
    cut = rng.randint(1, n - 1)
    return tuple(p1[:cut]) + tuple(p2[cut:]), tuple(p2[:cut]) + tuple(p1[cut:])


def swap_mutation(genome, rng: random.Random) -> tuple:
    """Exchange the accelerators of two randomly chosen slots."""
    g = list(genome)
    if len(g) >= 2:
        i, j = rng.sample(range(len(g)), 2)
        g[i], g[j] = g[j], g[i]
    return tuple(g)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("SSR_THREADS", "1")))
    except ValueError:
        return 1


def ea_search(g: Graph, p: HardwareProfile, params: EaParams, evaluator=None) -> SearchResult:
    """Seeded evolutionary search over slot-to-accelerator genomes.

    ``evaluator(genome) -> DesignPoint`` replaces the full per-design search
    (used with toy cost models). Identical genomes, up to relabeling, are
    evaluated once; the archive holds first evaluations in generation and
    child order.
    """
    params.validate()
    n_slots = len(g.slots())
    rng = random.Random(params.seed)
    if evaluator is None:
        def evaluator(genome):
            return design_for_genome(g, p, params, genome)
    cache: dict[tuple, DesignPoint] = {}
    archive: list[DesignPoint] = []
    workers = min(params.workers, default_workers()) if params.workers > 1 else 1

    def run(genomes: list) -> list[DesignPoint]:
        keys = [canonical_genome(x) for x in genomes]
        todo = list(dict.fromkeys(k for k in keys if k not in cache))
        if workers > 1 and len(todo) > 1:
            with ThreadPoolExecutor(max_workers=workers) as ex:
                done = list(ex.map(evaluator, todo))
        else:
            done = [evaluator(k) for k in todo]
        for k, d in zip(todo, done):
            cache[k] = d
            archive.append(d)
        return [cache[k] for k in keys]

    def limit(genome):
        return tuple(min(x, params.n_acc - 1) for x in genome)

    init = [sequential_genome(g), limit(spatial_genome(g, params.n_acc))]
    seen = {canonical_genome(x) for x in init}
    tries = 0
    while len(init) < params.n_pop and tries < 50 * params.n_pop:
        tries += 1
        cand = canonical_genome([rng.randrange(params.n_acc) for _ in range(n_slots)])
        if cand not in seen:
            seen.add(cand)
            init.append(cand)
    pop = _select(run(init), params.n_pop)
    gen = 0
    for gen in range(1, params.n_iter + 1):
        children = []
        for _ in range(params.n_child // 2):
            a, b = _tournament(pop, rng), _tournament(pop, rng)
            for child in crossover(a.genome, b.genome, rng):
                if rng.random() < params.mutation_rate:
                    child = swap_mutation(child, rng)
                children.append(child)
        pop = _select(pop + run(children), params.n_pop)
    feasible = [d for d in archive if d.feasible]
    best = min(feasible, key=_rank_key) if feasible else None
    return SearchResult(best, archive, gen)


def _select(points: list, n: int) -> list:
    uniq: dict[tuple, DesignPoint] = {}
    for d in points:
        uniq.setdefault(canonical_genome(d.genome), d)
    return sorted(uniq.values(), key=_rank_key)[:n]


def all_genomes(n_slots: int, n_acc: int):
    """Every genome up to relabeling (restricted growth strings) with <= n_acc accelerators."""
    def rec(prefix, used):
        if len(prefix) == n_slots:
            yield tuple(prefix)
            return
        for v in range(min(used + 1, n_acc)):
            yield from rec(prefix + [v], max(used, v + 1))
    yield from rec([], 0)


def exhaustive_search(g: Graph, p: HardwareProfile, params: EaParams, evaluator=None) -> SearchResult:
    """Evaluate every assignment; the reference the evolutionary search is checked against."""
    params.validate()
    if evaluator is None:
        def evaluator(genome):
            return design_for_genome(g, p, params, genome)
    archive = [evaluator(x) for x in all_genomes(len(g.slots()), params.n_acc)]
    feasible = [d for d in archive if d.feasible]
    best = min(feasible, key=_rank_key) if feasible else None
    return SearchResult(best, archive, 0)


def fixed_design(g: Graph, p: HardwareProfile, params: EaParams, mode: str) -> DesignPoint:
    if mode == "sequential":
        genome = sequential_genome(g)
    elif mode == "spatial":
        genome = spatial_genome(g)
    else:
        raise ValueError(f"{mode!r} is not a fixed mapping mode")
    return design_for_genome(g, p, params, genome, mode)


def explore(g: Graph, p: HardwareProfile, params: EaParams, mode: str) -> SearchResult:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "hybrid":
        res = ea_search(g, p, params)
        for d in res.archive:
            d.mode = mode
        return res
    d = fixed_design(g, p, params, mode)
    return SearchResult(d if d.feasible else None, [d], 0)


# ---------------------------------------------------------------------------
# Pareto extraction and calibration


def dominates(x, y) -> bool:
    return (x.latency <= y.latency and x.throughput >= y.throughput
            and (x.latency < y.latency or x.throughput > y.throughput))


def pareto_front(archive) -> list:
    """Non-dominated points (min latency, max throughput), sorted by latency.

    Points with identical metrics are kept once (the first in archive order).
    Infeasible points never enter the front.
    """
    pts = [d for d in archive if getattr(d, "feasible", True) and math.isfinite(d.latency)]
    out, seen = [], set()
    for d in pts:
        key = (d.latency, d.throughput)
        if key in seen or any(dominates(o, d) for o in pts):
            continue
        seen.add(key)
        out.append(d)
    out.sort(key=lambda d: (d.latency, -d.throughput))
    return out


def calibrate_eff(g: Graph, p: HardwareProfile, params: EaParams, genome, target_s: float) -> float:
    """MAC efficiency at which the design for ``genome`` takes ``target_s``.

    Configurations do not depend on eff, and latency is a/eff + b for a
    design whose accelerators never wait on each other, so two evaluations
    determine it.
    """
    l1 = Fraction(design_for_genome(g, p.with_(eff=1.0), params, genome).latency)
    l2 = Fraction(design_for_genome(g, p.with_(eff=0.5), params, genome).latency)
    a = l2 - l1
    b = l1 - a
    if target_s <= b or a <= 0:
        raise ValueError("target latency is below the communication floor")
    eff = float(a / (exact(target_s) - b))
    if not 0 < eff <= 1:
        raise ValueError(f"calibrated eff {eff:.4f} is outside (0, 1]")
    return eff


__all__ = [
    "AccChoice", "AccDseResult", "AccProblem", "DesignPoint", "EaParams", "MODES", "SearchResult",
    "acc_dse", "all_genomes", "calibrate_eff", "crossover", "design_durations", "design_for_genome",
    "dominates", "ea_search", "exhaustive_search", "explore", "fixed_design", "pareto_front",
    "search_acc", "ssr_dse", "swap_mutation", "tile_candidates",
]
