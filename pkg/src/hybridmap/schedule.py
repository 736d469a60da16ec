"""Layer-to-accelerator assignment, pipeline scheduling and resource split.

Batches are independent copies of the graph. A (batch, layer) pair runs on
the accelerator its layer is assigned to; the list scheduler starts whichever
ready pair can start earliest.
"""

from __future__ import annotations

import csv
import heapq
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from math import ceil

from .graph import Graph, slot_of, topo_order, total_ops
from .hardware import HardwareProfile
from .perf import DDR, CommEdge, HmmType, exact


class InfeasibleError(RuntimeError):
    """The design cannot be realized within the device budgets."""


@dataclass(frozen=True)
class Assignment:
    acc_of: dict

    def __post_init__(self):
        object.__setattr__(self, "acc_of", {int(k): int(v) for k, v in self.acc_of.items()})
        if any(v < 0 for v in self.acc_of.values()):
            raise ValueError("accelerator indices must be >= 0")

    def __hash__(self):
        return hash(tuple(sorted(self.acc_of.items())))

    @property
    def n_acc(self) -> int:
        return max(self.acc_of.values(), default=-1) + 1

    @property
    def accs(self) -> list[int]:
        return sorted(set(self.acc_of.values()))

    def layers_on(self, acc: int) -> list[int]:
        return sorted(lid for lid, a in self.acc_of.items() if a == acc)

    def validate(self, g: Graph, n_acc: int | None = None) -> "Assignment":
        missing = [lid for lid in g.ids if lid not in self.acc_of]
        if missing:
            raise ValueError(f"assignment misses layers {missing[:8]}")
        extra = set(self.acc_of) - set(g.ids)
        if extra:
            raise ValueError(f"assignment names unknown layers {sorted(extra)[:8]}")
        if n_acc is not None and self.n_acc > n_acc:
            raise ValueError(f"assignment uses {self.n_acc} accelerators, limit is {n_acc}")
        return self

    def to_dict(self) -> dict:
        return {str(k): v for k, v in sorted(self.acc_of.items())}

    @classmethod
    def from_dict(cls, d: dict) -> "Assignment":
        return cls({int(k): int(v) for k, v in d.items()})


def acc_types(assign: Assignment, g: Graph) -> dict[int, HmmType]:
    """An accelerator needs two streamed operands if any of its layers does."""
    out = {a: HmmType.Type0 for a in assign.accs}
    for lid, a in assign.acc_of.items():
        layer = g[lid]
        if layer.is_hmm and layer.activation_inputs == 2:
            out[a] = HmmType.Type1
    return out


def canonical_genome(genome) -> tuple[int, ...]:
    """Relabel accelerators by first appearance, so equal partitions compare equal."""
    relabel: dict[int, int] = {}
    out = []
    for v in genome:
        if v not in relabel:
            relabel[v] = len(relabel)
        out.append(relabel[v])
    return tuple(out)


def assignment_from_genome(g: Graph, genome) -> Assignment:
    """Expand one accelerator index per compute slot to a full assignment.

    Nonlinear and data-movement layers follow their first producer, which in
    the built graphs is the compute layer they are fused behind. Source layers
    without producers follow their first consumer.
    """
    slots = g.slots()
    if len(genome) != len(slots):
        raise ValueError(f"genome has {len(genome)} genes for {len(slots)} slots")
    slot_acc = dict(zip(slots, (int(x) for x in genome)))
    order = topo_order(g)
    acc: dict[int, int] = {}
    for lid in order:
        s = slot_of(g[lid])
        if s is not None:
            acc[lid] = slot_acc[s]
    for lid in order:
        if lid not in acc and g[lid].deps:
            acc[lid] = acc[g[lid].deps[0]] if g[lid].deps[0] in acc else None
    cons = g.consumers()
    for lid in reversed(order):
        if acc.get(lid) is None:
            nxt = [c for c in cons[lid] if acc.get(c) is not None]
            acc[lid] = acc[nxt[0]] if nxt else 0
    return Assignment(acc)


def sequential_genome(g: Graph) -> tuple[int, ...]:
    return tuple(0 for _ in g.slots())


def spatial_genome(g: Graph, n_acc: int | None = None) -> tuple[int, ...]:
    n = len(g.slots())
    n_acc = n if n_acc is None else n_acc
    return tuple(i % n_acc for i in range(n))


@dataclass(frozen=True)
class Entry:
    batch: int
    layer: int
    acc: int
    start: Fraction
    end: Fraction


@dataclass
class Schedule:
    entries: list
    n_bat: int
    ops_per_batch: int = 0
    acc_busy: dict = field(default_factory=dict)

    @property
    def makespan(self) -> Fraction:
        return max((e.end for e in self.entries), default=Fraction(0))

    def acc_order(self) -> list[int]:
        """Accelerators in order of first use."""
        seen: list[int] = []
        for e in self.entries:
            if e.acc not in seen:
                seen.append(e.acc)
        return seen

    def to_dict(self) -> dict:
        return {
            "n_bat": self.n_bat,
            "ops_per_batch": self.ops_per_batch,
            "entries": [[e.batch, e.layer, e.acc, str(e.start), str(e.end)] for e in self.entries],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Schedule":
        entries = [Entry(int(b), int(lid), int(a), Fraction(s), Fraction(t))
                   for b, lid, a, s, t in d["entries"]]
        busy: dict[int, Fraction] = {}
        for e in entries:
            busy[e.acc] = busy.get(e.acc, Fraction(0)) + (e.end - e.start)
        return cls(entries, int(d["n_bat"]), int(d.get("ops_per_batch", 0)), busy)

    def to_jsonl(self) -> str:
        lines = [json.dumps({"batch": e.batch, "layer": e.layer, "acc": e.acc,
                             "start": str(e.start), "end": str(e.end)}, sort_keys=True)
                 for e in self.entries]
        return "\n".join(lines) + ("\n" if lines else "")

    def to_csv(self, time_scale: float = 1e6) -> str:
        """Gantt rows; times in microseconds when durations are seconds."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["acc", "batch", "layer", "start_us", "end_us"])
        for e in sorted(self.entries, key=lambda e: (e.acc, e.start, e.batch, e.layer)):
            w.writerow([e.acc, e.batch, e.layer, f"{float(e.start) * time_scale:.6f}",
                        f"{float(e.end) * time_scale:.6f}"])
        return buf.getvalue()


def comm_edges(assign: Assignment, g: Graph, boundary_io: bool = True) -> list[CommEdge]:
    """Per-batch transfers: every dependency that crosses accelerators, plus DDR I/O."""
    edges = []
    cons = g.consumers()
    for lid in topo_order(g):
        layer = g[lid]
        dst = assign.acc_of[lid]
        if boundary_io and not layer.deps and layer.in_bytes:
            edges.append(CommEdge(DDR, dst, layer.in_bytes, src=None, dst=lid))
        for d in dict.fromkeys(layer.deps):
            src = assign.acc_of[d]
            if src != dst and g[d].out_bytes:
                edges.append(CommEdge(src, dst, g[d].out_bytes, src=d, dst=lid))
        if boundary_io and not cons[lid] and layer.out_bytes:
            edges.append(CommEdge(dst, DDR, layer.out_bytes, src=lid, dst=None))
    return edges


def layer_acc_schedule(assign: Assignment, g: Graph, n_bat: int, durations: dict,
                       boundary_io: bool = True) -> tuple[Schedule, list[CommEdge]]:
    """Greedy list scheduling of ``n_bat`` graph copies.

    The ready pair with the earliest possible start goes first; ties are
    broken by batch and then topological position. Start times never
    decrease, so a lazily updated heap keyed on the start time is exact.
    """
    if n_bat < 1:
        raise ValueError("n_bat must be >= 1")
    assign.validate(g)
    order = topo_order(g)
    pos = {lid: i for i, lid in enumerate(order)}
    cons = g.consumers()
    dur = {lid: exact(durations.get(lid, 0)) for lid in order}
    for lid, d in dur.items():
        if d < 0:
            raise ValueError(f"negative duration for layer {lid}")
    ndeps = {lid: len(set(g[lid].deps)) for lid in order}

    free: dict[int, Fraction] = {a: Fraction(0) for a in assign.accs}
    busy: dict[int, Fraction] = {a: Fraction(0) for a in assign.accs}
    waiting: dict[tuple[int, int], int] = {}
    ready_at: dict[tuple[int, int], Fraction] = {}
    heap: list = []

    def push(b, lid):
        a = assign.acc_of[lid]
        est = max(ready_at.get((b, lid), Fraction(0)), free[a])
        heapq.heappush(heap, (est, b, pos[lid], lid))

    for b in range(n_bat):
        for lid in order:
            waiting[(b, lid)] = ndeps[lid]
            if ndeps[lid] == 0:
                push(b, lid)

    entries = []
    while heap:
        est, b, _, lid = heapq.heappop(heap)
        a = assign.acc_of[lid]
        now = max(ready_at.get((b, lid), Fraction(0)), free[a])
        if now > est:
            heapq.heappush(heap, (now, b, pos[lid], lid))
            continue
        end = now + dur[lid]
        entries.append(Entry(b, lid, a, now, end))
        free[a] = end
        busy[a] += dur[lid]
        for c in dict.fromkeys(cons[lid]):
            key = (b, c)
            ready_at[key] = max(ready_at.get(key, Fraction(0)), end)
            waiting[key] -= 1
            if waiting[key] == 0:
                push(b, c)
    sched = Schedule(entries, n_bat, total_ops(g), busy)
    return sched, comm_edges(assign, g, boundary_io)


@dataclass(frozen=True)
class MemPlan:
    weight_bytes: dict
    activation_bytes: dict
    ram_banks_min: dict

    def to_dict(self) -> dict:
        return {k: {str(a): v for a, v in sorted(getattr(self, k).items())}
                for k in ("weight_bytes", "activation_bytes", "ram_banks_min")}


def mem_allocation(edges, g: Graph, assign: Assignment, bank_bytes: int = 4608) -> MemPlan:
    """Minimum on-chip buffering per accelerator.

    Weights of every assigned layer stay resident. Activations are double
    buffered: the live set of a layer is its inputs (or the larger inbound
    transfers) plus its output, and the accelerator needs the largest one.
    """
    inbound: dict[int, int] = {}
    for e in edges:
        if e.dst is not None:
            inbound[e.dst] = inbound.get(e.dst, 0) + e.bytes
    weight = {a: 0 for a in assign.accs}
    act = {a: 0 for a in assign.accs}
    for lid, a in assign.acc_of.items():
        layer = g[lid]
        weight[a] += layer.weight_bytes
        if layer.is_hmm:
            live = max(layer.in_bytes, inbound.get(lid, 0)) + layer.out_bytes
            act[a] = max(act[a], 2 * live)
    banks = {a: ceil((weight[a] + act[a]) / bank_bytes) for a in weight}
    return MemPlan(weight, act, banks)


@dataclass(frozen=True)
class HwPartition:
    aie: dict
    plio: dict
    ram_banks: dict
    dsp: dict

    def budget(self, acc: int):
        from .perf import Utilization
        return Utilization(self.aie[acc], self.plio[acc], self.ram_banks[acc], self.dsp[acc])

    def totals(self) -> dict:
        return {k: sum(getattr(self, k).values()) for k in ("aie", "plio", "ram_banks", "dsp")}

    def to_dict(self) -> dict:
        return {k: {str(a): v for a, v in sorted(getattr(self, k).items())}
                for k in ("aie", "plio", "ram_banks", "dsp")}


def largest_remainder(total: int, weights: list, minimum: list | None = None) -> list[int]:
    """Integer split of ``total`` proportional to ``weights``.

    Floors of the exact quotas, leftover units to the largest fractional parts
    (lower index wins ties), then entries below their minimum are topped up
    from the currently largest shares.
    """
    n = len(weights)
    if n == 0:
        return []
    minimum = list(minimum) if minimum is not None else [0] * n
    if sum(minimum) > total:
        raise InfeasibleError(f"minimum shares {sum(minimum)} exceed total {total}")
    wsum = sum(Fraction(w) for w in weights)
    if wsum == 0:
        quotas = [Fraction(total, n)] * n
    else:
        quotas = [Fraction(total) * Fraction(w) / wsum for w in weights]
    out = [int(q) for q in quotas]
    left = total - sum(out)
    rank = sorted(range(n), key=lambda i: (-(quotas[i] - out[i]), i))
    for i in rank[:left]:
        out[i] += 1
    for i in range(n):
        while out[i] < minimum[i]:
            donors = [j for j in range(n) if out[j] > minimum[j]]
            j = max(donors, key=lambda j: (out[j] - minimum[j], -j))
            out[j] -= 1
            out[i] += 1
    return out


def min_array(g: Graph, layers, hmm_type: HmmType, p: HardwareProfile,
              tile_min: int = 8) -> tuple[int, int, int]:
    """(AIEs, PLIOs, a*c) of the smallest array that can run ``layers`` at all.

    A weight-pinning array must spread its largest weight matrix over enough
    AIEs (b * c of them) to fit local memory next to the smallest tiles.
    """
    if hmm_type == HmmType.Type1:
        return 1, 3, 1
    mats = [(g[lid].k, g[lid].n, g[lid].m) for lid in layers if g[lid].is_hmm]
    if not mats:
        return 1, 2, 1
    best = None
    for b in range(1, 65):
        for c in range(1, 65):
            fits = True
            for k, n, m in mats:
                tiles = 2 * (min(tile_min, m) * min(tile_min, k) + min(tile_min, m) * min(tile_min, n))
                if ceil(k / b) * ceil(n / c) + tiles > p.aie_local_mem_bytes:
                    fits = False
                    break
            if fits:
                cand = ((1 + c) * b, b * c, c)
                if best is None or cand < best:
                    best = cand
    if best is None:
        raise InfeasibleError("weights do not fit local memory on any small array")
    return best[1], best[0], best[2]


def hw_partition(mem: MemPlan, sched: Schedule | None, g: Graph, assign: Assignment,
                 p: HardwareProfile) -> HwPartition:
    """Split device resources over accelerators in proportion to their MACs.

    Every accelerator first gets what it cannot run without (the AIEs and
    PLIOs of its smallest workable array, its minimum RAM, the DSPs of its
    fused kernels);
    the schedule is accepted for interface symmetry and not consulted.
    """
    accs = assign.accs
    macs = {a: 0 for a in accs}
    kinds: dict[int, set] = {a: set() for a in accs}
    for lid, a in assign.acc_of.items():
        layer = g[lid]
        macs[a] += layer.macs
        if not layer.is_hmm:
            kinds[a].add(layer.kind)
    types = acc_types(assign, g)
    w = [macs[a] for a in accs]

    def split(total, mins):
        return dict(zip(accs, largest_remainder(total, w, mins)))

    mins = [min_array(g, assign.layers_on(a), types[a], p) for a in accs]
    aie = split(p.aie_total, [m[0] for m in mins])
    plio = split(p.plio_budget, [m[1] for m in mins])
    ram_min = [mem.ram_banks_min.get(a, 0) for a in accs]
    if sum(ram_min) > p.ram_banks_total:
        raise InfeasibleError(f"minimum RAM {sum(ram_min)} banks exceeds {p.ram_banks_total}")
    slack = largest_remainder(p.ram_banks_total - sum(ram_min), w)
    ram = {a: m + s for a, m, s in zip(accs, ram_min, slack)}
    dsp_min = []
    for a, (_, _, ac) in zip(accs, mins):
        cost = p.dsp_cost(kinds[a])
        dsp_min.append(ac * ceil(cost / ac))
    if sum(dsp_min) > p.dsp_total:
        raise InfeasibleError(f"nonlinear kernels need {sum(dsp_min)} DSPs, device has {p.dsp_total}")
    slack = largest_remainder(p.dsp_total - sum(dsp_min), w)
    dsp = {a: m + s for a, m, s in zip(accs, dsp_min, slack)}
    return HwPartition(aie, plio, ram, dsp)


def evaluate(sched: Schedule, cfgs=None, p: HardwareProfile | None = None,
             edges=None) -> tuple[float, float]:
    """(latency in s, throughput in ops/s) of a schedule whose times are seconds.

    Communication is already folded into the scheduled durations, so the
    configurations and edges are not needed here.
    """
    lat = sched.makespan
    if lat == 0:
        return 0.0, 0.0
    return float(lat), float(Fraction(sched.n_bat * sched.ops_per_batch) / lat)


def check_schedule(sched: Schedule, g: Graph) -> None:
    """Raise AssertionError if exclusivity or precedence is violated."""
    by_acc: dict[int, list] = {}
    end = {}
    for e in sched.entries:
        by_acc.setdefault(e.acc, []).append(e)
        end[(e.batch, e.layer)] = e.end
    for es in by_acc.values():
        es.sort(key=lambda e: (e.start, e.end))
        for x, y in zip(es, es[1:]):
            assert x.end <= y.start, f"overlap on acc {x.acc}: {x} / {y}"
    for e in sched.entries:
        for d in g[e.layer].deps:
            assert e.start >= end[(e.batch, d)], f"{e} starts before dependency {d}"
    assert len(end) == sched.n_bat * len(g), "missing entries"


__all__ = [
    "Assignment", "Entry", "HwPartition", "InfeasibleError", "MemPlan", "Schedule",
    "acc_types", "assignment_from_genome", "canonical_genome", "check_schedule", "comm_edges",
    "evaluate", "hw_partition", "largest_remainder", "layer_acc_schedule", "mem_allocation",
    "sequential_genome", "spatial_genome",
]
