"""Event-driven replay of a scheduled design.

Each accelerator is a station that works through its entries in the order
the analytical schedule gave them. Compute layers hold the station for their
inbound transfers, their matrix work and any DMA store. Nonlinear layers run
as followers on the fabric: they start streaming once their producer on the
same accelerator starts, and only their inbound transfers take the station.
All DMA shares one off-chip channel. Times are exact fractions of a second.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction

from .graph import Graph
from .hardware import HardwareProfile
from .perf import dma_seconds, edge_seconds, exact, layer_cycles, nonlinear_latency, nonlinear_tail
from .schedule import comm_edges


class SimulationError(RuntimeError):
    pass


class EventKind(str, Enum):
    AccStart = "AccStart"
    AccEnd = "AccEnd"
    XferStart = "XferStart"
    XferEnd = "XferEnd"
    BankBusy = "BankBusy"
    BankFree = "BankFree"


@dataclass(frozen=True)
class Event:
    time: Fraction
    seq: int
    kind: EventKind
    acc: int
    batch: int
    layer: int
    detail: str = ""

    def to_dict(self, freq_hz) -> dict:
        return {"t": str(self.time), "cycle": float(self.time * exact(freq_hz)), "seq": self.seq,
                "kind": self.kind.value, "acc": self.acc, "batch": self.batch,
                "layer": self.layer, "detail": self.detail}


@dataclass(frozen=True)
class SimOptions:
    bypass_nonlinear: bool = True
    force_partition: bool = True


STALL_KINDS = ("bank_conflict", "dep_wait", "dma_wait")


@dataclass
class SimReport:
    makespan: Fraction  # seconds
    makespan_cycles: float  # AIE clock
    utilization: dict
    busy: dict
    idle: dict
    stall: dict  # worst accelerator per kind, AIE cycles
    stall_per_acc: dict
    events: list = field(default_factory=list)

    @property
    def makespan_s(self) -> float:
        return float(self.makespan)

    def to_dict(self) -> dict:
        return {
            "makespan_s": self.makespan_s,
            "makespan_exact_s": str(self.makespan),
            "makespan_cycles": self.makespan_cycles,
            "utilization": {str(a): v for a, v in sorted(self.utilization.items())},
            "busy_cycles": {str(a): v for a, v in sorted(self.busy.items())},
            "idle_cycles": {str(a): v for a, v in sorted(self.idle.items())},
            "stall_cycles": dict(self.stall),
            "stall_cycles_per_acc": {str(a): v for a, v in sorted(self.stall_per_acc.items())},
            "n_events": len(self.events),
        }

    def events_jsonl(self, freq_hz) -> str:
        return "".join(json.dumps(e.to_dict(freq_hz), sort_keys=True) + "\n" for e in self.events)


def _unforced(cfgs: dict) -> dict:
    return {a: replace(c, part_a=c.a, part_b=c.b, part_c=c.c) for a, c in cfgs.items()}


def simulate(design, g: Graph, p: HardwareProfile, opts: SimOptions | None = None,
             compute: dict | None = None, boundary_io: bool | None = None) -> SimReport:
    """Replay ``design`` and measure its makespan and stalls.

    ``compute`` overrides per-layer compute seconds (toy cost models).
    """
    opts = opts or SimOptions()
    if design.schedule is None:
        raise SimulationError("design has no schedule (infeasible point)")
    if boundary_io is None:
        boundary_io = getattr(design, "boundary_io", True)
    assign = design.assignment
    cfgs = design.cfgs if opts.force_partition else _unforced(design.cfgs)
    f_aie, f_pl = exact(p.freq_aie_hz), exact(p.freq_pl_hz)
    edges = comm_edges(assign, g, boundary_io)
    inbound: dict[int, list] = {lid: [] for lid in g.ids}
    stores: dict[int, list] = {lid: [] for lid in g.ids}
    for e in edges:
        if e.dst is not None:
            inbound[e.dst].append(e)
        else:
            stores[e.src].append(e)

    def work(lid) -> Fraction:
        layer = g[lid]
        if compute is not None:
            return exact(compute.get(lid, 0))
        cfg = cfgs[assign.acc_of[lid]]
        if layer.is_hmm:
            return layer_cycles(layer, cfg, p) / f_aie
        lanes = cfg.a * cfg.c * p.plio_width_bytes
        return nonlinear_latency(layer.kind, layer.m, layer.n, lanes, opts.bypass_nonlinear) / f_pl

    def tail(lid) -> Fraction:
        layer = g[lid]
        if compute is not None or layer.is_hmm:
            return Fraction(0)
        cfg = cfgs[assign.acc_of[lid]]
        lanes = cfg.a * cfg.c * p.plio_width_bytes
        return nonlinear_tail(layer.kind, layer.m, layer.n, lanes, opts.bypass_nonlinear) / f_pl

    work_of = {lid: work(lid) for lid in g.ids}
    tail_of = {lid: tail(lid) for lid in g.ids}
    accs = assign.accs
    queue: dict[int, list] = {a: [] for a in accs}
    for e in design.schedule.entries:
        queue[e.acc].append((e.batch, e.layer))
    ptr = {a: 0 for a in accs}
    station_busy = {a: False for a in accs}
    free_at = {a: Fraction(0) for a in accs}
    busy = {a: Fraction(0) for a in accs}
    stall = {a: {k: Fraction(0) for k in STALL_KINDS} for a in accs}
    computing = {a: Fraction(0) for a in accs}
    started: dict[tuple, Fraction] = {}
    planned_end: dict[tuple, Fraction] = {}
    done: dict[tuple, Fraction] = {}
    ddr_free = Fraction(0)
    heap: list = []
    log: list[Event] = []
    seq = 0

    def post(t, kind, acc, b, lid, detail="", action=None):
        nonlocal seq
        heapq.heappush(heap, (t, seq, kind, acc, b, lid, detail, action))
        seq += 1

    def ready(acc, b, lid, now) -> bool:
        layer = g[lid]
        for i, d in enumerate(dict.fromkeys(layer.deps)):
            follow = not layer.is_hmm and i == 0 and assign.acc_of[d] == acc
            if follow:
                if (b, d) not in started or started[(b, d)] > now:
                    return False
            elif (b, d) not in done:
                return False
        return True

    def transfers(acc, b, lid, t, edge_list, label) -> Fraction:
        nonlocal ddr_free
        for e in edge_list:
            if e.is_boundary:
                dur = dma_seconds(e.bytes, p)
                s = max(t, ddr_free)
                ddr_free = s + dur
                stall[acc]["dma_wait"] += ddr_free - t
                post(s, EventKind.XferStart, acc, b, lid, label)
                post(s + dur, EventKind.XferEnd, acc, b, lid, label)
                t = s + dur
            else:
                dur = edge_seconds(e, cfgs, p)
                if dur:
                    stall[acc]["bank_conflict"] += dur
                    post(t, EventKind.BankBusy, acc, b, lid, f"from acc {e.producer_acc}")
                    post(t + dur, EventKind.BankFree, acc, b, lid, f"from acc {e.producer_acc}")
                    t += dur
        return t

    def release(acc, end):
        def act():
            station_busy[acc] = False
            free_at[acc] = end
        return act

    def finish(key, end):
        def act():
            done[key] = end
        return act

    def dispatch(acc, b, lid, now):
        layer = g[lid]
        key = (b, lid)
        if not layer.is_hmm and not inbound[lid]:
            t = now  # nothing for the station to do
        else:
            stall[acc]["dep_wait"] += now - free_at[acc]
            station_busy[acc] = True
            t = transfers(acc, b, lid, now, inbound[lid], "load")
        if layer.is_hmm:
            started[key] = t
            end = t + work_of[lid]
            computing[acc] += work_of[lid]
            post(t, EventKind.AccStart, acc, b, lid)
            post(end, EventKind.AccEnd, acc, b, lid)
            end = transfers(acc, b, lid, end, stores[lid], "store")
            planned_end[key] = end
            busy[acc] += end - now
            post(end, None, acc, b, lid, action=_chain(release(acc, end), finish(key, end)))
            return
        if station_busy[acc]:
            busy[acc] += t - now
            if t > now:
                post(t, None, acc, b, lid, action=release(acc, t))
            else:
                release(acc, t)()
        fd = layer.deps[0] if layer.deps else None
        start = t
        if fd is not None and assign.acc_of[fd] == acc:
            end = max(planned_end[(b, fd)] + tail_of[lid], start + work_of[lid])
        else:
            end = start + work_of[lid]
        started[key] = start
        post(start, EventKind.AccStart, acc, b, lid, "fabric")
        post(end, EventKind.AccEnd, acc, b, lid, "fabric")
        end = transfers(acc, b, lid, end, stores[lid], "store")
        planned_end[key] = end
        post(end, None, acc, b, lid, action=finish(key, end))

    def pump(now):
        progress = True
        while progress:
            progress = False
            for acc in accs:
                while ptr[acc] < len(queue[acc]):
                    b, lid = queue[acc][ptr[acc]]
                    needs_station = g[lid].is_hmm or bool(inbound[lid])
                    if (needs_station and station_busy[acc]) or not ready(acc, b, lid, now):
                        break
                    ptr[acc] += 1
                    dispatch(acc, b, lid, now)
                    progress = True

    pump(Fraction(0))
    while heap:
        t, s, kind, acc, b, lid, detail, action = heapq.heappop(heap)
        if kind is not None:
            log.append(Event(t, s, kind, acc, b, lid, detail))
        if action is not None:
            action()
        if heap and heap[0][0] == t:
            continue  # settle every event at this instant first
        pump(t)

    blocked = [(a, queue[a][ptr[a]]) for a in accs if ptr[a] < len(queue[a])]
    if blocked:
        lines = []
        for a, (b, lid) in blocked:
            missing = [d for d in g[lid].deps if (b, d) not in done]
            lines.append(f"acc {a}: batch {b} layer {lid} waits on {missing}")
        raise SimulationError("deadlock; blocked entries:\n  " + "\n  ".join(lines))

    makespan = max(done.values(), default=Fraction(0))
    cyc = lambda x: float(x * f_aie)  # noqa: E731
    util = {a: float(computing[a] / makespan) if makespan else 0.0 for a in accs}
    per_acc = {a: {k: cyc(v) for k, v in stall[a].items()} for a in accs}
    worst = {k: max((per_acc[a][k] for a in accs), default=0.0) for k in STALL_KINDS}
    return SimReport(makespan, cyc(makespan), util, {a: cyc(busy[a]) for a in accs},
                     {a: cyc(makespan - busy[a]) for a in accs}, worst, per_acc, log)


def _chain(*fns):
    def act():
        for f in fns:
            f()
    return act


def cross_check(design, g: Graph, p: HardwareProfile, opts: SimOptions | None = None) -> float:
    """Relative gap between the analytical and the simulated makespan."""
    rep = simulate(design, g, p, opts)
    if rep.makespan == 0:
        return 0.0
    return float(abs(design.schedule.makespan - rep.makespan) / rep.makespan)


__all__ = ["Event", "EventKind", "SimOptions", "SimReport", "SimulationError", "cross_check",
           "simulate"]
