"""Analytical cost model for one accelerator and the links between them.

Cycle counts are exact ``Fraction`` values so that schedules built from them
can be compared bit-for-bit with the event simulator.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from enum import IntEnum
from fractions import Fraction
from math import ceil, lcm

from .graph import BYTES_PER_ELEM, LayerKind, Layer
from .hardware import HardwareProfile

DDR = -1  # pseudo accelerator index for off-chip memory


def exact(x) -> Fraction:
    """Exact rational for an int/float/Fraction (floats via their repr)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(repr(float(x)))


class HmmType(IntEnum):
    Type0 = 0  # weights pinned in AIE local memory, one streamed operand
    Type1 = 1  # both operands streamed (attention)


@dataclass(frozen=True)
class AccConfig:
    h1: int
    w1: int
    w2: int
    a: int
    b: int
    c: int
    part_a: int = 0
    part_b: int = 0
    part_c: int = 0
    hmm_type: HmmType = HmmType.Type0

    def __post_init__(self):
        for f in ("part_a", "part_b", "part_c"):
            if getattr(self, f) == 0:
                object.__setattr__(self, f, getattr(self, f[-1]))
        object.__setattr__(self, "hmm_type", HmmType(self.hmm_type))
        vals = (self.h1, self.w1, self.w2, self.a, self.b, self.c,
                self.part_a, self.part_b, self.part_c)
        if min(vals) < 1:
            raise ValueError(f"config entries must be positive: {vals}")
        if self.part_a % self.a or self.part_b % self.b or self.part_c % self.c:
            raise ValueError("bank partitions must be multiples of the array parallelism")

    @property
    def aie(self) -> int:
        return self.a * self.b * self.c

    @property
    def write_pattern(self) -> tuple[int, int]:
        return (self.a, self.c)

    @property
    def read_pattern(self) -> tuple[int, int]:
        return (self.a, self.b)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hmm_type"] = int(self.hmm_type)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AccConfig":
        return cls(**d)


@dataclass(frozen=True)
class Utilization:
    aie: int
    plio: int
    ram_banks: int
    dsp: int

    def fits(self, budget: "Utilization") -> bool:
        return (self.aie <= budget.aie and self.plio <= budget.plio
                and self.ram_banks <= budget.ram_banks and self.dsp <= budget.dsp)


@dataclass(frozen=True)
class CommEdge:
    """Data moved between two accelerators (or to/from DDR) once per batch."""

    producer_acc: int
    consumer_acc: int
    bytes: int
    producer_write_pattern: tuple[int, int] | None = None
    consumer_read_pattern: tuple[int, int] | None = None
    src: int | None = None  # producing layer, None for a DDR load
    dst: int | None = None  # consuming layer, None for a DDR store

    def __post_init__(self):
        if self.bytes <= 0:
            raise ValueError("edge must carry a positive number of bytes")

    @property
    def is_boundary(self) -> bool:
        return self.producer_acc == DDR or self.consumer_acc == DDR

    def bind(self, cfgs) -> "CommEdge":
        """Fill the access patterns from the accelerators' configurations."""
        if self.is_boundary:
            return self
        return replace(self,
                       producer_write_pattern=cfgs[self.producer_acc].write_pattern,
                       consumer_read_pattern=cfgs[self.consumer_acc].read_pattern)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("producer_write_pattern", "consumer_read_pattern"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CommEdge":
        d = dict(d)
        for k in ("producer_write_pattern", "consumer_read_pattern"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        return cls(**d)


def plio_count(a: int, b: int, c: int, hmm_type: HmmType) -> int:
    plio = (a + c) * b
    if hmm_type == HmmType.Type1:
        plio += a * c  # ports for the second streamed activation operand
    return plio


def ram_util(cfg: AccConfig, p: HardwareProfile) -> int:
    """RAM banks per partition: a double-buffered output tile."""
    return ceil(2 * cfg.h1 * cfg.w2 * BYTES_PER_ELEM / p.bank_bytes)


def dsp_util(cfg: AccConfig, kinds, p: HardwareProfile) -> int:
    return ceil(p.dsp_cost(kinds) / (cfg.a * cfg.c))


def utilization(cfg: AccConfig, kinds, p: HardwareProfile) -> Utilization:
    return Utilization(
        aie=cfg.a * cfg.b * cfg.c,
        plio=plio_count(cfg.a, cfg.b, cfg.c, cfg.hmm_type),
        ram_banks=cfg.part_a * cfg.part_b * cfg.part_c * ram_util(cfg, p),
        dsp=cfg.a * cfg.c * dsp_util(cfg, kinds, p),
    )


def mm_cycles(m: int, k: int, n: int, cfg: AccConfig, p: HardwareProfile) -> Fraction:
    """AIE cycles of an m x k x n product on the configured array.

    Padded to whole array tiles; with exact division this is
    m*k*n / (a*b*c * mac * eff).
    """
    steps = ceil(m / (cfg.h1 * cfg.a)) * ceil(k / (cfg.w1 * cfg.b)) * ceil(n / (cfg.w2 * cfg.c))
    return Fraction(steps * cfg.h1 * cfg.w1 * cfg.w2) / (p.mac_per_aie_per_cycle * exact(p.eff))


def layer_cycles(layer: Layer, cfg: AccConfig, p: HardwareProfile) -> Fraction:
    """Cycles of a compute layer; attention heads run back to back."""
    return layer.heads * mm_cycles(layer.m, layer.k, layer.n, cfg, p)


def throughput(ops, cycles, p: HardwareProfile) -> float:
    if ops == 0:
        return 0.0
    if cycles <= 0:
        raise ValueError("cycles must be positive")
    return float(Fraction(ops) * exact(p.freq_aie_hz) / exact(cycles))


def aie_footprint(cfg: AccConfig, layer_k: int, layer_n: int) -> int:
    """Bytes of AIE local memory one array element needs."""
    h1, w1, w2 = cfg.h1, cfg.w1, cfg.w2
    if cfg.hmm_type == HmmType.Type1:
        return 2 * (h1 * w1 + w1 * w2 + h1 * w2) * BYTES_PER_ELEM
    pinned = ceil(layer_k / cfg.b) * ceil(layer_n / cfg.c) * BYTES_PER_ELEM
    return 2 * (h1 * w1 + h1 * w2) * BYTES_PER_ELEM + pinned


def divisible_parallelism(prod: tuple[int, int], cons: tuple[int, int]) -> bool:
    """Producer (a, c) against consumer (a, b): each pair must divide one way."""
    pa, pc = prod
    ca, cb = cons

    def _div(x, y):
        return x % y == 0 or y % x == 0

    return _div(pa, ca) and _div(pc, cb)


def force_partition(prod: tuple[int, int], cons: tuple[int, int]) -> tuple[int, int] | None:
    """Consumer RAM layout (rows, cols) that both sides access conflict-free.

    Returns None when the parallelism is not mutually divisible.
    """
    if not divisible_parallelism(prod, cons):
        return None
    return lcm(prod[0], cons[0]), lcm(prod[1], cons[1])


def edge_conflict_free(edge: CommEdge, cfgs) -> bool:
    if edge.is_boundary:
        return True
    prod = cfgs[edge.producer_acc]
    cons = cfgs[edge.consumer_acc]
    need = force_partition(prod.write_pattern, cons.read_pattern)
    if need is None:
        return False
    return cons.part_a % need[0] == 0 and cons.part_b % need[1] == 0


def copy_seconds(nbytes: int, banks: int, p: HardwareProfile) -> Fraction:
    """Sequential bank-to-bank move of ``nbytes``."""
    return Fraction(nbytes) / (banks * p.bank_word_bytes * exact(p.freq_pl_hz))


def dma_seconds(nbytes: int, p: HardwareProfile) -> Fraction:
    return Fraction(nbytes) / exact(p.offchip_bw_bytes_per_s)


def edge_seconds(edge: CommEdge, cfgs, p: HardwareProfile) -> Fraction:
    if edge.is_boundary:
        return dma_seconds(edge.bytes, p)
    if edge_conflict_free(edge, cfgs):
        return Fraction(0)
    prod = cfgs[edge.producer_acc]
    cons = cfgs[edge.consumer_acc]
    banks = min(prod.a * prod.c, cons.a * cons.b)
    return copy_seconds(edge.bytes, banks, p)


def comm_overhead(edges, cfgs, p: HardwareProfile) -> list[Fraction]:
    """Non-overlapped seconds per edge, in input order."""
    return [edge_seconds(e, cfgs, p) for e in edges]


# reduction passes over each row; pointwise kinds have reuse distance one
_PASSES = {LayerKind.LayerNorm: 2, LayerKind.Softmax: 3}


def nonlinear_passes(kind: LayerKind) -> int:
    return _PASSES.get(LayerKind(kind), 1)


def nonlinear_latency(kind: LayerKind, rows: int, row_len: int, lanes: int,
                      bypass: bool) -> Fraction:
    """PL cycles of an elementwise/nonlinear kernel.

    Without the bypass line buffer each reduction pass waits for the whole
    tensor; with it, a pass only waits for the first row of the previous one.
    """
    kind = LayerKind(kind)
    if kind.is_hmm:
        raise ValueError(f"{kind.value} is not an HCE kind")
    passes = nonlinear_passes(kind)
    if bypass:
        return Fraction((rows + passes - 1) * row_len, lanes)
    return Fraction(passes * rows * row_len, lanes)


def nonlinear_tail(kind: LayerKind, rows: int, row_len: int, lanes: int,
                   bypass: bool) -> Fraction:
    """Part of the kernel that cannot overlap a streaming producer."""
    return nonlinear_latency(kind, rows, row_len, lanes, bypass) - Fraction(rows * row_len, lanes)


__all__ = [
    "AccConfig", "CommEdge", "DDR", "HmmType", "Utilization", "aie_footprint", "comm_overhead",
    "divisible_parallelism", "edge_conflict_free", "force_partition", "layer_cycles",
    "mm_cycles", "nonlinear_latency", "throughput", "utilization",
]
