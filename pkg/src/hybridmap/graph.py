"""Transformer application graphs: layers, shapes and dependencies.

A graph is batch independent. Batching is the scheduler's concern, so every
layer here describes the work of a single inference.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable

BYTES_PER_ELEM = 1  # INT8 everywhere


class GraphError(ValueError):
    """Invalid model spec or malformed graph."""


class LayerKind(str, Enum):
    MatMul = "MatMul"
    BatchMatMul = "BatchMatMul"
    Softmax = "Softmax"
    LayerNorm = "LayerNorm"
    GeLU = "GeLU"
    Transpose = "Transpose"
    Reformat = "Reformat"
    VectorAdd = "VectorAdd"
    PatchEmbed = "PatchEmbed"

    @property
    def is_hmm(self) -> bool:
        """Compute-intensive kinds run on the AIE matrix engine."""
        return self in HMM_KINDS


HMM_KINDS = frozenset({LayerKind.MatMul, LayerKind.BatchMatMul, LayerKind.PatchEmbed})
HCE_KINDS = frozenset(LayerKind) - HMM_KINDS


@dataclass(frozen=True)
class Layer:
    """One graph node.

    Elementwise / nonlinear layers use ``m`` = rows, ``n`` = row length and
    ``k`` = 1. ``slot`` names the role of a compute layer inside a repeated
    block (e.g. ``"qkv"``); layers sharing a slot are searched as one unit by
    the evolutionary mapper.
    """

    id: int
    kind: LayerKind
    m: int
    k: int
    n: int
    heads: int = 1
    deps: tuple[int, ...] = ()
    activation_inputs: int = 1
    name: str = ""
    slot: str = ""

    def __post_init__(self):
        if min(self.m, self.k, self.n) < 1:
            raise GraphError(f"layer {self.id}: dimensions must be positive")
        if self.heads < 1:
            raise GraphError(f"layer {self.id}: heads must be >= 1")
        if self.heads != 1 and self.kind is not LayerKind.BatchMatMul:
            raise GraphError(f"layer {self.id}: only BatchMatMul carries heads")
        if self.activation_inputs not in (1, 2):
            raise GraphError(f"layer {self.id}: activation_inputs must be 1 or 2")

    @property
    def is_hmm(self) -> bool:
        return self.kind.is_hmm

    @property
    def macs(self) -> int:
        if not self.is_hmm:
            return 0
        return self.heads * self.m * self.k * self.n

    @property
    def ops(self) -> int:
        return 2 * self.macs

    @property
    def weight_bytes(self) -> int:
        # attention operands are both produced at runtime
        if not self.is_hmm or self.activation_inputs == 2:
            return 0
        return self.k * self.n * BYTES_PER_ELEM

    @property
    def out_bytes(self) -> int:
        return self.heads * self.m * self.n * BYTES_PER_ELEM

    @property
    def in_bytes(self) -> int:
        if self.is_hmm:
            return self.heads * self.m * self.k * BYTES_PER_ELEM
        return self.m * self.n * BYTES_PER_ELEM

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        d["deps"] = list(self.deps)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Layer":
        d = dict(d)
        d["kind"] = LayerKind(d["kind"])
        d["deps"] = tuple(d.get("deps", ()))
        return cls(**d)


@dataclass(frozen=True)
class Graph:
    layers: tuple[Layer, ...]
    name: str = ""
    _by_id: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        by_id = {}
        for layer in self.layers:
            if layer.id in by_id:
                raise GraphError(f"duplicate layer id {layer.id}")
            by_id[layer.id] = layer
        for layer in self.layers:
            for d in layer.deps:
                if d not in by_id:
                    raise GraphError(f"layer {layer.id} depends on unknown layer {d}")
        object.__setattr__(self, "_by_id", by_id)

    def __len__(self) -> int:
        return len(self.layers)

    def __getitem__(self, layer_id: int) -> Layer:
        return self._by_id[layer_id]

    @property
    def ids(self) -> list[int]:
        return [layer.id for layer in self.layers]

    def consumers(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {layer.id: [] for layer in self.layers}
        for layer in self.layers:
            for d in layer.deps:
                out[d].append(layer.id)
        return out

    def slots(self) -> list[str]:
        """Search units in first-appearance (topological) order.

        Compute layers without an explicit slot form a unit of their own.
        """
        seen: list[str] = []
        for lid in topo_order(self):
            s = slot_of(self[lid])
            if s is not None and s not in seen:
                seen.append(s)
        return seen

    def to_json(self) -> str:
        return json.dumps(
            {"name": self.name, "layers": [layer.to_dict() for layer in self.layers]},
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, text: str) -> "Graph":
        raw = json.loads(text)
        if isinstance(raw, list):
            raw = {"name": "", "layers": raw}
        return cls(tuple(Layer.from_dict(d) for d in raw["layers"]), name=raw.get("name", ""))


def slot_of(layer: Layer) -> str | None:
    if not layer.is_hmm:
        return None
    return layer.slot or f"L{layer.id}"


def total_macs(g: Graph) -> int:
    return sum(layer.macs for layer in g.layers)


def total_ops(g: Graph) -> int:
    return 2 * total_macs(g)


def topo_order(g: Graph) -> list[int]:
    """Kahn's algorithm; ready layers are released smallest id first."""
    indeg = {layer.id: len(set(layer.deps)) for layer in g.layers}
    cons = g.consumers()
    ready = [lid for lid, d in indeg.items() if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        lid = heapq.heappop(ready)
        order.append(lid)
        for c in sorted(set(cons[lid])):
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(ready, c)
    if len(order) != len(g.layers):
        stuck = sorted(lid for lid, d in indeg.items() if d > 0)
        raise GraphError(f"cycle detected among layers {stuck}")
    return order


def validate(g: Graph) -> Graph:
    topo_order(g)
    return g


@dataclass(frozen=True)
class ModelSpec:
    name: str
    heads: int
    embed_dim: int
    depth: int
    seq_len: int = 197
    mlp_ratio: Fraction | float | int = 4
    patch: int = 16
    image: int = 224

    def validate(self) -> "ModelSpec":
        if self.heads < 1:
            raise GraphError("heads must be >= 1")
        if self.embed_dim < 1 or self.embed_dim % self.heads:
            raise GraphError(f"embed_dim {self.embed_dim} is not divisible by heads {self.heads}")
        if self.depth < 0:
            raise GraphError("depth must be >= 0")
        if self.seq_len < 1:
            raise GraphError("seq_len must be >= 1")
        if self.patch < 1 or self.image < self.patch:
            raise GraphError("patch must be positive and no larger than image")
        hidden = Fraction(self.mlp_ratio).limit_denominator(1000) * self.embed_dim
        if hidden <= 0 or hidden.denominator != 1:
            raise GraphError("mlp_ratio * embed_dim must be a positive integer")
        return self

    @property
    def hidden_dim(self) -> int:
        return int(Fraction(self.mlp_ratio).limit_denominator(1000) * self.embed_dim)

    @property
    def num_patches(self) -> int:
        return (self.image // self.patch) ** 2

    def to_dict(self) -> dict:
        d = asdict(self)
        r = Fraction(self.mlp_ratio).limit_denominator(1000)
        d["mlp_ratio"] = int(r) if r.denominator == 1 else float(r)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        known = {k: d[k] for k in ("name", "heads", "embed_dim", "depth", "seq_len",
                                   "mlp_ratio", "patch", "image") if k in d}
        return cls(**known).validate()


# Built-in vision transformers. LV-ViT-T uses an MLP ratio of 3.
MODELS = {
    "deit_t": ModelSpec("DeiT-T", heads=3, embed_dim=192, depth=12),
    "deit_160": ModelSpec("DeiT-160", heads=4, embed_dim=160, depth=12),
    "deit_256": ModelSpec("DeiT-256", heads=4, embed_dim=256, depth=12),
    "lvvit_t": ModelSpec("LV-ViT-T", heads=4, embed_dim=240, depth=12, mlp_ratio=3),
}


class _Builder:
    def __init__(self):
        self.layers: list[Layer] = []

    def add(self, kind, m, k, n, deps, *, heads=1, act=1, name="", slot="") -> int:
        lid = len(self.layers)
        self.layers.append(Layer(lid, kind, m, k, n, heads, tuple(deps), act, name, slot))
        return lid

    def hce(self, kind, rows, row_len, deps, name) -> int:
        return self.add(kind, rows, 1, row_len, deps, name=name)

    def to_hmm(self, src: int, name: str) -> int:
        """Insert a Reformat when a nonlinear output feeds a matrix engine."""
        if self.layers[src].kind in (LayerKind.Softmax, LayerKind.LayerNorm, LayerKind.GeLU):
            s = self.layers[src]
            return self.hce(LayerKind.Reformat, s.m, s.n, [src], name)
        return src


def build_transformer(spec: ModelSpec) -> Graph:
    """Build the inference graph of a ViT-style encoder.

    The final classifier head is not part of the graph.
    """
    spec.validate()
    s, e, h = spec.seq_len, spec.embed_dim, spec.heads
    hd = e // h
    hid = spec.hidden_dim
    b = _Builder()
    x = b.add(LayerKind.PatchEmbed, spec.num_patches, spec.patch * spec.patch * 3, e, [],
              name="patch_embed", slot="patch")
    for i in range(spec.depth):
        p = f"blk{i}."
        ln1 = b.hce(LayerKind.LayerNorm, s, e, [x], p + "ln1")
        qkv = b.add(LayerKind.MatMul, s, e, 3 * e, [b.to_hmm(ln1, p + "ln1.reformat")],
                    name=p + "qkv", slot="qkv")
        kt = b.hce(LayerKind.Transpose, s, e, [qkv], p + "k_transpose")
        qk = b.add(LayerKind.BatchMatMul, s, hd, s, [qkv, kt], heads=h, act=2,
                   name=p + "qk", slot="qk")
        sm = b.hce(LayerKind.Softmax, h * s, s, [qk], p + "softmax")
        av = b.add(LayerKind.BatchMatMul, s, s, hd, [b.to_hmm(sm, p + "softmax.reformat"), qkv],
                   heads=h, act=2, name=p + "av", slot="av")
        proj = b.add(LayerKind.MatMul, s, e, e, [av], name=p + "proj", slot="proj")
        add1 = b.hce(LayerKind.VectorAdd, s, e, [proj, x], p + "add1")
        ln2 = b.hce(LayerKind.LayerNorm, s, e, [add1], p + "ln2")
        fc1 = b.add(LayerKind.MatMul, s, e, hid, [b.to_hmm(ln2, p + "ln2.reformat")],
                    name=p + "mlp1", slot="mlp1")
        act = b.hce(LayerKind.GeLU, s, hid, [fc1], p + "gelu")
        fc2 = b.add(LayerKind.MatMul, s, hid, e, [b.to_hmm(act, p + "gelu.reformat")],
                    name=p + "mlp2", slot="mlp2")
        x = b.hce(LayerKind.VectorAdd, s, e, [fc2, add1], p + "add2")
    return Graph(tuple(b.layers), name=spec.name)


def closed_form_macs(spec: ModelSpec) -> int:
    """Per-block QKV + attention + projection + MLP, plus the patch embedding."""
    s, e, hid = spec.seq_len, spec.embed_dim, spec.hidden_dim
    block = s * e * 3 * e + 2 * s * s * e + s * e * e + 2 * s * e * hid
    return spec.depth * block + spec.num_patches * spec.patch ** 2 * 3 * e


def chain_graph(dims: Iterable[tuple[int, int, int]], name: str = "chain") -> Graph:
    """Linear chain of MatMuls, layer i feeding layer i+1."""
    layers = []
    for i, (m, k, n) in enumerate(dims):
        layers.append(Layer(i, LayerKind.MatMul, m, k, n, deps=(i - 1,) if i else ()))
    return Graph(tuple(layers), name=name)


def load_model_spec(path) -> ModelSpec:
    with open(path, encoding="utf-8") as f:
        return ModelSpec.from_dict(json.load(f))
