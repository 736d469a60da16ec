"""Artifacts written by the command line: Pareto CSV, design files, manifests."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from .dse import DesignPoint, dominates, fused_kinds
from .graph import Graph
from .hardware import HardwareProfile
from .perf import plio_count, utilization

PARETO_COLUMNS = ("latency_ms", "throughput_tops", "n_acc", "batch", "mode", "dominated")


def _num(x: float) -> str:
    return format(x, ".9g")


def emit_pareto(archive) -> str:
    """One row per scheduled point, flagged if another row dominates it."""
    pts = [d for d in archive if math.isfinite(d.latency)]
    rows = []
    for d in pts:
        dom = any(dominates(o, d) for o in pts if o is not d)
        rows.append((d.latency, -d.throughput, d.n_acc, d.n_bat, d.mode, d.genome, dom, d))
    rows.sort(key=lambda r: r[:6])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PARETO_COLUMNS)
    for lat, _, n_acc, batch, mode, _, dom, d in rows:
        w.writerow([_num(lat * 1e3), _num(d.throughput / 1e12), n_acc, batch, mode,
                    "true" if dom else "false"])
    return buf.getvalue()


def design_document(design: DesignPoint, g: Graph, p: HardwareProfile, extra: dict | None = None) -> str:
    """A self-contained design file: the point plus the graph and device it targets."""
    doc = {"design": design.to_dict(), "graph": json.loads(g.to_json()), "hw": p.to_dict()}
    if extra:
        doc.update(extra)
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def read_design_document(path) -> tuple[DesignPoint, Graph, HardwareProfile, dict]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    design = DesignPoint.from_dict(raw["design"])
    g = Graph.from_json(json.dumps(raw["graph"]))
    p = HardwareProfile.from_dict(raw["hw"])
    return design, g, p, raw


def manifests(design: DesignPoint, g: Graph, p: HardwareProfile) -> list[dict]:
    """Per-accelerator parameters a template generator needs."""
    out = []
    port = 0
    for acc in sorted(design.cfgs):
        cfg = design.cfgs[acc]
        kinds = fused_kinds(design.assignment, g, acc)
        n_plio = plio_count(cfg.a, cfg.b, cfg.c, cfg.hmm_type)
        out.append({
            "acc_id": acc,
            "hmm_type": cfg.hmm_type.name,
            "h1": cfg.h1, "w1": cfg.w1, "w2": cfg.w2,
            "a": cfg.a, "b": cfg.b, "c": cfg.c,
            "part_a": cfg.part_a, "part_b": cfg.part_b, "part_c": cfg.part_c,
            "fused_kinds": kinds,
            "ram_banks": utilization(cfg, kinds, p).ram_banks,
            "plio_list": list(range(port, port + n_plio)),
        })
        port += n_plio
    return out


def write_manifests(design: DesignPoint, g: Graph, p: HardwareProfile, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for m in manifests(design, g, p):
        path = out_dir / f"acc{m['acc_id']}.json"
        path.write_text(json.dumps(m, sort_keys=True, indent=1) + "\n", encoding="utf-8")
        paths.append(path)
    return paths
