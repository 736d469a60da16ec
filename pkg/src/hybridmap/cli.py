"""Command line: explore, simulate, pareto, emit."""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

from .dse import MODES, DesignPoint, EaParams, default_workers, explore
from .emit import design_document, emit_pareto, read_design_document, write_manifests
from .graph import MODELS, Graph, GraphError, ModelSpec, build_transformer
from .hardware import ProfileError, load_profile
from .simulator import SimOptions, SimulationError, simulate

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2  # argparse's own code for bad flags
EXIT_INPUT = 3  # unreadable or invalid input file
EXIT_INFEASIBLE = 4  # no design satisfies the constraints
EXIT_SIMULATION = 5  # replay deadlocked


class InputError(Exception):
    pass


def load_graph(spec: str) -> Graph:
    """Built-in model name, a model-spec JSON, or a full graph JSON.

    A missing file whose stem names a built-in model (``deit_t.json``) loads
    the built-in.
    """
    path = Path(spec)
    for key in (spec.lower(), path.stem.lower()):
        if key in MODELS and (key == spec.lower() or not path.exists()):
            return build_transformer(MODELS[key])
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read model {spec!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{spec}: {exc}") from exc
    try:
        if isinstance(raw, list) or "layers" in raw:
            return Graph.from_json(json.dumps(raw))
        return build_transformer(ModelSpec.from_dict(raw))
    except (GraphError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{spec}: invalid model: {exc}") from exc


def _batches(text: str) -> list[int]:
    try:
        out = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad batch list {text!r}")
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError("batches must be positive integers")
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hybridmap", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    ex = sub.add_parser("explore", help="search mappings and write the Pareto front and best design")
    ex.add_argument("--model", required=True, help="built-in name (deit_t, ...) or JSON file")
    ex.add_argument("--hw", default="vck190", help="built-in profile name or JSON file")
    ex.add_argument("--batches", type=_batches, default=[1])
    ex.add_argument("--latency-ms", type=float, default=None)
    ex.add_argument("--mode", choices=MODES, default="hybrid")
    ex.add_argument("--naccs", type=int, default=None, help="accelerator limit (default: one per slot)")
    ex.add_argument("--seed", type=int, default=0)
    ex.add_argument("--pop", type=int, default=16)
    ex.add_argument("--children", type=int, default=16)
    ex.add_argument("--iters", type=int, default=50)
    ex.add_argument("--inter-acc-aware", choices=("on", "off"), default="on")
    ex.add_argument("--tile-cap", type=int, default=256)
    ex.add_argument("--out", default="design.json")
    ex.add_argument("--pareto-out", default="pareto.csv")
    ex.add_argument("--archive-out", default=None, help="all evaluated points, JSON lines")
    ex.add_argument("--emit-config-dir", default=None)
    ex.add_argument("--schedule-out", default=None, help="Gantt CSV of the best design")

    sm = sub.add_parser("simulate", help="replay a design file in the event simulator")
    sm.add_argument("--design", required=True)
    sm.add_argument("--out", default=None, help="report path (default: stdout)")
    sm.add_argument("--trace", action="store_true", help="also write the event log")
    sm.add_argument("--trace-out", default="events.jsonl")
    sm.add_argument("--no-bypass", action="store_true")
    sm.add_argument("--no-force-partition", action="store_true")

    pa = sub.add_parser("pareto", help="Pareto CSV from archive files")
    pa.add_argument("--archive", required=True, nargs="+")
    pa.add_argument("--pareto-out", default="pareto.csv")

    em = sub.add_parser("emit", help="per-accelerator configuration manifests")
    em.add_argument("--design", required=True)
    em.add_argument("--out-dir", required=True)
    return ap


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text, encoding="utf-8")


def cmd_explore(args) -> int:
    g = load_graph(args.model)
    p = load_profile(args.hw)
    n_acc = args.naccs if args.naccs is not None else max(1, len(g.slots()))
    lat = args.latency_ms / 1e3 if args.latency_ms is not None else math.inf
    base = EaParams(n_acc=n_acc, n_pop=args.pop, n_child=args.children, n_iter=args.iters,
                    seed=args.seed, lat_cons=lat, inter_acc_flag=args.inter_acc_aware == "on",
                    tile_cap=args.tile_cap, workers=default_workers())
    archive: list[DesignPoint] = []
    best = None
    for nb in args.batches:
        res = explore(g, p, replace(base, n_bat=nb).validate(), args.mode)
        archive.extend(res.archive)
        if res.best is not None and (best is None or (-res.best.fitness, res.best.latency)
                                     < (-best.fitness, best.latency)):
            best = res.best
    _write(args.pareto_out, emit_pareto(archive))
    if args.archive_out:
        _write(args.archive_out, "".join(d.to_json() + "\n" for d in archive))
    if best is None:
        print("no solution under constraint", file=sys.stderr)
        return EXIT_INFEASIBLE
    _write(args.out, design_document(best, g, p))
    if args.emit_config_dir:
        write_manifests(best, g, p, args.emit_config_dir)
    if args.schedule_out:
        _write(args.schedule_out, best.schedule.to_csv())
    print(f"best: latency {best.latency * 1e3:.4f} ms, throughput {best.throughput / 1e12:.2f} TOPS, "
          f"{best.n_acc} acc(s), batch {best.n_bat}", file=sys.stderr)
    return EXIT_OK


def _read_doc(path):
    try:
        return read_design_document(path)
    except OSError as exc:
        raise InputError(f"cannot read design {path!r}: {exc}") from exc
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: invalid design file: {exc}") from exc


def cmd_simulate(args) -> int:
    design, g, p, _ = _read_doc(args.design)
    opts = SimOptions(bypass_nonlinear=not args.no_bypass, force_partition=not args.no_force_partition)
    rep = simulate(design, g, p, opts)
    report = rep.to_dict()
    report["analytical_s"] = design.latency
    report["relative_error"] = (abs(design.latency - rep.makespan_s) / rep.makespan_s
                                if rep.makespan_s else 0.0)
    _write(args.out, json.dumps(report, sort_keys=True, indent=1) + "\n")
    if args.trace:
        _write(args.trace_out, rep.events_jsonl(p.freq_aie_hz))
    return EXIT_OK


def cmd_pareto(args) -> int:
    archive = []
    for path in args.archive:
        try:
            lines = Path(path).read_text(encoding="utf-8").splitlines()
            archive.extend(DesignPoint.from_json(x) for x in lines if x.strip())
        except OSError as exc:
            raise InputError(f"cannot read archive {path!r}: {exc}") from exc
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{path}: invalid archive: {exc}") from exc
    _write(args.pareto_out, emit_pareto(archive))
    return EXIT_OK


def cmd_emit(args) -> int:
    design, g, p, _ = _read_doc(args.design)
    if not design.cfgs:
        print("design has no accelerator configurations", file=sys.stderr)
        return EXIT_INFEASIBLE
    for path in write_manifests(design, g, p, args.out_dir):
        print(path)
    return EXIT_OK


COMMANDS = {"explore": cmd_explore, "simulate": cmd_simulate, "pareto": cmd_pareto, "emit": cmd_emit}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.cmd](args)
    except (InputError, ProfileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main(argv=None) -> int:
    try:
        return run(argv)
    except SystemExit as exc:  # argparse
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
