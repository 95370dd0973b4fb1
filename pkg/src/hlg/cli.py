"""``hlg`` command line: generate, refine, synth, train, eval, export.

Exit codes: 0 success, 1 internal error, 2 invalid input, 3 placement
left some objects without a feasible pose (outputs are still written).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Sequence, TypeVar

from .config import RunConfig, load_config
from .export import scene_to_obj
from .fgla import CrossLayerConstraint, MultipleParents, RelationCycle, build_layer_graphs, build_ownership, validate_disjointness
from .instruction import Instruction, InstructionError, _pose_map, parse_instruction, parse_scene, serialize_scene
from .metrics import report, report_csv, report_json
from .placement import LayerOverflow, place_scene
from .scene import DEFAULT_CATEGORIES
from .tlo.losses import LossBreakdown
from .tlo.network import apply_pose_deltas, load_params, save_params
from .tlo.refine import refine
from .tlo.synth import GenerationOverflow, sample_from_text, sample_to_text, synth_scene
from .tlo.train import EmptyDataset, train

logger = logging.getLogger("hlg")

EXIT_OK, EXIT_INTERNAL, EXIT_INVALID, EXIT_OVERFLOW = 0, 1, 2, 3
TRACE_HEADER = ("iter", "owner", "collision", "stability", "align", "total")

T = TypeVar("T")
R = TypeVar("R")


def threads() -> int:
    try:
        return max(1, int(os.environ.get("HLG_THREADS", "1")))
    except ValueError:
        return 1


def ordered_map(fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """Map with up to HLG_THREADS workers; results keep input order."""
    items = list(items)
    n = threads()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def trace_csv(trace: Sequence[LossBreakdown]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for k, b in enumerate(trace):
        w.writerow([k] + [repr(v) for v in b.row()])
    return buf.getvalue()


def _write(path: Path, text: str | bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(text, bytes):
        path.write_bytes(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _fail(message: str, code: int = EXIT_INVALID) -> int:
    print(f"hlg: error: {message}", file=sys.stderr)
    return code


# ---------------------------------------------------------------------- commands


def cmd_generate(args, cfg: RunConfig) -> int:
    try:
        instr = parse_instruction(Path(args.instruction).read_bytes())
        tree = build_ownership(instr)
        disjoint = validate_disjointness(instr, tree)
        if disjoint:
            details = "; ".join(i.detail for i in disjoint)
            return _fail(f"constraints cross ownership layers: {details}")
        graphs = build_layer_graphs(instr, tree)
        code = EXIT_OK
        try:
            coarse = place_scene(instr, tree, graphs, cfg.offsets)
        except LayerOverflow as exc:
            print(f"hlg: warning: {exc}", file=sys.stderr)
            coarse, code = exc.scene, EXIT_OVERFLOW
    except (InstructionError, MultipleParents, CrossLayerConstraint, RelationCycle, ValueError) as exc:
        return _fail(str(exc))

    start = coarse
    if args.params:
        params = load_params(Path(args.params).read_bytes(), DEFAULT_CATEGORIES)
        start = apply_pose_deltas(coarse, tree, params, DEFAULT_CATEGORIES)
    result = refine(start, tree, instr.targets, cfg.refine)

    out = Path(args.out)
    meta = {"seed": cfg.seed}
    _write(out / "coarse_scene.json", serialize_scene(coarse, meta))
    _write(out / "scene.json", serialize_scene(result.scene, meta))
    _write(out / "trace.csv", trace_csv(result.trace))
    rep = report(result.scene, tree, instr.targets, cfg.ori_threshold)
    _write(out / "report.csv", report_csv([("scene", rep)]))
    _write(out / "report.json", report_json(rep))
    return code


def cmd_refine(args, cfg: RunConfig) -> int:
    try:
        doc = parse_scene(Path(args.scene).read_bytes())
        if doc.scene.poses is None:
            return _fail(f"{args.scene}: scene has no poses block")
        tree = build_ownership(Instruction.from_scene(doc.scene))
    except (InstructionError, MultipleParents, ValueError) as exc:
        return _fail(str(exc))
    result = refine(doc.scene, tree, doc.scene.targets, cfg.refine)
    out = Path(args.out)
    _write(out / "scene.json", serialize_scene(result.scene, doc.meta))
    _write(out / "trace.csv", trace_csv(result.trace))
    return EXIT_OK


def cmd_synth(args, cfg: RunConfig) -> int:
    if args.n < 1:
        return _fail("-n must be at least 1")
    seed = cfg.seed if args.seed is None else args.seed
    out = Path(args.out)
    seeds = [seed + k for k in range(args.n)]

    def make(s: int):
        try:
            return sample_to_text(synth_scene(s, cfg.synth))
        except GenerationOverflow as exc:
            return exc

    texts = ordered_map(make, seeds)
    rows = []
    code = EXIT_OK
    for k, (s, text) in enumerate(zip(seeds, texts)):
        sid = f"sample_{k:05d}"
        if isinstance(text, Exception):
            print(f"hlg: warning: {sid} (seed {s}): {text}", file=sys.stderr)
            code = EXIT_OVERFLOW
            continue
        _write(out / f"{sid}.json", text)
        rows.append((sid, s, f"{sid}.json"))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("sample_id", "seed", "file"))
    w.writerows(rows)
    _write(out / "manifest.csv", buf.getvalue())
    return code


def load_dataset(directory: Path):
    manifest = directory / "manifest.csv"
    if manifest.exists():
        with open(manifest, newline="", encoding="utf-8") as fh:
            files = [directory / row["file"] for row in csv.DictReader(fh)]
    else:
        files = sorted(directory.glob("*.json"))
    return [sample_from_text(f.read_bytes()) for f in files]


def cmd_train(args, cfg: RunConfig) -> int:
    try:
        samples = load_dataset(Path(args.dataset))
        result = train(samples, cfg.tlo, DEFAULT_CATEGORIES)
    except EmptyDataset as exc:
        return _fail(str(exc))
    except (InstructionError, ValueError) as exc:
        return _fail(str(exc))
    out = Path(args.out)
    _write(out / "params.tlop", save_params(result.params, DEFAULT_CATEGORIES))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("epoch", "loss", "owner", "geometric"))
    for p in result.curve:
        w.writerow((p.epoch, repr(p.loss), repr(p.owner), repr(p.geometric)))
    _write(out / "curve.csv", buf.getvalue())
    return EXIT_OK


def cmd_eval(args, cfg: RunConfig) -> int:
    override = None
    if args.targets:
        try:
            override = _pose_map(json.loads(Path(args.targets).read_text(encoding="utf-8")), "targets")
        except (InstructionError, ValueError) as exc:
            return _fail(f"{args.targets}: {exc}")

    def one(path: str):
        doc = parse_scene(Path(path).read_bytes())
        scene = doc.scene
        targets = scene.targets if override is None else {k: v for k, v in override.items() if k in scene.by_id()}
        tree = build_ownership(Instruction.from_scene(scene))
        return Path(path).stem, report(scene, tree, targets, cfg.ori_threshold)

    try:
        rows = ordered_map(one, args.scenes)
    except (InstructionError, ValueError) as exc:
        return _fail(str(exc))
    text = report_csv(rows)
    if args.out:
        _write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_export(args, cfg: RunConfig) -> int:
    try:
        doc = parse_scene(Path(args.scene).read_bytes())
    except InstructionError as exc:
        return _fail(str(exc))
    if doc.scene.poses is None:
        return _fail(f"{args.scene}: scene has no poses block")
    _write(Path(args.out), scene_to_obj(doc.scene))
    return EXIT_OK


# -------------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hlg", description="Hierarchical indoor layout generation")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("-c", "--config", help="RunConfig JSON file")

    p = sub.add_parser("generate", help="instruction -> placed and refined scene")
    p.add_argument("-i", "--instruction", required=True)
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("--params", help="trained TLOP parameters; predicted deltas seed the refinement")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("refine", help="refine a posed scene file")
    p.add_argument("-s", "--scene", required=True)
    p.add_argument("-o", "--out", required=True, help="output directory")
    common(p)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("synth", help="write labeled synthetic scenes")
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--out", required=True, help="output directory")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the layout network on a synth directory")
    p.add_argument("-d", "--dataset", required=True)
    p.add_argument("-o", "--out", required=True, help="output directory")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="OOB / ORI / loss report for scene files")
    p.add_argument("scenes", nargs="+")
    p.add_argument("-t", "--targets", help="JSON object of target poses overriding each scene's own")
    p.add_argument("-o", "--out", help="CSV path (default stdout)")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export", help="export a scene as Wavefront OBJ")
    p.add_argument("-s", "--scene", required=True)
    p.add_argument("--obj", action="store_true", help="OBJ output (the only format)")
    p.add_argument("-o", "--out", required=True)
    common(p)
    p.set_defaults(func=cmd_export)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(getattr(args, "config", None))
    except (OSError, ValueError, TypeError) as exc:
        return _fail(f"config: {exc}")
    try:
        return args.func(args, cfg)
    except OSError as exc:
        return _fail(str(exc))
    except Exception:  # noqa: BLE001 - last-resort exit code for scripts
        logger.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
