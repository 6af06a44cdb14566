"""Command-line surface.

Exit codes: 0 success, 1 domain error (anything raising StitchError or a
missing input file), 2 usage error (argparse).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import fileio
from .config import AppConfig, load_config
from .cutout import ETA_GRID, ProbeSample, format_head_report, rank_heads
from .errors import StitchError
from .layout import fallback_plan, plan_from_dict, plan_layout, plan_to_dict, read_layout, write_layout
from .model import build_adapter
from .pipeline import run_ablation_sweep, run_stitch
from .poseval import (
    aggregate,
    canonical_task,
    default_vocab,
    detection_from_dict,
    evaluate_image,
    format_report,
    gen_prompts,
    oracle_detector,
    record_from_dict,
    scene_for_record,
)
from .providers import FallbackProvider, HttpChatProvider


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stitch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="decompose a prompt into a layout JSON file")
    p.add_argument("--prompt", required=True)
    p.add_argument("--canvas", type=int, default=None, help="defaults to the config canvas")
    p.add_argument("--provider", choices=["llm", "fallback"], default="fallback")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("generate", help="run the stitching pipeline on the toy model")
    p.add_argument("--prompt", required=True)
    p.add_argument("--layout", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("select-head", help="rank attention heads against reference masks")
    p.add_argument("--probe-objects", required=True, help="text file, one object per line")
    p.add_argument("--references", required=True, help="directory of <object>.pgm masks")
    p.add_argument("--etas", default=",".join(str(e) for e in ETA_GRID))
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)

    bench = sub.add_parser("bench", help="benchmark generation and evaluation")
    bench_sub = bench.add_subparsers(dest="bench_command", required=True)

    p = bench_sub.add_parser("gen", help="generate a prompt set with ground truth")
    p.add_argument("--task", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = bench_sub.add_parser("eval", help="evaluate detections against a prompt set")
    p.add_argument("--prompts", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--out", required=True)

    p = bench_sub.add_parser("oracle-detect", help="synthesize perfect detections from layouts")
    p.add_argument("--prompts", required=True)
    p.add_argument("--layouts", default=None, help="layout JSONL; derived via the fallback planner when omitted")
    p.add_argument("--canvas", type=int, default=32)
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="aggregate verdict files into a task table")
    p.add_argument("--out", required=True)
    p.add_argument("verdicts", nargs="+")

    p = sub.add_parser("ablate-s", help="sweep the number of constrained steps")
    p.add_argument("--s-values", required=True, help="comma-separated S values")
    p.add_argument("--prompt", required=True)
    p.add_argument("--layout", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)

    return parser


def _load_config(path) -> AppConfig:
    if path is not None and not Path(path).is_file():
        raise StitchError(f"config file not found: {path}")
    return load_config(path)


def _provider_for(args, cfg: AppConfig):
    if args.provider == "fallback":
        return FallbackProvider()
    if not cfg.llm.base_url:
        raise StitchError("provider 'llm' needs llm.base_url in the config file")
    return HttpChatProvider(cfg.llm.base_url, cfg.llm.model, cfg.llm.api_key_env)


def _cmd_plan(args) -> int:
    cfg = _load_config(args.config)
    canvas = args.canvas if args.canvas is not None else cfg.stitch.canvas
    plan = plan_layout(args.prompt, canvas, _provider_for(args, cfg))
    write_layout(plan, args.out)
    print(f"wrote layout with {plan.num_objects} objects to {args.out}")
    return 0


def _cmd_generate(args) -> int:
    cfg = _load_config(args.config)
    stitch_cfg = cfg.stitch
    if args.seed is not None:
        from dataclasses import replace

        stitch_cfg = replace(stitch_cfg, seed=args.seed)
    if not Path(args.layout).is_file():
        raise StitchError(f"layout file not found: {args.layout}")
    plan = read_layout(args.layout, args.prompt)
    model = build_adapter(cfg.model, seed=stitch_cfg.seed)
    extra = {"layout_file_sha256": fileio.sha256_file(args.layout)}
    if args.config:
        extra["config_sha256"] = fileio.sha256_file(args.config)
    run_stitch(
        args.prompt,
        plan,
        model,
        stitch_cfg,
        workers=max(1, args.workers),
        run_dir=args.out,
        extra_inputs=extra,
    )
    print(f"run artifacts in {args.out}")
    return 0


def _sanitize(name: str) -> str:
    return name.replace(" ", "_")


def _cmd_select_head(args) -> int:
    cfg = _load_config(args.config)
    model = build_adapter(cfg.model, seed=cfg.stitch.seed)
    if not model.supports_full_capture():
        raise StitchError(f"model {cfg.model!r} cannot capture all heads")
    try:
        etas = tuple(float(e) for e in args.etas.split(",") if e.strip())
    except ValueError:
        raise StitchError(f"bad --etas value: {args.etas!r}") from None
    objects = [
        line.strip()
        for line in Path(args.probe_objects).read_text().splitlines()
        if line.strip()
    ]
    refdir = Path(args.references)
    schedule = model.schedule(cfg.stitch.t_steps)
    probes = []
    skipped = 0
    from .rng import noise_rng

    for obj in objects:
        ref_path = refdir / f"{_sanitize(obj)}.pgm"
        if not ref_path.is_file():
            skipped += 1
            continue
        prompt = f"a photo of a {obj}"
        _, records = model.run_steps(
            model.initial_noise(noise_rng(cfg.stitch.seed, f"probe/{obj}")),
            prompt,
            schedule,
            0,
            cfg.stitch.s_steps,
            capture_step=cfg.stitch.s_steps - 1,
            capture_heads="all",
        )
        probes.append(
            ProbeSample(
                records={(r.block_index, r.head_index): r for r in records},
                pad_flags=model.pad_flags(prompt),
                reference=fileio.pgm_to_mask(ref_path),
            )
        )
    if skipped:
        print(f"skipped {skipped} objects without reference masks", file=sys.stderr)
    scores = rank_heads(probes, model.grid, eta_grid=etas, kappa=cfg.stitch.kappa)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(format_head_report(scores))
    best = scores[0]
    print(
        f"best head: block {best.block_index} head {best.head_index} "
        f"eta {best.eta:g} (IoU {best.iou:.2f}, IoT {best.iot:.2f})"
    )
    return 0


def _cmd_bench_gen(args) -> int:
    records = gen_prompts(canonical_task(args.task), args.n, args.seed, default_vocab())
    fileio.write_jsonl(args.out, [r.to_dict() for r in records])
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def _read_records(path):
    if not Path(path).is_file():
        raise StitchError(f"prompt file not found: {path}")
    return [record_from_dict(row) for row in fileio.read_jsonl(path)]


def _cmd_bench_oracle_detect(args) -> int:
    records = _read_records(args.prompts)
    if args.layouts is not None:
        layout_rows = fileio.read_jsonl(args.layouts)
        if len(layout_rows) != len(records):
            raise StitchError(
                f"{len(layout_rows)} layouts for {len(records)} records"
            )
        plans = [plan_from_dict(row, rec.prompt_text) for row, rec in zip(layout_rows, records)]
    else:
        from .errors import UnsatisfiableScene

        plans = []
        skipped = 0
        for rec in records:
            try:
                plans.append(
                    fallback_plan(scene_for_record(rec), args.canvas, full_prompt=rec.prompt_text)
                )
            except UnsatisfiableScene:
                plans.append(None)
                skipped += 1
        if skipped:
            print(f"skipped {skipped} unsatisfiable records", file=sys.stderr)
    rows = []
    for rec, plan in zip(records, plans):
        if plan is None:
            continue
        detections = oracle_detector(rec, plan)
        rows.append(
            {
                "image": f"{rec.task}_{rec.index:05d}_seed{rec.seed}.png",
                "index": rec.index,
                "seed": rec.seed,
                "detections": [d.to_dict() for d in detections],
            }
        )
    fileio.write_jsonl(args.out, rows)
    print(f"wrote detections for {len(rows)} images to {args.out}")
    return 0


def _cmd_bench_eval(args) -> int:
    records = {r.index: r for r in _read_records(args.prompts)}
    if not Path(args.detections).is_file():
        raise StitchError(f"detections file not found: {args.detections}")
    verdict_rows = []
    for row in fileio.read_jsonl(args.detections):
        record = records.get(int(row["index"]))
        if record is None:
            raise StitchError(f"detections reference unknown record index {row['index']}")
        detections = [detection_from_dict(d) for d in row["detections"]]
        verdict = evaluate_image(detections, record)
        verdict_rows.append(
            {
                "image": row.get("image", f"{record.index:05d}"),
                "task": record.task,
                "seed": int(row.get("seed", record.seed)),
                "index": record.index,
                "passed": verdict.passed,
                "reasons": verdict.reasons,
            }
        )
    fileio.write_jsonl(args.out, verdict_rows)
    n_pass = sum(v["passed"] for v in verdict_rows)
    print(f"evaluated {len(verdict_rows)} images, {n_pass} passed")
    return 0


def _cmd_report(args) -> int:
    verdicts = []
    for path in args.verdicts:
        if not Path(path).is_file():
            raise StitchError(f"verdict file not found: {path}")
        verdicts.extend(fileio.read_jsonl(path))
    report, warnings = aggregate(verdicts)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    text = format_report(report)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(text)
    print(text, end="")
    return 0


def _cmd_ablate_s(args) -> int:
    cfg = _load_config(args.config)
    try:
        s_values = [int(s) for s in args.s_values.split(",") if s.strip()]
    except ValueError:
        raise StitchError(f"bad --s-values: {args.s_values!r}") from None
    if not s_values:
        raise StitchError("no S values given")
    if not Path(args.layout).is_file():
        raise StitchError(f"layout file not found: {args.layout}")
    plan = read_layout(args.layout, args.prompt)
    model = build_adapter(cfg.model, seed=cfg.stitch.seed)
    rows = run_ablation_sweep(
        [(args.prompt, plan)], s_values, cfg.stitch, model, args.out, workers=max(1, args.workers)
    )
    for row in rows:
        print(f"S={row['s']}: {row['cases']} case(s) in {args.out}/s_{row['s']}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {
        "plan": _cmd_plan,
        "generate": _cmd_generate,
        "select-head": _cmd_select_head,
        "report": _cmd_report,
        "ablate-s": _cmd_ablate_s,
    }
    try:
        if args.command == "bench":
            bench_handlers = {
                "gen": _cmd_bench_gen,
                "eval": _cmd_bench_eval,
                "oracle-detect": _cmd_bench_oracle_detect,
            }
            return bench_handlers[args.bench_command](args)
        return handlers[args.command](args)
    except StitchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
