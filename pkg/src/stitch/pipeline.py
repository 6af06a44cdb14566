"""Orchestration: constrained branches, cutout, composition, continuation.

A run drives K+1 branches for the first s_steps: branch 0 generates the
background prompt unconstrained, branches 1..K generate their sub-prompt
under the region-binding mask of their box.  All branches share the same
schedule and, by default, the same initial noise.  At step S the designated
head's attention is captured per object branch and turned into a cutout
mask; object tokens are spliced over the background into the composite
latent, and generation continues unconstrained on the full prompt for the
remaining steps.
"""

from __future__ import annotations

import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__ as _pkg_version
from . import fileio
from .cutout import CutoutMask, cutout_from_attention, restrict_to_box
from .errors import BranchDivergence, ShapeMismatch
from .layout import LayoutPlan, plan_to_dict, validate_layout, write_layout
from .model import ModelAdapter
from .region_binding import TokenPartition, build_rb_mask, partition_tokens
from .rng import noise_rng


@dataclass(frozen=True)
class StitchConfig:
    s_steps: int = 10
    t_steps: int = 50
    eta: float = 0.95
    kappa: int = 5
    canvas: int = 32
    cutout_block: int = 0
    cutout_head: int = 0
    shared_noise: bool = True
    seed: int = 0
    restrict_to_box: bool = True

    def __post_init__(self):
        if not 1 <= self.s_steps < self.t_steps:
            raise ValueError(
                f"need 1 <= s_steps < t_steps, got S={self.s_steps} T={self.t_steps}"
            )
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"eta must be in (0, 1], got {self.eta}")
        if self.kappa < 1 or self.kappa % 2 == 0:
            raise ValueError(f"kappa must be odd and >= 1, got {self.kappa}")
        if self.canvas < 2:
            raise ValueError("canvas must be >= 2")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @property
    def cutout_selector(self) -> tuple[int, int]:
        return (self.cutout_block, self.cutout_head)


@dataclass
class CompositeLatent:
    visual_tokens: np.ndarray  # (n_visual, d)
    provenance: np.ndarray  # (n_visual,) int, 0 = background


@dataclass
class StitchRun:
    plan: LayoutPlan
    config: StitchConfig
    schedule: np.ndarray
    branch_latents: list[np.ndarray]  # step-S latents, index 0 = background
    masks: list[CutoutMask]  # one per object branch
    composite: CompositeLatent
    final_latents: np.ndarray
    preview: np.ndarray
    timings: dict = field(default_factory=dict)


def compose_latents(background_tokens, overlays) -> CompositeLatent:
    """Splice overlay tokens over the background, later overlays winning.

    overlays: ordered list of (mask, tokens) where mask is a CutoutMask or
    a flat/2D boolean array over the token grid.
    """
    background = np.asarray(background_tokens, dtype=np.float64)
    composite = background.copy()
    provenance = np.zeros(background.shape[0], dtype=np.int64)
    for k, (mask, tokens) in enumerate(overlays, start=1):
        flat = mask.flat if isinstance(mask, CutoutMask) else np.asarray(mask, dtype=bool).ravel()
        tokens = np.asarray(tokens, dtype=np.float64)
        if tokens.shape != background.shape:
            raise ShapeMismatch(
                f"overlay {k} tokens {tokens.shape} vs background {background.shape}"
            )
        if flat.shape[0] != background.shape[0]:
            raise ShapeMismatch(f"overlay {k} mask covers {flat.shape[0]} tokens")
        composite[flat] = tokens[flat]
        provenance[flat] = k
    return CompositeLatent(visual_tokens=composite, provenance=provenance)


def _branch_mask(model: ModelAdapter, plan: LayoutPlan, cfg: StitchConfig, k: int):
    """(mask, partition) for object branch k (1-based); background has none."""
    obj = plan.objects[k - 1]
    partition = partition_tokens(
        model.grid, obj.box, cfg.canvas, model.pad_flags(obj.sub_prompt)
    )
    return build_rb_mask(partition), partition


def run_stitch(
    prompt: str,
    plan: LayoutPlan,
    model: ModelAdapter,
    cfg: StitchConfig,
    *,
    workers: int = 1,
    run_dir=None,
    extra_inputs: dict | None = None,
) -> StitchRun:
    """Execute the full pipeline; optionally persist artifacts to run_dir."""
    if plan.canvas_size != cfg.canvas:
        raise ValueError(
            f"plan canvas {plan.canvas_size} does not match config canvas {cfg.canvas}"
        )
    t0 = time.perf_counter()
    k_objects = plan.num_objects
    schedule = model.schedule(cfg.t_steps)

    partitions: list[TokenPartition | None] = [None]
    masks_rb = [None]
    for k in range(1, k_objects + 1):
        mask, partition = _branch_mask(model, plan, cfg, k)
        masks_rb.append(mask)
        partitions.append(partition)

    if cfg.shared_noise:
        shared = model.initial_noise(noise_rng(cfg.seed, "noise/shared"))

    def branch_noise(k: int):
        if cfg.shared_noise:
            return shared.copy()
        return model.initial_noise(noise_rng(cfg.seed, f"noise/branch/{k}"))

    def run_branch(k: int):
        branch_schedule = model.schedule(cfg.t_steps)
        if not np.array_equal(branch_schedule, schedule):
            raise BranchDivergence(f"branch {k} produced a different schedule")
        branch_prompt = plan.background_prompt if k == 0 else plan.objects[k - 1].sub_prompt
        capture = None if k == 0 else [cfg.cutout_selector]
        latent, records = model.run_steps(
            branch_noise(k),
            branch_prompt,
            branch_schedule,
            0,
            cfg.s_steps,
            mask=masks_rb[k],
            capture_step=None if k == 0 else cfg.s_steps - 1,
            capture_heads=capture,
        )
        return latent, records

    t_branches = time.perf_counter()
    if workers > 1 and k_objects + 1 > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_branch, range(k_objects + 1)))
    else:
        results = [run_branch(k) for k in range(k_objects + 1)]
    branch_latents = [latent for latent, _ in results]
    timings = {"branches_s": time.perf_counter() - t_branches}

    t_compose = time.perf_counter()
    masks: list[CutoutMask] = []
    for k in range(1, k_objects + 1):
        records = results[k][1]
        if not records:
            raise BranchDivergence(f"branch {k} captured no attention record")
        mask = cutout_from_attention(
            records[0], model.pad_flags(plan.objects[k - 1].sub_prompt),
            model.grid, cfg.eta, cfg.kappa,
        )
        if cfg.restrict_to_box:
            mask = restrict_to_box(mask, partitions[k])
        masks.append(mask)
    composite = compose_latents(
        branch_latents[0], [(masks[k - 1], branch_latents[k]) for k in range(1, k_objects + 1)]
    )
    timings["compose_s"] = time.perf_counter() - t_compose

    t_cont = time.perf_counter()
    final, _ = model.run_steps(
        composite.visual_tokens, prompt, schedule, cfg.s_steps, cfg.t_steps
    )
    timings["continuation_s"] = time.perf_counter() - t_cont
    timings["total_s"] = time.perf_counter() - t0

    run = StitchRun(
        plan=plan,
        config=cfg,
        schedule=schedule,
        branch_latents=branch_latents,
        masks=masks,
        composite=composite,
        final_latents=final,
        preview=model.preview(final),
        timings=timings,
    )
    if run_dir is not None:
        write_run_artifacts(run, run_dir, model, extra_inputs=extra_inputs)
    return run


# --------------------------------------------------------------------------
# Artifact persistence


def write_run_artifacts(run: StitchRun, run_dir, model: ModelAdapter, extra_inputs=None) -> None:
    """Run directory layout:

    layout.json, branch_<k>/step_<S>.tnsr, masks/obj_<k>.pgm,
    composite.tnsr, final.tnsr, preview.pgm, meta.json
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    s = run.config.s_steps
    write_layout(run.plan, run_dir / "layout.json")
    for k, latent in enumerate(run.branch_latents):
        fileio.write_tensor(run_dir / f"branch_{k}" / f"step_{s}.tnsr", latent)
    for k, mask in enumerate(run.masks, start=1):
        fileio.mask_to_pgm(run_dir / "masks" / f"obj_{k}.pgm", mask.selected)
    fileio.write_tensor(run_dir / "composite.tnsr", run.composite.visual_tokens)
    fileio.write_tensor(run_dir / "final.tnsr", run.final_latents)
    fileio.write_pgm(run_dir / "preview.pgm", run.preview)

    artifact_paths = ["layout.json", "composite.tnsr", "final.tnsr", "preview.pgm"]
    artifact_paths += [f"branch_{k}/step_{s}.tnsr" for k in range(len(run.branch_latents))]
    artifact_paths += [f"masks/obj_{k}.pgm" for k in range(1, len(run.masks) + 1)]

    inputs = {
        "prompt_sha256": fileio.sha256_bytes(run.plan.full_prompt.encode("utf-8")),
        "layout_sha256": fileio.sha256_bytes(
            fileio.canonical_json(plan_to_dict(run.plan)).encode("utf-8")
        ),
    }
    if extra_inputs:
        inputs.update(extra_inputs)

    meta = {
        "config": asdict(run.config),
        "model": {"name": model.name, "grid": list(model.grid), "text_len": model.text_len},
        "versions": {
            "stitch": _pkg_version,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
        "inputs": inputs,
        "artifacts": {p: fileio.sha256_file(run_dir / p) for p in sorted(artifact_paths)},
        "timings": run.timings,
        "warnings": [f.kind + ": " + f.message for f in validate_layout(run.plan)],
    }
    (run_dir / "meta.json").write_text(fileio.canonical_json(meta) + "\n")


def verify_manifest(run_dir) -> dict:
    """Check every artifact listed in meta.json exists with a matching hash."""
    import json

    run_dir = Path(run_dir)
    meta = json.loads((run_dir / "meta.json").read_text())
    for rel, expected in meta["artifacts"].items():
        path = run_dir / rel
        if not path.is_file():
            raise FileNotFoundError(f"manifest artifact missing: {rel}")
        actual = fileio.sha256_file(path)
        if actual != expected:
            raise ValueError(f"hash mismatch for {rel}: {actual} != {expected}")
    return meta


def run_ablation_sweep(
    cases: list[tuple[str, LayoutPlan]],
    s_values: list[int],
    cfg: StitchConfig,
    model: ModelAdapter,
    out_dir,
    evaluator=None,
    workers: int = 1,
) -> list[dict]:
    """run_stitch per S value; one artifact directory per (S, case).

    Rows come back in input order with the final-latent hash and, when an
    evaluator callback is supplied, the fraction of runs it accepts.
    Blend scoring is a human-study measure and is not computed here.
    """
    out_dir = Path(out_dir)
    rows = []
    for s in s_values:
        run_cfg = replace(cfg, s_steps=s)
        hashes = []
        verdicts = []
        for idx, (prompt, plan) in enumerate(cases):
            run_path = out_dir / f"s_{s}" / f"case_{idx}"
            run = run_stitch(prompt, plan, model, run_cfg, workers=workers, run_dir=run_path)
            hashes.append(fileio.sha256_file(run_path / "final.tnsr"))
            if evaluator is not None:
                verdicts.append(bool(evaluator(run)))
        row = {
            "s": s,
            "cases": len(cases),
            "final_sha256": hashes,
            "accuracy": (sum(verdicts) / len(verdicts)) if verdicts else None,
        }
        rows.append(row)
    lines = ["s\tcases\taccuracy\tfinal_sha256"]
    for row in rows:
        acc = "" if row["accuracy"] is None else f"{row['accuracy']:.2f}"
        lines.append(f"{row['s']}\t{row['cases']}\t{acc}\t{','.join(row['final_sha256'])}")
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "summary.tsv").write_text("\n".join(lines) + "\n")
    return rows
