"""Foreground masks from attention, and ranking of candidate heads.

Mid-generation, the designated head's text-to-visual attention is averaged
over non-padding text tokens, visual tokens are taken in descending weight
order until a fraction eta of the total mass is reached, and the selection
is smoothed by kappa x kappa max-pool dilation.  Head quality is scored
against reference masks by IoU and IoT (intersection over target).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    AllZeroWeights,
    EmptyAfterRestriction,
    EmptyCorpus,
    EmptyTarget,
    NoTextTokens,
)
from .model import AttentionRecord
from .region_binding import TokenPartition

ETA_GRID = (0.75, 0.80, 0.85, 0.90, 0.95, 0.97, 0.99)

HEAD_REPORT_HEADER = "Block\tHead\tη\tIoU\tIoT"


@dataclass
class CutoutMask:
    grid: tuple[int, int]
    selected: np.ndarray  # (h, w) bool
    eta_used: float
    kappa_used: int

    def __post_init__(self):
        self.selected = np.asarray(self.selected, dtype=bool)
        if self.selected.shape != tuple(self.grid):
            raise ValueError("selection shape does not match grid")
        if not self.selected.any():
            raise ValueError("cutout mask selects no tokens")

    @property
    def flat(self) -> np.ndarray:
        return self.selected.ravel()


@dataclass(frozen=True)
class HeadScore:
    block_index: int
    head_index: int
    eta: float
    iou: float
    iot: float


def aggregate_text_attention(record: AttentionRecord, pad_flags) -> np.ndarray:
    """Mean attention each visual token receives from non-padding text rows."""
    pads = np.asarray(pad_flags, dtype=bool)
    weights = np.asarray(record.weights, dtype=np.float64)
    if weights.shape[0] != len(pads):
        raise ValueError(
            f"record has {weights.shape[0]} text rows, pad flags say {len(pads)}"
        )
    real = ~pads
    if not real.any():
        raise NoTextTokens("all text tokens are padding")
    return weights[real].mean(axis=0)


def select_mask(weights, eta: float) -> np.ndarray:
    """Greedy mass selection: shortest descending-order prefix reaching eta.

    Ties break toward the lower token index.  The token that crosses the
    threshold is included, so at least one token is always selected.  The
    total is accumulated in the same (sorted) order as the prefix sums, so
    eta = 1.0 picks exactly the tokens with nonzero weight.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1:
        raise ValueError("weights must be a flat vector")
    if (w < 0).any():
        raise ValueError("weights must be non-negative")
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"eta must be in (0, 1], got {eta}")
    order = np.argsort(-w, kind="stable")
    cumulative = np.cumsum(w[order])
    total = cumulative[-1]
    if total <= 0.0:
        raise AllZeroWeights("attention weights sum to zero")
    count = int(np.searchsorted(cumulative, eta * total, side="left")) + 1
    count = min(count, len(w))
    selected = np.zeros(len(w), dtype=bool)
    selected[order[:count]] = True
    return selected


def smooth_mask(selected, grid: tuple[int, int], kappa: int) -> CutoutMask:
    """Binary dilation with a kappa x kappa window clipped at the borders."""
    if kappa < 1 or kappa % 2 == 0:
        raise ValueError(f"kappa must be odd and >= 1, got {kappa}")
    h, w = grid
    sel = np.asarray(selected, dtype=bool).reshape(h, w)
    pad = kappa // 2
    padded = np.zeros((h + 2 * pad, w + 2 * pad), dtype=bool)
    padded[pad : pad + h, pad : pad + w] = sel
    out = np.zeros((h, w), dtype=bool)
    for dr in range(kappa):
        for dc in range(kappa):
            out |= padded[dr : dr + h, dc : dc + w]
    return CutoutMask(grid=(h, w), selected=out, eta_used=float("nan"), kappa_used=kappa)


def cutout_from_attention(record, pad_flags, grid, eta: float, kappa: int) -> CutoutMask:
    """aggregate -> select -> smooth, with eta recorded on the result."""
    weights = aggregate_text_attention(record, pad_flags)
    selected = select_mask(weights, eta)
    mask = smooth_mask(selected, grid, kappa)
    mask.eta_used = eta
    return mask


def restrict_to_box(mask: CutoutMask, partition: TokenPartition) -> CutoutMask:
    """Intersect the selection with the box's inside tokens."""
    if tuple(mask.grid) != tuple(partition.grid):
        raise ValueError("mask and partition grids differ")
    inside = np.zeros(partition.n_visual, dtype=bool)
    inside[partition.inside_visual] = True
    kept = mask.flat & inside
    if not kept.any():
        raise EmptyAfterRestriction("no selected token lies inside the box")
    return CutoutMask(
        grid=mask.grid,
        selected=kept.reshape(mask.grid),
        eta_used=mask.eta_used,
        kappa_used=mask.kappa_used,
    )


def iou(pred, target) -> float:
    p = np.asarray(pred, dtype=bool).ravel()
    t = np.asarray(target, dtype=bool).ravel()
    if p.shape != t.shape:
        raise ValueError("mask shapes differ")
    union = int((p | t).sum())
    if union == 0:
        return 1.0  # two empty masks are identical
    return int((p & t).sum()) / union


def iot(pred, target) -> float:
    p = np.asarray(pred, dtype=bool).ravel()
    t = np.asarray(target, dtype=bool).ravel()
    if p.shape != t.shape:
        raise ValueError("mask shapes differ")
    denom = int(t.sum())
    if denom == 0:
        raise EmptyTarget("target mask is empty")
    return int((p & t).sum()) / denom


@dataclass
class ProbeSample:
    """One probe image: every head's record, pad flags, reference mask."""

    records: dict[tuple[int, int], AttentionRecord]
    pad_flags: np.ndarray
    reference: np.ndarray  # (h, w) bool


def rank_heads(probes: list[ProbeSample], grid, eta_grid=ETA_GRID, kappa: int = 1) -> list[HeadScore]:
    """Mean IoU/IoT per (block, head, eta) over the probe corpus.

    For each head the eta with the best mean IoU is kept (ties toward the
    smaller eta), and heads are returned sorted by IoU descending.
    """
    if not probes:
        raise EmptyCorpus("no probe samples")
    keys = sorted(probes[0].records.keys())
    sums: dict[tuple[int, int, float], list[float]] = {}
    for probe in probes:
        if np.asarray(probe.reference, dtype=bool).sum() == 0:
            raise EmptyTarget("probe reference mask is empty")
        for (b, h) in keys:
            weights = aggregate_text_attention(probe.records[(b, h)], probe.pad_flags)
            for eta in eta_grid:
                try:
                    selected = select_mask(weights, eta)
                except AllZeroWeights:
                    continue
                mask = smooth_mask(selected, grid, kappa)
                entry = sums.setdefault((b, h, eta), [0.0, 0.0, 0])
                entry[0] += iou(mask.selected, probe.reference)
                entry[1] += iot(mask.selected, probe.reference)
                entry[2] += 1
    best: dict[tuple[int, int], HeadScore] = {}
    for (b, h, eta), (iou_sum, iot_sum, n) in sorted(sums.items()):
        score = HeadScore(b, h, eta, iou_sum / n, iot_sum / n)
        prev = best.get((b, h))
        if prev is None or score.iou > prev.iou:
            best[(b, h)] = score
    ranked = sorted(
        best.values(), key=lambda s: (-s.iou, -s.iot, s.block_index, s.head_index)
    )
    return ranked


def _fmt_eta(eta: float) -> str:
    return f"{eta:g}"


def format_head_report(scores: list[HeadScore]) -> str:
    lines = [HEAD_REPORT_HEADER]
    for s in scores:
        lines.append(
            f"{s.block_index}\t{s.head_index}\t{_fmt_eta(s.eta)}\t{s.iou:.2f}\t{s.iot:.2f}"
        )
    return "\n".join(lines) + "\n"
