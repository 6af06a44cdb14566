"""Attention constraints confining a sub-prompt to its bounding box.

Given a box on the planning canvas and the token grid of the model, the
partition splits the joint sequence (visual tokens first, then text) into
inside-box visual tokens, outside-box visual tokens, and the sub-prompt's
non-padding text tokens.  The mask then blocks exactly three families of
entries with -inf:

    inside visual  -> outside visual
    outside visual -> sub-prompt text
    sub-prompt text -> outside visual

Everything else, including the diagonal, text-to-text, and pads, stays 0.
The same mask is meant to be applied in every layer and head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBox
from .layout import BoundingBox


@dataclass(frozen=True)
class TokenPartition:
    inside_visual: np.ndarray  # sorted joint indices, all < n_visual
    outside_visual: np.ndarray
    subprompt_text: np.ndarray  # sorted joint indices in [n_visual, n_tokens)
    grid: tuple[int, int]
    text_len: int

    @property
    def n_visual(self) -> int:
        return self.grid[0] * self.grid[1]

    @property
    def n_tokens(self) -> int:
        return self.n_visual + self.text_len


def _scale_span(lo: int, hi: int, tokens: int, canvas: int) -> tuple[int, int]:
    # floor-proportional min edge, inclusive max edge, both clamped
    t_lo = (lo * tokens) // canvas
    t_hi = ((hi + 1) * tokens) // canvas - 1
    t_lo = max(0, min(t_lo, tokens - 1))
    t_hi = max(0, min(t_hi, tokens - 1))
    return t_lo, t_hi


def partition_tokens(
    grid: tuple[int, int], box: BoundingBox, canvas: int, text_pad_flags
) -> TokenPartition:
    """Scale a canvas box to token coordinates and split the sequence.

    A token is inside iff its (row, col) lies in the scaled rectangle.
    Padding text positions are excluded from the sub-prompt set and stay
    unmasked.  Raises DegenerateBox when the scaled rectangle is empty.
    """
    h, w = grid
    if h < 1 or w < 1 or canvas < 1:
        raise ValueError("grid and canvas dims must be >= 1")
    box.validate_canvas(canvas)
    col_lo, col_hi = _scale_span(box.x_min, box.x_max, w, canvas)
    row_lo, row_hi = _scale_span(box.y_min, box.y_max, h, canvas)
    if col_lo > col_hi or row_lo > row_hi:
        raise DegenerateBox(f"box {box} scales to an empty token rectangle on {grid}")
    rows = np.arange(h)[:, None]
    cols = np.arange(w)[None, :]
    inside_grid = (rows >= row_lo) & (rows <= row_hi) & (cols >= col_lo) & (cols <= col_hi)
    flat = inside_grid.ravel()
    inside = np.flatnonzero(flat)
    outside = np.flatnonzero(~flat)
    pads = np.asarray(text_pad_flags, dtype=bool)
    text = h * w + np.flatnonzero(~pads)
    return TokenPartition(
        inside_visual=inside,
        outside_visual=outside,
        subprompt_text=text,
        grid=(h, w),
        text_len=len(pads),
    )


def build_rb_mask(partition: TokenPartition) -> np.ndarray:
    """Additive (n, n) mask with exactly the three constraint families."""
    n = partition.n_tokens
    mask = np.zeros((n, n), dtype=np.float64)
    inside = partition.inside_visual
    outside = partition.outside_visual
    text = partition.subprompt_text
    if outside.size:
        if inside.size:
            mask[np.ix_(inside, outside)] = -np.inf
        if text.size:
            mask[np.ix_(outside, text)] = -np.inf
            mask[np.ix_(text, outside)] = -np.inf
    return mask


def masked_entry_count(partition: TokenPartition) -> int:
    n_in = partition.inside_visual.size
    n_out = partition.outside_visual.size
    n_text = partition.subprompt_text.size
    return n_in * n_out + 2 * n_out * n_text


def mask_to_flags(mask: np.ndarray) -> np.ndarray:
    """0/1 flag matrix for the tensor dump format, 1 = masked."""
    return np.isneginf(mask).astype(np.float32)


def flags_to_mask(flags: np.ndarray) -> np.ndarray:
    mask = np.zeros(flags.shape, dtype=np.float64)
    mask[np.asarray(flags) >= 0.5] = -np.inf
    return mask
