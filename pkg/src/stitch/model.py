"""Toy joint transformer with maskable attention and an Euler sampler.

The model processes a visual token matrix (one token per latent grid cell)
and a text token matrix jointly: every block normalizes and time-modulates
both streams, runs multi-head attention over their concatenation, and
applies residual updates.  The joint sequence is indexed visual-first:
tokens [0, n_visual) are grid cells in row-major order, tokens
[n_visual, n_visual + text_len) are text positions.

Weights are drawn once from the config seed and never trained; everything
downstream only relies on the model being a deterministic, smooth,
prompt-dependent velocity field.  All math is float64 so sampler tests can
use tight tolerances.  An adapter interface at the bottom describes the
exact surface the stitching pipeline needs from a real backbone.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .errors import FullyMaskedRow

VOCAB_SIZE = 4096
PAD_ID = 0


@dataclass(frozen=True)
class ModelConfig:
    latent_grid: tuple[int, int] = (16, 16)
    embed_dim: int = 32
    num_blocks: int = 4
    num_heads: int = 4
    text_len_max: int = 8
    steps_default: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.embed_dim % self.num_heads != 0:
            raise ValueError("embed_dim must be divisible by num_heads")
        if min(self.latent_grid) < 2:
            raise ValueError("latent grid needs at least 2 tokens per side")
        if self.text_len_max < 1 or self.num_blocks < 1 or self.num_heads < 1:
            raise ValueError("invalid model dimensions")

    @property
    def n_visual(self) -> int:
        return self.latent_grid[0] * self.latent_grid[1]

    @property
    def n_tokens(self) -> int:
        return self.n_visual + self.text_len_max


@dataclass(frozen=True)
class TokenizedPrompt:
    token_ids: np.ndarray  # (text_len,) int
    pad_flags: np.ndarray  # (text_len,) bool, True = padding

    @property
    def n_real(self) -> int:
        return int((~self.pad_flags).sum())


@dataclass
class LatentState:
    visual_tokens: np.ndarray  # (n_visual, d)
    text_tokens: np.ndarray  # (text_len, d)
    tau: float


@dataclass
class AttentionRecord:
    """Captured post-softmax attention for one (block, head) at one step.

    ``weights`` holds only the text-query -> visual-key block of the full
    row-stochastic matrix (shape text_len x n_visual), so stored rows sum
    to <= 1; the full-row sums are property-tested at the attention level.
    """

    block_index: int
    head_index: int
    step_index: int
    weights: np.ndarray


def tokenize(text: str, max_len: int) -> TokenizedPrompt:
    """Hash words to stable ids (crc32), truncate/pad to max_len."""
    words = text.lower().split()
    if not words:
        raise ValueError("cannot tokenize an empty prompt")
    ids = [1 + zlib.crc32(w.encode("utf-8")) % (VOCAB_SIZE - 1) for w in words[:max_len]]
    n = len(ids)
    token_ids = np.full(max_len, PAD_ID, dtype=np.int64)
    token_ids[:n] = ids
    pad_flags = np.ones(max_len, dtype=bool)
    pad_flags[:n] = False
    return TokenizedPrompt(token_ids=token_ids, pad_flags=pad_flags)


def _validate_mask(mask: np.ndarray, n: int) -> None:
    if mask.shape != (n, n):
        raise ValueError(f"mask shape {mask.shape} does not match {n} tokens")
    finite_ok = (mask == 0) | np.isneginf(mask)
    if not finite_ok.all():
        raise ValueError("mask entries must be 0 or -inf")
    dead = np.isneginf(mask).all(axis=1)
    if dead.any():
        rows = np.flatnonzero(dead)[:4].tolist()
        raise FullyMaskedRow(f"rows {rows} have every key masked")


def masked_attention(queries, keys, values, num_heads: int, mask=None, capture=None):
    """Multi-head scaled dot-product attention with an additive {0, -inf} mask.

    queries/keys/values: (n, d) with d split evenly across heads.  Returns
    (outputs, captured) where captured maps head index -> full (n, n)
    post-softmax weight matrix for the requested heads (int, list of ints,
    or "all"); None when capture is None.
    """
    q = np.asarray(queries, dtype=np.float64)
    k = np.asarray(keys, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    n, d = q.shape
    if d % num_heads != 0:
        raise ValueError("feature dim not divisible by heads")
    dh = d // num_heads
    if mask is not None:
        mask = np.asarray(mask, dtype=np.float64)
        _validate_mask(mask, n)

    if capture is None:
        wanted = frozenset()
    elif capture == "all":
        wanted = frozenset(range(num_heads))
    elif isinstance(capture, int):
        wanted = frozenset([capture])
    else:
        wanted = frozenset(int(h) for h in capture)
    for h in wanted:
        if not 0 <= h < num_heads:
            raise ValueError(f"capture head {h} out of range")

    out = np.empty_like(q)
    captured = {} if wanted else None
    scale = 1.0 / np.sqrt(dh)
    for h in range(num_heads):
        sl = slice(h * dh, (h + 1) * dh)
        logits = (q[:, sl] @ k[:, sl].T) * scale
        if mask is not None:
            logits = logits + mask
        logits -= logits.max(axis=1, keepdims=True)
        weights = np.exp(logits)
        weights /= weights.sum(axis=1, keepdims=True)
        out[:, sl] = weights @ v[:, sl]
        if h in wanted:
            captured[h] = weights
    return out, captured


def _layer_norm(x: np.ndarray) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + 1e-6)


class ToyMmdit:
    """Randomly initialized joint transformer predicting a velocity field."""

    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        d = config.embed_dim
        s = 1.0 / np.sqrt(d)
        self.text_embed = rng.normal(0.0, s, (VOCAB_SIZE, d))
        self.pos_visual = rng.normal(0.0, s, (config.n_visual, d))
        self.pos_text = rng.normal(0.0, s, (config.text_len_max, d))
        self.w_in = rng.normal(0.0, s, (d, d))
        self.blocks = []
        for _ in range(config.num_blocks):
            blk = {}
            for stream in ("v", "t"):
                blk[f"wq_{stream}"] = rng.normal(0.0, s, (d, d))
                blk[f"wk_{stream}"] = rng.normal(0.0, s, (d, d))
                blk[f"wv_{stream}"] = rng.normal(0.0, s, (d, d))
                blk[f"wo_{stream}"] = rng.normal(0.0, 0.5 * s, (d, d))
                blk[f"w1_{stream}"] = rng.normal(0.0, s, (d, 2 * d))
                blk[f"w2_{stream}"] = rng.normal(0.0, 0.5 / np.sqrt(2 * d), (2 * d, d))
                blk[f"mod_scale_{stream}"] = rng.normal(0.0, 0.1, d)
                blk[f"mod_shift_{stream}"] = rng.normal(0.0, 0.1, d)
            self.blocks.append(blk)
        self.w_out = rng.normal(0.0, s, (d, d))

    # -- embedding ---------------------------------------------------------

    def tokenize(self, text: str) -> TokenizedPrompt:
        return tokenize(text, self.config.text_len_max)

    def embed(self, x_latent: np.ndarray, prompt: TokenizedPrompt, tau: float) -> LatentState:
        xv = np.asarray(x_latent, dtype=np.float64) @ self.w_in + self.pos_visual
        xt = self.text_embed[prompt.token_ids] + self.pos_text
        return LatentState(visual_tokens=xv, text_tokens=xt, tau=float(tau))

    # -- transformer -------------------------------------------------------

    def _modulate(self, x, tau, scale, shift):
        return _layer_norm(x) * (1.0 + tau * scale) + tau * shift

    def forward_block(self, state: LatentState, block_index: int, mask=None, capture=None):
        """One block: pre-norm + time modulation, joint masked attention,
        residual output projection, then a per-stream MLP residual."""
        blk = self.blocks[block_index]
        nv = state.visual_tokens.shape[0]
        hv = self._modulate(state.visual_tokens, state.tau, blk["mod_scale_v"], blk["mod_shift_v"])
        ht = self._modulate(state.text_tokens, state.tau, blk["mod_scale_t"], blk["mod_shift_t"])
        q = np.concatenate([hv @ blk["wq_v"], ht @ blk["wq_t"]])
        k = np.concatenate([hv @ blk["wk_v"], ht @ blk["wk_t"]])
        v = np.concatenate([hv @ blk["wv_v"], ht @ blk["wv_t"]])
        attn, captured = masked_attention(q, k, v, self.config.num_heads, mask=mask, capture=capture)
        xv = state.visual_tokens + attn[:nv] @ blk["wo_v"]
        xt = state.text_tokens + attn[nv:] @ blk["wo_t"]
        xv = xv + np.tanh(_layer_norm(xv) @ blk["w1_v"]) @ blk["w2_v"]
        xt = xt + np.tanh(_layer_norm(xt) @ blk["w1_t"]) @ blk["w2_t"]
        return LatentState(visual_tokens=xv, text_tokens=xt, tau=state.tau), captured

    def predict_velocity(self, x_latent, prompt: TokenizedPrompt, tau: float, mask=None, capture_heads=None):
        """Full stack; returns (velocity over visual tokens, records).

        capture_heads: None, "all", or an iterable of (block, head) pairs.
        Records carry only text-query -> visual-key weights.
        """
        per_block = self._capture_by_block(capture_heads)
        state = self.embed(x_latent, prompt, tau)
        nv = self.config.n_visual
        records = []
        for b in range(self.config.num_blocks):
            state, captured = self.forward_block(state, b, mask=mask, capture=per_block.get(b))
            if captured:
                for h, weights in sorted(captured.items()):
                    records.append(
                        AttentionRecord(
                            block_index=b,
                            head_index=h,
                            step_index=-1,
                            weights=weights[nv:, :nv].copy(),
                        )
                    )
        velocity = np.tanh(_layer_norm(state.visual_tokens) @ self.w_out)
        return velocity, records

    def _capture_by_block(self, capture_heads):
        if capture_heads is None:
            return {}
        if capture_heads == "all":
            return {b: "all" for b in range(self.config.num_blocks)}
        per_block: dict[int, list[int]] = {}
        for b, h in capture_heads:
            if not 0 <= b < self.config.num_blocks:
                raise ValueError(f"capture block {b} out of range")
            per_block.setdefault(int(b), []).append(int(h))
        return per_block

    # -- sampling ----------------------------------------------------------

    def sample(
        self,
        x0: np.ndarray,
        prompt: TokenizedPrompt,
        schedule: np.ndarray,
        *,
        begin: int = 0,
        end: int | None = None,
        mask_provider=None,
        capture_step: int | None = None,
        capture_heads=None,
    ):
        """Explicit Euler over schedule knots; returns (trajectory, records).

        Step i advances tau from schedule[i] to schedule[i+1].  The
        trajectory holds the latent before any step plus after every step,
        so trajectory[S - begin] is the state once S updates have run.
        """
        schedule = validate_schedule(schedule)
        if end is None:
            end = len(schedule) - 1
        if not 0 <= begin < end <= len(schedule) - 1:
            raise ValueError(f"bad step range [{begin}, {end})")
        x = np.asarray(x0, dtype=np.float64)
        trajectory = [x]
        records = []
        for step in range(begin, end):
            tau = float(schedule[step])
            dt = float(schedule[step + 1] - schedule[step])
            mask = mask_provider(step) if mask_provider is not None else None
            cap = capture_heads if (capture_step is not None and step == capture_step) else None
            velocity, recs = self.predict_velocity(x, prompt, tau, mask=mask, capture_heads=cap)
            for r in recs:
                r.step_index = step
            records.extend(recs)
            x = x + dt * velocity
            trajectory.append(x)
        return trajectory, records

    def render_preview(self, x_latent: np.ndarray) -> np.ndarray:
        """Collapse channels to a grayscale grid, min-max scaled to 0..255."""
        h, w = self.config.latent_grid
        gray = np.asarray(x_latent, dtype=np.float64).mean(axis=1).reshape(h, w)
        lo, hi = gray.min(), gray.max()
        if hi - lo < 1e-12:
            return np.zeros((h, w), dtype=np.uint8)
        return np.round(255.0 * (gray - lo) / (hi - lo)).astype(np.uint8)


def uniform_schedule(num_steps: int) -> np.ndarray:
    if num_steps < 1:
        raise ValueError("need at least one step")
    return np.linspace(0.0, 1.0, num_steps + 1)


def validate_schedule(schedule) -> np.ndarray:
    sched = np.asarray(schedule, dtype=np.float64)
    if sched.ndim != 1 or len(sched) < 2:
        raise ValueError("schedule must be a 1D array of at least 2 knots")
    if not (np.diff(sched) > 0).all():
        raise ValueError("schedule must be strictly increasing")
    if abs(sched[0]) > 1e-12 or abs(sched[-1] - 1.0) > 1e-12:
        raise ValueError("schedule must run from 0 to 1")
    return sched


def sample_field(field, x0, schedule) -> list[np.ndarray]:
    """Euler integration of dx/dtau = field(x, tau) over the given knots.

    Same update rule as ToyMmdit.sample, exposed so oracle fields (constant,
    linear) can exercise the integrator directly.
    """
    schedule = validate_schedule(schedule)
    x = np.asarray(x0, dtype=np.float64)
    trajectory = [x]
    for i in range(len(schedule) - 1):
        dt = float(schedule[i + 1] - schedule[i])
        x = x + dt * np.asarray(field(x, float(schedule[i])), dtype=np.float64)
        trajectory.append(x)
    return trajectory


# --------------------------------------------------------------------------
# Adapter surface consumed by the stitching pipeline


class ModelAdapter:
    """Contract a backbone must satisfy to be stitched.

    Expose the token partition sizes (grid, n_visual, text_len), accept an
    additive {0, -inf} mask over the joint sequence for a range of steps,
    emit one head's text-to-visual attention at a designated step, and
    accept a replacement visual-token matrix between steps (by virtue of
    run_steps taking x explicitly).  Implementations must be pure given
    (weights, inputs) so branches can run concurrently.
    """

    name = "adapter"

    @property
    def grid(self) -> tuple[int, int]:
        raise NotImplementedError

    @property
    def n_visual(self) -> int:
        h, w = self.grid
        return h * w

    @property
    def text_len(self) -> int:
        raise NotImplementedError

    @property
    def latent_dim(self) -> int:
        raise NotImplementedError

    def pad_flags(self, prompt: str) -> np.ndarray:
        raise NotImplementedError

    def initial_noise(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def schedule(self, num_steps: int) -> np.ndarray:
        return uniform_schedule(num_steps)

    def supports_full_capture(self) -> bool:
        return False

    def run_steps(
        self,
        x: np.ndarray,
        prompt: str,
        schedule: np.ndarray,
        begin: int,
        end: int,
        *,
        mask=None,
        capture_step: int | None = None,
        capture_heads=None,
    ) -> tuple[np.ndarray, list[AttentionRecord]]:
        raise NotImplementedError

    def preview(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class ToyAdapter(ModelAdapter):
    name = "toy"

    def __init__(self, model: ToyMmdit):
        self.model = model

    @property
    def grid(self) -> tuple[int, int]:
        return self.model.config.latent_grid

    @property
    def text_len(self) -> int:
        return self.model.config.text_len_max

    @property
    def latent_dim(self) -> int:
        return self.model.config.embed_dim

    @property
    def num_blocks(self) -> int:
        return self.model.config.num_blocks

    @property
    def num_heads(self) -> int:
        return self.model.config.num_heads

    def pad_flags(self, prompt: str) -> np.ndarray:
        return self.model.tokenize(prompt).pad_flags

    def initial_noise(self, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal((self.n_visual, self.latent_dim))

    def supports_full_capture(self) -> bool:
        return True

    def run_steps(self, x, prompt, schedule, begin, end, *, mask=None, capture_step=None, capture_heads=None):
        tokens = self.model.tokenize(prompt)
        trajectory, records = self.model.sample(
            x,
            tokens,
            schedule,
            begin=begin,
            end=end,
            mask_provider=(lambda step: mask) if mask is not None else None,
            capture_step=capture_step,
            capture_heads=capture_heads,
        )
        return trajectory[-1], records

    def preview(self, x) -> np.ndarray:
        return self.model.render_preview(x)


_TOY_PROFILES = {
    "toy": ModelConfig(latent_grid=(16, 16), embed_dim=32, num_blocks=4, num_heads=4, text_len_max=8),
    "toy-small": ModelConfig(latent_grid=(8, 8), embed_dim=16, num_blocks=2, num_heads=2, text_len_max=8),
}


def build_adapter(name: str, seed: int = 0) -> ModelAdapter:
    try:
        base = _TOY_PROFILES[name]
    except KeyError:
        known = ", ".join(sorted(_TOY_PROFILES))
        raise ValueError(f"unknown model {name!r} (known: {known})") from None
    cfg = ModelConfig(
        latent_grid=base.latent_grid,
        embed_dim=base.embed_dim,
        num_blocks=base.num_blocks,
        num_heads=base.num_heads,
        text_len_max=base.text_len_max,
        steps_default=base.steps_default,
        seed=seed,
    )
    adapter = ToyAdapter(ToyMmdit(cfg))
    adapter_name = name
    adapter.name = adapter_name
    return adapter
