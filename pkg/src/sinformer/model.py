"""The SinFormer network.

Patch embedding, a stack of encoder blocks (multi-scale inception
self-attention plus a feed-forward sublayer, both pre-normalized and
residual), mean pooling and a classification head, together with the
masking/reconstruction machinery used by pretraining.

Each inception self-attention (ISA) layer runs several down-sampling
attention (DSA) heads in parallel. A head at scale ``s`` fuses every
``s`` consecutive tokens of its key/value streams into one group
(channel-wise strided convolution), locally fuses the query stream
without down-sampling, rotates both with rotary position embeddings and
attends tokens-to-groups. Key groups carry their center position in
token coordinates so relative offsets stay geometrically meaningful
across scales.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError
from .optim import glorot_uniform, ones_param, zeros_param
from .tensor import (
    Tensor, add, col_slice, concat_last, conv1d_depthwise, gelu, layer_norm,
    matmul, mean_axis, mul, rotate_pairs, scale, softmax_rows, transpose_last,
)

LN_EPS = 1e-5
ROPE_BASE = 10000.0


@dataclass
class ModelConfig:
    """Architecture constants. Defaults follow the full-size reference model."""

    record_len: int = 2000      # samples per record (m)
    patch_len: int = 100        # samples per patch (l)
    embed_dim: int = 256        # token width (d)
    n_blocks: int = 6           # encoder depth
    scales: tuple[int, ...] = (1, 2, 5, 10) * 4   # one DSA head per entry
    head_dim: int = 64          # per-head q/k/v width
    ffn_dim: int = 512          # feed-forward hidden width
    n_classes: int = 8

    @property
    def n_tokens(self) -> int:
        return self.record_len // self.patch_len

    @property
    def n_heads(self) -> int:
        return len(self.scales)

    @property
    def concat_dim(self) -> int:
        return self.n_heads * self.head_dim

    def validate(self) -> None:
        if self.record_len % self.patch_len != 0:
            raise ConfigError(
                f"record_len {self.record_len} not divisible by patch_len {self.patch_len}")
        n = self.n_tokens
        for s in self.scales:
            if s < 1 or n % s != 0:
                raise ConfigError(f"scale {s} does not divide token count {n}")
        if self.head_dim % 2 != 0:
            raise ConfigError(f"head_dim must be even for rotary pairs, got {self.head_dim}")
        if self.n_classes < 2:
            raise ConfigError("at least 2 emitters are required")

    def __post_init__(self):
        self.scales = tuple(int(s) for s in self.scales)
        self.validate()


class DsaParams:
    """Projections and token-fusion kernels of one down-sampling attention head."""

    def __init__(self, rng, d: int, d_k: int, scale_s: int, dtype):
        self.scale = scale_s
        self.w_query = glorot_uniform(rng, (d, d_k), d, d_k, dtype)
        self.w_key = glorot_uniform(rng, (d, d_k), d, d_k, dtype)
        self.w_value = glorot_uniform(rng, (d, d_k), d, d_k, dtype)
        # channel-wise fusion taps over scale_s consecutive tokens
        self.fuse_query = glorot_uniform(rng, (scale_s, d_k), scale_s, scale_s, dtype)
        self.fuse_query_bias = zeros_param((d_k,), dtype)
        self.fuse_key = glorot_uniform(rng, (scale_s, d_k), scale_s, scale_s, dtype)
        self.fuse_key_bias = zeros_param((d_k,), dtype)
        self.fuse_value = glorot_uniform(rng, (scale_s, d_k), scale_s, scale_s, dtype)
        self.fuse_value_bias = zeros_param((d_k,), dtype)

    def tensors(self) -> list[tuple[str, Tensor]]:
        return [("w_query", self.w_query), ("w_key", self.w_key),
                ("w_value", self.w_value),
                ("fuse_query", self.fuse_query), ("fuse_query_bias", self.fuse_query_bias),
                ("fuse_key", self.fuse_key), ("fuse_key_bias", self.fuse_key_bias),
                ("fuse_value", self.fuse_value), ("fuse_value_bias", self.fuse_value_bias)]


class BlockParams:
    """One encoder block: pre-norm ISA sublayer plus pre-norm FFN sublayer."""

    def __init__(self, rng, cfg: ModelConfig, dtype):
        d, d_k, d_f = cfg.embed_dim, cfg.head_dim, cfg.ffn_dim
        self.ln1_gain = ones_param((d,), dtype)
        self.ln1_bias = zeros_param((d,), dtype)
        self.heads = [DsaParams(rng, d, d_k, s, dtype) for s in cfg.scales]
        self.w_out = glorot_uniform(rng, (cfg.concat_dim, d), cfg.concat_dim, d, dtype)
        self.ln2_gain = ones_param((d,), dtype)
        self.ln2_bias = zeros_param((d,), dtype)
        self.ffn_w1 = glorot_uniform(rng, (d, d_f), d, d_f, dtype)
        self.ffn_b1 = zeros_param((d_f,), dtype)
        self.ffn_w2 = glorot_uniform(rng, (d_f, d), d_f, d, dtype)
        self.ffn_b2 = zeros_param((d,), dtype)

    def tensors(self) -> list[tuple[str, Tensor]]:
        out = [("ln1_gain", self.ln1_gain), ("ln1_bias", self.ln1_bias)]
        for i, h in enumerate(self.heads):
            out.extend((f"head{i}.{name}", t) for name, t in h.tensors())
        out.extend([("w_out", self.w_out),
                    ("ln2_gain", self.ln2_gain), ("ln2_bias", self.ln2_bias),
                    ("ffn_w1", self.ffn_w1), ("ffn_b1", self.ffn_b1),
                    ("ffn_w2", self.ffn_w2), ("ffn_b2", self.ffn_b2)])
        return out


class ModelParams:
    """Every learnable tensor plus the frozen placeholder token.

    The placeholder token used for masking is initialized once and never
    appears in ``trainable()``, so no optimizer step can move it.
    """

    def __init__(self, cfg: ModelConfig, seed: int = 0, dtype=np.float32):
        cfg.validate()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        d, l, d_f = cfg.embed_dim, cfg.patch_len, cfg.ffn_dim
        self.embed = glorot_uniform(rng, (l, d), l, d, dtype)
        self.blocks = [BlockParams(rng, cfg, dtype) for _ in range(cfg.n_blocks)]
        self.w_cls = glorot_uniform(rng, (d, cfg.n_classes), d, cfg.n_classes, dtype)
        self.b_cls = zeros_param((cfg.n_classes,), dtype)
        self.w_recon = glorot_uniform(rng, (d, l), d, l, dtype)
        self.mask_token = Tensor(
            rng.uniform(-math.sqrt(3.0 / d), math.sqrt(3.0 / d), size=d).astype(dtype),
            requires_grad=False)
        self.aux_w1 = glorot_uniform(rng, (l, d_f), l, d_f, dtype)
        self.aux_b1 = zeros_param((d_f,), dtype)
        self.aux_w2 = glorot_uniform(rng, (d_f, 1), d_f, 1, dtype)
        self.aux_b2 = zeros_param((1,), dtype)

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        """Fixed declared order; includes the frozen placeholder token."""
        out = [("embed", self.embed)]
        for i, b in enumerate(self.blocks):
            out.extend((f"block{i}.{name}", t) for name, t in b.tensors())
        out.extend([("w_cls", self.w_cls), ("b_cls", self.b_cls),
                    ("w_recon", self.w_recon), ("mask_token", self.mask_token),
                    ("aux_w1", self.aux_w1), ("aux_b1", self.aux_b1),
                    ("aux_w2", self.aux_w2), ("aux_b2", self.aux_b2)])
        return out

    def trainable(self) -> list[Tensor]:
        return [t for _, t in self.named_tensors() if t.requires_grad]

    def n_trainable(self) -> int:
        return sum(t.size for t in self.trainable())

    def astype(self, dtype) -> "ModelParams":
        for _, t in self.named_tensors():
            t.data = t.data.astype(dtype)
        return self

    def copy_values(self) -> list[np.ndarray]:
        return [t.data.copy() for _, t in self.named_tensors()]

    def load_values(self, values: list[np.ndarray]) -> None:
        named = self.named_tensors()
        if len(values) != len(named):
            raise ContractError("parameter value list length mismatch")
        for (_, t), v in zip(named, values):
            if t.data.shape != v.shape:
                raise ContractError(f"parameter shape mismatch: {t.data.shape} vs {v.shape}")
            t.data = v.copy()


@dataclass
class ForwardCache:
    """Intermediate activations kept for the training losses."""

    patches: Tensor
    block_outputs: list[Tensor] = field(default_factory=list)
    final: Tensor | None = None
    pooled: Tensor | None = None
    probs: Tensor | None = None


# ---------------------------------------------------------------------------
# forward pieces
# ---------------------------------------------------------------------------

def embed_patches(x: np.ndarray, params: ModelParams) -> tuple[Tensor, Tensor]:
    """Split records into non-overlapping patches and project them to tokens.

    x: (m,) or (batch, m) normalized records. Returns (tokens, patches);
    concatenating patch rows reproduces the record exactly.
    """
    cfg = params.cfg
    if x.shape[-1] != cfg.record_len:
        raise ConfigError(
            f"record length {x.shape[-1]} does not match config record_len {cfg.record_len}")
    patches = Tensor(x.reshape(x.shape[:-1] + (cfg.n_tokens, cfg.patch_len)))
    return matmul(patches, params.embed), patches


def rope_angles(positions: np.ndarray, width: int, base: float = ROPE_BASE) -> np.ndarray:
    """Angle matrix (rows, width/2): position times a geometric frequency ladder."""
    j = np.arange(width // 2, dtype=np.float64)
    inv_freq = base ** (-2.0 * j / width)
    return np.asarray(positions, dtype=np.float64)[:, None] * inv_freq[None, :]


def rope(m: Tensor, positions: np.ndarray, base: float = ROPE_BASE) -> Tensor:
    """Rotate interleaved coordinate pairs of each row by its position angle."""
    return rotate_pairs(m, rope_angles(positions, m.shape[-1], base))


def dsa_core(q: Tensor, k: Tensor, v: Tensor, head: DsaParams, n_tokens: int,
             pos_offset: float = 0.0, capture: list | None = None) -> Tensor:
    """Attention between locally-fused queries and down-sampled key/value groups.

    q, k, v: (..., n, d_k) projected streams. Output (..., n, d_k).
    """
    s = head.scale
    d_k = q.shape[-1]
    if n_tokens % s != 0:
        raise ConfigError(f"scale {s} does not divide token count {n_tokens}")
    k_c = conv1d_depthwise(k, head.fuse_key, head.fuse_key_bias, stride=s)
    v_c = conv1d_depthwise(v, head.fuse_value, head.fuse_value_bias, stride=s)
    pad_left = (s - 1) // 2
    q_c = conv1d_depthwise(q, head.fuse_query, head.fuse_query_bias, stride=1,
                           pad_left=pad_left, pad_right=s - 1 - pad_left)
    pos_q = np.arange(n_tokens, dtype=np.float64) + pos_offset
    pos_k = np.arange(n_tokens // s, dtype=np.float64) * s + (s - 1) / 2.0 + pos_offset
    q_rot = rotate_pairs(q_c, rope_angles(pos_q, d_k))
    k_rot = rotate_pairs(k_c, rope_angles(pos_k, d_k))
    logits = scale(matmul(q_rot, transpose_last(k_rot)), 1.0 / math.sqrt(d_k))
    if capture is not None:
        capture.append(logits)
    return matmul(softmax_rows(logits), v_c)


def dsa(x_in: Tensor, head: DsaParams, n_tokens: int,
        pos_offset: float = 0.0, capture: list | None = None) -> Tensor:
    """One full DSA head from the normalized token sequence."""
    return dsa_core(matmul(x_in, head.w_query), matmul(x_in, head.w_key),
                    matmul(x_in, head.w_value), head, n_tokens, pos_offset, capture)


def isa(x: Tensor, block: BlockParams, n_tokens: int,
        pos_offset: float = 0.0, capture: list | None = None) -> Tensor:
    """All DSA heads on the normalized input, concatenated and projected.

    The per-head query/key/value projections are evaluated as one stacked
    matmul per stream; slices of the result feed the individual heads.
    """
    x_in = layer_norm(x, block.ln1_gain, block.ln1_bias, LN_EPS)
    q_all = matmul(x_in, concat_last([h.w_query for h in block.heads]))
    k_all = matmul(x_in, concat_last([h.w_key for h in block.heads]))
    v_all = matmul(x_in, concat_last([h.w_value for h in block.heads]))
    outs = []
    for i, head in enumerate(block.heads):
        d_k = head.w_query.shape[-1]
        lo, hi = i * d_k, (i + 1) * d_k
        outs.append(dsa_core(col_slice(q_all, lo, hi), col_slice(k_all, lo, hi),
                             col_slice(v_all, lo, hi), head, n_tokens,
                             pos_offset, capture))
    return matmul(concat_last(outs), block.w_out)


def ffn(x: Tensor, block: BlockParams) -> Tensor:
    """Pre-normalized two-layer feed-forward sublayer with exact-erf GELU."""
    h = layer_norm(x, block.ln2_gain, block.ln2_bias, LN_EPS)
    h = gelu(add(matmul(h, block.ffn_w1), block.ffn_b1))
    return add(matmul(h, block.ffn_w2), block.ffn_b2)


def encoder_block(x: Tensor, block: BlockParams, n_tokens: int,
                  pos_offset: float = 0.0, capture: list | None = None) -> Tensor:
    x1 = add(isa(x, block, n_tokens, pos_offset, capture), x)
    return add(ffn(x1, block), x1)


def encode(x: Tensor, params: ModelParams, pos_offset: float = 0.0,
           capture_block0: list | None = None,
           cache: ForwardCache | None = None) -> Tensor:
    n = params.cfg.n_tokens
    for i, block in enumerate(params.blocks):
        x = encoder_block(x, block, n, pos_offset,
                          capture_block0 if i == 0 else None)
        if cache is not None:
            cache.block_outputs.append(x)
    return x


def forward_classify(x: np.ndarray, params: ModelParams,
                     pos_offset: float = 0.0,
                     capture_block0: list | None = None) -> tuple[Tensor, ForwardCache]:
    """Class probabilities for normalized records x of shape (m,) or (batch, m).

    Pure given (params, input): no internal state survives the call.
    """
    tokens, patches = embed_patches(x, params)
    cache = ForwardCache(patches=patches)
    final = encode(tokens, params, pos_offset, capture_block0, cache)
    cache.final = final
    cache.pooled = mean_axis(final, axis=-2)
    logits = add(matmul(cache.pooled, params.w_cls), params.b_cls)
    cache.probs = softmax_rows(logits)
    return cache.probs, cache


def mask_tokens(x: Tensor, mask_ratio: float, mask_token: Tensor,
                rng: np.random.Generator) -> tuple[Tensor, np.ndarray]:
    """Replace a fixed-count random subset of token rows with the placeholder.

    Exactly round(mask_ratio * n) distinct rows per record are drawn
    without replacement. Returns the masked sequence and the boolean
    mask (True = replaced), which the losses consume.
    """
    n = x.shape[-2]
    count = round(mask_ratio * n)
    if count <= 0 or count >= n:
        raise ConfigError(
            f"mask_ratio {mask_ratio} masks {count} of {n} tokens (degenerate)")
    lead = x.shape[:-2]
    bits = np.zeros(lead + (n,), dtype=bool)
    flat = bits.reshape(-1, n)
    for row in flat:
        row[rng.choice(n, size=count, replace=False)] = True
    col = bits[..., None].astype(x.dtype)
    keep = Tensor(1.0 - col)
    fill = mul(Tensor(col), mask_token)   # no gradient path: placeholder is frozen
    x_masked = add(mul(x, keep), fill)
    return x_masked, bits


def reconstruct(x_masked: Tensor, params: ModelParams) -> Tensor:
    """Full encoder over the masked sequence, mapped back to patch space."""
    return matmul(encode(x_masked, params), params.w_recon)


def aux_discriminator(rows: Tensor, params: ModelParams) -> Tensor:
    """Two-layer scorer of patch rows (logit output, sigmoid applied by the loss)."""
    h = gelu(add(matmul(rows, params.aux_w1), params.aux_b1))
    return add(matmul(h, params.aux_w2), params.aux_b2)


# ---------------------------------------------------------------------------
# parameter accounting
# ---------------------------------------------------------------------------

def parameter_counts(cfg: ModelConfig) -> dict[str, int]:
    """Trainable scalars per component (frozen placeholder token excluded)."""
    d, l, d_k, d_f = cfg.embed_dim, cfg.patch_len, cfg.head_dim, cfg.ffn_dim
    per_block = 2 * d                                    # first layer norm
    per_block += 3 * d * d_k * cfg.n_heads               # q/k/v projections
    per_block += sum(3 * (s * d_k + d_k) for s in cfg.scales)   # fusion taps + biases
    per_block += cfg.concat_dim * d                      # concat projection
    per_block += 2 * d                                   # second layer norm
    per_block += d * d_f + d_f + d_f * d + d             # feed-forward
    return {
        "embedding": l * d,
        "encoder_blocks": cfg.n_blocks * per_block,
        "classifier_head": d * cfg.n_classes + cfg.n_classes,
        "reconstruction_head": d * l,
        "aux_head": l * d_f + d_f + d_f + 1,
    }


def count_params(cfg: ModelConfig) -> int:
    """Exact count of trainable scalars (all heads included)."""
    return sum(parameter_counts(cfg).values())
