"""Architecture behaviour: shapes, rotary properties, attention reduction,
residual identities, masking and parameter accounting."""

import numpy as np
import pytest

from sinformer.errors import ConfigError
from sinformer.model import (
    ForwardCache, ModelConfig, ModelParams, count_params, dsa, embed_patches,
    encode, encoder_block, forward_classify, isa, mask_tokens,
    parameter_counts, reconstruct, rope,
)
from sinformer.tensor import Tensor


def tiny_cfg(**kw) -> ModelConfig:
    base = dict(record_len=400, patch_len=50, embed_dim=64, n_blocks=2,
                scales=(1, 2, 4, 8), head_dim=16, ffn_dim=128, n_classes=4)
    base.update(kw)
    return ModelConfig(**base)


def tiny_params(seed=0, dtype=np.float64, **kw) -> ModelParams:
    return ModelParams(tiny_cfg(**kw), seed=seed, dtype=dtype)


# ---------------------------------------------------------------------------
# embedding
# ---------------------------------------------------------------------------

def test_embed_patch_shapes_full_config():
    cfg = ModelConfig()
    params = ModelParams(cfg, seed=0)
    x = np.random.default_rng(0).normal(size=2000).astype(np.float32)
    tokens, patches = embed_patches(x, params)
    assert patches.shape == (20, 100)
    assert tokens.shape == (20, 256)


def test_embed_zero_matrix_gives_zero_tokens():
    params = tiny_params()
    params.embed.data[:] = 0.0
    x = np.random.default_rng(1).normal(size=400)
    tokens, _ = embed_patches(x, params)
    np.testing.assert_array_equal(tokens.data, 0.0)


def test_patch_rows_partition_the_record():
    params = tiny_params()
    x = np.random.default_rng(2).normal(size=400)
    _, patches = embed_patches(x, params)
    np.testing.assert_array_equal(patches.data.reshape(-1), x)


def test_embed_rejects_indivisible_record():
    with pytest.raises(ConfigError):
        ModelConfig(record_len=410, patch_len=100)


# ---------------------------------------------------------------------------
# rotary position embedding
# ---------------------------------------------------------------------------

def test_rope_position_zero_is_identity():
    m = Tensor(np.random.default_rng(3).normal(size=(4, 8)))
    out = rope(m, np.zeros(4))
    np.testing.assert_array_equal(out.data, m.data)


def test_rope_preserves_row_norms():
    m = Tensor(np.random.default_rng(4).normal(size=(6, 16)))
    out = rope(m, np.arange(6) * 3.7)
    np.testing.assert_allclose(np.linalg.norm(out.data, axis=1),
                               np.linalg.norm(m.data, axis=1), atol=1e-10)


def test_rope_relative_position_invariance():
    # <rope(q, p+D), rope(k, p'+D)> == <rope(q, p), rope(k, p')>
    rng = np.random.default_rng(5)
    for _ in range(10):
        q = rng.normal(size=16)
        k = rng.normal(size=16)
        p, p2, delta = rng.uniform(-50, 50, size=3)
        a = rope(Tensor(q[None, :]), np.array([p])).data[0]
        b = rope(Tensor(k[None, :]), np.array([p2])).data[0]
        a2 = rope(Tensor(q[None, :]), np.array([p + delta])).data[0]
        b2 = rope(Tensor(k[None, :]), np.array([p2 + delta])).data[0]
        assert abs(float(a @ b) - float(a2 @ b2)) < 1e-9


def test_rope_odd_width_rejected():
    from sinformer.errors import ShapeError
    with pytest.raises(ShapeError):
        rope(Tensor(np.zeros((2, 5))), np.zeros(2))


# ---------------------------------------------------------------------------
# down-sampling attention
# ---------------------------------------------------------------------------

def test_dsa_shapes_at_scale_five():
    cfg = ModelConfig()  # n=20, d_k=64
    params = ModelParams(cfg, seed=1)
    block = params.blocks[0]
    head = next(h for h in block.heads if h.scale == 5)
    x_in = Tensor(np.random.default_rng(6).normal(size=(20, 256)).astype(np.float32))
    captured = []
    out = dsa(x_in, head, n_tokens=20, capture=captured)
    assert out.shape == (20, 64)
    assert captured[0].shape == (20, 4)  # attention over n/s = 4 groups


def vanilla_rope_attention(x_in: np.ndarray, wq: np.ndarray, wk: np.ndarray,
                           wv: np.ndarray, base: float = 10000.0) -> np.ndarray:
    """Independent single-head RoPE attention written directly in numpy."""
    q, k, v = x_in @ wq, x_in @ wk, x_in @ wv
    n, dk = q.shape
    inv = base ** (-2.0 * np.arange(dk // 2) / dk)
    ang = np.arange(n)[:, None] * inv[None, :]
    cos, sin = np.cos(ang), np.sin(ang)

    def rot(m):
        out = np.empty_like(m)
        out[:, 0::2] = m[:, 0::2] * cos - m[:, 1::2] * sin
        out[:, 1::2] = m[:, 0::2] * sin + m[:, 1::2] * cos
        return out

    logits = rot(q) @ rot(k).T / np.sqrt(dk)
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return (e / e.sum(axis=1, keepdims=True)) @ v


def make_identity_fusion(head) -> None:
    """Scale-1 fusion taps set to the identity (unit tap, zero bias)."""
    head.fuse_query.data[:] = 1.0
    head.fuse_query_bias.data[:] = 0.0
    head.fuse_key.data[:] = 1.0
    head.fuse_key_bias.data[:] = 0.0
    head.fuse_value.data[:] = 1.0
    head.fuse_value_bias.data[:] = 0.0


@pytest.mark.parametrize("seed", range(20))
def test_dsa_scale_one_reduces_to_vanilla_attention(seed):
    params = tiny_params(seed=seed)
    head = next(h for h in params.blocks[0].heads if h.scale == 1)
    make_identity_fusion(head)
    rng = np.random.default_rng(1000 + seed)
    x_in = rng.normal(size=(8, 64))
    ours = dsa(Tensor(x_in), head, n_tokens=8).data
    ref = vanilla_rope_attention(x_in, head.w_query.data, head.w_key.data,
                                 head.w_value.data)
    assert np.max(np.abs(ours - ref)) < 1e-10


def test_dsa_constant_input_gives_equal_output_rows():
    params = tiny_params(seed=3)
    head = next(h for h in params.blocks[0].heads if h.scale == 2)
    x_in = Tensor(np.tile(np.random.default_rng(8).normal(size=64), (8, 1)))
    out = dsa(x_in, head, n_tokens=8).data
    np.testing.assert_allclose(out, np.tile(out[0], (8, 1)), atol=1e-12)


def test_dsa_rejects_non_dividing_scale():
    params = tiny_params(seed=4)
    head = params.blocks[0].heads[2]  # scale 4
    with pytest.raises(ConfigError):
        dsa(Tensor(np.zeros((10, 64))), head, n_tokens=10)


# ---------------------------------------------------------------------------
# inception self-attention
# ---------------------------------------------------------------------------

def test_isa_full_config_concat_width_and_output_shape():
    cfg = ModelConfig()
    assert cfg.concat_dim == 1024  # 16 heads x 64
    params = ModelParams(cfg, seed=5)
    x = Tensor(np.random.default_rng(9).normal(size=(20, 256)).astype(np.float32))
    out = isa(x, params.blocks[0], n_tokens=20)
    assert out.shape == (20, 256)


def test_isa_zero_output_projection_gives_zero():
    params = tiny_params(seed=6)
    params.blocks[0].w_out.data[:] = 0.0
    x = Tensor(np.random.default_rng(10).normal(size=(8, 64)))
    out = isa(x, params.blocks[0], n_tokens=8)
    np.testing.assert_array_equal(out.data, 0.0)


def test_isa_stacked_path_matches_per_head_path():
    from sinformer.tensor import layer_norm
    from sinformer.model import LN_EPS
    params = tiny_params(seed=7)
    block = params.blocks[0]
    x = Tensor(np.random.default_rng(11).normal(size=(8, 64)))
    fast = isa(x, block, n_tokens=8).data
    x_in = layer_norm(x, block.ln1_gain, block.ln1_bias, LN_EPS)
    per_head = np.concatenate([dsa(x_in, h, 8).data for h in block.heads], axis=-1)
    slow = per_head @ block.w_out.data
    np.testing.assert_allclose(fast, slow, atol=1e-12)


def test_isa_permuting_equal_scale_heads_with_w_out_blocks_is_invariant():
    params = tiny_params(seed=8, scales=(2, 4, 2, 4))
    block = params.blocks[0]
    x = Tensor(np.random.default_rng(12).normal(size=(8, 64)))
    base = isa(x, block, n_tokens=8).data.copy()
    # swap the two scale-2 heads (indices 0 and 2) and their w_out row blocks
    block.heads[0], block.heads[2] = block.heads[2], block.heads[0]
    w = block.w_out.data
    d_k = 16
    rows = np.arange(w.shape[0]).reshape(-1, d_k)
    perm = rows[[2, 1, 0, 3]].reshape(-1)
    block.w_out.data = w[perm]
    swapped = isa(x, block, n_tokens=8).data
    assert np.max(np.abs(base - swapped)) < 1e-10


# ---------------------------------------------------------------------------
# encoder blocks and classification
# ---------------------------------------------------------------------------

def zero_sublayer_outputs(params: ModelParams) -> None:
    for b in params.blocks:
        b.w_out.data[:] = 0.0
        b.ffn_w2.data[:] = 0.0
        b.ffn_b2.data[:] = 0.0


def test_encoder_block_residual_identity_with_zero_sublayers():
    params = tiny_params(seed=9)
    zero_sublayer_outputs(params)
    x = Tensor(np.random.default_rng(13).normal(size=(8, 64)))
    out = encoder_block(x, params.blocks[0], n_tokens=8)
    np.testing.assert_array_equal(out.data, x.data)


def test_six_stacked_blocks_preserve_shape():
    cfg = ModelConfig()
    params = ModelParams(cfg, seed=10)
    x = Tensor(np.random.default_rng(14).normal(size=(20, 256)).astype(np.float32))
    out = encode(x, params)
    assert out.shape == (20, 256)


def test_residual_gradient_is_all_ones_through_zeroed_sublayers():
    from sinformer.tensor import Tape, backward, record, sum_all
    params = tiny_params(seed=11)
    zero_sublayer_outputs(params)
    x = Tensor(np.random.default_rng(15).normal(size=(8, 64)), requires_grad=True)
    tape = Tape()
    with record(tape):
        out = encode(x, params)
        loss = sum_all(out)
    backward(loss, tape)
    np.testing.assert_array_equal(x.grad, np.ones((8, 64)))


def test_forward_classify_probabilities():
    params = tiny_params(seed=12, dtype=np.float32)
    x = np.random.default_rng(16).normal(size=(3, 400)).astype(np.float32)
    p, cache = forward_classify(x, params)
    assert p.shape == (3, 4)
    np.testing.assert_allclose(p.data.sum(axis=-1), 1.0, atol=1e-6)
    assert np.all(p.data > 0)
    assert cache.final.shape == (3, 8, 64)
    assert cache.pooled.shape == (3, 64)


def test_forward_classify_uniform_with_zero_head():
    params = tiny_params(seed=13)
    params.w_cls.data[:] = 0.0
    params.b_cls.data[:] = 0.0
    x = np.random.default_rng(17).normal(size=400)
    p, _ = forward_classify(x, params)
    np.testing.assert_allclose(p.data, 0.25, atol=1e-12)


def test_forward_classify_is_stateless():
    params = tiny_params(seed=14)
    rng = np.random.default_rng(18)
    a = rng.normal(size=400)
    b = rng.normal(size=400)
    pa1, _ = forward_classify(a, params)
    pb, _ = forward_classify(b, params)
    pa2, _ = forward_classify(a, params)
    np.testing.assert_array_equal(pa1.data, pa2.data)


def test_forward_deterministic_for_fixed_seed():
    x = np.random.default_rng(19).normal(size=400)
    p1, _ = forward_classify(x, tiny_params(seed=42))
    p2, _ = forward_classify(x, tiny_params(seed=42))
    np.testing.assert_array_equal(p1.data, p2.data)
    a = tiny_params(seed=42)
    b = tiny_params(seed=42)
    for (na, ta), (nb, tb) in zip(a.named_tensors(), b.named_tensors()):
        assert na == nb
        np.testing.assert_array_equal(ta.data, tb.data)


def test_attention_logits_invariant_under_common_position_shift():
    params = tiny_params(seed=15)
    x = np.random.default_rng(20).normal(size=400)
    cap0, cap1 = [], []
    forward_classify(x, params, pos_offset=0.0, capture_block0=cap0)
    forward_classify(x, params, pos_offset=137.25, capture_block0=cap1)
    assert len(cap0) == len(params.cfg.scales)
    for a, b in zip(cap0, cap1):
        assert np.max(np.abs(a.data - b.data)) < 1e-9


# ---------------------------------------------------------------------------
# masking and reconstruction
# ---------------------------------------------------------------------------

def test_mask_tokens_exact_count_and_placeholder_rows():
    params = tiny_params(seed=16, record_len=2000, patch_len=100,
                         scales=(1, 2, 4, 5))
    x = Tensor(np.random.default_rng(21).normal(size=(20, 64)))
    masked, bits = mask_tokens(x, 0.5, params.mask_token, np.random.default_rng(0))
    assert bits.sum() == 10
    np.testing.assert_array_equal(masked.data[bits],
                                  np.tile(params.mask_token.data, (10, 1)))
    np.testing.assert_array_equal(masked.data[~bits], x.data[~bits])


def test_mask_tokens_degenerate_ratio_rejected():
    params = tiny_params(seed=17)
    x = Tensor(np.zeros((8, 64)))
    with pytest.raises(ConfigError):
        mask_tokens(x, 0.01, params.mask_token, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        mask_tokens(x, 0.999, params.mask_token, np.random.default_rng(0))


def test_mask_frequency_is_uniform():
    # each of n=20 indices masked in 50% +/- 2% of 10^4 seeded draws
    rng = np.random.default_rng(123)
    hits = np.zeros(20)
    x = Tensor(np.zeros((20, 4)))
    token = Tensor(np.ones(4))
    draws = 10_000
    for _ in range(draws):
        _, bits = mask_tokens(x, 0.5, token, rng)
        hits += bits
    freq = hits / draws
    assert np.all(np.abs(freq - 0.5) < 0.02)


def test_reconstruct_shapes_and_zero_head():
    params = tiny_params(seed=18, record_len=2000, patch_len=100,
                         scales=(1, 2, 4, 5))
    x = Tensor(np.random.default_rng(22).normal(size=(20, 64)))
    out = reconstruct(x, params)
    assert out.shape == (20, 100)
    params.w_recon.data[:] = 0.0
    np.testing.assert_array_equal(reconstruct(x, params).data, 0.0)


def test_mask_token_never_trains():
    params = tiny_params(seed=19)
    assert all(t is not params.mask_token for t in params.trainable())
    assert not params.mask_token.requires_grad


# ---------------------------------------------------------------------------
# parameter accounting
# ---------------------------------------------------------------------------

def test_count_params_full_config_near_reference_budget():
    total = count_params(ModelConfig())
    assert abs(total - 7_942_000) / 7_942_000 < 0.05


def test_count_params_tiny_hand_ledger():
    cfg = tiny_cfg()
    # hand-summed ledger: d=64, l=50, d_k=16, d_f=128, scales (1,2,4,8), L=2, K=4
    embed = 50 * 64
    per_block = (
        2 * 64                                   # ln1
        + 4 * 3 * 64 * 16                        # q/k/v projections
        + 3 * 16 * (1 + 2 + 4 + 8) + 4 * 3 * 16  # fusion taps + biases
        + 64 * 64                                # concat projection
        + 2 * 64                                 # ln2
        + 64 * 128 + 128 + 128 * 64 + 64         # ffn
    )
    cls_head = 64 * 4 + 4
    recon = 64 * 50
    aux = 50 * 128 + 128 + 128 + 1
    expected = embed + 2 * per_block + cls_head + recon + aux
    assert count_params(cfg) == expected
    # the instantiated model carries exactly these trainables
    assert ModelParams(cfg, seed=0).n_trainable() == expected


def test_embedding_contribution_doubles_with_embed_dim():
    a = parameter_counts(tiny_cfg())
    b = parameter_counts(tiny_cfg(embed_dim=128))
    assert b["embedding"] == 2 * a["embedding"]
