"""Training objectives for both stages.

Pretraining combines masked-patch reconstruction with an auxiliary
binary discriminator over reconstructed-vs-original patches; fine-tuning
combines cross-entropy with a patch-reconstruction regularizer. Batch
losses are means over records. All losses are non-negative and
differentiable on the tape.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError
from .model import ModelParams, aux_discriminator
from .tensor import Tensor, add, log_clamped, matmul, mul, scale, sigmoid, sub, sum_all

LOG_FLOOR = 1e-12


def _mask_column(mask_bits: np.ndarray, dtype) -> np.ndarray:
    return mask_bits[..., None].astype(dtype)


def loss_mae(p_hat: Tensor, patches: Tensor, mask_bits: np.ndarray) -> Tensor:
    """Mean over masked tokens of the squared patch reconstruction error.

    Unmasked rows contribute nothing. With fixed-count masking every
    record masks the same number of tokens, so normalizing by the total
    masked count equals the mean of per-record masked means.
    """
    total = int(mask_bits.sum())
    if total == 0:
        raise ContractError("loss_mae needs at least one masked token")
    diff = sub(p_hat, patches)
    masked_sq = mul(mul(diff, diff), Tensor(_mask_column(mask_bits, p_hat.dtype)))
    return scale(sum_all(masked_sq), 1.0 / total)


def loss_aux(p_hat: Tensor, patches: Tensor, mask_bits: np.ndarray,
             params: ModelParams) -> Tensor:
    """Binary cross-entropy of the patch discriminator over all tokens.

    The discriminator scores reconstructed patches for masked tokens
    (label 1) and original patches for unmasked tokens (label 0); log
    arguments are clamped at 1e-12.
    """
    col = Tensor(_mask_column(mask_bits, p_hat.dtype))
    inv = Tensor(1.0 - _mask_column(mask_bits, p_hat.dtype))
    rows = add(mul(p_hat, col), mul(patches, inv))
    score = sigmoid(aux_discriminator(rows, params))
    pos = mul(col, log_clamped(score, LOG_FLOOR))
    neg = mul(inv, log_clamped(sub(Tensor(np.array(1.0, dtype=score.dtype)), score), LOG_FLOOR))
    n_rows = mask_bits.size
    return scale(sum_all(add(pos, neg)), -1.0 / n_rows)


def loss_pretrain(l_mae: Tensor, l_aux: Tensor, gamma: float) -> Tensor:
    """Stage-1 objective: reconstruction plus gamma-weighted discrimination."""
    if gamma <= 0:
        raise ContractError(f"gamma must be positive, got {gamma}")
    return add(l_mae, scale(l_aux, gamma))


def loss_cls(probs: Tensor, labels: np.ndarray | int) -> Tensor:
    """Mean negative log-probability of the true class (clamped at 1e-12).

    probs: (n_classes,) for one record or (batch, n_classes).
    """
    labels = np.atleast_1d(np.asarray(labels))
    k = probs.shape[-1]
    n = probs.shape[0] if probs.ndim == 2 else 1
    if labels.shape[0] != n:
        raise ContractError(f"{labels.shape[0]} labels for {n} probability rows")
    if np.any(labels < 0) or np.any(labels >= k):
        raise ContractError(f"labels outside 0..{k - 1}")
    onehot = np.zeros(probs.shape, dtype=probs.dtype)
    if probs.ndim == 1:
        onehot[labels[0]] = 1.0
    else:
        onehot[np.arange(n), labels] = 1.0
    return scale(sum_all(mul(Tensor(onehot), log_clamped(probs, LOG_FLOOR))), -1.0 / n)


def loss_ssat(final: Tensor, patches: Tensor, w_recon: Tensor) -> Tensor:
    """Normalized squared residual of reconstructing patches from final tokens."""
    resid = sub(matmul(final, w_recon), patches)
    n_tokens, patch_len = patches.shape[-2], patches.shape[-1]
    batch = int(np.prod(patches.shape[:-2])) if patches.ndim > 2 else 1
    return scale(sum_all(mul(resid, resid)), 1.0 / (batch * n_tokens * patch_len))


def loss_task(l_cls: Tensor, l_ssat: Tensor, alpha: float, beta: float) -> Tensor:
    """Stage-2 objective: alpha-weighted cross-entropy plus beta-weighted regularizer."""
    if alpha <= 0 or beta <= 0:
        raise ContractError(f"alpha and beta must be positive, got {alpha}, {beta}")
    return add(scale(l_cls, alpha), scale(l_ssat, beta))
