"""Central-difference verification of reverse-mode gradients.

Run at 64-bit precision only; finite-difference tolerances are not
reachable in float32.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor, backward, record, zero_grads, zero_tape_grads


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor],
               h: float = 1e-5, max_coords_per_param: int | None = None,
               seed: int = 0, corrupt: tuple[int, int] | None = None) -> float:
    """Max relative error between autodiff and central differences.

    ``f`` rebuilds the (deterministic) scalar loss from the current
    parameter values on every call. Coordinates are subsampled per
    parameter when ``max_coords_per_param`` is set, with a fixed seed.
    ``corrupt=(param_idx, flat_idx)`` doubles one autodiff gradient
    entry before comparison, for exercising the failure path.

    Relative error per coordinate: |fd - ad| / max(|fd|, |ad|, 1e-12).
    """
    zero_grads(params)
    tape = Tape()
    with record(tape):
        loss = f()
    backward(loss, tape)
    grads = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    zero_tape_grads(tape)
    zero_grads(params)
    if corrupt is not None:
        pi, fi = corrupt
        grads[pi].flat[fi] *= 2.0

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, g in zip(params, grads):
        n = p.data.size
        if max_coords_per_param is not None and n > max_coords_per_param:
            coords = rng.choice(n, size=max_coords_per_param, replace=False)
        else:
            coords = range(n)
        flat = p.data.reshape(-1)
        for idx in coords:
            orig = flat[idx]
            flat[idx] = orig + h
            up = f().item()
            flat[idx] = orig - h
            down = f().item()
            flat[idx] = orig
            fd = (up - down) / (2.0 * h)
            ad = g.flat[idx]
            err = abs(fd - ad) / max(abs(fd), abs(ad), 1e-12)
            worst = max(worst, err)
    return worst
