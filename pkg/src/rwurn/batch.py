"""Vectorised Monte Carlo over many independent replicates at once.

Each function advances ``R`` replicates in lockstep (at step ``k`` every
replicate still growing has exactly ``k`` non-root nodes, or ``k + 1``
external nodes for binary trees) and returns the empirical characteristic sums
``F(s) = sum_v w_v exp(i s.X_v)`` at the requested checkpoints.  The law of
each replicate is exactly the law of the single-tree growers in
:mod:`rwurn.trees` plus :mod:`rwurn.brw`; only the order in which random
numbers are consumed differs.
"""

from __future__ import annotations

import numpy as np

from .offsets import OffsetDistribution, PairedOffset, as_points
from .trees import attach_parents, pick_external


def _phase(x: np.ndarray, s: np.ndarray) -> np.ndarray:
    # x: (R, d), s: (S, d) -> (R, S)
    return np.exp(1j * (x @ s.T))


def _grow(arr: np.ndarray, need: int) -> np.ndarray:
    if need <= arr.shape[1]:
        return arr
    cap = arr.shape[1]
    while cap < need:
        cap *= 2
    out = np.zeros((arr.shape[0], cap) + arr.shape[2:], dtype=arr.dtype)
    out[:, : arr.shape[1]] = arr
    return out


def wrrt_cf(replicates: int, checkpoints, rho: float, offset: OffsetDistribution, s,
            rng_tree: np.random.Generator, rng_off: np.random.Generator) -> np.ndarray:
    """``F_n(s)`` for weighted random recursive trees; shape ``(R, len(checkpoints), S)``."""
    checkpoints = sorted(int(c) for c in checkpoints)
    s = as_points(s, offset.dim).reshape(-1, offset.dim)
    R, d, n = replicates, offset.dim, checkpoints[-1]
    out = np.zeros((R, len(checkpoints), s.shape[0]), dtype=complex)
    labels = np.zeros((R, n + 1, d))
    F = np.full((R, s.shape[0]), complex(rho))
    rows = np.arange(R)
    j = 0
    while j < len(checkpoints) and checkpoints[j] == 0:
        out[:, j] = F
        j += 1
    block = 256
    for k0 in range(0, n, block):
        k1 = min(n, k0 + block)
        steps = np.arange(k0, k1)
        parents = attach_parents(rng_tree.random((R, k1 - k0)), steps, rho)
        eta = offset.sample(rng_off, R * (k1 - k0)).reshape(R, k1 - k0, d)
        for i, k in enumerate(steps):
            x = labels[rows, parents[:, i]] + eta[:, i]
            labels[:, k + 1] = x
            F += _phase(x, s)
            while j < len(checkpoints) and checkpoints[j] == k + 1:
                out[:, j] = F
                j += 1
    return out


def yule_cf(replicates: int, times, rho: float, offset: OffsetDistribution, s,
            rng_tree: np.random.Generator, rng_off: np.random.Generator,
            node_cap: int = 10 ** 7) -> np.ndarray:
    """``F_t(s)`` for weighted Yule trees at each time in ``times``."""
    from .errors import NodeCapExceeded

    times = np.sort(np.asarray(times, dtype=float))
    s = as_points(s, offset.dim).reshape(-1, offset.dim)
    R, d = replicates, offset.dim
    out = np.zeros((R, times.shape[0], s.shape[0]), dtype=complex)
    labels = np.zeros((R, 64, d))
    F = np.full((R, s.shape[0]), complex(rho))
    clock = np.zeros(R)
    recorded = np.zeros(R, dtype=np.int64)  # number of checkpoints already stored
    active = np.arange(R)
    k = 0
    while active.size:
        nxt = clock[active] + rng_tree.exponential(size=active.size) / (k + rho)
        # store F for every checkpoint passed before the next birth
        for j in range(times.shape[0]):
            hit = (recorded[active] == j) & (nxt > times[j])
            if hit.any():
                idx = active[hit]
                out[idx, j] = F[idx]
                recorded[idx] = j + 1
        alive = nxt <= times[-1]
        active, nxt = active[alive], nxt[alive]
        if not active.size:
            break
        if k + 2 > node_cap:
            raise NodeCapExceeded(f"Yule tree exceeded the node cap of {node_cap}")
        clock[active] = nxt
        parents = attach_parents(rng_tree.random(active.size), k, rho)
        eta = offset.sample(rng_off, active.size)
        labels = _grow(labels, k + 2)
        x = labels[active, parents] + eta
        labels[active, k + 1] = x
        F[active] += _phase(x, s)
        k += 1
    return out


def binary_yule_external_cf(replicates: int, times, pair: PairedOffset, s,
                            rng_tree: np.random.Generator, rng_off: np.random.Generator,
                            node_cap: int = 10 ** 7) -> np.ndarray:
    """``F^e_t(s)``, the sum over living (external) nodes of a binary Yule tree."""
    from .errors import NodeCapExceeded

    times = np.sort(np.asarray(times, dtype=float))
    s = as_points(s, pair.dim).reshape(-1, pair.dim)
    R, d = replicates, pair.dim
    out = np.zeros((R, times.shape[0], s.shape[0]), dtype=complex)
    ext = np.zeros((R, 64, d))
    F = np.ones((R, s.shape[0]), dtype=complex)
    clock = np.zeros(R)
    recorded = np.zeros(R, dtype=np.int64)
    active = np.arange(R)
    k = 0  # deaths so far; k + 1 living
    while active.size:
        nxt = clock[active] + rng_tree.exponential(size=active.size) / (k + 1)
        for j in range(times.shape[0]):
            hit = (recorded[active] == j) & (nxt > times[j])
            if hit.any():
                idx = active[hit]
                out[idx, j] = F[idx]
                recorded[idx] = j + 1
        alive = nxt <= times[-1]
        active, nxt = active[alive], nxt[alive]
        if not active.size:
            break
        if 2 * k + 3 > node_cap:
            raise NodeCapExceeded(f"binary Yule tree exceeded the node cap of {node_cap}")
        clock[active] = nxt
        pos = pick_external(rng_tree.random(active.size), k + 1)
        left, right = pair.sample(rng_off, active.size)
        ext = _grow(ext, k + 2)
        x = ext[active, pos]
        xl, xr = x + left, x + right
        ext[active, pos] = xl
        ext[active, k + 1] = xr
        F[active] += _phase(xl, s) + _phase(xr, s) - _phase(x, s)
        k += 1
    return out
