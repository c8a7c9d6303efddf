"""Branching random walks on grown trees.

Labels satisfy ``X_root = 0`` and ``X_child = X_parent + eta_child``.  The
offsets come from their own stream, independent of the one that grew the tree.
Labels are filled one depth level at a time, so every label is computed as a
single addition ``X[parent] + eta``.  The result is bit-identical to a
node-by-node recursion in birth order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measures import AtomicMeasure, normalize
from .offsets import OffsetDistribution, PairedOffset
from .trees import GrowingTree, LEFT, RIGHT, depths


@dataclass
class LabelledTree:
    tree: GrowingTree
    labels: np.ndarray
    offsets: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.labels.shape[1])


def propagate(parent: np.ndarray, eta: np.ndarray, depth: np.ndarray = None) -> np.ndarray:
    if depth is None:
        anc = parent.copy()
        anc[0] = 0
        depth = np.ones(parent.shape[0], dtype=np.int64)
        depth[0] = 0
        while np.any(anc):
            depth = depth + depth[anc]
            anc = anc[anc]
    x = np.zeros_like(eta)
    order = np.argsort(depth, kind="stable")
    bounds = np.searchsorted(depth[order], np.arange(1, int(depth.max(initial=0)) + 2))
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        idx = order[lo:hi]
        x[idx] = x[parent[idx]] + eta[idx]
    return x


def assign_labels(tree: GrowingTree, dist: OffsetDistribution, rng: np.random.Generator) -> LabelledTree:
    """One offset per node in index order; the root's offset is drawn and ignored."""
    eta = dist.sample(rng, tree.size)
    return LabelledTree(tree, propagate(tree.parent, eta, depths(tree)), eta)


def assign_labels_binary(tree: GrowingTree, pair: PairedOffset, rng: np.random.Generator) -> LabelledTree:
    """One ``(eta_L, eta_R)`` draw per internal node, taken in index order."""
    if not tree.is_binary:
        raise ValueError("paired offsets need a binary tree")
    internal = np.flatnonzero(tree.status == 1)
    left_eta, right_eta = pair.sample(rng, internal.shape[0])
    eta = np.zeros((tree.size, pair.dim))
    children = np.flatnonzero(tree.parent >= 0)
    # map each internal node to its draw, then hand the halves to its children
    slot = np.full(tree.size, -1, dtype=np.int64)
    slot[internal] = np.arange(internal.shape[0])
    par_slot = slot[tree.parent[children]]
    is_left = tree.side[children] == LEFT
    eta[children[is_left]] = left_eta[par_slot[is_left]]
    is_right = tree.side[children] == RIGHT
    eta[children[is_right]] = right_eta[par_slot[is_right]]
    return LabelledTree(tree, propagate(tree.parent, eta, depths(tree)), eta)


def empirical_measure(lt: LabelledTree, which: str = "all", normalized: bool = False) -> AtomicMeasure:
    """Atoms at the selected nodes' labels, weighted by node weight (root carries rho)."""
    mask = lt.tree.mask(which)
    m = AtomicMeasure(lt.labels[mask], lt.tree.weight[mask], dim=lt.dim)
    return normalize(m) if normalized else m


def random_node(lt: LabelledTree, rng: np.random.Generator, which: str = "all") -> int:
    """Node drawn with probability proportional to its weight among the selection."""
    idx = np.flatnonzero(lt.tree.mask(which))
    w = lt.tree.weight[idx]
    cum = np.cumsum(w)
    j = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    return int(idx[min(j, idx.shape[0] - 1)])
