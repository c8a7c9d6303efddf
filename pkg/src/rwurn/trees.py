"""Growth of weighted random recursive trees, Yule trees, binary Yule trees and
binary search trees.

Trees are arenas: node ``i`` has ``parent[i] < i`` (birth order) and the root
is node 0 with ``parent[0] == -1``.  Children lists are never stored; anything
that needs them (depths, branch sizes) is computed with vectorised pointer
jumping over the parent array.

Parent choice in the weighted trees is driven by one uniform per new node
through :func:`attach_parents`.  The continuous-time growers spawn a separate
"pick" stream for those uniforms, so the shape of a Yule tree at its ``n``-th
birth is bit-identical to ``grow_wrrt(n, rho, pick_stream)``; likewise for
binary Yule trees and :func:`grow_bst`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, NodeCapExceeded

PLAIN, INTERNAL, EXTERNAL = 0, 1, 2
NO_SIDE, LEFT, RIGHT = 0, 1, 2

KINDS = ("wrrt", "yule", "binary_yule", "bst")
BINARY_KINDS = ("binary_yule", "bst")

DEFAULT_NODE_CAP = 10 ** 7
_CHUNK = 4096


@dataclass
class GrowingTree:
    kind: str
    parent: np.ndarray
    weight: np.ndarray
    birth: np.ndarray
    status: np.ndarray
    side: np.ndarray
    rho: float = 1.0

    @property
    def size(self) -> int:
        return int(self.parent.shape[0])

    @property
    def n(self) -> int:
        """Number of growth steps: non-root nodes, or internal nodes for binary kinds."""
        if self.is_binary:
            return int(np.count_nonzero(self.status == INTERNAL))
        return self.size - 1

    @property
    def is_binary(self) -> bool:
        return self.kind in BINARY_KINDS

    @property
    def total_weight(self) -> float:
        return float(self.weight.sum())

    def mask(self, which: str = "all") -> np.ndarray:
        if which == "all":
            return np.ones(self.size, dtype=bool)
        if which not in ("internal", "external"):
            raise ValueError(f"unknown node selection {which!r}")
        if not self.is_binary:
            raise ValueError(f"'{which}' nodes only exist in binary trees")
        return self.status == (INTERNAL if which == "internal" else EXTERNAL)


@dataclass
class StoppingRecord:
    """``tau[n]``: first time the total weight reaches ``n + rho`` (or the n-th death)."""

    tau: list = field(default_factory=list)


# ----------------------------------------------------------------------------
# parent selection shared by trees and urns


def attach_parents(u, k, rho: float) -> np.ndarray:
    """Parent index for a node joining a weighted tree with ``k`` non-root nodes.

    ``u`` is uniform on [0, 1).  The root (weight ``rho``) wins when
    ``u (k + rho) < rho``; otherwise node ``m`` wins where ``rho + m - 1 <= x <
    rho + m``.  The comparisons, not the floor, are authoritative, so the
    result is exactly consistent with an inverse-CDF search over the running
    weights ``rho, rho + 1, ...``.
    """
    u = np.asarray(u, dtype=float)
    k = np.broadcast_to(np.asarray(k, dtype=np.int64), u.shape)
    x = u * (k + rho)
    m = np.floor(x - rho).astype(np.int64) + 1
    m = np.clip(m, 1, np.maximum(k, 1))
    m = m + ((m < k) & (rho + m <= x))
    m = m - ((m > 1) & (rho + (m - 1) > x))
    return np.where(x < rho, 0, m)


def attach_parent(u: float, k: int, rho: float) -> int:
    return int(attach_parents(np.array([u]), np.array([k]), rho)[0])


def pick_external(u, count) -> np.ndarray:
    """Uniform position in a list of ``count`` external nodes."""
    count = np.asarray(count)
    return np.minimum(np.floor(np.asarray(u) * count).astype(np.int64), count - 1)


# ----------------------------------------------------------------------------
# growers


def _plain_tree(kind, parent, birth, rho) -> GrowingTree:
    size = parent.shape[0]
    weight = np.ones(size)
    weight[0] = rho
    return GrowingTree(kind, parent, weight, birth,
                       np.zeros(size, dtype=np.int8), np.zeros(size, dtype=np.int8), float(rho))


def _check_rho(rho):
    if not rho > 0:
        raise ConfigError("root weight rho must be positive")


def grow_wrrt(n: int, rho: float, rng: np.random.Generator) -> GrowingTree:
    """Weighted random recursive tree with ``n + 1`` nodes."""
    _check_rho(rho)
    if n < 0:
        raise ConfigError("n must be non-negative")
    u = rng.random(n)
    parent = np.empty(n + 1, dtype=np.int64)
    parent[0] = -1
    parent[1:] = attach_parents(u, np.arange(n), rho)
    return _plain_tree("wrrt", parent, np.arange(n + 1, dtype=float), rho)


def grow_yule(rho: float, rng: np.random.Generator, until_time: Optional[float] = None,
              until_size: Optional[int] = None, node_cap: int = DEFAULT_NODE_CAP):
    """Weighted Yule tree grown until time ``until_time`` or ``until_size`` births.

    The holding time with total weight ``k + rho`` is Exponential(k + rho) and
    the parent is chosen proportionally to weight.  Returns the tree and the
    :class:`StoppingRecord` of every total weight reached.
    """
    _check_rho(rho)
    if (until_time is None) == (until_size is None):
        raise ConfigError("give exactly one of until_time / until_size")
    if until_size is not None and until_size + 1 > node_cap:
        raise NodeCapExceeded(f"{until_size + 1} nodes requested, cap is {node_cap}")
    time_rng, pick_rng = rng.spawn(2)
    parents = [np.array([-1], dtype=np.int64)]
    births = [np.zeros(1)]
    k, t = 0, 0.0
    while True:
        c = _CHUNK if until_size is None else min(_CHUNK, until_size - k)
        if c <= 0:
            break
        steps = np.arange(k, k + c)
        times = np.cumsum(np.concatenate(([t], time_rng.exponential(size=c) / (steps + rho))))[1:]
        u = pick_rng.random(c)
        if until_time is not None:
            keep = int(np.searchsorted(times, until_time, side="right"))
        else:
            keep = c
        if k + keep + 1 > node_cap:
            raise NodeCapExceeded(f"Yule tree exceeded the node cap of {node_cap}")
        parents.append(attach_parents(u[:keep], steps[:keep], rho))
        births.append(times[:keep])
        k += keep
        if keep < c or until_size is not None and k >= until_size:
            break
        t = float(times[-1])
    parent = np.concatenate(parents)
    birth = np.concatenate(births)
    tree = _plain_tree("yule", parent, birth, rho)
    return tree, StoppingRecord(birth.tolist())


def grow_yule_merged(t: float, rho: int, rng: np.random.Generator,
                     node_cap: int = DEFAULT_NODE_CAP) -> GrowingTree:
    """Weighted Yule tree for integer ``rho`` as ``rho`` unit trees with merged roots."""
    if int(rho) != rho or rho < 1:
        raise ConfigError("the merged-roots construction needs an integer rho >= 1")
    parts = [grow_yule(1.0, sub, until_time=t, node_cap=node_cap)[0] for sub in rng.spawn(int(rho))]
    births, parents = [], []
    offset = 0
    for p in parts:
        # local indices 1.. shift by offset; root stays 0
        par = p.parent[1:].copy()
        par[par > 0] += offset
        births.append(p.birth[1:])
        parents.append(par)
        offset += p.size - 1
    birth = np.concatenate(births) if births else np.zeros(0)
    parent_old = np.concatenate(parents) if parents else np.zeros(0, dtype=np.int64)
    order = np.argsort(birth, kind="stable")
    new_index = np.empty(order.shape[0] + 1, dtype=np.int64)
    new_index[0] = 0
    new_index[order + 1] = np.arange(1, order.shape[0] + 1)
    parent = np.empty(order.shape[0] + 1, dtype=np.int64)
    parent[0] = -1
    parent[1:] = new_index[parent_old[order]]
    return _plain_tree("yule", parent, np.concatenate(([0.0], birth[order])), float(rho))


def _grow_binary(kind, rng_times, rng_pick, until_time, until_deaths, node_cap):
    if (until_time is None) == (until_deaths is None):
        raise ConfigError("give exactly one of until_time / until_deaths")
    if until_deaths is not None and 2 * until_deaths + 1 > node_cap:
        raise NodeCapExceeded(f"{2 * until_deaths + 1} nodes requested, cap is {node_cap}")
    parent = [-1]
    birth = [0.0]
    ext = [0]
    deaths = [0.0]
    k, t = 0, 0.0
    while until_deaths is None or k < until_deaths:
        c = _CHUNK if until_deaths is None else min(_CHUNK, until_deaths - k)
        u = rng_pick.random(c)
        if rng_times is not None:
            counts = np.arange(k + 1, k + c + 1)
            times = np.cumsum(np.concatenate(([t], rng_times.exponential(size=c) / counts)))[1:]
            keep = int(np.searchsorted(times, until_time, side="right")) if until_time is not None else c
        else:
            times = np.arange(k + 1, k + c + 1, dtype=float)
            keep = c
        if 2 * (k + keep) + 1 > node_cap:
            raise NodeCapExceeded(f"binary tree exceeded the node cap of {node_cap}")
        js = pick_external(u[:keep], np.arange(k + 1, k + keep + 1))
        for i in range(keep):
            j = int(js[i])
            v = ext[j]
            left = len(parent)
            parent.append(v)
            parent.append(v)
            birth.append(float(times[i]))
            birth.append(float(times[i]))
            ext[j] = left
            ext.append(left + 1)
        deaths.extend(times[:keep].tolist())
        k += keep
        if keep < c:
            break
        t = float(times[-1])
    size = len(parent)
    par = np.asarray(parent, dtype=np.int64)
    status = np.full(size, INTERNAL, dtype=np.int8)
    status[np.asarray(ext, dtype=np.int64)] = EXTERNAL
    side = np.zeros(size, dtype=np.int8)
    side[1::2] = LEFT
    side[2::2] = RIGHT
    tree = GrowingTree(kind, par, np.ones(size), np.asarray(birth), status, side, 1.0)
    return tree, StoppingRecord(deaths)


def grow_binary_yule(rng: np.random.Generator, until_time: Optional[float] = None,
                     until_deaths: Optional[int] = None, node_cap: int = DEFAULT_NODE_CAP):
    """Binary Yule tree: living (external) nodes die at rate 1 leaving a left and
    a right child.  Returns the tree and the record of death times."""
    time_rng, pick_rng = rng.spawn(2)
    return _grow_binary("binary_yule", time_rng, pick_rng, until_time, until_deaths, node_cap)


def grow_bst(n: int, rng: np.random.Generator) -> GrowingTree:
    """Random binary search tree with ``n`` internal and ``n + 1`` external nodes."""
    if n < 0:
        raise ConfigError("n must be non-negative")
    return _grow_binary("bst", None, rng, None, n, max(DEFAULT_NODE_CAP, 2 * n + 1))[0]


# ----------------------------------------------------------------------------
# statistics on trees


def depths(tree: GrowingTree) -> np.ndarray:
    """Graph distance from the root, by pointer doubling."""
    anc = tree.parent.copy()
    anc[0] = 0
    acc = np.ones(tree.size, dtype=np.int64)
    acc[0] = 0
    while np.any(anc):
        acc = acc + acc[anc]
        anc = anc[anc]
    return acc


def root_branches(tree: GrowingTree) -> np.ndarray:
    """For every node, the daughter of the root whose subtree contains it (root maps to 0)."""
    top = np.where(tree.parent <= 0, np.arange(tree.size), tree.parent)
    top[0] = 0
    while True:
        nxt = top[top]
        if np.array_equal(nxt, top):
            return top
        top = nxt


@dataclass
class BranchFractions:
    daughters: np.ndarray
    fractions: np.ndarray


def branch_fractions(tree: GrowingTree) -> BranchFractions:
    """Fraction of the ``n`` non-root nodes lying in each root daughter's subtree,
    daughters listed in order of appearance."""
    if tree.is_binary:
        raise ValueError("branch fractions are defined for recursive (non-binary) trees")
    n = tree.size - 1
    if n < 1:
        raise ValueError("tree has no branches")
    top = root_branches(tree)
    counts = np.bincount(top[1:], minlength=tree.size)
    daughters = np.flatnonzero(tree.parent == 0)
    return BranchFractions(daughters, counts[daughters] / n)


def sample_gem(rho: float, k: int, rng: np.random.Generator) -> np.ndarray:
    """First ``k`` stick-breaking weights ``V_j = W_j prod_{i<j}(1 - W_i)``, ``W ~ Beta(1, rho)``."""
    _check_rho(rho)
    if k < 1:
        raise ConfigError("k must be at least 1")
    w = rng.beta(1.0, rho, size=k)
    remaining = np.cumprod(np.concatenate(([1.0], 1.0 - w[:-1])))
    return w * remaining


def yule_total_weight(t: float, rho: float, size: int, rng: np.random.Generator,
                      exact_births: int = 1000) -> np.ndarray:
    """Total weight of ``size`` independent weighted Yule trees at time ``t``.

    The first ``exact_births`` births are simulated event by event; a tree still
    alive at that point has total weight ``r = n0 + rho`` and from then on its
    number of further births within the remaining time ``d`` is negative
    binomial with parameters ``(r, exp(-d))`` (a pure birth process of
    rate ``k + r``).  The result is exact, not an approximation.
    """
    _check_rho(rho)
    time = np.zeros(size)
    births = np.zeros(size, dtype=np.int64)
    alive = np.ones(size, dtype=bool)
    for k in range(exact_births):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        time[idx] += rng.exponential(size=idx.size) / (k + rho)
        done = time[idx] > t
        births[idx[~done]] += 1
        alive[idx[done]] = False
    idx = np.flatnonzero(alive)
    if idx.size:
        r = births[idx] + rho
        births[idx] += rng.negative_binomial(r, np.exp(-(t - time[idx])))
    return births + rho


def stopping_times(n: int, rho: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` independent draws of ``tau_n`` for the weighted Yule tree."""
    _check_rho(rho)
    out = np.zeros(size)
    for start in range(0, n, _CHUNK):
        k = np.arange(start, min(n, start + _CHUNK))
        out += (rng.exponential(size=(size, k.size)) / (k + rho)).sum(axis=1)
    return out


# ----------------------------------------------------------------------------
# JSON lines


_STATUS_NAMES = {PLAIN: "plain", INTERNAL: "internal", EXTERNAL: "external"}
_SIDE_NAMES = {NO_SIDE: None, LEFT: "left", RIGHT: "right"}


def write_tree_jsonl(tree: GrowingTree, fh, labels: Optional[np.ndarray] = None):
    dim = None if labels is None else int(labels.shape[1])
    fh.write(json.dumps({"meta": {"kind": tree.kind, "rho": tree.rho, "dim": dim}}) + "\n")
    for i in range(tree.size):
        rec = {"idx": i,
               "parent": None if i == 0 else int(tree.parent[i]),
               "birth": float(tree.birth[i]),
               "status": _STATUS_NAMES[int(tree.status[i])],
               "side": _SIDE_NAMES[int(tree.side[i])],
               "w": float(tree.weight[i])}
        if labels is not None:
            rec["x"] = labels[i].tolist()
        fh.write(json.dumps(rec) + "\n")


def read_tree_jsonl(fh):
    """Inverse of :func:`write_tree_jsonl`; returns ``(tree, labels or None)``."""
    meta = {}
    rows = []
    for line in fh:
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        if "meta" in rec:
            meta = rec["meta"]
            continue
        rows.append(rec)
    if not rows:
        raise ConfigError("tree file has no nodes")
    rows.sort(key=lambda r: r["idx"])
    if [r["idx"] for r in rows] != list(range(len(rows))):
        raise ConfigError("node indices must be 0..N-1")
    status_codes = {v: k for k, v in _STATUS_NAMES.items()}
    side_codes = {v: k for k, v in _SIDE_NAMES.items()}
    parent = np.array([-1 if r["parent"] is None else r["parent"] for r in rows], dtype=np.int64)
    if parent[0] != -1 or np.any(parent[1:] < 0) or np.any(parent[1:] >= np.arange(1, len(rows))):
        raise ConfigError("parents must precede children and node 0 must be the root")
    status = np.array([status_codes[r.get("status", "plain")] for r in rows], dtype=np.int8)
    side = np.array([side_codes[r.get("side")] for r in rows], dtype=np.int8)
    weight = np.array([r.get("w", 1.0) for r in rows], dtype=float)
    kind = meta.get("kind") or ("bst" if np.any(status != PLAIN) else "wrrt")
    rho = float(meta.get("rho", weight[0]))
    tree = GrowingTree(kind, parent, weight, np.array([r.get("birth", i) for i, r in enumerate(rows)], float),
                       status, side, rho)
    labels = None
    if "x" in rows[0]:
        labels = np.array([r["x"] for r in rows], dtype=float).reshape(len(rows), -1)
    return tree, labels


def expected_rrt_mean_depth(n: int) -> float:
    """Mean depth over all ``n + 1`` nodes of a uniform recursive tree: ``sum_k H_k / (n+1)``."""
    # node k (k >= 1) has expected depth H_k = sum_{j=1}^{k} 1/j
    h = np.cumsum(1.0 / np.arange(1, n + 1))
    return float(h.sum() / (n + 1))
