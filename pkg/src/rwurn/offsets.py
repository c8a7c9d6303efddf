"""Offset (step) laws for the branching random walk.

Every built-in law knows its characteristic function in closed form together
with the mean vector and the second-moment matrix ``E[eta eta^T]``.  Laws that
can only be sampled are accepted for simulation, but any oracle operation on
them raises :class:`UnsupportedOperation`.

Characteristic functions are vectorised: ``s`` may be a single point or an
array of points with trailing axis ``d`` (for ``d == 1`` a bare scalar or a
1-d array of scalars is also accepted).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, UnsupportedOperation


def as_points(s, dim: int) -> np.ndarray:
    """Coerce ``s`` to an array of points of shape ``(..., dim)``."""
    arr = np.asarray(s, dtype=float)
    if dim == 1 and (arr.ndim == 0 or arr.shape[-1] != 1):
        arr = arr[..., None]
    if arr.shape[-1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {arr.shape}")
    return arr


def _scalar_or_array(out: np.ndarray, s, dim: int):
    arr = np.asarray(s, dtype=float)
    if arr.ndim == 0 or (arr.ndim == 1 and (dim > 1 or arr.shape == (1,))):
        return complex(out.reshape(-1)[0])
    return out


def _vec(x, dim: Optional[int] = None) -> np.ndarray:
    v = np.atleast_1d(np.asarray(x, dtype=float)).reshape(-1)
    if dim is not None and v.shape[0] != dim:
        raise ConfigError(f"expected a vector of length {dim}, got {v.shape[0]}")
    return v


class OffsetDistribution:
    """Base class. Subclasses set ``dim`` and implement ``_cf``/``_draw``."""

    dim: int = 1
    has_cf = True
    exploratory = False

    def cf(self, s):
        if not self.has_cf:
            raise UnsupportedOperation(f"{type(self).__name__} has no closed-form characteristic function")
        pts = as_points(s, self.dim)
        return _scalar_or_array(self._cf(pts), s, self.dim)

    @property
    def mean(self) -> np.ndarray:
        return self._moments()[0]

    @property
    def second_moment(self) -> np.ndarray:
        return self._moments()[1]

    @property
    def covariance(self) -> np.ndarray:
        m, sm = self._moments()
        return sm - np.outer(m, m)

    def _moments(self):
        if not hasattr(self, "_cached_moments"):
            self._cached_moments = self._compute_moments()
        return self._cached_moments

    def _compute_moments(self):
        raise UnsupportedOperation(f"{type(self).__name__} has no closed-form moments")

    def sample(self, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
        """One draw of shape ``(d,)``, or ``size`` draws of shape ``(size, d)``.

        Drawing ``k`` values one at a time consumes the stream exactly like one
        bulk draw of ``k`` values, except for :class:`Product`.
        """
        if size is None:
            return self._draw(rng, 1)[0]
        return self._draw(rng, int(size))

    def _cf(self, pts):
        raise NotImplementedError

    def _draw(self, rng, n):
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError


class PointMass(OffsetDistribution):
    def __init__(self, c):
        self.c = _vec(c)
        self.dim = self.c.shape[0]

    def _cf(self, pts):
        return np.exp(1j * (pts @ self.c))

    def _compute_moments(self):
        return self.c.copy(), np.outer(self.c, self.c)

    def _draw(self, rng, n):
        return np.broadcast_to(self.c, (n, self.dim)).copy()

    def to_json(self):
        return {"type": "point", "c": self.c.tolist()}

    def __repr__(self):
        return f"PointMass({self.c.tolist()})"


class DiscreteAtoms(OffsetDistribution):
    def __init__(self, points, probs):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        p = np.asarray(probs, dtype=float)
        if pts.shape[0] != p.shape[0] or p.shape[0] == 0:
            raise ConfigError("discrete offset needs one probability per atom")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ConfigError("discrete offset probabilities must be non-negative and sum to 1")
        self.points, self.probs = pts, p
        self.dim = pts.shape[1]
        self._cum = np.cumsum(p)

    def _cf(self, pts):
        return np.exp(1j * (pts @ self.points.T)) @ self.probs

    def _compute_moments(self):
        m = self.probs @ self.points
        sm = (self.points * self.probs[:, None]).T @ self.points
        return m, sm

    def _draw(self, rng, n):
        u = rng.random(n) * self._cum[-1]
        idx = np.minimum(np.searchsorted(self._cum, u, side="right"), len(self.probs) - 1)
        return self.points[idx]

    def to_json(self):
        return {"type": "discrete",
                "atoms": [{"x": x.tolist(), "p": float(q)} for x, q in zip(self.points, self.probs)]}


class Gaussian(OffsetDistribution):
    def __init__(self, mean, cov):
        self.mu = _vec(mean)
        self.dim = self.mu.shape[0]
        c = np.atleast_2d(np.asarray(cov, dtype=float))
        if c.shape != (self.dim, self.dim):
            raise ConfigError(f"covariance must be {self.dim}x{self.dim}")
        if not np.allclose(c, c.T, atol=1e-12):
            raise ConfigError("covariance must be symmetric")
        lam, vecs = np.linalg.eigh(c)
        if lam.min() < -1e-10 * max(1.0, abs(lam).max()):
            raise ConfigError("covariance must be positive semi-definite")
        self.cov = c
        # factor F with F F^T = cov; eigen form also covers singular matrices
        self._factor = vecs * np.sqrt(np.clip(lam, 0.0, None))

    def _cf(self, pts):
        quad = np.einsum("...i,ij,...j->...", pts, self.cov, pts)
        return np.exp(1j * (pts @ self.mu) - 0.5 * quad)

    def _compute_moments(self):
        return self.mu.copy(), self.cov + np.outer(self.mu, self.mu)

    def _draw(self, rng, n):
        z = rng.standard_normal((n, self.dim))
        x = np.broadcast_to(self.mu, (n, self.dim)).copy()
        # fixed elementwise accumulation order: bulk and single draws agree bitwise
        for j in range(self.dim):
            x += z[:, j:j + 1] * self._factor[:, j]
        return x

    def to_json(self):
        return {"type": "gaussian", "mean": self.mu.tolist(), "cov": self.cov.tolist()}

    def __repr__(self):
        return f"Gaussian({self.mu.tolist()}, {self.cov.tolist()})"


class UniformBox(OffsetDistribution):
    def __init__(self, lo, hi):
        self.lo = _vec(lo)
        self.hi = _vec(hi, self.lo.shape[0])
        if np.any(self.hi < self.lo):
            raise ConfigError("uniform box needs lo <= hi")
        self.dim = self.lo.shape[0]

    def _cf(self, pts):
        width = self.hi - self.lo
        out = np.ones(pts.shape[:-1], dtype=complex)
        for j in range(self.dim):
            s = pts[..., j]
            w = width[j]
            sw = s * w
            safe = np.where(sw == 0.0, 1.0, sw)
            factor = np.where(sw == 0.0, np.exp(1j * s * self.lo[j]),
                              (np.exp(1j * s * self.hi[j]) - np.exp(1j * s * self.lo[j])) / (1j * safe))
            out = out * factor
        return out

    def _compute_moments(self):
        m = 0.5 * (self.lo + self.hi)
        sq = (self.lo ** 2 + self.lo * self.hi + self.hi ** 2) / 3.0
        sm = np.outer(m, m)
        np.fill_diagonal(sm, sq)
        return m, sm

    def _draw(self, rng, n):
        return self.lo + (self.hi - self.lo) * rng.random((n, self.dim))

    def to_json(self):
        return {"type": "uniform", "lo": self.lo.tolist(), "hi": self.hi.tolist()}


class Product(OffsetDistribution):
    """Independent coordinates, each an arbitrary 1-d law."""

    def __init__(self, factors):
        factors = list(factors)
        if not factors or any(f.dim != 1 for f in factors):
            raise ConfigError("product offset needs at least one 1-d factor")
        self.factors = factors
        self.dim = len(factors)
        self.has_cf = all(f.has_cf for f in factors)
        self.exploratory = any(f.exploratory for f in factors)

    def _cf(self, pts):
        out = np.ones(pts.shape[:-1], dtype=complex)
        for j, f in enumerate(self.factors):
            out = out * f._cf(pts[..., j:j + 1])
        return out

    def _compute_moments(self):
        m = np.array([f.mean[0] for f in self.factors])
        sm = np.outer(m, m)
        np.fill_diagonal(sm, [f.second_moment[0, 0] for f in self.factors])
        return m, sm

    def _draw(self, rng, n):
        return np.column_stack([f._draw(rng, n)[:, 0] for f in self.factors])

    def to_json(self):
        return {"type": "product", "factors": [f.to_json() for f in self.factors]}


class Cauchy(OffsetDistribution):
    """Heavy-tailed 1-d law with infinite variance.

    Only available with ``exploratory=True``; no moment oracle applies to it.
    """

    exploratory = True

    def __init__(self, loc=0.0, scale=1.0, exploratory=False):
        if not exploratory:
            raise ConfigError("infinite-variance offsets require the exploratory flag")
        if scale <= 0:
            raise ConfigError("Cauchy scale must be positive")
        self.loc, self.scale = float(np.ravel(loc)[0]), float(scale)

    def _cf(self, pts):
        s = pts[..., 0]
        return np.exp(1j * s * self.loc - self.scale * np.abs(s))

    def _draw(self, rng, n):
        return (self.loc + self.scale * rng.standard_cauchy(n))[:, None]

    def to_json(self):
        return {"type": "cauchy", "loc": [self.loc], "scale": self.scale, "exploratory": True}


class SamplerOffset(OffsetDistribution):
    """Wraps ``fn(rng, n) -> array (n, d)``; simulation only."""

    has_cf = False

    def __init__(self, fn: Callable[[np.random.Generator, int], np.ndarray], dim: int = 1):
        self.fn = fn
        self.dim = int(dim)

    def _draw(self, rng, n):
        out = np.asarray(self.fn(rng, n), dtype=float).reshape(n, self.dim)
        return out

    def to_json(self):
        raise ConfigError("sampler-only offsets cannot be serialised")


# ----------------------------------------------------------------------------
# paired offsets (eta_L, eta_R) for binary trees


class PairedOffset:
    dim: int = 1

    @property
    def mean(self) -> np.ndarray:
        return self.left_mean + self.right_mean

    @property
    def second_moment(self) -> np.ndarray:
        return self.left_second + self.right_second

    def cf_left(self, s):
        return self.cf_joint(s, np.zeros_like(as_points(s, self.dim)))

    def cf_right(self, s):
        return self.cf_joint(np.zeros_like(as_points(s, self.dim)), s)

    def cf_joint(self, s1, s2):
        p1, p2 = as_points(s1, self.dim), as_points(s2, self.dim)
        p1, p2 = np.broadcast_arrays(p1, p2)
        return _scalar_or_array(self._cf_joint(p1, p2), s1, self.dim)

    def sample(self, rng, size: Optional[int] = None):
        if size is None:
            left, right = self._draw(rng, 1)
            return left[0], right[0]
        return self._draw(rng, int(size))


class IndependentPair(PairedOffset):
    def __init__(self, left: OffsetDistribution, right: OffsetDistribution):
        if left.dim != right.dim:
            raise ConfigError("left and right offsets must share a dimension")
        self.left, self.right = left, right
        self.dim = left.dim

    @property
    def left_mean(self):
        return self.left.mean

    @property
    def right_mean(self):
        return self.right.mean

    @property
    def left_second(self):
        return self.left.second_moment

    @property
    def right_second(self):
        return self.right.second_moment

    def _cf_joint(self, p1, p2):
        return self.left._cf(p1) * self.right._cf(p2)

    def _draw(self, rng, n):
        return self.left._draw(rng, n), self.right._draw(rng, n)

    def to_json(self):
        return {"type": "pair_indep", "l": self.left.to_json(), "r": self.right.to_json()}


class DeterministicPair(PairedOffset):
    def __init__(self, left, right):
        self.l = _vec(left)
        self.r = _vec(right, self.l.shape[0])
        self.dim = self.l.shape[0]

    left_mean = property(lambda self: self.l.copy())
    right_mean = property(lambda self: self.r.copy())
    left_second = property(lambda self: np.outer(self.l, self.l))
    right_second = property(lambda self: np.outer(self.r, self.r))

    def _cf_joint(self, p1, p2):
        return np.exp(1j * (p1 @ self.l + p2 @ self.r))

    def _draw(self, rng, n):
        return (np.broadcast_to(self.l, (n, self.dim)).copy(),
                np.broadcast_to(self.r, (n, self.dim)).copy())

    def to_json(self):
        return {"type": "pair_det", "l": self.l.tolist(), "r": self.r.tolist()}


class JointDiscrete(PairedOffset):
    def __init__(self, lefts, rights, probs):
        L = np.asarray(lefts, dtype=float)
        R = np.asarray(rights, dtype=float)
        if L.ndim == 1:
            L, R = L[:, None], R[:, None]
        p = np.asarray(probs, dtype=float)
        if not (L.shape == R.shape and L.shape[0] == p.shape[0] > 0):
            raise ConfigError("joint discrete pair needs matching left/right/prob lists")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ConfigError("joint discrete probabilities must be non-negative and sum to 1")
        self.L, self.R, self.p = L, R, p
        self.dim = L.shape[1]
        self._cum = np.cumsum(p)

    left_mean = property(lambda self: self.p @ self.L)
    right_mean = property(lambda self: self.p @ self.R)
    left_second = property(lambda self: (self.L * self.p[:, None]).T @ self.L)
    right_second = property(lambda self: (self.R * self.p[:, None]).T @ self.R)

    def _cf_joint(self, p1, p2):
        return np.exp(1j * (p1 @ self.L.T + p2 @ self.R.T)) @ self.p

    def _draw(self, rng, n):
        u = rng.random(n) * self._cum[-1]
        idx = np.minimum(np.searchsorted(self._cum, u, side="right"), len(self.p) - 1)
        return self.L[idx], self.R[idx]

    def to_json(self):
        return {"type": "pair_joint", "atoms": [
            {"l": a.tolist(), "r": b.tolist(), "p": float(q)} for a, b, q in zip(self.L, self.R, self.p)]}


# ----------------------------------------------------------------------------
# functional API


def cf(dist: OffsetDistribution, s):
    return dist.cf(s)


def sample_offset(dist: OffsetDistribution, rng, size=None):
    return dist.sample(rng, size)


def sample_pair(p: PairedOffset, rng, size=None):
    return p.sample(rng, size)


def tilde_cf(p: PairedOffset, s):
    """``phi_L(s) + phi_R(s) - 1``: growth exponent of the external sum."""
    return p.cf_left(s) + p.cf_right(s) - 1.0


def psi(p: PairedOffset, s1, s2):
    """``E[(e^{is1 L}+e^{is1 R}-1)(e^{is2 L}+e^{is2 R}-1)]`` in closed form."""
    p1, p2 = as_points(s1, p.dim), as_points(s2, p.dim)
    out = (p.cf_joint(p1, p2) + p.cf_joint(p2, p1)
           + tilde_cf(p, p1 + p2) - tilde_cf(p, p1) - tilde_cf(p, p2))
    return _scalar_or_array(np.asarray(out), s1, p.dim)


@dataclass(frozen=True)
class CfDomain:
    delta: float
    direction: tuple = (1.0,)

    def contains(self, s) -> bool:
        return float(np.linalg.norm(np.atleast_1d(s))) <= self.delta


_SCAN_START = 1e-6
_SCAN_RATIO = 1.0 + 1e-4


def find_cf_domain(law, direction=None, s_max: float = 1e4) -> CfDomain:
    """Largest ``delta`` with ``Re phi(r u) >= 3/4`` for all ``0 <= r <= delta``.

    ``phi`` is the offset's characteristic function, or ``phi_L + phi_R - 1``
    for a :class:`PairedOffset`.  ``u`` is the unit vector along ``direction``
    (the only direction for ``d == 1``).  The scan walks a geometric grid with
    relative step ``1e-4`` and stops at the first failing point; the final cell
    is then bisected, keeping the last verified value.
    """
    dim = law.dim
    u = np.ones(1) if direction is None else _vec(direction, dim)
    if dim > 1 and direction is None:
        raise ValueError("a direction is required for d > 1")
    norm = float(np.linalg.norm(u))
    if norm == 0:
        raise ValueError("direction must be non-zero")
    u = u / norm

    if isinstance(law, PairedOffset):
        def re_phi(r):
            return np.real(tilde_cf(law, np.asarray(r)[..., None] * u))
    else:
        if not law.has_cf:
            raise UnsupportedOperation("CF domain needs a closed-form characteristic function")

        def re_phi(r):
            return np.real(law._cf(np.asarray(r)[..., None] * u))

    n_total = int(math.ceil(math.log(s_max / _SCAN_START) / math.log(_SCAN_RATIO))) + 1
    last_good = 0.0
    first_bad = None
    chunk = 50_000
    for start in range(0, n_total, chunk):
        k = np.arange(start, min(start + chunk, n_total))
        grid = _SCAN_START * _SCAN_RATIO ** k
        ok = re_phi(grid) >= 0.75
        if not ok.all():
            i = int(np.argmin(ok))
            if i > 0:
                last_good = float(grid[i - 1])
            first_bad = float(grid[i])
            break
        last_good = float(grid[-1])
    if first_bad is None:
        return CfDomain(min(last_good, s_max), tuple(u.tolist()))
    lo, hi = last_good, first_bad
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if re_phi(mid) >= 0.75:
            lo = mid
        else:
            hi = mid
    return CfDomain(lo, tuple(u.tolist()))


# ----------------------------------------------------------------------------
# JSON specs


def offset_from_json(spec: dict) -> OffsetDistribution:
    kind = spec.get("type")
    try:
        if kind == "point":
            return PointMass(spec["c"])
        if kind == "gaussian":
            mean = _vec(spec.get("mean", [0.0]))
            return Gaussian(mean, spec.get("cov", np.eye(mean.shape[0])))
        if kind == "discrete":
            atoms = spec["atoms"]
            return DiscreteAtoms([a["x"] for a in atoms], [a["p"] for a in atoms])
        if kind == "uniform":
            return UniformBox(spec["lo"], spec["hi"])
        if kind == "product":
            return Product([offset_from_json(f) for f in spec["factors"]])
        if kind == "cauchy":
            return Cauchy(spec.get("loc", 0.0), spec.get("scale", 1.0), spec.get("exploratory", False))
    except KeyError as exc:
        raise ConfigError(f"offset spec {kind!r} is missing field {exc}") from None
    raise ConfigError(f"unknown offset type {kind!r}")


def pair_from_json(spec: dict) -> PairedOffset:
    kind = spec.get("type")
    try:
        if kind == "pair_det":
            return DeterministicPair(spec["l"], spec["r"])
        if kind == "pair_indep":
            return IndependentPair(offset_from_json(spec["l"]), offset_from_json(spec["r"]))
        if kind == "pair_joint":
            atoms = spec["atoms"]
            return JointDiscrete([a["l"] for a in atoms], [a["r"] for a in atoms], [a["p"] for a in atoms])
    except KeyError as exc:
        raise ConfigError(f"pair spec {kind!r} is missing field {exc}") from None
    raise ConfigError(f"unknown pair type {kind!r}")


def law_from_json(spec: dict):
    if str(spec.get("type", "")).startswith("pair_"):
        return pair_from_json(spec)
    return offset_from_json(spec)
