"""Finite measures on R^d stored as weighted atoms.

:class:`AtomicMeasure` is append-only with amortised O(1) growth; a running
prefix sum of the weights is kept alongside the atoms so a weighted draw is a
single binary search.  Atoms at equal points are never merged implicitly (see
:meth:`AtomicMeasure.compact`).

:class:`ConvolvedMeasure` represents ``initial + shifted * nu`` without ever
materialising the convolution: draws are made in two stages and the Fourier
transform factorises.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import ConfigError
from .offsets import OffsetDistribution, as_points, law_from_json, _scalar_or_array


class AtomicMeasure:
    def __init__(self, points=None, weights=None, dim: Optional[int] = None):
        if points is None:
            if dim is None:
                raise ValueError("an empty measure needs an explicit dimension")
            pts = np.zeros((0, int(dim)))
        else:
            pts = np.asarray(points, dtype=float)
            if pts.ndim == 1:
                pts = pts[:, None] if (dim in (None, 1)) else pts.reshape(-1, dim)
            if dim is not None and pts.shape[1] != dim:
                raise ConfigError(f"atoms have dimension {pts.shape[1]}, expected {dim}")
        n = pts.shape[0]
        w = np.ones(n) if weights is None else np.asarray(weights, dtype=float).reshape(-1)
        if w.shape[0] != n:
            raise ConfigError("one weight per atom is required")
        if np.any(~(w > 0)):
            raise ConfigError("atom weights must be positive")
        self.dim = pts.shape[1]
        cap = max(16, n)
        self._pts = np.zeros((cap, self.dim))
        self._w = np.zeros(cap)
        self._cum = np.zeros(cap)
        self._pts[:n] = pts
        self._w[:n] = w
        self._cum[:n] = np.cumsum(w)
        self._n = n

    # -- growth ---------------------------------------------------------
    def _reserve(self, extra: int):
        need = self._n + extra
        if need <= self._pts.shape[0]:
            return
        cap = self._pts.shape[0]
        while cap < need:
            cap *= 2
        for name in ("_pts", "_w", "_cum"):
            old = getattr(self, name)
            new = np.zeros((cap,) + old.shape[1:])
            new[: self._n] = old[: self._n]
            setattr(self, name, new)

    def append(self, x, w: float = 1.0):
        if not w > 0:
            raise ConfigError("atom weights must be positive")
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.dim:
            raise ConfigError(f"cannot add a point of dimension {x.shape[0]} to a {self.dim}-d measure")
        self._reserve(1)
        n = self._n
        self._pts[n] = x
        self._w[n] = w
        self._cum[n] = (self._cum[n - 1] if n else 0.0) + w
        self._n = n + 1

    def extend(self, points, weights=None):
        other = AtomicMeasure(points, weights, dim=self.dim)
        k = other._n
        if k == 0:
            return
        self._reserve(k)
        n = self._n
        self._pts[n:n + k] = other.points
        self._w[n:n + k] = other.weights
        base = self._cum[n - 1] if n else 0.0
        # cumsum is sequential, so this matches repeated append() bit for bit
        self._cum[n:n + k] = np.cumsum(np.concatenate(([base], other.weights)))[1:]
        self._n = n + k

    # -- views ----------------------------------------------------------
    def __len__(self):
        return self._n

    @property
    def points(self) -> np.ndarray:
        return self._pts[: self._n]

    @property
    def weights(self) -> np.ndarray:
        return self._w[: self._n]

    @property
    def cumulative(self) -> np.ndarray:
        return self._cum[: self._n]

    @property
    def total_mass(self) -> float:
        return float(self._cum[self._n - 1]) if self._n else 0.0

    def prefix(self, k: int) -> "AtomicMeasure":
        """The measure formed by the first ``k`` atoms (an earlier urn state)."""
        out = AtomicMeasure(dim=self.dim)
        out._reserve(k)
        out._pts[:k] = self._pts[:k]
        out._w[:k] = self._w[:k]
        out._cum[:k] = self._cum[:k]
        out._n = k
        return out

    def copy(self) -> "AtomicMeasure":
        return self.prefix(self._n)

    def compact(self) -> "AtomicMeasure":
        """Merge atoms at identical points, summing their weights."""
        if self._n == 0:
            return self.copy()
        uniq, inv = np.unique(self.points, axis=0, return_inverse=True)
        w = np.zeros(uniq.shape[0])
        np.add.at(w, inv.reshape(-1), self.weights)
        return AtomicMeasure(uniq, w, dim=self.dim)

    def index_at(self, x: float) -> int:
        """Atom whose cumulative-weight interval contains ``x`` in ``[0, mass)``."""
        i = int(np.searchsorted(self.cumulative, x, side="right"))
        return min(i, self._n - 1)

    def __repr__(self):
        return f"AtomicMeasure(dim={self.dim}, atoms={self._n}, mass={self.total_mass:g})"


@dataclass
class ConvolvedMeasure:
    """``initial + shifted * kernel`` for a probability kernel ``kernel``."""

    initial: AtomicMeasure
    shifted: AtomicMeasure
    kernel: OffsetDistribution

    def __post_init__(self):
        if self.initial.dim != self.shifted.dim or self.kernel.dim != self.shifted.dim:
            raise ConfigError("all parts of a convolved measure must share one dimension")

    @property
    def dim(self) -> int:
        return self.shifted.dim

    @property
    def total_mass(self) -> float:
        return self.initial.total_mass + self.shifted.total_mass


@dataclass(frozen=True)
class RescaleParams:
    a: float
    b: tuple

    def __post_init__(self):
        if not self.a > 0:
            raise ConfigError("rescaling needs a > 0")


Measure = Union[AtomicMeasure, ConvolvedMeasure]


def total_mass(m: Measure) -> float:
    mass = m.total_mass
    if not mass > 0:
        raise ValueError("zero measure")
    return mass


def normalize(m: Measure) -> Measure:
    mass = total_mass(m)
    if isinstance(m, ConvolvedMeasure):
        return ConvolvedMeasure(_scaled(m.initial, 1.0 / mass), _scaled(m.shifted, 1.0 / mass), m.kernel)
    return _scaled(m, 1.0 / mass)


def _scaled(m: AtomicMeasure, factor: float) -> AtomicMeasure:
    if len(m) == 0:
        return AtomicMeasure(dim=m.dim)
    return AtomicMeasure(m.points, m.weights * factor, dim=m.dim)


def rescale(m: AtomicMeasure, p: RescaleParams) -> AtomicMeasure:
    """Push ``m`` forward through ``x -> (x - b) / a``; weights are unchanged."""
    b = np.asarray(p.b, dtype=float).reshape(-1)
    return AtomicMeasure((m.points - b) / p.a, m.weights, dim=m.dim)


def _atomic_fourier(m: AtomicMeasure, pts: np.ndarray) -> np.ndarray:
    if len(m) == 0:
        return np.zeros(pts.shape[:-1], dtype=complex)
    flat = pts.reshape(-1, m.dim)
    out = np.empty(flat.shape[0], dtype=complex)
    step = max(1, 2_000_000 // max(1, len(m)))
    for i in range(0, flat.shape[0], step):
        out[i:i + step] = np.exp(1j * (flat[i:i + step] @ m.points.T)) @ m.weights
    return out.reshape(pts.shape[:-1])


def fourier(m: Measure, s):
    """``sum_k w_k exp(i s.x_k)``; a convolved part contributes ``phi(s)`` times its sum."""
    total_mass(m)
    pts = as_points(s, m.dim)
    if isinstance(m, ConvolvedMeasure):
        out = _atomic_fourier(m.initial, pts) + _atomic_fourier(m.shifted, pts) * m.kernel._cf(pts)
    else:
        out = _atomic_fourier(m, pts)
    return _scalar_or_array(out, s, m.dim)


def sample(m: Measure, rng: np.random.Generator) -> np.ndarray:
    """Draw one point from the normalised measure."""
    mass = total_mass(m)
    x = rng.random() * mass
    if isinstance(m, ConvolvedMeasure):
        m0 = m.initial.total_mass
        if x < m0:
            return m.initial.points[m.initial.index_at(x)].copy()
        centre = m.shifted.points[m.shifted.index_at(x - m0)]
        return centre + m.kernel.sample(rng)
    return m.points[m.index_at(x)].copy()


def kernel_compose(m: AtomicMeasure, kernel: OffsetDistribution) -> ConvolvedMeasure:
    """``m`` composed with the translation kernel ``x -> law(x + eta)``, i.e. ``m * nu``."""
    return ConvolvedMeasure(AtomicMeasure(dim=m.dim), m, kernel)


# ----------------------------------------------------------------------------
# JSON


def _atoms_json(m: AtomicMeasure) -> list:
    return [{"x": x.tolist(), "w": float(w)} for x, w in zip(m.points, m.weights)]


def _atoms_from(items, dim) -> AtomicMeasure:
    if not items:
        return AtomicMeasure(dim=dim)
    try:
        return AtomicMeasure([a["x"] for a in items], [a["w"] for a in items], dim=dim)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed atom list: {exc}") from None


def measure_to_json(m: Measure) -> dict:
    if isinstance(m, ConvolvedMeasure):
        out = {"dim": m.dim, "atoms": _atoms_json(m.shifted), "kernel": m.kernel.to_json()}
        if len(m.initial):
            out["initial"] = _atoms_json(m.initial)
        return out
    return {"dim": m.dim, "atoms": _atoms_json(m), "kernel": None}


def measure_from_json(obj: dict) -> Measure:
    try:
        dim = int(obj["dim"])
    except (KeyError, TypeError, ValueError):
        raise ConfigError("measure JSON needs an integer 'dim'") from None
    atoms = _atoms_from(obj.get("atoms", []), dim)
    kernel = obj.get("kernel")
    if kernel is None:
        if obj.get("initial"):
            raise ConfigError("'initial' atoms are only meaningful with a kernel")
        return atoms
    return ConvolvedMeasure(_atoms_from(obj.get("initial", []), dim), atoms, law_from_json(kernel))
