"""Moment oracles, martingales, rescaled characteristic functions and
normality diagnostics.

Notation: ``phi`` is the offset's characteristic function, ``F(s)`` the
weighted characteristic sum ``sum_v w_v exp(i s.X_v)`` over a tree (or the
Fourier transform of an urn composition) and ``M(s) = F(s) / E F(s)``.

Continuous time (weighted Yule, root weight ``rho``)::

    E F_t(s)          = rho exp(t phi(s))
    E F_t(s1) F_t(s2) = rho^2 exp(t(phi1 + phi2))
                        + rho phi12 / D (exp(t(phi1 + phi2)) - exp(t phi12))

with ``phi1 = phi(s1)``, ``phi12 = phi(s1 + s2)`` and ``D = phi1 + phi2 - phi12``.

Discrete time (wRRT with ``n`` non-root nodes)::

    E F_{n+1}(s) = (n + rho + phi(s)) / (n + rho) * E F_n(s),          E F_0 = rho
    G_{n+1} = (n + rho + phi1 + phi2) / (n + rho) * G_n
              + phi12 / (n + rho) * E F_n(s1 + s2),                    G_0 = rho^2

Binary Yule, external nodes, with ``phit = phi_L + phi_R - 1``::

    E F^e_t(s)          = exp(t phit(s))
    E F^e_t(s1)F^e_t(s2) = (phiX(s1,s2) + phiX(s2,s1)) / Dt exp(t(phit1 + phit2))
                          - psi(s1, s2) / Dt exp(t phit12)
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special, stats

from .brw import LabelledTree
from .errors import ConfigError, DomainError, UnsupportedOperation
from .measures import AtomicMeasure, ConvolvedMeasure, fourier, normalize
from .offsets import OffsetDistribution, PairedOffset, as_points, psi, tilde_cf, _vec

MODES = ("continuous", "discrete", "binary")

_SMALL_DENOMINATOR = 1e-6
_TINY = 1e-300


def _phi(law, s) -> complex:
    if isinstance(law, PairedOffset):
        return complex(tilde_cf(law, s))
    if not law.has_cf:
        raise UnsupportedOperation(f"{type(law).__name__} is sampler-only; moment oracles need a closed-form CF")
    return complex(law.cf(s))


def _add(s1, s2, dim):
    return as_points(s1, dim) + as_points(s2, dim)


# ----------------------------------------------------------------------------
# continuous time


def expected_F_yule(t: float, s, rho: float, law: OffsetDistribution) -> complex:
    return rho * np.exp(t * _phi(law, s))


def expected_FF_yule(t: float, s1, s2, rho: float, law: OffsetDistribution) -> complex:
    p1, p2 = _phi(law, s1), _phi(law, s2)
    p12 = _phi(law, _add(s1, s2, law.dim))
    D = p1 + p2 - p12
    if abs(D) < _SMALL_DENOMINATOR:
        raise DomainError(f"phi(s1)+phi(s2)-phi(s1+s2) = {D:.3g} is too small; choose s1, s2 closer to 0")
    grow = np.exp(t * (p1 + p2))
    return rho * rho * grow + rho * p12 / D * (grow - np.exp(t * p12))


# ----------------------------------------------------------------------------
# discrete time


def expected_F_rrt_path(n: int, s, rho: float, law: OffsetDistribution) -> np.ndarray:
    """``E F_k(s)`` for ``k = 0..n`` by the one-step product."""
    p = _phi(law, s)
    out = np.empty(n + 1, dtype=complex)
    f = complex(rho)
    out[0] = f
    # written as an increment so that s = 0 reproduces k + rho exactly
    for k in range(n):
        f = f + p * f / (k + rho)
        out[k + 1] = f
    return out


def expected_F_rrt(n: int, s, rho: float, law: OffsetDistribution) -> complex:
    return complex(expected_F_rrt_path(n, s, rho, law)[n])


def expected_FF_rrt(n: int, s1, s2, rho: float, law: OffsetDistribution) -> complex:
    p1, p2 = _phi(law, s1), _phi(law, s2)
    s12 = _add(s1, s2, law.dim)
    p12 = _phi(law, s12)
    mean12 = expected_F_rrt_path(n, s12, rho, law)
    g = complex(rho * rho)
    for k in range(n):
        g = g + ((p1 + p2) * g + p12 * mean12[k]) / (k + rho)
    return g


def expected_FF_rrt_gamma(n: int, s1, s2, rho: float, law: OffsetDistribution) -> complex:
    """Gamma-ratio closed form of the discrete second moment (cross-check only).

    ``G_n = Gamma(n+rho+a)/Gamma(n+rho) * [Gamma(rho)/Gamma(rho+a) rho^2
    + sum_k phi12 EF_k(s1+s2) Gamma(k+rho)/Gamma(k+rho+a+1)]`` with
    ``a = phi1 + phi2``; evaluated with complex log-Gamma.
    """
    p1, p2 = _phi(law, s1), _phi(law, s2)
    s12 = _add(s1, s2, law.dim)
    p12 = _phi(law, s12)
    a = p1 + p2
    lg = special.loggamma
    k = np.arange(n, dtype=float)
    ef = rho * np.exp(lg(rho + 0j) - lg(rho + p12) + lg(k + rho + p12) - lg(k + rho + 0j))
    inner = np.sum(p12 * ef * np.exp(lg(k + rho + 0j) - lg(k + rho + a + 1)))
    head = rho * rho * np.exp(lg(rho + 0j) - lg(rho + a))
    return complex(np.exp(lg(n + rho + a) - lg(n + rho + 0j)) * (head + inner))


# ----------------------------------------------------------------------------
# binary


def expected_Fe_binary(t: float, s, pair: PairedOffset) -> complex:
    return complex(np.exp(t * _phi(pair, s)))


def expected_FeFe_binary(t: float, s1, s2, pair: PairedOffset) -> complex:
    q1, q2 = _phi(pair, s1), _phi(pair, s2)
    s12 = _add(s1, s2, pair.dim)
    q12 = _phi(pair, s12)
    D = q1 + q2 - q12
    if abs(D) < _SMALL_DENOMINATOR:
        raise DomainError(f"phit(s1)+phit(s2)-phit(s1+s2) = {D:.3g} is too small; choose s1, s2 closer to 0")
    cross = complex(pair.cf_joint(s1, s2)) + complex(pair.cf_joint(s2, s1))
    return complex(cross / D * np.exp(t * (q1 + q2)) - complex(psi(pair, s1, s2)) / D * np.exp(t * q12))


# ----------------------------------------------------------------------------
# oracle object


@dataclass
class MomentOracle:
    law: object
    rho: float = 1.0
    mode: str = "continuous"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.mode == "binary":
            if not isinstance(self.law, PairedOffset):
                raise ConfigError("binary mode needs a paired offset")
            if self.rho != 1.0:
                raise ConfigError("binary trees have a unit root weight")
        elif isinstance(self.law, PairedOffset):
            raise ConfigError("paired offsets are only used in binary mode")
        elif not self.law.has_cf:
            raise UnsupportedOperation("moment oracles need a closed-form characteristic function")

    def mean(self, time, s) -> complex:
        if self.mode == "continuous":
            return expected_F_yule(time, s, self.rho, self.law)
        if self.mode == "discrete":
            return expected_F_rrt(int(time), s, self.rho, self.law)
        return expected_Fe_binary(time, s, self.law)

    def domain(self, direction=None):
        """CF domain ``J`` along ``direction`` (cached per direction)."""
        from .offsets import find_cf_domain

        key = None if direction is None else tuple(np.round(_vec(direction) / np.linalg.norm(direction), 12))
        cache = self.__dict__.setdefault("_domains", {})
        if key not in cache:
            cache[key] = find_cf_domain(self.law, None if key is None else np.array(key))
        return cache[key]

    def check_domain(self, *points):
        for p in points:
            v = _vec(p, self.law.dim)
            r = float(np.linalg.norm(v))
            if r == 0:
                continue
            dom = self.domain(v if self.law.dim > 1 else None)
            if r > dom.delta:
                raise DomainError(f"|s| = {r:.4g} lies outside the CF domain J (delta = {dom.delta:.6g}); "
                                  "second-moment oracles are only evaluated inside J")

    def second(self, time, s1, s2) -> complex:
        """``E F(s1) F(s2)``; raises :class:`DomainError` unless ``s1, s2`` lie in ``J``."""
        self.check_domain(s1, s2)
        if self.mode == "continuous":
            return expected_FF_yule(time, s1, s2, self.rho, self.law)
        if self.mode == "discrete":
            return expected_FF_rrt(int(time), s1, s2, self.rho, self.law)
        return expected_FeFe_binary(time, s1, s2, self.law)


# ----------------------------------------------------------------------------
# empirical characteristic functions and martingales


def empirical_cf(obj, s, which: str = "all"):
    """``sum_v w_v exp(i s.X_v)`` over a labelled tree, a measure or an urn state."""
    if isinstance(obj, LabelledTree):
        mask = obj.tree.mask(which)
        m = AtomicMeasure(obj.labels[mask], obj.tree.weight[mask], dim=obj.dim)
        return fourier(m, s)
    if isinstance(obj, (AtomicMeasure, ConvolvedMeasure)):
        return fourier(obj, s)
    from .urns import composition_cf
    return composition_cf(obj, s)


@dataclass
class MartingaleSample:
    s: object
    value: complex
    time: float


def martingale_value(obj, s, time, oracle: MomentOracle) -> MartingaleSample:
    ef = oracle.mean(time, s)
    if abs(ef) < _TINY:
        raise DomainError(f"|E F| = {abs(ef):.3g} underflows; the martingale is not representable here")
    if oracle.mode == "discrete":
        # F_n(0) = n + rho and E F_n(0) is the same product, so M_n(0) = 1 exactly
        if np.all(as_points(s, oracle.law.dim) == 0):
            return MartingaleSample(s, 1.0 + 0j, time)
    which = "external" if oracle.mode == "binary" else "all"
    return MartingaleSample(s, complex(empirical_cf(obj, s, which)) / ef, time)


def sup_m_track(lt: LabelledTree, s_grid, checkpoints, oracle: MomentOracle) -> np.ndarray:
    """``max_{s in grid} |M(s)|`` along a single tree, at each checkpoint.

    Discrete mode: checkpoint ``n`` uses nodes ``0..n``; continuous mode:
    nodes born by time ``t``; binary mode: the external nodes at time ``t``
    (the tree must then have been grown to at least the last checkpoint).
    """
    law = oracle.law
    grid = as_points(s_grid, law.dim).reshape(-1, law.dim)
    out = np.empty(len(checkpoints))
    X = lt.labels
    if oracle.mode == "binary":
        tree = lt.tree
        death = np.full(tree.size, np.inf)
        kids = np.arange(1, tree.size)
        np.minimum.at(death, tree.parent[kids], tree.birth[kids])
        for i, t in enumerate(checkpoints):
            alive = (tree.birth <= t) & (death > t)
            F = np.exp(1j * X[alive] @ grid.T).sum(axis=0)
            ef = np.array([oracle.mean(t, g) for g in grid])
            out[i] = np.max(np.abs(F / ef))
        return out
    phase = np.exp(1j * X @ grid.T) * lt.tree.weight[:, None]
    csum = np.cumsum(phase, axis=0)
    for i, c in enumerate(checkpoints):
        if oracle.mode == "discrete":
            idx = int(c)
        else:
            idx = int(np.searchsorted(lt.tree.birth, c, side="right")) - 1
        ef = np.array([oracle.mean(c, g) for g in grid])
        out[i] = np.max(np.abs(csum[idx] / ef))
    return out


# ----------------------------------------------------------------------------
# rescaling and Gaussian limits


def rescaled_cf(measure, a: float, b, s):
    """``exp(-i s.b/a) * fourier(normalize(measure), s/a)``."""
    if not a > 0:
        raise ConfigError("rescaling needs a > 0")
    dim = measure.dim
    pts = as_points(s, dim)
    bb = _vec(b, dim)
    val = fourier(normalize(measure), pts / a)
    out = np.exp(-1j * (pts @ bb) / a) * np.asarray(val)
    if np.ndim(s) == 0 or (np.ndim(s) == 1 and dim > 1):
        return complex(np.asarray(out).reshape(-1)[0])
    return out


def gaussian_limit_cf(s, sigma) -> float:
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    pts = as_points(s, sigma.shape[0])
    q = np.einsum("...i,ij,...j->...", pts, sigma, pts)
    out = np.exp(-0.5 * q)
    return float(out) if out.ndim == 0 else out


# ----------------------------------------------------------------------------
# Kolmogorov-Smirnov


def ks_statistic(values, cdf, weights=None) -> float:
    """Exact ``sup_x |F_emp(x) - cdf(x)|`` for a (weighted) sample with ties.

    Checked on both sides of every jump of the empirical distribution.
    """
    x = np.asarray(values, dtype=float).reshape(-1)
    if x.size == 0:
        raise ValueError("empty sample")
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float).reshape(-1)
    order = np.argsort(x, kind="stable")
    x, w = x[order], w[order]
    uniq, start = np.unique(x, return_index=True)
    cum = np.cumsum(w) / w.sum()
    end = np.append(start[1:], x.size) - 1
    after = cum[end]
    before = np.concatenate(([0.0], after[:-1]))
    F = cdf(uniq)
    return float(max(np.max(after - F), np.max(F - before)))


@dataclass
class NormalityRow:
    size: float
    direction: tuple
    ks: float
    sample_size: int
    mode: str
    a: float
    b: float
    variance: float
    sample_var: float = float("nan")


@dataclass
class NormalityReport:
    rows: list = field(default_factory=list)
    seeds: list = field(default_factory=list)


def _scaling(scaling, size, drift):
    """``(a, b)`` with ``b`` already projected on the direction."""
    if isinstance(scaling, (tuple, list)):
        return float(scaling[0]), float(scaling[1])
    if scaling == "log":
        if not size > math.e:
            raise ConfigError("log scaling needs n >= 3 so that log n > 1")
        return math.sqrt(math.log(size)), drift * math.log(size)
    if scaling == "time":
        if not size > 0:
            raise ConfigError("time scaling needs t > 0")
        return math.sqrt(size), drift * float(size)
    raise ConfigError(f"unknown scaling {scaling!r}")


def normality_report(trees, law, direction=None, scaling="log", which="all", annealed: bool = False,
                     rng: Optional[np.random.Generator] = None, sizes=None, sigma2: Optional[float] = None,
                     seeds=()) -> NormalityReport:
    """KS distance of the rescaled projected label law to ``N(0, u' Sigma u)``.

    Quenched (default): one row per tree, using every selected node with its
    weight.  Annealed: one node per tree drawn by weight, pooled into a single
    row (all trees must have the same size).  ``scaling`` is ``"log"``
    (``a = sqrt(log n)``, ``b = u.m log n``), ``"time"`` (``a = sqrt t``,
    ``b = u.m t``) or an explicit ``(a, b)`` pair; ``sizes`` overrides the
    ``n`` (or ``t``) read from each tree.
    """
    from .brw import random_node

    if isinstance(trees, LabelledTree):
        trees = [trees]
    trees = list(trees)
    if not trees:
        raise ValueError("no trees given")
    dim = trees[0].dim
    u = np.ones(1) if direction is None else _vec(direction, dim)
    if not np.any(u != 0):
        raise ConfigError("direction must be non-zero")
    m, sm = law.mean, law.second_moment
    var = float(u @ sm @ u) if sigma2 is None else float(sigma2)
    if not var > 0:
        raise DomainError("u' Sigma u = 0: the offsets are a.s. orthogonal to the direction")
    drift = float(u @ m)

    def size_of(i, lt):
        if sizes is not None:
            return sizes[i]
        if scaling == "time":
            return float(lt.tree.birth.max())
        return lt.tree.n

    report = NormalityReport(seeds=list(seeds))
    sd = math.sqrt(var)
    cdf = lambda z: stats.norm.cdf(z, scale=sd)  # noqa: E731
    if annealed:
        if rng is None:
            raise ConfigError("annealed mode needs an rng to choose the nodes")
        n = size_of(0, trees[0])
        a, b = _scaling(scaling, n, drift)
        vals = np.empty(len(trees))
        for i, lt in enumerate(trees):
            v = random_node(lt, rng, which)
            vals[i] = (lt.labels[v] @ u - b) / a
        report.rows.append(NormalityRow(n, tuple(u.tolist()), ks_statistic(vals, cdf), len(trees),
                                        "annealed", a, b, var, float(vals.var(ddof=1)) if vals.size > 1 else 0.0))
        return report
    for i, lt in enumerate(trees):
        n = size_of(i, lt)
        a, b = _scaling(scaling, n, drift)
        mask = lt.tree.mask(which)
        vals = (lt.labels[mask] @ u - b) / a
        w = lt.tree.weight[mask]
        ks = ks_statistic(vals, cdf, w)
        centre = np.average(vals, weights=w)
        svar = float(np.average((vals - centre) ** 2, weights=w))
        report.rows.append(NormalityRow(n, tuple(u.tolist()), ks, int(mask.sum()), "quenched", a, b, var, svar))
    return report


# ----------------------------------------------------------------------------
# Monte Carlo comparison


@dataclass
class MCComparison:
    estimate: complex
    oracle: complex
    se_re: float
    se_im: float
    replicates: int

    @property
    def _scale(self) -> float:
        return max(1.0, abs(self.estimate), abs(self.oracle))

    @property
    def z_re(self) -> float:
        return _z(self.estimate.real - self.oracle.real, self.se_re, self._scale)

    @property
    def z_im(self) -> float:
        return _z(self.estimate.imag - self.oracle.imag, self.se_im, self._scale)

    @property
    def se(self) -> float:
        return max(self.se_re, self.se_im)

    @property
    def z(self) -> float:
        """The component z-score of larger magnitude (sign kept)."""
        return self.z_re if abs(self.z_re) >= abs(self.z_im) else self.z_im

    def ok(self, k: float = 4.0) -> bool:
        return abs(self.z_re) <= k and abs(self.z_im) <= k


def _z(diff, se, scale=1.0):
    # differences at rounding level carry no statistical information: an exactly
    # reproduced quantity (se == 0), or a component that is identically zero,
    # such as Im F(s)F(-s), whose samples are pure rounding noise
    if abs(diff) <= 1e-12 * scale:
        return 0.0
    if se == 0:
        return math.copysign(math.inf, diff)
    return diff / se


def compare_mean(samples, oracle_value) -> MCComparison:
    """Componentwise mean and standard error of complex samples against an oracle."""
    x = np.asarray(samples, dtype=complex).reshape(-1)
    n = x.size
    se_re = float(x.real.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    se_im = float(x.imag.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return MCComparison(complex(x.mean()), complex(oracle_value), se_re, se_im, n)


@dataclass
class Moments:
    """Mergeable running sums of complex samples (fixed merge order)."""

    n: int = 0
    s_re: float = 0.0
    s_im: float = 0.0
    q_re: float = 0.0
    q_im: float = 0.0

    @classmethod
    def of(cls, samples) -> "Moments":
        x = np.asarray(samples, dtype=complex).reshape(-1)
        return cls(x.size, float(x.real.sum()), float(x.imag.sum()),
                   float((x.real ** 2).sum()), float((x.imag ** 2).sum()))

    def merge(self, other: "Moments") -> "Moments":
        return Moments(self.n + other.n, self.s_re + other.s_re, self.s_im + other.s_im,
                       self.q_re + other.q_re, self.q_im + other.q_im)

    def compare(self, oracle_value) -> MCComparison:
        n = self.n
        mre, mim = self.s_re / n, self.s_im / n

        def se(q, m):
            if n < 2:
                return 0.0
            return math.sqrt(max(q - n * m * m, 0.0) / (n - 1) / n)

        return MCComparison(complex(mre, mim), complex(oracle_value), se(self.q_re, mre), se(self.q_im, mim), n)


def two_sample_chi2(a, b, min_expected: float = 5.0):
    """Two-sample chi-square homogeneity test on integer-valued samples.

    Categories are merged from the upper tail until every expected count is at
    least ``min_expected``.  Returns ``(statistic, dof, p_value)``.
    """
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    top = int(max(a.max(), b.max()))
    lo = int(min(a.min(), b.min()))
    ca = np.bincount(a - lo, minlength=top - lo + 1).astype(float)
    cb = np.bincount(b - lo, minlength=top - lo + 1).astype(float)
    frac_a = a.size / (a.size + b.size)
    bins_a, bins_b = [], []
    acc_a = acc_b = 0.0
    # merge from the low end, then fold a too-small remainder into the last bin
    for x, y in zip(ca, cb):
        acc_a += x
        acc_b += y
        tot = acc_a + acc_b
        if tot * min(frac_a, 1 - frac_a) >= min_expected:
            bins_a.append(acc_a)
            bins_b.append(acc_b)
            acc_a = acc_b = 0.0
    if acc_a + acc_b > 0:
        if bins_a:
            bins_a[-1] += acc_a
            bins_b[-1] += acc_b
        else:
            bins_a.append(acc_a)
            bins_b.append(acc_b)
    if len(bins_a) < 2:
        return 0.0, 0, 1.0
    table = np.array([bins_a, bins_b])
    stat, p, dof, _ = stats.chi2_contingency(table, correction=False)
    return float(stat), int(dof), float(p)


# ----------------------------------------------------------------------------
# CSV reports


CSV_COLUMNS = ("kind", "n_or_t", "s_or_u", "estimate_re", "estimate_im", "oracle_re", "oracle_im",
               "se", "z", "se_re", "se_im", "z_re", "z_im")


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, (list, tuple, np.ndarray)):
        return " ".join(_fmt(float(v)) for v in np.asarray(x).reshape(-1))
    return str(x)


def comparison_row(kind: str, n_or_t, s_or_u, cmp: MCComparison) -> dict:
    return {"kind": kind, "n_or_t": n_or_t, "s_or_u": s_or_u,
            "estimate_re": cmp.estimate.real, "estimate_im": cmp.estimate.imag,
            "oracle_re": cmp.oracle.real, "oracle_im": cmp.oracle.imag,
            "se": cmp.se, "z": cmp.z, "se_re": cmp.se_re, "se_im": cmp.se_im,
            "z_re": cmp.z_re, "z_im": cmp.z_im}


def write_csv(rows: Sequence[dict], fh, columns: Sequence[str] = CSV_COLUMNS):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in columns])
