"""Measure-valued Pólya urns of random-walk type.

SRW urn: draw a colour ``X`` from the normalised composition and add one ball
of colour ``X + eta``.  DRW urn: the added measure is the whole law of
``X + eta``, stored lazily as a centre atom composed with the offset kernel.

Both urns take their parent choice from one uniform per step through
:func:`rwurn.trees.attach_parents`, with the initial composition playing the
role of the root.  With the same pick and offset streams an SRW run therefore
reproduces the labels of :func:`rwurn.trees.grow_wrrt` +
:func:`rwurn.brw.assign_labels` bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError
from .measures import AtomicMeasure, ConvolvedMeasure, fourier, kernel_compose
from .offsets import OffsetDistribution
from .trees import attach_parent, attach_parents
from .brw import propagate


def _pick(u: float, initial_mass: float, steps: int) -> int:
    """0 for the initial part, else the 1-based index of an added ball."""
    return attach_parent(u, steps, initial_mass)


@dataclass
class SrwUrnState:
    composition: AtomicMeasure
    offset: OffsetDistribution
    step: int = 0
    initial_atoms: int = 0
    initial_mass: float = 0.0
    history: Optional[list] = None

    @classmethod
    def start(cls, mu0: AtomicMeasure, offset: OffsetDistribution, record: bool = False):
        if mu0.dim != offset.dim:
            raise ConfigError("initial composition and offset differ in dimension")
        return cls(mu0.copy(), offset, 0, len(mu0), float(mu0.total_mass) if len(mu0) else 0.0,
                   [] if record else None)

    @property
    def total_mass(self) -> float:
        return self.composition.total_mass


def srw_step(state: SrwUrnState, rng: np.random.Generator,
             offset_rng: Optional[np.random.Generator] = None) -> SrwUrnState:
    """One draw-and-replace step; ``offset_rng`` defaults to ``rng``."""
    if state.initial_mass <= 0:
        raise ConfigError("the urn needs a non-empty initial composition")
    u = rng.random()
    m = _pick(u, state.initial_mass, state.step)
    comp = state.composition
    if m == 0:
        x = u * (state.initial_mass + state.step)
        idx = min(int(np.searchsorted(comp.cumulative[: state.initial_atoms], x, side="right")),
                  state.initial_atoms - 1)
    else:
        idx = state.initial_atoms + m - 1
    eta = state.offset.sample(rng if offset_rng is None else offset_rng)
    comp.append(comp.points[idx] + eta, 1.0)
    if state.history is not None:
        state.history.append(idx)
    state.step += 1
    return state


@dataclass
class SrwTrace:
    """A finished SRW run; the composition after ``k`` steps is a prefix."""

    state: SrwUrnState

    @property
    def steps(self) -> int:
        return self.state.step

    def composition_at(self, k: int) -> AtomicMeasure:
        if not 0 <= k <= self.state.step:
            raise ValueError(f"step {k} outside 0..{self.state.step}")
        return self.state.composition.prefix(self.state.initial_atoms + k)


def run_srw(mu0: AtomicMeasure, offset: OffsetDistribution, steps: int, rng: np.random.Generator,
            offset_rng: Optional[np.random.Generator] = None, record: bool = False) -> SrwTrace:
    state = SrwUrnState.start(mu0, offset, record)
    for _ in range(steps):
        srw_step(state, rng, offset_rng)
    return SrwTrace(state)


@dataclass
class DrwUrnState:
    """``composition = mu0 + sum_k delta_{Z_k} * nu``.

    ``initial_sampler`` (with ``initial_mass``) replaces the atomic initial part
    by an arbitrary law known only through draws; ``initial_cf`` then supplies
    its Fourier transform if one is needed.
    """

    composition: ConvolvedMeasure
    step: int = 0
    initial_sampler: Optional[Callable[[np.random.Generator], np.ndarray]] = None
    initial_mass: float = 0.0
    initial_cf: Optional[Callable] = None
    history: Optional[list] = None

    @classmethod
    def start(cls, mu0, offset: OffsetDistribution, record: bool = False,
              initial_sampler=None, initial_mass=None, initial_cf=None):
        """``mu0`` may be atomic (``mu0`` itself) or convolved (``mu0 = m * nu``)."""
        if initial_sampler is not None:
            if not initial_mass or initial_mass <= 0:
                raise ConfigError("a sampled initial law needs a positive initial_mass")
            comp = ConvolvedMeasure(AtomicMeasure(dim=offset.dim), AtomicMeasure(dim=offset.dim), offset)
            return cls(comp, 0, initial_sampler, float(initial_mass), initial_cf, [] if record else None)
        if isinstance(mu0, ConvolvedMeasure):
            if len(mu0.initial):
                raise ConfigError("a convolved initial composition must be of the form m * nu")
            # m * nu: drawing from it is "pick an atom of m, add eta"
            base = mu0.shifted
            sampler = _convolved_sampler(base, offset)
            comp = ConvolvedMeasure(AtomicMeasure(dim=offset.dim), AtomicMeasure(dim=offset.dim), offset)
            cf = lambda s: fourier(base, s) * offset.cf(s)  # noqa: E731
            return cls(comp, 0, sampler, base.total_mass, cf, [] if record else None)
        if mu0.dim != offset.dim:
            raise ConfigError("initial composition and offset differ in dimension")
        comp = ConvolvedMeasure(mu0.copy(), AtomicMeasure(dim=offset.dim), offset)
        return cls(comp, 0, None, float(mu0.total_mass), None, [] if record else None)

    @property
    def total_mass(self) -> float:
        return self.initial_mass + self.composition.shifted.total_mass

    def centres(self) -> np.ndarray:
        return self.composition.shifted.points


def _convolved_sampler(base: AtomicMeasure, offset: OffsetDistribution):
    def draw(rng):
        x = rng.random() * base.total_mass
        return base.points[base.index_at(x)] + offset.sample(rng)
    return draw


def drw_step(state: DrwUrnState, rng: np.random.Generator,
             offset_rng: Optional[np.random.Generator] = None,
             initial_rng: Optional[np.random.Generator] = None) -> DrwUrnState:
    """Draw ``Z`` from the normalised composition and add ``delta_Z * nu``.

    With probability ``mass(mu0) / (mass(mu0) + n)`` the draw comes from the
    initial part; otherwise a previous centre ``Z_k`` is picked uniformly and
    ``Z = Z_k + eta``.
    """
    if state.initial_mass <= 0:
        raise ConfigError("the urn needs a non-empty initial composition")
    u = rng.random()
    m = _pick(u, state.initial_mass, state.step)
    comp = state.composition
    if m == 0:
        if state.initial_sampler is not None:
            z = np.asarray(state.initial_sampler(rng if initial_rng is None else initial_rng), dtype=float)
        else:
            init = comp.initial
            idx = init.index_at(u * (state.initial_mass + state.step))
            z = init.points[idx].copy()
    else:
        eta = comp.kernel.sample(rng if offset_rng is None else offset_rng)
        z = comp.shifted.points[m - 1] + eta
    comp.shifted.append(z, 1.0)
    if state.history is not None:
        state.history.append(m - 1)
    state.step += 1
    return state


def run_drw(mu0, offset: OffsetDistribution, steps: int, rng: np.random.Generator,
            offset_rng=None, initial_rng=None, record: bool = False, **start_kw) -> "DrwTrace":
    state = DrwUrnState.start(mu0, offset, record, **start_kw)
    for _ in range(steps):
        drw_step(state, rng, offset_rng, initial_rng)
    return DrwTrace(state.composition, 0, state)


@dataclass
class DrwTrace:
    """DRW compositions by step.  ``base_atoms`` shifted atoms precede step 0."""

    composition: ConvolvedMeasure
    base_atoms: int = 0
    state: Optional[DrwUrnState] = field(default=None, repr=False)

    @property
    def steps(self) -> int:
        return len(self.composition.shifted) - self.base_atoms

    def composition_at(self, k: int) -> ConvolvedMeasure:
        if not 0 <= k <= self.steps:
            raise ValueError(f"step {k} outside 0..{self.steps}")
        c = self.composition
        return ConvolvedMeasure(c.initial, c.shifted.prefix(self.base_atoms + k), c.kernel)

    def fourier_at(self, k: int, s):
        c = self.composition_at(k)
        if self.state is not None and self.state.initial_sampler is not None:
            if self.state.initial_cf is None:
                raise ConfigError("a sampled initial law needs initial_cf for Fourier transforms")
            head = self.state.initial_cf(s)
            if k == 0:
                return head
            return head + fourier(ConvolvedMeasure(AtomicMeasure(dim=c.dim), c.shifted, c.kernel), s)
        return fourier(c, s)


def lux_transport(trace: SrwTrace) -> DrwTrace:
    """Compose every SRW composition with the offset kernel: ``mu_n * nu``.

    The result is a DRW trace started from ``mu_0 * nu`` whose centres are the
    SRW ball colours.
    """
    st = trace.state
    comp = kernel_compose(st.composition.copy(), st.offset)
    return DrwTrace(comp, st.initial_atoms)


# ----------------------------------------------------------------------------
# vectorised DRW centres and the initial-condition experiment


def drw_centres(n: int, initial_mass: float, draw_initial: Callable[[np.random.Generator, int], np.ndarray],
                offset: OffsetDistribution, rng_tree, rng_off, rng_init) -> np.ndarray:
    """Centres ``Z_1..Z_n`` of a DRW urn via its genealogical tree.

    Node ``v`` picks its mother with :func:`attach_parents` (the root stands
    for ``mu0``).  Daughters of the root draw ``Z_v`` from the normalised
    initial law; every other node sets ``Z_v = Z_mother + eta_v``.
    """
    parent = np.empty(n + 1, dtype=np.int64)
    parent[0] = -1
    parent[1:] = attach_parents(rng_tree.random(n), np.arange(n), initial_mass)
    eta = np.zeros((n + 1, offset.dim))
    eta[1:] = offset.sample(rng_off, n)
    top = np.flatnonzero(parent == 0)
    eta[top] = draw_initial(rng_init, top.shape[0])
    return propagate(parent, eta)[1:]


def _atomic_drawer(mu0: AtomicMeasure):
    def draw(rng, k):
        x = rng.random(k) * mu0.total_mass
        idx = np.minimum(np.searchsorted(mu0.cumulative, x, side="right"), len(mu0) - 1)
        return mu0.points[idx]
    return draw


@dataclass
class DriftRow:
    n: int
    s: float
    median_gap: float
    mean_gap: float
    se: float


def _check_drift_inputs(mu0_a, mu0_b, offset, n_grid):
    ma, mb = mu0_a.total_mass, mu0_b.total_mass
    if abs(ma - mb) > 1e-12 * max(ma, mb):
        raise ConfigError(f"initial compositions must have equal mass ({ma} vs {mb})")
    if offset.dim != 1:
        raise ConfigError("the drift experiment uses a scalar frequency; offsets must be 1-d")
    n_grid = sorted(int(n) for n in n_grid)
    if n_grid[0] < 2:
        raise ConfigError("n_grid values must be at least 2 (log n > 0)")
    return n_grid


def drift_gaps(mu0_a: AtomicMeasure, mu0_b: AtomicMeasure, offset: OffsetDistribution,
               n_grid, s: float, units, seed: int, coupled: bool = True) -> np.ndarray:
    """Gaps for the urn pairs numbered ``units``; shape ``(len(units), len(n_grid))``."""
    from .rng import Stream, stream

    n_grid = _check_drift_inputs(mu0_a, mu0_b, offset, n_grid)
    mass = mu0_a.total_mass
    cuts = np.array(n_grid)
    s_n = s / np.sqrt(np.log(cuts))
    cols = np.arange(len(n_grid))
    units = list(units)
    gaps = np.zeros((len(units), len(n_grid)))
    for row, unit in enumerate(units):
        chats = []
        for side, mu0 in enumerate((mu0_a, mu0_b)):
            shift = 0 if coupled else 8 * side
            z = drw_centres(cuts[-1], mass, _atomic_drawer(mu0), offset,
                            stream(seed, unit, Stream.TREE + shift), stream(seed, unit, Stream.OFFSET + shift),
                            stream(seed, unit, Stream.INITIAL + 8 * side))
            ph = np.exp(1j * z[:, 0][:, None] * s_n[None, :])
            csum = np.cumsum(ph, axis=0)[cuts - 1, cols]
            chats.append((fourier(mu0, s_n) + offset.cf(s_n) * csum) / (mass + cuts))
        gaps[row] = np.abs(chats[0] - chats[1])
    return gaps


def summarize_drift(n_grid, s: float, gaps: np.ndarray) -> list:
    n_grid = sorted(int(n) for n in n_grid)
    pairs = gaps.shape[0]
    rows = []
    for j, n in enumerate(n_grid):
        g = gaps[:, j]
        se = float(g.std(ddof=1) / np.sqrt(pairs)) if pairs > 1 else float("nan")
        rows.append(DriftRow(n, float(s / np.sqrt(np.log(n))), float(np.median(g)), float(g.mean()), se))
    return rows


def initial_condition_drift(mu0_a: AtomicMeasure, mu0_b: AtomicMeasure, offset: OffsetDistribution,
                            n_grid, s: float, pairs: int, seed: int, coupled: bool = True) -> list:
    """Gap ``|nu_n(s_n) - nu'_n(s_n)|`` between normalised DRW compositions started
    from ``mu0_a`` and ``mu0_b``, ``s_n = s / sqrt(log n)``, over ``pairs`` pairs.

    With ``coupled`` the two urns of a pair share their tree and offset streams
    and differ only in the initial draws, which isolates the effect of ``mu0``.
    """
    gaps = drift_gaps(mu0_a, mu0_b, offset, n_grid, s, range(pairs), seed, coupled)
    return summarize_drift(n_grid, s, gaps)


def composition_cf(obj, s):
    """Fourier transform of an urn state's composition."""
    if isinstance(obj, SrwUrnState):
        return fourier(obj.composition, s)
    if isinstance(obj, DrwUrnState):
        return DrwTrace(obj.composition, 0, obj).fourier_at(obj.step, s)
    raise TypeError(f"not an urn state: {type(obj).__name__}")


__all__ = [
    "SrwUrnState", "DrwUrnState", "SrwTrace", "DrwTrace", "srw_step", "drw_step", "run_srw", "run_drw",
    "lux_transport", "drw_centres", "drift_gaps", "summarize_drift", "initial_condition_drift", "DriftRow",
    "composition_cf",
]
