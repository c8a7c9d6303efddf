import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rwurn.errors import ConfigError, UnsupportedOperation
from rwurn.offsets import (Cauchy, DeterministicPair, DiscreteAtoms, Gaussian, IndependentPair, JointDiscrete,
                           PointMass, Product, SamplerOffset, UniformBox, cf, find_cf_domain, law_from_json,
                           psi, sample_offset, sample_pair, tilde_cf)
from rwurn.rng import stream

BUILTIN = [
    PointMass(1.0),
    PointMass([1.0, -2.0]),
    DiscreteAtoms([[-1.0], [0.5], [3.0]], [0.2, 0.5, 0.3]),
    Gaussian([0.0], [[1.0]]),
    Gaussian([1.0, -0.5], [[2.0, 0.3], [0.3, 0.5]]),
    UniformBox([-1.0], [2.0]),
    UniformBox([0.0, -1.0], [1.0, 3.0]),
    Product([Gaussian([0.5], [[1.0]]), UniformBox([0.0], [1.0])]),
]


def test_cf_examples():
    assert cf(PointMass(1), 0.0) == 1
    assert abs(cf(PointMass(1), math.pi) - (-1)) < 1e-15
    assert abs(cf(Gaussian([0], [[1]]), 1.0) - math.exp(-0.5)) < 1e-15


@pytest.mark.parametrize("law", BUILTIN, ids=lambda l: type(l).__name__)
def test_cf_basic_invariants(law):
    zero = np.zeros(law.dim)
    assert law.cf(zero) == 1
    rng = stream(5, 0, 0)
    s = rng.normal(size=(1000, law.dim)) * 3
    v = law.cf(s)
    assert np.all(np.abs(v) <= 1 + 1e-12)
    np.testing.assert_allclose(law.cf(-s), np.conj(v), atol=1e-12)


@pytest.mark.parametrize("law", BUILTIN, ids=lambda l: type(l).__name__)
def test_moments_match_monte_carlo(law):
    rng = stream(9, 0, 0)
    n = 10 ** 6
    x = law.sample(rng, n)
    mean = x.mean(axis=0)
    se = x.std(axis=0) / math.sqrt(n)
    assert np.all(np.abs(mean - law.mean) <= 4 * se + 1e-12)
    for i in range(law.dim):
        for j in range(law.dim):
            prod = x[:, i] * x[:, j]
            assert abs(prod.mean() - law.second_moment[i, j]) <= 4 * prod.std() / math.sqrt(n) + 1e-12
    cov = law.covariance
    assert np.all(np.linalg.eigvalsh((cov + cov.T) / 2) >= -1e-12)


@pytest.mark.parametrize("law", BUILTIN, ids=lambda l: type(l).__name__)
def test_cf_matches_empirical(law):
    rng = stream(13, 0, 0)
    n = 200_000
    x = law.sample(rng, n)
    s = np.full(law.dim, 0.7)
    ph = np.exp(1j * x @ s)
    target = law.cf(s)
    assert abs(ph.real.mean() - target.real) <= 4 * ph.real.std() / math.sqrt(n) + 1e-12
    assert abs(ph.imag.mean() - target.imag) <= 4 * ph.imag.std() / math.sqrt(n) + 1e-12


def test_sampling_examples():
    rng = stream(1, 0, 0)
    assert np.all(sample_offset(PointMass([2.0, 3.0]), rng, 10) == [2.0, 3.0])
    left, right = sample_pair(DeterministicPair(-1, 1), rng)
    assert left.tolist() == [-1.0] and right.tolist() == [1.0]
    x = Gaussian([0], [[1]]).sample(stream(2, 0, 0), 10 ** 6)[:, 0]
    assert abs(x.mean()) <= 4 / math.sqrt(10 ** 6)


@pytest.mark.parametrize("law", [l for l in BUILTIN if not isinstance(l, Product)], ids=lambda l: type(l).__name__)
def test_single_and_bulk_draws_agree(law):
    a = law.sample(stream(3, 0, 1), 50)
    g = stream(3, 0, 1)
    b = np.array([law.sample(g) for _ in range(50)])
    np.testing.assert_array_equal(a, b)


def test_validation():
    with pytest.raises(ConfigError):
        DiscreteAtoms([[0.0], [1.0]], [0.5, 0.6])
    with pytest.raises(ConfigError):
        Gaussian([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])  # not PSD
    with pytest.raises(ConfigError):
        Gaussian([0.0, 0.0], [[1.0, 0.1], [0.0, 1.0]])  # not symmetric
    with pytest.raises(ConfigError):
        UniformBox([1.0], [0.0])
    with pytest.raises(ConfigError):
        Cauchy()
    with pytest.raises(ConfigError):
        JointDiscrete([[0.0]], [[1.0]], [0.9])


def test_exploratory_and_sampler_only_laws():
    c = Cauchy(0.0, 1.0, exploratory=True)
    assert c.exploratory and abs(c.cf(1.0) - math.exp(-1)) < 1e-15
    with pytest.raises(UnsupportedOperation):
        c.mean
    s = SamplerOffset(lambda rng, n: rng.laplace(size=(n, 1)), dim=1)
    assert s.sample(stream(1, 0, 0), 5).shape == (5, 1)
    with pytest.raises(UnsupportedOperation):
        s.cf(0.1)
    with pytest.raises(UnsupportedOperation):
        find_cf_domain(s)


# -- paired offsets ----------------------------------------------------------------


PAIRS = [
    DeterministicPair(-1, 1),
    IndependentPair(Gaussian([-0.5], [[1.0]]), Gaussian([1.0], [[0.5]])),
    JointDiscrete([[0.0], [1.0], [-1.0]], [[2.0], [0.0], [1.0]], [0.25, 0.25, 0.5]),
]


def test_tilde_cf_examples():
    p = DeterministicPair(-1, 1)
    for s in (0.0, 0.3, 1.7):
        assert abs(tilde_cf(p, s) - (2 * math.cos(s) - 1)) < 1e-15
    q = IndependentPair(Gaussian([0], [[1]]), PointMass(0))
    assert abs(tilde_cf(q, 1.0) - math.exp(-0.5)) < 1e-15


def test_psi_examples():
    for p in PAIRS:
        assert abs(psi(p, 0.0, 0.0) - 1) < 1e-15
    p = DeterministicPair(-1, 1)
    for s1, s2 in ((0.2, 0.1), (0.3, -0.3), (1.0, 2.5)):
        # expanded by hand: phiX(s1,s2) = e^{i(s2-s1)}, phit(s) = 2 cos s - 1
        expect = (np.exp(1j * (s2 - s1)) + np.exp(1j * (s1 - s2)) + 2 * math.cos(s1 + s2) - 1
                  - (2 * math.cos(s1) - 1) - (2 * math.cos(s2) - 1))
        assert abs(psi(p, s1, s2) - expect) < 1e-12


@pytest.mark.parametrize("p", PAIRS, ids=lambda p: type(p).__name__)
def test_psi_matches_sampling(p):
    rng = stream(21, 0, 0)
    n = 10 ** 6
    left, right = p.sample(rng, n)
    s1, s2 = 0.4, -0.25
    a = np.exp(1j * s1 * left[:, 0]) + np.exp(1j * s1 * right[:, 0]) - 1
    b = np.exp(1j * s2 * left[:, 0]) + np.exp(1j * s2 * right[:, 0]) - 1
    prod = a * b
    target = psi(p, s1, s2)
    assert abs(prod.real.mean() - target.real) <= 4 * prod.real.std() / math.sqrt(n) + 1e-12
    assert abs(prod.imag.mean() - target.imag) <= 4 * prod.imag.std() / math.sqrt(n) + 1e-12


def test_pair_moments():
    p = PAIRS[1]
    assert p.mean.tolist() == [0.5]
    assert p.second_moment[0, 0] == pytest.approx(1.25 + 1.5)
    d = DeterministicPair(-1, 1)
    assert d.mean.tolist() == [0.0] and d.second_moment[0, 0] == 2.0


# -- CF domain ---------------------------------------------------------------------


def test_cf_domain_examples():
    assert find_cf_domain(PointMass(1)).delta == pytest.approx(math.acos(0.75), rel=1e-4)
    assert find_cf_domain(Gaussian([0], [[1]])).delta == pytest.approx(math.sqrt(2 * math.log(4 / 3)), rel=1e-4)
    assert find_cf_domain(DeterministicPair(-1, 1)).delta == pytest.approx(math.acos(7 / 8), rel=1e-4)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(-3, 3))
def test_cf_domain_is_verified(sigma, mu):
    law = Gaussian([mu], [[sigma ** 2]])
    dom = find_cf_domain(law)
    r = np.linspace(0, dom.delta, 2001)
    assert np.all(np.real(law.cf(r)) >= 0.75 - 1e-9)
    assert np.real(law.cf(dom.delta * 1.001)) < 0.75 + 1e-3


def test_cf_domain_multi_dimensional_needs_direction():
    law = Gaussian([0, 0], [[1.0, 0.0], [0.0, 4.0]])
    with pytest.raises(ValueError):
        find_cf_domain(law)
    d1 = find_cf_domain(law, [1, 0]).delta
    d2 = find_cf_domain(law, [0, 3]).delta
    assert d1 == pytest.approx(math.sqrt(2 * math.log(4 / 3)), rel=1e-4)
    assert d2 == pytest.approx(d1 / 2, rel=1e-4)


def test_json_specs():
    g = law_from_json({"type": "gaussian", "mean": [0], "cov": [[1]]})
    assert isinstance(g, Gaussian)
    assert isinstance(law_from_json({"type": "point", "c": [1]}), PointMass)
    p = law_from_json({"type": "pair_det", "l": [-1], "r": [1]})
    assert isinstance(p, DeterministicPair)
    for law in BUILTIN + PAIRS:
        back = law_from_json(law.to_json())
        assert abs(complex(back.cf(np.full(law.dim, 0.3)) if hasattr(back, "cf") else 0)
                   - complex(law.cf(np.full(law.dim, 0.3)) if hasattr(law, "cf") else 0)) < 1e-15
        if hasattr(law, "cf_joint"):
            assert abs(back.cf_joint(0.3, -0.2) - law.cf_joint(0.3, -0.2)) < 1e-15
    with pytest.raises(ConfigError):
        law_from_json({"type": "nope"})
    with pytest.raises(ConfigError):
        law_from_json({"type": "point"})
