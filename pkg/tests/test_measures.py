import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from rwurn.errors import ConfigError
from rwurn.measures import (AtomicMeasure, ConvolvedMeasure, RescaleParams, fourier, kernel_compose,
                            measure_from_json, measure_to_json, normalize, rescale, sample, total_mass)
from rwurn.offsets import Gaussian, PointMass, UniformBox
from rwurn.rng import stream


def atoms(xs, ws):
    return AtomicMeasure(np.asarray(xs, float).reshape(-1, 1), ws)


# -- total mass -----------------------------------------------------------------


def test_total_mass_examples():
    assert total_mass(atoms([0], [2.0])) == 2.0
    assert total_mass(atoms([0, 1], [1.0, 3.0])) == 4.0
    cm = ConvolvedMeasure(atoms([0], [1.5]), atoms([0, 1, 2], [1, 1, 1]), Gaussian([0], [[1]]))
    assert total_mass(cm) == 4.5


def test_total_mass_empty_raises():
    with pytest.raises(ValueError, match="zero measure"):
        total_mass(AtomicMeasure(dim=1))


def test_weights_must_be_positive():
    with pytest.raises(ConfigError):
        atoms([0, 1], [1.0, 0.0])
    m = atoms([0], [1.0])
    with pytest.raises(ConfigError):
        m.append([1.0], -2.0)


def test_dimension_mismatch_rejected():
    m = AtomicMeasure(np.zeros((2, 2)))
    with pytest.raises(ConfigError):
        m.append([1.0, 2.0, 3.0])


# -- normalize ----------------------------------------------------------------------


def test_normalize_examples():
    n = normalize(atoms([0, 1], [2.0, 2.0]))
    assert n.weights.tolist() == [0.5, 0.5]
    n = normalize(atoms([5], [7.0]))
    assert n.points.tolist() == [[5.0]] and n.weights.tolist() == [1.0]
    cm = normalize(ConvolvedMeasure(atoms([0], [1.0]), atoms([1, 2, 3], [1, 1, 1]), PointMass(1)))
    assert cm.initial.weights.tolist() == [0.25]
    assert cm.shifted.weights.tolist() == [0.25] * 3


def test_normalize_zero_raises():
    with pytest.raises(ValueError, match="zero measure"):
        normalize(AtomicMeasure(dim=2))


measures_st = st.lists(
    st.tuples(st.floats(-50, 50), st.floats(1e-3, 1e3)), min_size=1, max_size=30
).map(lambda xs: atoms([x for x, _ in xs], [w for _, w in xs]))


@given(measures_st)
def test_normalize_idempotent_and_unit_mass(m):
    once = normalize(m)
    twice = normalize(once)
    assert abs(once.total_mass - 1.0) <= 1e-12
    np.testing.assert_allclose(twice.weights, once.weights, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(twice.points, once.points)


# -- rescale / fourier --------------------------------------------------------------


def test_rescale_examples():
    m = atoms([3.0, -1.0], [1.0, 2.0])
    ident = rescale(m, RescaleParams(1.0, (0.0,)))
    np.testing.assert_array_equal(ident.points, m.points)
    np.testing.assert_array_equal(ident.weights, m.weights)
    assert rescale(atoms([3.0], [1.0]), RescaleParams(2.0, (1.0,))).points[0, 0] == 1.0
    with pytest.raises(ConfigError):
        RescaleParams(0.0, (0.0,))


def test_fourier_examples():
    m = atoms([0.3, -2.0, 7.0], [1.0, 2.5, 0.5])
    assert fourier(m, 0.0) == pytest.approx(4.0, rel=1e-12)
    z = fourier(atoms([1.0], [1.0]), math.pi)
    assert abs(z - (-1 + 0j)) < 1e-15


@settings(max_examples=100)
@given(measures_st, st.floats(0.05, 20), st.floats(-20, 20), st.floats(-5, 5))
def test_rescale_fourier_commutation(m, a, b, s):
    lhs = fourier(rescale(m, RescaleParams(a, (b,))), s)
    rhs = np.exp(-1j * s * b / a) * fourier(m, s / a)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, m.total_mass)


@given(measures_st)
def test_fourier_at_zero_is_mass(m):
    assert abs(fourier(m, 0.0) - m.total_mass) <= 1e-12 * m.total_mass


def test_fourier_multi_dimensional_and_vectorised():
    m = AtomicMeasure([[0.0, 1.0], [2.0, -1.0]], [1.0, 3.0])
    s = np.array([[0.1, 0.2], [0.0, 0.0]])
    out = fourier(m, s)
    assert out.shape == (2,)
    expected = np.exp(1j * 0.2) + 3 * np.exp(1j * (0.2 - 0.2))
    assert abs(out[0] - expected) < 1e-14 and abs(out[1] - 4.0) < 1e-14


def test_convolved_fourier_factorises():
    law = Gaussian([0.5], [[2.0]])
    cm = ConvolvedMeasure(atoms([1.0], [1.5]), atoms([0.0, 2.0], [1.0, 3.0]), law)
    for s in (0.0, 0.3, -1.1):
        expected = 1.5 * np.exp(1j * s) + (1 + 3 * np.exp(2j * s)) * law.cf(s)
        assert abs(fourier(cm, s) - expected) < 1e-13


def test_convolved_fourier_matches_sampling():
    # direct sampling oracle: mean of exp(isX) over 10^6 draws, vectorised
    law = UniformBox([-1.0], [2.0])
    cm = ConvolvedMeasure(atoms([3.0], [1.0]), atoms([0.0, 1.0], [1.0, 2.0]), law)
    rng = stream(7, 0, 0)
    n = 10 ** 6
    u = rng.random(n) * 4.0
    centre = np.where(u < 1.0, 3.0, np.where(u < 2.0, 0.0, 1.0))
    x = centre + np.where(u < 1.0, 0.0, law.sample(rng, n)[:, 0])
    s = 0.7
    ph = np.exp(1j * s * x)
    est = ph.mean()
    target = fourier(normalize(cm), s)
    assert abs(est.real - target.real) <= 4 * ph.real.std() / math.sqrt(n)
    assert abs(est.imag - target.imag) <= 4 * ph.imag.std() / math.sqrt(n)


# -- sampling -----------------------------------------------------------------------


def test_sample_single_atom(rng):
    m = atoms([4.2], [0.3])
    assert all(sample(m, rng)[0] == 4.2 for _ in range(20))


def test_sample_frequency():
    m = atoms([0, 1], [1.0, 3.0])
    rng = stream(3, 0, 0)
    n = 10 ** 5
    hits = sum(sample(m, rng)[0] == 1.0 for _ in range(n))
    p = hits / n
    assert abs(p - 0.75) <= 4 * math.sqrt(0.75 * 0.25 / n)


def test_sample_chi_square_five_atoms():
    w = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    m = atoms(np.arange(5.0), w)
    rng = stream(11, 0, 0)
    counts = np.zeros(5)
    for _ in range(10 ** 5):
        counts[int(sample(m, rng)[0])] += 1
    p = stats.chisquare(counts, 10 ** 5 * w / w.sum()).pvalue
    assert p >= 1e-3


def test_sample_convolved_point_kernel(rng):
    cm = kernel_compose(atoms([0.0], [1.0]), PointMass(1))
    assert all(sample(cm, rng)[0] == 1.0 for _ in range(20))


# -- kernel composition --------------------------------------------------------------


def test_kernel_compose_identity_kernel(rng):
    m = atoms([0.0, 5.0], [1.0, 1.0])
    cm = kernel_compose(m, PointMass(0))
    assert cm.total_mass == m.total_mass
    draws = {sample(cm, rng)[0] for _ in range(200)}
    assert draws == {0.0, 5.0}


@given(measures_st, st.floats(-3, 3))
def test_kernel_compose_fourier(m, s):
    law = Gaussian([0.2], [[0.7]])
    cm = kernel_compose(m, law)
    assert cm.total_mass == m.total_mass
    assert abs(fourier(cm, s) - fourier(m, s) * law.cf(s)) <= 1e-12 * max(1.0, m.total_mass)


# -- growth, prefixes, compact ------------------------------------------------------


def test_append_and_extend_agree_bitwise():
    rng = stream(1, 0, 0)
    w = rng.random(1000) + 0.1
    x = rng.normal(size=(1000, 1))
    a = AtomicMeasure(dim=1)
    for xi, wi in zip(x, w):
        a.append(xi, wi)
    b = AtomicMeasure(dim=1)
    b.extend(x[:300], w[:300])
    b.extend(x[300:], w[300:])
    np.testing.assert_array_equal(a.cumulative, b.cumulative)
    np.testing.assert_array_equal(a.points, b.points)


def test_prefix_and_compact():
    m = atoms([1.0, 2.0, 1.0], [1.0, 2.0, 3.0])
    assert len(m.prefix(2)) == 2 and m.prefix(2).total_mass == 3.0
    c = m.compact()
    assert c.points[:, 0].tolist() == [1.0, 2.0] and c.weights.tolist() == [4.0, 2.0]
    assert len(m) == 3  # never merged implicitly


# -- JSON ---------------------------------------------------------------------------


def test_json_round_trip():
    m = AtomicMeasure([[0.0, 1.0], [2.0, 3.0]], [1.0, 0.5])
    back = measure_from_json(json.loads(json.dumps(measure_to_json(m))))
    np.testing.assert_array_equal(back.points, m.points)
    np.testing.assert_array_equal(back.weights, m.weights)
    cm = ConvolvedMeasure(atoms([1.0], [2.0]), atoms([0.0], [1.0]), Gaussian([0], [[1]]))
    back = measure_from_json(measure_to_json(cm))
    assert isinstance(back, ConvolvedMeasure) and back.total_mass == 3.0
    assert abs(fourier(back, 0.4) - fourier(cm, 0.4)) < 1e-15


def test_json_errors():
    with pytest.raises(ConfigError):
        measure_from_json({"atoms": []})
    with pytest.raises(ConfigError):
        measure_from_json({"dim": 1, "atoms": [{"x": [0.0]}]})
