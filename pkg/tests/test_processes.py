import io
import itertools

import numpy as np
import pytest

from tsustat.processes import (FiniteMarkovChain, ProcessSpec, SeriesPath, cycle_chain,
                               generate, generate_batch, iid_chain, m_dependent_from_iid,
                               path_from_csv, random_chain, truncate_to_finite,
                               two_state_chain)


def test_chain_validation():
    with pytest.raises(ValueError):
        FiniteMarkovChain(np.array([[0.5, 0.4], [0.5, 0.5]]))  # rows not stochastic
    with pytest.raises(ValueError):
        FiniteMarkovChain(np.array([[1.2, -0.2], [0.5, 0.5]]))
    chain = two_state_chain(0.25)
    assert chain.stationary == pytest.approx([0.5, 0.5], abs=1e-12)
    skew = two_state_chain(0.1, 0.3)
    assert skew.stationary == pytest.approx([0.75, 0.25], abs=1e-10)
    np.testing.assert_allclose(skew.stationary @ skew.transition, skew.stationary,
                               atol=1e-12)


def test_power_cache():
    chain = two_state_chain(0.25)
    P3 = chain.power(3)
    assert chain.power(3) is P3
    np.testing.assert_allclose(P3, np.linalg.matrix_power(chain.transition, 3))


def test_spec_validation():
    with pytest.raises(ValueError):
        ProcessSpec(kind="ar1", seed=0, ar_coefficient=1.0)
    with pytest.raises(ValueError):
        ProcessSpec(kind="nope", seed=0)
    with pytest.raises(ValueError):
        ProcessSpec(kind="gaussian_copula_vector", seed=0, dimension=2,
                    temporal_coefficient=0.5,
                    cross_correlation=np.array([[1.0, 0.4], [0.6, 1.0]]))
    with pytest.raises(ValueError):
        ProcessSpec(kind="gaussian_copula_vector", seed=0, dimension=2,
                    temporal_coefficient=0.5,
                    cross_correlation=np.array([[1.0, 2.0], [2.0, 1.0]]))


@pytest.mark.parametrize("kind,kwargs", [
    ("iid", {}),
    ("ar1", {"ar_coefficient": 0.5}),
    ("m_dependent", {"window": 2}),
    ("gaussian_copula_vector", {"dimension": 3, "temporal_coefficient": 0.4}),
])
def test_generation_deterministic(kind, kwargs):
    spec = ProcessSpec(kind=kind, seed=42, **kwargs)
    a = generate(spec, 20)
    b = generate(spec, 20)
    np.testing.assert_array_equal(a.values, b.values)
    batch = generate_batch(spec, 20, 3)
    np.testing.assert_array_equal(a.values, batch[0])
    # splitting a batch does not change replications
    tail = generate_batch(spec, 20, 2, rep_offset=1)
    np.testing.assert_array_equal(batch[1:], tail)


def test_deterministic_cycle_path():
    spec = ProcessSpec(kind="markov_chain", seed=1, chain=two_state_chain(1.0))
    states = generate(spec, 4).states
    first = states[0]
    np.testing.assert_array_equal(states, [first, 1 - first, first, 1 - first])


def test_ar1_sample_autocorrelation():
    spec = ProcessSpec(kind="ar1", seed=2024, ar_coefficient=0.5)
    x = generate(spec, 1_000_000).values[:, 0]
    lag1 = np.corrcoef(x[:-1], x[1:])[0, 1]
    assert abs(lag1 - 0.5) < 0.01


def test_markov_marginals_time_invariant():
    chain = two_state_chain(0.3, 0.1)
    spec = ProcessSpec(kind="markov_chain", seed=11, chain=chain)
    paths = generate_batch(spec, 5, 40_000)
    freqs = (paths == 0).mean(axis=0)
    # strict stationarity: every position matches pi_0 within Monte Carlo error
    se = np.sqrt(chain.stationary[0] * (1 - chain.stationary[0]) / 40_000)
    assert np.max(np.abs(freqs - chain.stationary[0])) < 4 * se


def test_copula_marginals_uniform_and_correlated():
    R = np.array([[1.0, 0.8], [0.8, 1.0]])
    spec = ProcessSpec(kind="gaussian_copula_vector", seed=5, dimension=2,
                       temporal_coefficient=0.6, cross_correlation=R)
    u = generate_batch(spec, 200, 200).reshape(-1, 2)
    assert 0.0 < u.min() and u.max() < 1.0
    assert abs(u[:, 0].mean() - 0.5) < 0.01
    assert np.corrcoef(u[:, 0], u[:, 1])[0, 1] > 0.5


def test_truncate_examples():
    p = SeriesPath(values=np.array([-1.0, 0.5, 3.0]))
    np.testing.assert_array_equal(truncate_to_finite(p, [0.0, 2.0]).states, [0, 1, 2])
    const = SeriesPath(values=np.full(5, 0.7))
    np.testing.assert_array_equal(truncate_to_finite(const, [0.0]).states, np.ones(5))
    with pytest.raises(ValueError):
        truncate_to_finite(p, [])
    with pytest.raises(ValueError):
        truncate_to_finite(p, [1.0, 1.0])


def test_truncate_median_split():
    spec = ProcessSpec(kind="ar1", seed=9, ar_coefficient=0.5)
    path = generate(spec, 100_000)
    cut = float(np.median(path.values))
    states = truncate_to_finite(path, [cut]).states
    assert abs((states == 0).mean() - 0.5) < 0.02


def test_m_dependent_windowed_sums():
    base = SeriesPath(values=np.array([1.0, 2.0, 3.0, 4.0]))
    out = m_dependent_from_iid(base, 1, lambda w: w.sum(axis=1))
    np.testing.assert_allclose(out.values[:, 0], [3.0, 5.0, 7.0])
    ident = m_dependent_from_iid(base, 0, lambda w: w[:, 0])
    np.testing.assert_allclose(ident.values, base.values)
    with pytest.raises(ValueError):
        m_dependent_from_iid(base, -1, lambda w: w.sum(axis=1))


def test_m_dependent_decorrelates_beyond_window():
    m = 2
    spec = ProcessSpec(kind="iid", seed=3)
    base = generate(spec, 100_000 + m)
    out = m_dependent_from_iid(base, m, lambda w: w.sum(axis=1))
    x = out.values[:, 0]
    lag = m + 1
    r = np.corrcoef(x[:-lag], x[lag:])[0, 1]
    assert abs(r) < 3.0 / np.sqrt(x.size)


def test_m_dependent_conditional_independence_enumeration():
    """Exact check on a finite-alphabet base: windows more than m apart are
    independent given an intermediate window, by joint-pmf enumeration."""
    m = 1
    # base: 5 iid uniform bits; windows W_t = B_t + B_{t+1}
    # X = W_0, Z = W_2, Y = W_3; X is independent of (Y, Z), so X and Y must
    # be conditionally independent given Z
    joint = {}
    for bits in itertools.product((0, 1), repeat=5):
        w = [bits[t] + bits[t + 1] for t in range(4)]
        key = (w[0], w[3], w[2])
        joint[key] = joint.get(key, 0.0) + 1.0 / 32
    pz = {}
    pxz = {}
    pyz = {}
    for (x, y, z), pr in joint.items():
        pz[z] = pz.get(z, 0.0) + pr
        pxz[(x, z)] = pxz.get((x, z), 0.0) + pr
        pyz[(y, z)] = pyz.get((y, z), 0.0) + pr
    for (x, y, z), pr in joint.items():
        assert pr * pz[z] == pytest.approx(pxz[(x, z)] * pyz[(y, z)], abs=1e-14)


def test_csv_round_trip():
    spec = ProcessSpec(kind="gaussian_copula_vector", seed=8, dimension=2,
                       temporal_coefficient=0.3)
    path = generate(spec, 10)
    buf = io.StringIO()
    path.to_csv(buf)
    buf.seek(0)
    again = path_from_csv(buf)
    np.testing.assert_array_equal(path.values, again.values)
    assert buf.getvalue().splitlines()[0] == "t,x1,x2"

    chain_path = SeriesPath(states=np.array([0, 1, 1, 0]))
    buf = io.StringIO()
    chain_path.to_csv(buf)
    buf.seek(0)
    np.testing.assert_array_equal(path_from_csv(buf).states, chain_path.states)


def test_random_chain_is_valid():
    rng = np.random.default_rng(0)
    for s in (2, 3, 4):
        chain = random_chain(s, rng)
        assert chain.state_count == s
        np.testing.assert_allclose(chain.transition.sum(axis=1), 1.0, atol=1e-12)


def test_iid_and_cycle_factories():
    c = iid_chain([0.2, 0.8])
    np.testing.assert_allclose(c.transition[0], c.transition[1])
    cyc = cycle_chain(3)
    np.testing.assert_allclose(cyc.stationary, [1 / 3] * 3)
