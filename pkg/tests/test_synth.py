import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from dagfalsify.citests import pcorr_test
from dagfalsify.graph import Dag
from dagfalsify.synth import ScmSpec, er_dag, sample_linear, sample_mlp, sample_noise, sample_scm

CHAIN = Dag(3, {(0, 1), (1, 2)})


def test_er_dag_extremes():
    for seed in range(20):
        assert er_dag(10, 0, seed).edges == frozenset()
        assert len(er_dag(10, 9, seed).edges) == 45
    assert er_dag(1, 0, 0).n == 1
    with pytest.raises(ValueError):
        er_dag(10, 9.5, 0)
    with pytest.raises(ValueError):
        er_dag(10, -1, 0)


def test_er_dag_mean_edge_count():
    counts = np.array([len(er_dag(20, 2, s).edges) for s in range(500)])
    p = 2 / 19
    se = np.sqrt(190 * p * (1 - p) / 500)
    assert abs(counts.mean() - 20) < 3.3 * se


def test_er_dag_orientation_carries_no_index_information():
    forward = total = 0
    for s in range(300):
        edges = er_dag(10, 2, s).edges
        forward += sum(a < b for a, b in edges)
        total += len(edges)
    assert stats.binomtest(forward, total, 0.5).pvalue > 0.001


def test_er_dag_always_acyclic():
    rng = np.random.default_rng(0)
    for s in range(10_000):
        n = int(rng.integers(1, 9))
        g = er_dag(n, float(rng.uniform(0, n - 1)), s)
        assert len(g.topological_order) == n


def test_er_dag_deterministic():
    assert er_dag(15, 3, 7) == er_dag(15, 3, 7)


def test_gaussian_noise_moments():
    x = sample_noise("gaussian", {"mean": 0.0, "variance": 0.1}, 100_000, np.random.default_rng(1))
    assert abs(x.mean()) < 3 * np.sqrt(0.1 / 100_000)
    # Var(s^2) = 2 sigma^4 / (N - 1) for Gaussian data
    assert abs(x.var(ddof=1) - 0.1) < 3 * np.sqrt(2 * 0.1**2 / 99_999)


def test_uniform_noise_moments():
    x = sample_noise("uniform", {"low": -1, "high": 1}, 100_000, np.random.default_rng(2))
    assert x.min() >= -1 and x.max() < 1
    assert x.var() == pytest.approx(1 / 3, abs=0.01)


def test_mixture_noise_is_bimodal():
    x = sample_noise("gaussian_mixture", {"means": [-2, 2], "weights": [0.5, 0.5]}, 100_000,
                     np.random.default_rng(3))
    assert abs(x.mean()) < 0.03
    hist, edges = np.histogram(x, bins=np.linspace(-3, 3, 13))
    centre = hist[5:7].sum()
    assert hist[1] > 10 * max(centre, 1) and hist[-2] > 10 * max(centre, 1)


@pytest.mark.parametrize("kind,params", [
    ("gaussian", {"variance": -1}),
    ("uniform", {"low": 1, "high": 0}),
    ("gaussian_mixture", {"weights": [0.3, 0.3]}),
    ("gaussian_mixture", {"means": [0.0], "variances": [1.0, 1.0], "weights": [1.0]}),
    ("gaussian", {"scale": 1}),
    ("laplace", {}),
])
def test_invalid_noise_params(kind, params):
    with pytest.raises(ValueError):
        sample_noise(kind, params, 10, np.random.default_rng(0))


def test_scm_spec_validation():
    with pytest.raises(ValueError):
        ScmSpec(CHAIN, mechanism="quadratic")
    with pytest.raises(ValueError):
        ScmSpec(CHAIN, weight_range=(1.0, 1.0))
    with pytest.raises(ValueError):
        ScmSpec(CHAIN, mechanism="mlp", mlp_width_range=(1, 10))


def test_empty_graph_columns_are_iid_noise():
    d = sample_linear(ScmSpec(Dag(4, set()), seed=4), 20_000)
    c = np.corrcoef(d.values, rowvar=False)
    assert np.max(np.abs(c - np.eye(4))) < 0.04
    assert np.allclose(d.values.var(axis=0), 0.1, rtol=0.05)


def test_linear_propagation_is_exact():
    spec = ScmSpec(CHAIN, seed=5)
    w = spec.parameters()
    d = sample_linear(spec, 200)
    x = d.values
    rng = np.random.default_rng([5, 1])
    noise = [sample_noise("gaussian", {}, 200, rng) for _ in range(3)]
    assert np.array_equal(x[:, 0], noise[0])
    assert np.array_equal(x[:, 1], x[:, [0]] @ w[1] + noise[1])
    assert np.array_equal(x[:, 2], x[:, [1]] @ w[2] + noise[2])


def test_linear_chain_covariance_matches_closed_form():
    spec = ScmSpec(CHAIN, seed=6)
    _, (w1,), (w2,) = spec.parameters()
    s = 0.1
    v1 = w1**2 * s + s
    cov = np.array([
        [s, w1 * s, w1 * w2 * s],
        [w1 * s, v1, w2 * v1],
        [w1 * w2 * s, w2 * v1, w2**2 * v1 + s],
    ])
    N = 10_000
    emp = np.cov(sample_linear(spec, N).values, rowvar=False)
    se = np.sqrt((np.outer(np.diag(cov), np.diag(cov)) + cov**2) / N)
    assert np.all(np.abs(emp - cov) < 3 * se)


def test_mlp_root_column_is_noise():
    spec = ScmSpec(CHAIN, mechanism="mlp", seed=7)
    x0 = sample_mlp(spec, 5000).values[:, 0]
    assert stats.kstest(x0, "norm", args=(0, np.sqrt(0.1))).pvalue > 0.001


def test_mlp_deterministic():
    g = er_dag(8, 2, 1)
    spec = ScmSpec(g, mechanism="mlp", seed=8)
    a, b = sample_mlp(spec, 300), sample_mlp(spec, 300)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, sample_mlp(ScmSpec(g, mechanism="mlp", seed=9), 300).values)


def test_mlp_child_variance_exceeds_noise():
    gaps = []
    for seed in range(100):
        x = sample_mlp(ScmSpec(Dag(2, {(0, 1)}), mechanism="mlp", seed=seed), 2000).values
        gaps.append(x[:, 1].var() - 0.1)
    assert np.mean(gaps) > 0
    assert np.mean(np.array(gaps) > 0) > 0.5


def test_mechanism_mismatch_raises():
    with pytest.raises(ValueError):
        sample_mlp(ScmSpec(CHAIN), 10)
    assert sample_scm(ScmSpec(CHAIN, mechanism="mlp"), 10).N == 10


def test_noise_kinds_flow_through_scm():
    for kind in ("uniform", "gaussian_mixture"):
        d = sample_linear(ScmSpec(Dag(2, set()), noise=kind, seed=10), 20_000)
        expected = 1 / 3 if kind == "uniform" else 4.1
        assert d.values[:, 0].var() == pytest.approx(expected, rel=0.05)


def test_generated_data_respects_d_separation():
    accepted = 0
    for seed in range(300):
        spec = ScmSpec(CHAIN, seed=seed)
        accepted += not pcorr_test(sample_linear(spec, 300), 0, 2, {1}).reject
    assert stats.binomtest(accepted, 300, 0.95).pvalue > 0.001


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 12), frac=st.floats(0, 1), seed=st.integers(0, 2**32 - 1))
def test_er_dag_expected_degree_property(n, frac, seed):
    g = er_dag(n, frac * (n - 1), seed)
    assert g.n == n and all(a != b for a, b in g.edges)
