import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from shapdag.dag import Dag, topological_order
from shapdag.data import Dataset
from shapdag.synth import (MechanismFamily, NoiseSpec, SemParams, ValidationKind, generate_sem,
                           generate_validation, partial_correlation_test, pearson, sample_dag,
                           sample_gp, sample_mechanisms, simulate)


def precision_partial(d: Dataset, a, b, cond):
    # independent route: partial correlation from the inverse covariance matrix
    cols = [a, b, *cond]
    P = np.linalg.inv(np.cov(np.column_stack([d.column(c) for c in cols]), rowvar=False))
    return -P[0, 1] / np.sqrt(P[0, 0] * P[1, 1])


def test_no_parents_allowed():
    assert sample_dag(2, max_parents=0, rng=0).edges == frozenset()


def test_mean_edge_count():
    rng = np.random.default_rng(1)
    counts = [len(sample_dag(10, rng=rng).edges) for _ in range(200)]
    assert 9.5 <= np.mean(counts) <= 20.5


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 15), st.integers(0, 6), st.integers(0, 2**32 - 1))
def test_sampled_dag_is_acyclic_with_bounded_indegree(p, k, seed):
    g = sample_dag(p, max_parents=k, rng=seed)
    assert len(topological_order(g.nodes, g.edges)) == p
    assert max(g.in_degrees().values()) <= k


def test_sample_dag_domain():
    with pytest.raises(ValueError):
        sample_dag(1)
    with pytest.raises(ValueError):
        sample_dag(3, max_parents=-1)


def test_root_is_standardized_noise():
    g = Dag(["a", "b"], [])
    d = generate_sem(g, "linear", 400, 0)
    for c in ("a", "b"):
        assert abs(d.column(c).mean()) < 1e-9 and abs(d.column(c).std() - 1) < 1e-9
    assert abs(pearson(d.column("a"), d.column("b"))) < 0.15


def test_linear_chain_correlation_closed_form():
    g = Dag(["A", "B"], [("A", "B")])
    params = SemParams(MechanismFamily.LINEAR, NoiseSpec(np.array([0.5, -1.0]), np.array([1.0, 0.7])),
                       {("A", "B"): 1.3})
    X = simulate(g, params, 20000, 3)
    a = 1.3
    sd_a, sd_b = 1.0, np.sqrt(a**2 + 0.7**2)
    assert abs(pearson(X[:, 0], X[:, 1]) - a * sd_a / sd_b) < 0.01


@pytest.mark.parametrize("family", list(MechanismFamily))
def test_families_shape_and_normalisation(family):
    rng = np.random.default_rng(5)
    g = sample_dag(10, rng=rng)
    d = generate_sem(g, family, 500 if family is not MechanismFamily.GP_MIX else 200, rng)
    assert d.shape[1] == 10
    assert np.all(np.isfinite(d.values))
    np.testing.assert_allclose(d.values.std(axis=0), 1.0, atol=1e-9)


def test_family_parse_aliases():
    assert MechanismFamily.parse("GP-Additive") is MechanismFamily.GP_ADDITIVE
    assert MechanismFamily.parse("sigmoid") is MechanismFamily.SIGMOID_MIX
    with pytest.raises(ValueError):
        MechanismFamily.parse("cubic")


def test_polynomial_degree_domain():
    with pytest.raises(ValueError):
        sample_mechanisms(Dag(["a", "b"], [("a", "b")]), "polynomial", 0, degree=0)


def test_noise_spec_ranges():
    ns = NoiseSpec.sample(1000, 0)
    assert ns.means.min() >= -2 and ns.means.max() <= 2
    assert ns.sds.min() >= 0 and ns.sds.max() <= 0.4
    with pytest.raises(ValueError):
        NoiseSpec(np.zeros(2), np.array([0.1, -0.1]))


def test_sigmoid_parameters_ranges():
    g = sample_dag(30, rng=2)
    params = sample_mechanisms(g, "sigmoid_mix", 2)
    for a, b, c in params.sigmoid.values():
        assert a >= 1 and 0.5 <= abs(b) <= 2 and -2 <= c <= 2


def test_gp_sample_handles_duplicate_inputs():
    x = np.repeat(np.linspace(-1, 1, 50), 4)
    f = sample_gp(x, np.random.default_rng(0))
    assert f.shape == (200,) and np.all(np.isfinite(f))


def test_linear_sem_markov_property():
    # non-adjacent pairs are conditionally uncorrelated given the parents of one endpoint
    rng = np.random.default_rng(8)
    g = sample_dag(6, rng=rng)
    params = sample_mechanisms(g, "linear", rng)
    d = Dataset(g.nodes, simulate(g, params, 5000, rng))
    desc = {n: g.descendants(n) for n in g.nodes}
    checked = 0
    for u in g.nodes:
        for v in g.nodes:
            if u >= v or (u, v) in g.edges or (v, u) in g.edges:
                continue
            # condition on the parents of whichever endpoint is not an ancestor of the other
            w, o = (v, u) if v not in desc[u] else (u, v)
            if o in desc[w]:
                continue
            pa = sorted(g.parents(w))
            r, _ = partial_correlation_test(d, w, o, pa)
            assert abs(r) < 0.1
            checked += 1
    assert checked > 0


@pytest.mark.parametrize("kind, expected, tol", [
    ("confounder", 0.990, 0.005),
    ("collider", 0.0, 0.02),
])
def test_validation_marginal_correlation(kind, expected, tol):
    d, g, target = generate_validation(kind, 5000, 0.10, 0)
    assert target == "Y"
    assert abs(pearson(d.column("X"), d.column("Y")) - expected) < tol


def test_validation_graphs():
    _, g, _ = generate_validation("collinear", 100, 0.1, 0)
    assert g.edges == {("X1", "Y"), ("X2", "Y")}
    _, g, _ = generate_validation(ValidationKind.CHAIN, 100, 0.1, 0)
    assert g.edges == {("X", "Z"), ("Z", "Y")}


def test_chain_noise_limit():
    d, _, _ = generate_validation("chain", 1000, 1e-9, 0)
    assert pearson(d.column("X"), d.column("Y")) > 1 - 1e-12


def test_validation_domain():
    with pytest.raises(ValueError):
        generate_validation("chain", 5)
    with pytest.raises(ValueError):
        generate_validation("loop", 50)


def test_collinear_features_highly_correlated():
    d, _, _ = generate_validation("collinear", 5000, 0.1, 0)
    assert pearson(d.column("X1"), d.column("X2")) > 0.99


def test_partial_correlation_empty_set_is_pearson():
    d, _, _ = generate_validation("chain", 500, 0.3, 1)
    r, p = partial_correlation_test(d, "X", "Y")
    assert abs(r - pearson(d.column("X"), d.column("Y"))) < 1e-12
    assert 0 <= p <= 1


@pytest.mark.parametrize("kind, a, cond", [
    ("confounder", "X", ["Z"]), ("collider", "X", ["Z"]), ("chain", "Z", ["X"]), ("collinear", "X1", ["X2"]),
])
def test_partial_correlation_matches_precision_matrix(kind, a, cond):
    d, _, _ = generate_validation(kind, 2000, 0.1, 4)
    r, _ = partial_correlation_test(d, a, "Y", cond)
    assert abs(r - precision_partial(d, a, "Y", cond)) < 1e-9


def test_confounder_and_collider_partials():
    d, _, _ = generate_validation("confounder", 5000, 0.1, 2)
    assert abs(partial_correlation_test(d, "X", "Y", ["Z"])[0]) < 0.05
    d, _, _ = generate_validation("collider", 5000, 0.1, 2)
    assert abs(partial_correlation_test(d, "X", "Y", ["Z"])[0] + 0.990) < 0.005


def test_fisher_z_uniform_under_null():
    rng = np.random.default_rng(9)
    ps = []
    for _ in range(1000):
        v = rng.standard_normal((60, 3))
        d = Dataset(("a", "b", "c"), v)
        ps.append(partial_correlation_test(d, "a", "b", ["c"])[1])
    assert stats.kstest(ps, "uniform").statistic < 0.05


def test_partial_correlation_errors():
    d = Dataset(("a", "b", "c", "e"), np.column_stack([np.arange(10.0), np.arange(10.0) ** 2,
                                                      np.ones(10) * 2, np.arange(10.0) * 3]))
    with pytest.raises(ValueError):
        partial_correlation_test(d, "a", "a")
    with pytest.raises(ValueError):
        partial_correlation_test(d, "a", "b", ["a"])
    with pytest.raises(np.linalg.LinAlgError):
        partial_correlation_test(d, "b", "c", ["a", "e"])
