import itertools
import math

import numpy as np
import pytest
from scipy import stats

import oracles as O
from vinefuse import bicop
from vinefuse.bicop import CopulaFamily, PairCopula
from vinefuse.errors import InvalidInputError
from vinefuse.vine import (
    VineEdge,
    VineModel,
    VineStructure,
    conditional_cdf,
    validate_structure,
)

GAUSS = CopulaFamily.GAUSSIAN


def edge(a, b, cond=(), c=None):
    return VineEdge((a, b), frozenset(cond), c)


def five_structure():
    return VineStructure.from_edges(5, [edge(*p, d) for p, d in O.FIVE_EDGES])


def k3_model(c01, c12, c02_1):
    return VineModel(VineStructure.from_edges(3, [
        edge(0, 1, (), c01), edge(1, 2, (), c12), edge(0, 2, (1,), c02_1)]))


# ---------------------------------------------------------------- validation


def test_five_structure_is_valid():
    assert validate_structure(five_structure()) is None


def test_smallest_vine_is_valid():
    assert validate_structure(VineStructure.from_edges(2, [edge(0, 1)])) is None


def test_t1_cycle_reported_at_t1():
    s = VineStructure(3, ((edge(0, 1), edge(1, 2), edge(0, 2)), (edge(0, 2, (1,)),)))
    v = validate_structure(s)
    assert v is not None and v.tree == 1


def test_t1_cycle_with_right_edge_count():
    s = VineStructure(4, (
        (edge(0, 1), edge(1, 2), edge(0, 2)),
        (edge(0, 2, (1,)), edge(1, 2, (0,))),
        (edge(1, 2, (0, 3)),),
    ))
    v = validate_structure(s)
    assert v.tree == 1 and "cycle" in v.reason


@pytest.mark.parametrize("bad, tree", [
    # T2 edge whose parents are not T1 edges
    ((edge(0, 1), edge(1, 2), edge(2, 3)), 2),
])
def test_parent_existence(bad, tree):
    s = VineStructure(4, (bad, (edge(0, 3, (1,)), edge(1, 3, (2,))), (edge(0, 2, (1, 3)),)))
    v = validate_structure(s)
    assert v.tree == tree


def test_conditioning_size_checked():
    s = VineStructure(3, ((edge(0, 1), edge(1, 2)), (edge(0, 2),)))
    v = validate_structure(s)
    assert v.tree == 2 and "conditioning" in v.reason


def test_tree_count_checked():
    v = validate_structure(VineStructure(3, ((edge(0, 1), edge(1, 2)),)))
    assert v is not None and "trees" in v.reason


def test_model_requires_copulas_and_valid_structure():
    with pytest.raises(InvalidInputError):
        VineModel(five_structure())
    bad = VineStructure(3, ((edge(0, 1, (), bicop.INDEPENDENCE),) * 2, (edge(0, 2, (1,), bicop.INDEPENDENCE),)))
    with pytest.raises(InvalidInputError):
        VineModel(bad)


# ---------------------------------------------------------------- density


def test_independence_density_is_zero():
    m = VineModel.independence(five_structure())
    u = np.random.default_rng(0).uniform(size=(30, 5))
    assert np.all(m.log_density(u) == 0.0)


def test_dimension_mismatch():
    m = VineModel.independence(five_structure())
    with pytest.raises(InvalidInputError):
        m.log_density(np.full(4, 0.5))


def test_five_var_matches_explicit_sum():
    rng = np.random.default_rng(1)
    for _ in range(10):
        cops = [O.random_copula(rng) for _ in range(10)]
        u = rng.uniform(size=(50, 5))
        assert np.max(np.abs(O.five_model(cops).log_density(u) - O.five_explicit_logpdf(cops, u))) < 1e-12


def test_single_point_and_batch_agree():
    rng = np.random.default_rng(2)
    m = O.five_model([O.random_copula(rng) for _ in range(10)])
    u = rng.uniform(size=(5, 5))
    batch = m.log_density(u)
    assert all(m.log_density(u[i]) == batch[i] for i in range(5))


@pytest.mark.parametrize("r01, r12, p", [(0.6, -0.45, 0.35), (0.9, 0.8, -0.5), (-0.2, 0.3, 0.7)])
def test_trivariate_gaussian(r01, r12, p):
    r02 = p * math.sqrt((1 - r01 ** 2) * (1 - r12 ** 2)) + r01 * r12
    m = k3_model(PairCopula(GAUSS, r01), PairCopula(GAUSS, r12), PairCopula(GAUSS, p))
    R = np.array([[1, r01, r02], [r01, 1, r12], [r02, r12, 1]])
    u = np.random.default_rng(3).uniform(size=(2000, 3))
    assert np.allclose(np.exp(m.log_density(u)), np.exp(O.gaussian_copula_logpdf(R, u)), atol=1e-6, rtol=0)


def test_density_floor_keeps_result_finite():
    m = k3_model(PairCopula(GAUSS, 0.999), PairCopula(GAUSS, 0.999), PairCopula(GAUSS, 0.999))
    assert np.isfinite(m.log_density(np.array([1e-12, 1 - 1e-12, 1e-12])))


def _random_k3(seed):
    rng = np.random.default_rng(seed)
    return k3_model(*(O.random_copula(rng, tau_max=0.5) for _ in range(3)))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_density_normalises_on_grid(seed):
    m = _random_k3(seed)
    g = (np.arange(60) + 0.5) / 60
    u = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
    assert 0.97 <= np.exp(m.log_density(u)).mean() <= 1.03


def test_sampling_matches_density_expectation():
    m = _random_k3(4)
    g = (np.arange(60) + 0.5) / 60
    u = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
    f = lambda x: np.cos(2.0 * x[:, 0] - x[:, 1]) * x[:, 2]
    w = np.exp(m.log_density(u))
    exact = float(np.sum(f(u) * w) / np.sum(w))
    s = f(m.sample(40_000, 5))
    assert abs(s.mean() - exact) < 3 * s.std() / math.sqrt(s.size)


def test_permutation_coherence():
    rng = np.random.default_rng(6)
    m = O.five_model([O.random_copula(rng) for _ in range(10)])
    perm = [3, 0, 4, 1, 2]
    moved = m.relabel(perm)
    u = rng.uniform(size=(200, 5))
    v = np.empty_like(u)
    v[:, perm] = u
    assert np.array_equal(moved.log_density(v), m.log_density(u))


# ---------------------------------------------------------------- conditional cdf


def test_conditional_cdf_t1_is_raw():
    rng = np.random.default_rng(7)
    m = O.five_model([O.random_copula(rng) for _ in range(10)])
    u = rng.uniform(size=5)
    e = m.trees[0][2]
    assert conditional_cdf(m, e, u, "a") == u[e.conditioned[0]]
    assert conditional_cdf(m, e, u, "b") == u[e.conditioned[1]]


def test_conditional_cdf_independence_is_raw():
    m = VineModel.independence(five_structure())
    u = np.random.default_rng(8).uniform(size=5)
    for e in m.edges:
        assert conditional_cdf(m, e, u, "a") == pytest.approx(u[e.conditioned[0]])


def test_conditional_cdf_matches_finite_difference():
    cops = [PairCopula(GAUSS, r) for r in (0.5, -0.3, 0.6, 0.2, 0.4, 0.1, -0.2, 0.3, 0.1, 0.2)]
    m = O.five_model(cops)
    u = np.array([0.3, 0.7, 0.45, 0.2, 0.9])
    e = m.trees[1][0]  # edge 0,2|1
    assert e.conditioned == (0, 2)
    assert conditional_cdf(m, e, u, "a") == pytest.approx(O.fd_hfunc(cops[0], u[0], u[1]), abs=1e-5)
    assert conditional_cdf(m, e, u, "b") == pytest.approx(O.fd_hfunc(cops[1], u[2], u[1]), abs=1e-5)


def test_conditional_cdf_rejects_foreign_edge():
    m = VineModel.independence(five_structure())
    with pytest.raises(InvalidInputError):
        conditional_cdf(m, edge(0, 4, (), bicop.INDEPENDENCE), np.full(5, 0.5))


# ---------------------------------------------------------------- sampling


def test_independent_sample_has_no_dependence():
    u = VineModel.independence(five_structure()).sample(2000, 9)
    for i, j in itertools.combinations(range(5), 2):
        assert abs(O.sample_tau(u[:, i], u[:, j])) < 0.05


def test_gaussian_pair_sample_tau():
    m = VineModel(VineStructure.from_edges(2, [edge(0, 1, (), PairCopula(GAUSS, 0.8))]))
    u = m.sample(2000, 10)
    assert O.sample_tau(u[:, 0], u[:, 1]) == pytest.approx(0.5903, abs=0.05)


def test_sample_deterministic_and_uniform():
    rng = np.random.default_rng(11)
    m = O.five_model([O.random_copula(rng) for _ in range(10)])
    a, b = m.sample(3000, 12), m.sample(3000, 12)
    assert np.array_equal(a, b)
    for k in range(5):
        assert stats.kstest(a[:, k], "uniform").statistic < 1.63 / math.sqrt(3000)


def test_sample_rejects_empty():
    with pytest.raises(InvalidInputError):
        VineModel.independence(five_structure()).sample(0, 1)


def test_five_var_sample_recovers_t1_strengths():
    cops = [bicop.tau_to_param(GAUSS, 0.6)] * 4 + [bicop.INDEPENDENCE] * 6
    u = O.five_model(cops).sample(2000, 13)
    for (a, b), d in O.FIVE_EDGES[:4]:
        assert O.sample_tau(u[:, a], u[:, b]) == pytest.approx(0.6, abs=0.05)


# ---------------------------------------------------------------- serialisation


def test_model_round_trip():
    rng = np.random.default_rng(14)
    m = O.five_model([O.random_copula(rng) for _ in range(10)])
    back = VineModel.from_dict(m.to_dict())
    assert back == m
    u = rng.uniform(size=(100, 5))
    assert np.array_equal(back.log_density(u), m.log_density(u))
    d = m.to_dict()
    assert d["version"] == 1 and len(d["edges"]) == 10
    assert {"tree", "conditioned", "conditioning", "family", "parameter"} <= set(d["edges"][-1])
