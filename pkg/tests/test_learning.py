import numpy as np
import pytest

from chainid import learning
from chainid.errors import ConvergenceError, DataError
from chainid.graph import ChainGraph, component_parents, is_topological, shd
from chainid.learning import (
    empirical_covariance,
    inequality_chain,
    learn_order_known,
    learn_order_known_from_data,
    learn_unknown,
    recover_edges,
)
from chainid.linalg import CovMatrix
from chainid.sem import (
    AmpSem,
    generate_certified_known_instance,
    generate_certified_unknown_instance,
    population_covariance,
    sample,
)


def three_variable_example(beta=1.0, s=3.0, rho=0.9):
    """X1 - X2 in one component, X1 -> X3 with Var(noise of X3) = det Cov(X1, X2)."""
    block = s * np.array([[1.0, rho], [rho, 1.0]])
    sigma2 = np.linalg.det(block)
    g = ChainGraph.from_edges(3, [(0, 2)], [(0, 1)])
    w = np.zeros((3, 3))
    w[2, 0] = beta
    return AmpSem(g, w, (block, np.array([[sigma2]])))


def test_three_variable_example_conditions():
    sem = three_variable_example()
    sigma = population_covariance(sem).entries
    assert sigma[0, 0] - sigma[0, 1] ** 2 / sigma[1, 1] < 1  # det Cov(X1 | X2) < 1
    assert sigma[1, 1] - sigma[0, 1] ** 2 / sigma[0, 0] < 1
    assert np.linalg.det(sigma[:2, :2]) > 1


def test_known_components_three_variable_example():
    sigma = population_covariance(three_variable_example())
    res = learn_order_known(sigma, [(2,), (0, 1)])
    assert res.ordered_components == [(0, 1), (2,)]
    # det Cov(X3) exceeds sigma^2 = det Cov(X1, X2)
    assert res.candidates[0][0] > res.candidates[0][1]


def test_unknown_three_variable_example():
    sigma = population_covariance(three_variable_example())
    res = learn_unknown(sigma, "brute")
    assert res.ordered_components == [(0, 1), (2,)]
    assert learn_unknown(sigma, "mnp").ordered_components == [(0, 1), (2,)]


def test_single_component_and_single_variable():
    res = learn_order_known(np.eye(3) + 0.2, [(0, 1, 2)])
    assert res.order == [0] and res.partition == [(0, 1, 2)]
    res = learn_unknown(np.array([[2.0]]))
    assert res.partition == [(0,)] and res.step_values == [pytest.approx(np.log(2.0))]


def test_partition_must_cover_labels():
    with pytest.raises(ValueError):
        learn_order_known(np.eye(3), [(0, 1)])


def test_known_order_on_certified_instances_and_parent_gap():
    for seed in range(40):
        sem = generate_certified_known_instance(15, 6, seed)
        g = sem.graph
        sigma = population_covariance(sem)
        res = learn_order_known(sigma, g.components)
        assert is_topological(g, res.order)
        assert res.order == learn_order_known(sigma, g.components, "det_root").order
        assert all(np.diff(res.step_values) >= -1e-9)
        placed = set()
        for step, chosen in enumerate(res.order):
            scores = res.candidates[step]
            for c, value in scores.items():
                if not component_parents(g, c) <= placed:
                    assert value > scores[chosen]
            placed.add(chosen)


def test_unknown_on_certified_instances_matches_across_solvers():
    for seed in range(15):
        sem = generate_certified_unknown_instance(10, 4, seed, noise="laplacian" if seed % 2 else "equicorrelation")
        sigma = population_covariance(sem)
        brute = learn_unknown(sigma, "brute")
        assert {frozenset(c) for c in brute.partition} == {frozenset(c) for c in sem.graph.components}
        assert learn_unknown(sigma, "mnp").partition == brute.partition


def test_inequality_chain_on_certified_instance():
    sem = generate_certified_unknown_instance(10, 4, seed=3)
    sigma = population_covariance(sem)
    res = learn_unknown(sigma)
    rng = np.random.default_rng(0)
    given = []
    for comp in res.ordered_components:
        rest = [v for v in range(10) if v not in given]
        for _ in range(10):
            subset = rng.choice(rest, int(rng.integers(1, len(rest) + 1)), replace=False)
            t = inequality_chain(sigma, sem.graph, given, subset)
            assert abs(t[0] - t[1]) < 1e-9
            assert t[1] >= t[2] - 1e-9 and t[2] >= t[3] - 1e-9 and t[3] >= t[4] - 1e-9
        t = inequality_chain(sigma, sem.graph, given, comp)
        assert t[0] == pytest.approx(t[4], abs=1e-9)
        given.extend(comp)


def test_convergence_error_carries_step(monkeypatch):
    def failing(*args, **kwargs):
        raise ConvergenceError("stuck", gap=0.5)

    monkeypatch.setattr(learning, "min_nonempty", failing)
    with pytest.raises(ConvergenceError) as info:
        learn_unknown(np.eye(2), "mnp")
    assert info.value.step == 0 and info.value.gap == 0.5


def test_data_mode():
    sem = generate_certified_known_instance(8, 4, seed=1)
    with pytest.raises(DataError):
        learn_order_known_from_data(sample(sem, 8, seed=0), sem.graph.components)
    data = sample(sem, 2000, seed=0)
    res = learn_order_known_from_data(data, sem.graph.components)
    assert res.mode == "empirical"
    direct = learn_order_known(empirical_covariance(data), sem.graph.components)
    assert res.order == direct.order and res.step_values == direct.step_values
    emp = empirical_covariance(data).entries
    assert np.allclose(emp, np.cov(data.values, rowvar=False, ddof=1))


def test_population_mode_equals_known_path():
    sem = generate_certified_known_instance(8, 4, seed=2)
    sigma = population_covariance(sem)
    a = learn_order_known(sigma, sem.graph.components)
    b = learn_order_known(CovMatrix(sigma.entries.copy()), sem.graph.components)
    assert a.order == b.order and a.step_values == b.step_values


def test_recover_edges_population_exact():
    for seed in range(20):
        sem = generate_certified_known_instance(12, 5, seed)
        sigma = population_covariance(sem)
        res = learn_order_known(sigma, sem.graph.components)
        assert shd(recover_edges(sigma, res.partition, res.order), sem.graph) == 0


def test_recover_edges_independent_variables():
    g = recover_edges(np.diag([1.0, 2.0, 3.0]), [(0,), (1,), (2,)], [0, 1, 2])
    assert not g.directed_edges and not g.undirected_edges
    g = recover_edges(np.diag([1.0, 2.0, 3.0]), [(0,), (1, 2)], [1, 0], n_samples=500)
    assert not g.directed_edges


def test_recover_edges_shd_trend_with_sample_size():
    rng_seeds = range(40)
    means = []
    for n in (100, 1000, 10000):
        total = 0
        for seed in rng_seeds:
            sem = generate_certified_known_instance(10, 5, seed)
            data = sample(sem, n, seed=seed + 1)
            cov = empirical_covariance(data)
            total += shd(recover_edges(cov, sem.graph.components, list(range(5)), n_samples=n), sem.graph)
        means.append(total / len(rng_seeds))
    assert means[0] > means[2]


def test_learn_result_json():
    sigma = population_covariance(three_variable_example())
    res = learn_unknown(sigma)
    res.recovered_graph = recover_edges(sigma, res.partition, res.order)
    d = res.to_dict()
    assert set(d) == {"order", "partition", "step_values", "graph", "mode"}
    assert d["partition"] == [[0, 1], [2]]
    assert ChainGraph.from_dict(d["graph"]) == res.recovered_graph
