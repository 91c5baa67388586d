"""Random AMP chain graphs, linear-Gaussian SEMs, samples, and instances
certified to satisfy the identifiability conditions.

Randomness comes from numpy's PCG64. Every generator accepts either an
integer seed or a ``numpy.random.Generator``; composite generators thread a
single Generator through their parts. Independent trials derive their seed
with :func:`split_seed` (``base ^ index``).
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.optimize

from .errors import CapabilityError, GenerationError
from .graph import (
    ChainGraph,
    ValidationReport,
    _connected_components,
    _topological_sort,
    parents_of,
    validate,
)
from .linalg import CovMatrix, Statistic, conditional_cov, evaluate_statistic, is_pd, log_det

__all__ = [
    "AmpSem",
    "Dataset",
    "make_rng",
    "split_seed",
    "generate_chain_graph",
    "generate_weights",
    "generate_noise_cov",
    "generate_sem",
    "population_covariance",
    "sample",
    "validate_sem",
    "ConditionReport",
    "check_known_condition",
    "check_unknown_conditions",
    "generate_certified_known_instance",
    "generate_certified_unknown_instance",
    "MAX_ENUM_COMPONENT",
]

MAX_ENUM_COMPONENT = 10
MARKOV_TOL = 1e-8
WEIGHT_LOW, WEIGHT_HIGH = 0.5, 1.5


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(int(seed)))


def split_seed(base: int, index: int) -> int:
    """Seed of trial ``index`` derived from ``base``."""
    return int(base) ^ int(index)


@dataclass(frozen=True, eq=False)
class AmpSem:
    """X_tau = M_tau X_PA(tau) + Z_tau with Z_tau ~ N(0, noise_covs[tau]).

    ``weights[u, v]`` is the coefficient of parent ``v`` in the equation of
    ``u``. ``noise_covs[i]`` is indexed by ``graph.components[i]`` in sorted
    vertex order.
    """

    graph: ChainGraph
    weights: np.ndarray
    noise_covs: tuple[np.ndarray, ...]

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        covs = []
        for c in self.noise_covs:
            c = np.array(c, dtype=float)
            c.setflags(write=False)
            covs.append(c)
        object.__setattr__(self, "noise_covs", tuple(covs))

    @property
    def n_vars(self) -> int:
        return self.graph.n_vertices

    def noise_covariance(self) -> np.ndarray:
        """Block-diagonal covariance of the full noise vector."""
        omega = np.zeros((self.n_vars, self.n_vars))
        for comp, block in zip(self.graph.components, self.noise_covs):
            omega[np.ix_(comp, comp)] = block
        return omega

    def to_dict(self) -> dict:
        out = self.graph.to_dict()
        out["weights"] = self.weights.tolist()
        out["noise_covs"] = [c.tolist() for c in self.noise_covs]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "AmpSem":
        graph = ChainGraph.from_dict(data)
        return cls(graph, np.asarray(data["weights"], dtype=float), tuple(np.asarray(c) for c in data["noise_covs"]))


@dataclass(frozen=True, eq=False)
class Dataset:
    values: np.ndarray
    seed: int | None = None

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"x{i}" for i in range(self.n_vars)])
        for row in self.values:
            writer.writerow([f"{x:.17g}" for x in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, seed: int | None = None) -> "Dataset":
        rows = list(csv.reader(io.StringIO(text)))
        values = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
        return cls(values.reshape(-1, len(rows[0])), seed)


def _intervals(n_vars: int, n_components: int) -> list[tuple[int, ...]]:
    length = n_vars // n_components
    bounds = [i * length for i in range(n_components)] + [n_vars]
    return [tuple(range(bounds[i], bounds[i + 1])) for i in range(n_components)]


def generate_chain_graph(n_vars: int, n_components: int, expected_neighbors: float = 2.0, seed=0) -> ChainGraph:
    """Erdos-Renyi chain graph on equal-length contiguous components.

    Pairs inside an interval become undirected edges, pairs across intervals
    become directed edges from the lower interval to the higher one. The
    remainder of ``n_vars // n_components`` goes to the last component. A
    component left disconnected by the ER draw gets a spanning path over its
    sorted vertices.
    """
    if not 1 <= n_components <= n_vars:
        raise ValueError(f"need 1 <= n_components <= n_vars, got {n_components} and {n_vars}")
    rng = make_rng(seed)
    comps = _intervals(n_vars, n_components)
    where = {v: i for i, c in enumerate(comps) for v in c}
    p = min(1.0, expected_neighbors / (n_vars - 1)) if n_vars > 1 else 0.0
    draws = rng.random((n_vars, n_vars))
    directed, undirected = set(), set()
    for u in range(n_vars):
        for v in range(u + 1, n_vars):
            if draws[u, v] < p:
                (undirected if where[u] == where[v] else directed).add((u, v))
    for comp in comps:
        local = {v: i for i, v in enumerate(comp)}
        inner = [(local[a], local[b]) for a, b in undirected if a in local]
        if len(_connected_components(len(comp), inner)) > 1:
            undirected.update(zip(comp[:-1], comp[1:]))
    return ChainGraph.from_edges(n_vars, directed, undirected, components=comps)


def generate_weights(graph: ChainGraph, seed=0) -> np.ndarray:
    """Weights uniform on (-1.5, -0.5] U [0.5, 1.5) on directed edges, zero elsewhere."""
    rng = make_rng(seed)
    n = graph.n_vertices
    w = np.zeros((n, n))
    edges = sorted(graph.directed_edges)
    if edges:
        mags = rng.uniform(WEIGHT_LOW, WEIGHT_HIGH, size=len(edges))
        signs = np.where(rng.random(len(edges)) < 0.5, -1.0, 1.0)
        for (u, v), m, s in zip(edges, mags, signs):
            w[v, u] = s * m
    return w


def generate_noise_cov(
    component_size: int,
    target_log_det: float = 0.0,
    undirected_edges: Iterable[Sequence[int]] = (),
    seed=0,
) -> np.ndarray:
    """Random PD matrix Markov to the given (local-index) edges, with fixed log det.

    A diagonally dominant precision matrix supported on the edges is
    inverted and rescaled so that log det equals ``target_log_det``.
    """
    k = int(component_size)
    if k < 1:
        raise ValueError("component_size must be >= 1")
    rng = make_rng(seed)
    if k == 1:
        return np.array([[math.exp(target_log_det)]])
    prec = np.zeros((k, k))
    for a, b in sorted(tuple(sorted(e)) for e in undirected_edges):
        val = rng.uniform(0.5, 1.0) * (1.0 if rng.random() < 0.5 else -1.0)
        prec[a, b] = prec[b, a] = val
    np.fill_diagonal(prec, np.abs(prec).sum(axis=1) + rng.uniform(0.5, 1.5, size=k))
    cov = np.linalg.inv(prec)
    cov = 0.5 * (cov + cov.T)
    scale = math.exp((target_log_det - log_det(cov)) / k)
    return cov * scale


def _local_edges(graph: ChainGraph, comp: Sequence[int]) -> list[tuple[int, int]]:
    local = {v: i for i, v in enumerate(comp)}
    return [(local[a], local[b]) for a, b in sorted(graph.undirected_edges) if a in local]


def generate_sem(
    n_vars: int,
    n_components: int,
    expected_neighbors: float = 2.0,
    seed=0,
    target_log_det: float = 0.0,
) -> AmpSem:
    """Chain graph, weights and noise blocks with constant log det(Sigma_tau)."""
    rng = make_rng(seed)
    graph = generate_chain_graph(n_vars, n_components, expected_neighbors, rng)
    weights = generate_weights(graph, rng)
    covs = tuple(
        generate_noise_cov(len(c), target_log_det, _local_edges(graph, c), rng) for c in graph.components
    )
    return AmpSem(graph, weights, covs)


def population_covariance(sem: AmpSem) -> CovMatrix:
    """(I - M)^-1 Omega (I - M)^-T."""
    a = np.eye(sem.n_vars) - sem.weights
    sigma = np.linalg.solve(a, np.linalg.solve(a, sem.noise_covariance()).T)
    return CovMatrix(0.5 * (sigma + sigma.T))


def _component_order(graph: ChainGraph) -> list[int]:
    order = _topological_sort(graph.n_components, graph.component_edges)
    if order is None:
        raise ValueError("graph has a semi-directed cycle")
    return order


def sample(sem: AmpSem, n_samples: int, seed=0) -> Dataset:
    """Ancestral sampling along a topological order of the components."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = make_rng(seed)
    x = np.zeros((n_samples, sem.n_vars))
    for ci in _component_order(sem.graph):
        comp = list(sem.graph.components[ci])
        chol = np.linalg.cholesky(sem.noise_covs[ci])
        z = rng.standard_normal((n_samples, len(comp))) @ chol.T
        x[:, comp] = x @ sem.weights[comp].T + z
    return Dataset(x, seed if isinstance(seed, (int, np.integer)) else None)


def validate_sem(sem: AmpSem) -> ValidationReport:
    """Graph invariants plus the AmpSem ones (edge support, PD, Markov blocks)."""
    report = validate(sem.graph)
    if not report:
        return report
    g = sem.graph
    n = g.n_vertices
    if sem.weights.shape != (n, n):
        return ValidationReport(False, "weights", f"weight matrix shape {sem.weights.shape}")
    support = {(int(v), int(u)) for u, v in zip(*np.nonzero(sem.weights))}
    extra = support - g.directed_edges
    if extra:
        return ValidationReport(False, "weights", f"weights on non-edges {sorted(extra)[:5]}")
    if len(sem.noise_covs) != g.n_components:
        return ValidationReport(False, "noise", "one noise block per component required")
    for i, (comp, block) in enumerate(zip(g.components, sem.noise_covs)):
        if block.shape != (len(comp), len(comp)) or not is_pd(CovMatrix(block)):
            return ValidationReport(False, "noise", f"noise block {i} is not PD of the right size")
        prec = np.linalg.inv(block)
        allowed = set(_local_edges(g, comp))
        for a, b in itertools.combinations(range(len(comp)), 2):
            if (a, b) not in allowed and abs(prec[a, b]) > MARKOV_TOL:
                return ValidationReport(
                    False, "markov", f"precision entry ({comp[a]}, {comp[b]}) nonzero without an edge"
                )
    return report


@dataclass
class ConditionReport:
    """Identifiability conditions with their numeric slack (log-det scale).

    A slack of ``None`` marks a vacuous condition.
    """

    slack: dict[str, float | None] = field(default_factory=dict)
    passed: dict[str, bool] = field(default_factory=dict)
    component_log_dets: list[float] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(self.passed.values())

    def failed(self) -> list[str]:
        return [k for k, v in self.passed.items() if not v]

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "conditions": {k: {"slack": self.slack[k], "passed": self.passed[k]} for k in self.slack},
            "component_log_dets": self.component_log_dets,
        }


def _residual_covs(sem_or_cov, graph: ChainGraph) -> list[CovMatrix]:
    sigma = population_covariance(sem_or_cov) if isinstance(sem_or_cov, AmpSem) else sem_or_cov
    out = []
    for i, comp in enumerate(graph.components):
        pa = sorted(parents_of(graph, i))
        out.append(conditional_cov(sigma.submatrix(list(pa) + list(comp)), pa))
    return out


def _edge_slack(graph: ChainGraph, values: Sequence[float]) -> float | None:
    edges = graph.component_edges
    if not edges:
        return None
    return min(values[b] - values[a] for a, b in edges)


def check_known_condition(sem_or_cov, graph: ChainGraph | None = None, stat="determinant", tol: float = 1e-9):
    """Monotonicity of d(Cov(X_tau | X_PA(tau))) along some topological order.

    Such an order exists iff every component edge a -> b has d(a) <= d(b).
    """
    graph = graph or sem_or_cov.graph
    stat = Statistic.parse(stat) if isinstance(stat, str) else stat
    values = [evaluate_statistic(stat, c) for c in _residual_covs(sem_or_cov, graph)]
    report = ConditionReport(component_log_dets=[math.log(v) if v > 0 else -math.inf for v in values])
    slack = _edge_slack(graph, values)
    report.slack["monotone"] = slack
    report.passed["monotone"] = slack is None or slack >= -tol
    return report


def check_unknown_conditions(
    sem_or_cov, graph: ChainGraph | None = None, margin: float = 0.0, tol: float = 1e-9
) -> ConditionReport:
    """Evaluate the three conditions for recovering unknown components.

    (i) log det Cov(X_S | X_{tau \\ S}, X_PA(tau)) < -margin for every
    non-empty proper S of every component; (ii) log det Cov(X_tau | X_PA(tau))
    > margin; (iii) those log dets are monotone along some topological order
    (checked edge-wise, within ``tol``). Slack is reported in log space.
    """
    graph = graph or sem_or_cov.graph
    resid = _residual_covs(sem_or_cov, graph)
    worst_sub = -math.inf
    for comp, cov in zip(graph.components, resid):
        k = len(comp)
        if k > MAX_ENUM_COMPONENT:
            raise CapabilityError(f"component of size {k} exceeds enumeration bound {MAX_ENUM_COMPONENT}")
        for r in range(1, k):
            for sub in itertools.combinations(comp, r):
                rest = [v for v in comp if v not in sub]
                worst_sub = max(worst_sub, log_det(conditional_cov(cov, rest)))
    lds = [log_det(c) for c in resid]
    report = ConditionReport(component_log_dets=lds)
    if worst_sub == -math.inf:
        report.slack["i"], report.passed["i"] = None, True
    else:
        report.slack["i"] = -worst_sub - margin
        report.passed["i"] = report.slack["i"] > 0
    report.slack["ii"] = min(lds) - margin
    report.passed["ii"] = report.slack["ii"] > 0
    slack = _edge_slack(graph, lds)
    report.slack["iii"] = slack
    report.passed["iii"] = slack is None or slack >= -tol
    return report


def generate_certified_known_instance(
    n_vars: int, n_components: int, seed=0, expected_neighbors: float = 2.0, target_log_det: float = 0.0
) -> AmpSem:
    """SEM with det(Sigma_tau) constant, re-checked from its population covariance."""
    sem = generate_sem(n_vars, n_components, expected_neighbors, seed, target_log_det)
    report = check_known_condition(sem)
    if not report.ok:
        raise GenerationError("generated instance violates the monotonicity condition", "monotone")
    return sem


def _equicorrelation(k: int, margin: float, rng: np.random.Generator, rho_range) -> np.ndarray:
    rho = rng.uniform(*rho_range)
    # det(rho J + (1 - rho) I) = (1 - rho)^(k-1) (1 + (k-1) rho); scale so log det = margin
    base_ld = (k - 1) * math.log1p(-rho) + math.log1p((k - 1) * rho)
    s = math.exp((margin - base_ld) / k)
    return s * (rho * np.ones((k, k)) + (1 - rho) * np.eye(k))


def _laplacian_block(k: int, edges, margin: float, rng: np.random.Generator) -> np.ndarray:
    # precision c * L_w + eps * I with edge weights >= 1 and c = e^margin keeps
    # every proper principal minor of the precision above e^margin
    lap = np.zeros((k, k))
    for a, b in edges:
        w = rng.uniform(1.0, 2.0)
        lap[a, b] -= w
        lap[b, a] -= w
        lap[a, a] += w
        lap[b, b] += w
    lam = np.linalg.eigvalsh(math.exp(margin) * lap)
    lam = np.clip(lam, 0.0, None)

    def excess(log_eps):
        return float(np.sum(np.log(lam + math.exp(log_eps)))) + margin

    log_eps = scipy.optimize.brentq(excess, -60.0, 10.0, xtol=1e-14)
    prec = math.exp(margin) * lap + math.exp(log_eps) * np.eye(k)
    cov = np.linalg.inv(prec)
    return 0.5 * (cov + cov.T)


def generate_certified_unknown_instance(
    n_vars: int,
    n_components: int,
    seed=0,
    max_tries: int = 50,
    margin: float = 0.2,
    expected_neighbors: float = 2.0,
    noise: str = "equicorrelation",
    rho_range: tuple[float, float] = (0.9, 0.99),
) -> AmpSem:
    """Rejection-sample an SEM satisfying the unknown-component conditions.

    ``noise="equicorrelation"`` uses s * (rho J + (1 - rho) I) blocks; their
    precision is dense, so component subgraphs are completed to cliques.
    ``noise="laplacian"`` keeps the sparse ER component graphs and uses a
    weighted-Laplacian precision instead. Either way log det Sigma_tau equals
    ``margin`` for every component, and the instance is accepted only if the
    enumeration check passes with slack ``margin`` on conditions (i)-(ii).
    """
    if margin <= 0:
        raise ValueError("margin must be positive")
    if noise not in ("equicorrelation", "laplacian"):
        raise ValueError(f"unknown noise construction {noise!r}")
    if not 1 <= n_components <= n_vars:
        raise ValueError(f"need 1 <= n_components <= n_vars, got {n_components} and {n_vars}")
    largest = max(len(c) for c in _intervals(n_vars, n_components))
    if largest > MAX_ENUM_COMPONENT:
        raise CapabilityError(f"component size {largest} exceeds enumeration bound {MAX_ENUM_COMPONENT}")
    rng = make_rng(seed)
    failures: Counter = Counter()
    for _ in range(max_tries):
        graph = generate_chain_graph(n_vars, n_components, expected_neighbors, rng)
        if noise == "equicorrelation":
            cliques = [e for c in graph.components for e in itertools.combinations(c, 2)]
            graph = ChainGraph.from_edges(n_vars, graph.directed_edges, cliques, components=graph.components)
        weights = generate_weights(graph, rng)
        covs = []
        for comp in graph.components:
            if noise == "equicorrelation":
                covs.append(_equicorrelation(len(comp), margin, rng, rho_range))
            else:
                covs.append(_laplacian_block(len(comp), _local_edges(graph, comp), margin, rng))
        sem = AmpSem(graph, weights, tuple(covs))
        report = check_unknown_conditions(sem, margin=margin * (1 - 1e-6))
        if report.ok:
            return sem
        failures.update(report.failed())
    worst = failures.most_common(1)[0][0] if failures else None
    raise GenerationError(
        f"no certified instance in {max_tries} tries (most frequent failure: condition {worst})",
        failed_condition=worst,
        counts=failures,
    )
