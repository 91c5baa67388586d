"""Learning the chain components and their order from a covariance matrix.

``learn_order_known`` picks, step by step, the remaining component whose
conditional covariance given everything found so far has the smallest
super-additive statistic. ``learn_unknown`` finds each next component as the
non-empty minimizer of S -> log det Cov(X_S | X_P). ``recover_edges`` then
selects parents by regression and undirected edges from the conditional
precision.

For Gaussians the expected conditional covariance is the Schur complement,
so population and sample covariances go through the same code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np
import scipy.stats

from .errors import ConvergenceError, DataError, SingularityError
from .graph import ChainGraph, _topological_sort, parents_of
from .linalg import (
    CovMatrix,
    Statistic,
    as_cov,
    conditional_cov,
    evaluate_statistic,
    is_pd,
    log_det,
)
from .sem import Dataset
from .sfm import TIE_RTOL, LogDetOracle, min_nonempty

__all__ = [
    "LearnResult",
    "learn_order_known",
    "learn_unknown",
    "empirical_covariance",
    "learn_order_known_from_data",
    "recover_edges",
    "inequality_chain",
    "POPULATION_THRESHOLD",
    "DEFAULT_ALPHA",
]

POPULATION_THRESHOLD = 1e-8
DEFAULT_ALPHA = 0.001


@dataclass
class LearnResult:
    """Learned components and their order.

    ``partition`` lists the components; ``order`` lists indices into it,
    earliest first. ``step_values`` holds the winning statistic (known components)
    or minimized log det (unknown components) of each step. ``candidates[i]`` maps
    every component index considered at step ``i`` to its value.
    """

    order: list[int]
    partition: list[tuple[int, ...]]
    step_values: list[float]
    recovered_graph: ChainGraph | None = None
    mode: str = "population"
    candidates: list[dict[int, float]] = field(default_factory=list)

    @property
    def ordered_components(self) -> list[tuple[int, ...]]:
        return [self.partition[i] for i in self.order]

    def to_dict(self) -> dict:
        return {
            "order": list(self.order),
            "partition": [list(c) for c in self.partition],
            "step_values": list(self.step_values),
            "graph": self.recovered_graph.to_dict() if self.recovered_graph is not None else None,
            "mode": self.mode,
        }


def _check_partition(labels: Sequence[int], components) -> list[tuple[int, ...]]:
    comps = [tuple(sorted(int(v) for v in c)) for c in components]
    flat = [v for c in comps for v in c]
    if any(len(c) == 0 for c in comps) or sorted(flat) != sorted(labels):
        raise ValueError("components must partition the covariance labels")
    return comps


def learn_order_known(sigma, components, stat: Statistic | str = "determinant") -> LearnResult:
    """Order known components by repeatedly taking the arg-min statistic.

    Ties (relative 1e-12) go to the lowest component index.
    """
    sigma = as_cov(sigma)
    stat = Statistic.parse(stat) if isinstance(stat, str) else stat
    comps = _check_partition(sigma.labels, components)
    remaining = list(range(len(comps)))
    found: list[int] = []
    given: list[int] = []
    values, candidates = [], []
    while remaining:
        cond = conditional_cov(sigma, given) if given else sigma
        scores = {i: evaluate_statistic(stat, cond.submatrix(comps[i])) for i in remaining}
        best = remaining[0]
        for i in remaining[1:]:
            tol = TIE_RTOL * max(1.0, abs(scores[i]), abs(scores[best]))
            if scores[i] < scores[best] - tol:
                best = i
        found.append(best)
        values.append(scores[best])
        candidates.append(scores)
        remaining.remove(best)
        given.extend(comps[best])
    return LearnResult(found, comps, values, candidates=candidates)


def learn_unknown(
    sigma, sfm_method: str = "brute", tolerance: float = 1e-9, trace: TextIO | None = None
) -> LearnResult:
    """Peel off non-empty log-det minimizers until every label is placed.

    The partition is returned sorted by smallest vertex; ``order`` gives the
    discovery sequence.
    """
    sigma = as_cov(sigma)
    given: list[int] = []
    found: list[tuple[int, ...]] = []
    values = []
    while len(given) < sigma.dim:
        cond = conditional_cov(sigma, given) if given else sigma
        oracle = LogDetOracle(cond.entries, cond.labels)
        try:
            res = min_nonempty(oracle, tolerance=tolerance, method=sfm_method, trace=trace)
        except ConvergenceError as exc:
            raise ConvergenceError(f"step {len(found)}: {exc}", gap=exc.gap, step=len(found)) from exc
        comp = tuple(sorted(res.minimizer))
        found.append(comp)
        values.append(res.value)
        given.extend(comp)
    partition = sorted(found)
    order = [partition.index(c) for c in found]
    return LearnResult(order, partition, values)


def empirical_covariance(data: Dataset | np.ndarray) -> CovMatrix:
    """Mean-centred sample covariance with 1/(n-1) normalization."""
    x = data.values if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    n, d = x.shape
    if n <= d:
        raise DataError(f"need more samples than variables (n={n}, d={d}); collect more samples")
    cov = np.cov(x, rowvar=False, ddof=1).reshape(d, d)
    cov = CovMatrix(0.5 * (cov + cov.T))
    if not is_pd(cov):
        raise DataError("sample covariance is not positive definite; collect more samples")
    return cov


def learn_order_known_from_data(data: Dataset, components, stat: Statistic | str = "determinant") -> LearnResult:
    result = learn_order_known(empirical_covariance(data), components, stat)
    result.mode = "empirical"
    return result


def _partial_corr(prec: np.ndarray, i: int, j: int) -> float:
    """Partial correlation of i and j given the rest, read off a precision matrix."""
    return float(-prec[i, j] / math.sqrt(prec[i, i] * prec[j, j]))


def _fisher_significant(r: float, n_samples: int, n_cond: int, alpha: float) -> bool:
    dof = n_samples - n_cond - 3
    if dof <= 0:
        raise DataError(f"too few samples ({n_samples}) for a conditioning set of size {n_cond}")
    r = min(max(r, -1 + 1e-15), 1 - 1e-15)
    stat = math.sqrt(dof) * abs(math.atanh(r))
    return stat > scipy.stats.norm.ppf(1 - alpha / 2)


def recover_edges(
    sigma,
    partition,
    order: Sequence[int],
    alpha: float = DEFAULT_ALPHA,
    n_samples: int | None = None,
) -> ChainGraph:
    """Parents and undirected edges given an ordered partition.

    A candidate parent v (in an earlier component) of u is kept iff u and v
    are dependent given the other earlier vertices; u - w inside a component
    is kept iff they are dependent given the earlier vertices and the rest of
    the component. With ``n_samples`` the decision is a Fisher-z test at level
    ``alpha``; without it, a population threshold of 1e-8 on the regression
    coefficient (directed) or partial correlation (undirected).
    """
    sigma = as_cov(sigma)
    comps = _check_partition(sigma.labels, partition)
    if sorted(order) != list(range(len(comps))):
        raise ValueError("order must be a permutation of the partition indices")

    def dependent(value: float, n_cond: int) -> bool:
        if n_samples is None:
            return abs(value) > POPULATION_THRESHOLD
        return _fisher_significant(value, n_samples, n_cond, alpha)

    directed, undirected = [], []
    earlier: list[int] = []
    for ci in order:
        comp = list(comps[ci])
        if earlier:
            block = sigma.submatrix(earlier).entries
            if not is_pd(CovMatrix(block)):
                raise SingularityError(f"conditioning block {earlier} is singular", block=tuple(earlier))
            cross = sigma.entries[np.ix_(sigma.positions(earlier), sigma.positions(comp))]
            coef = np.linalg.solve(block, cross)  # coef[:, j] regresses comp[j] on earlier
            for j, u in enumerate(comp):
                if n_samples is not None:
                    joint = np.linalg.inv(sigma.submatrix(earlier + [u]).entries)
                for k, v in enumerate(earlier):
                    value = coef[k, j] if n_samples is None else _partial_corr(joint, k, len(earlier))
                    if dependent(value, len(earlier) - 1):
                        directed.append((v, u))
        if len(comp) > 1:
            cond = conditional_cov(sigma.submatrix(earlier + comp), earlier) if earlier else sigma.submatrix(comp)
            if not is_pd(cond):
                raise SingularityError(f"conditional covariance of {comp} is singular", block=tuple(comp))
            prec = np.linalg.inv(cond.entries)
            for a in range(len(comp)):
                for b in range(a + 1, len(comp)):
                    r = _partial_corr(prec, a, b)
                    if dependent(r, len(earlier) + len(comp) - 2):
                        undirected.append((comp[a], comp[b]))
        earlier.extend(comp)
    return ChainGraph.from_edges(sigma.dim, directed, undirected)


def inequality_chain(sigma, graph: ChainGraph, given: Sequence[int], subset: Sequence[int]) -> list[float]:
    """Log-space terms of the lower-bound chain behind the unknown-component step.

    For an ancestral vertex set ``given`` (P) and non-empty ``subset`` (S)
    disjoint from it, with the remaining components in topological order
    tau_1, ..., tau_m, returns

    0. log det Cov(X_S | X_P)
    1. sum_i log det Cov(X_{S & tau_i} | X_{S & tau_<i}, X_P)
    2. sum_i log det Cov(X_{S & tau_i} | X_PA(tau_i))
    3. sum over components hit by S of log det Cov(X_tau_i | X_PA(tau_i))
    4. min over components with all parents in P of the same log det

    Under the identifiability conditions 0 = 1 >= 2 >= 3 >= 4.
    """
    sigma = as_cov(sigma)
    given = sorted(set(int(v) for v in given))
    subset = sorted(set(int(v) for v in subset))
    if not subset or set(subset) & set(given):
        raise ValueError("subset must be non-empty and disjoint from the conditioning set")
    gset = set(given)
    rest = [i for i, c in enumerate(graph.components) if not set(c) <= gset]
    if any(set(graph.components[i]) & gset for i in rest):
        raise ValueError("conditioning set must be a union of components")
    local = {c: k for k, c in enumerate(rest)}
    edges = [(local[a], local[b]) for a, b in graph.component_edges if a in local and b in local]
    topo = [rest[k] for k in _topological_sort(len(rest), edges)]

    def cond_ld(target, cond):
        target, cond = list(target), list(cond)
        sub = sigma.submatrix(cond + target)
        return log_det(conditional_cov(sub, cond) if cond else sub)

    def resid_ld(i):
        return cond_ld(graph.components[i], sorted(parents_of(graph, i)))

    s_set = set(subset)
    term0 = cond_ld(subset, given)
    term1 = term2 = term3 = 0.0
    before: list[int] = []
    for i in topo:
        part = [v for v in graph.components[i] if v in s_set]
        if part:
            term1 += cond_ld(part, before + given)
            term2 += cond_ld(part, sorted(parents_of(graph, i)))
            term3 += resid_ld(i)
            before.extend(part)
    eligible = [i for i in rest if parents_of(graph, i) <= gset]
    term4 = min(resid_ld(i) for i in eligible)
    return [term0, term1, term2, term3, term4]
