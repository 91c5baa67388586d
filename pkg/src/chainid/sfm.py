"""Submodular function minimization over (non-empty) subsets.

Two solvers share one result type: exhaustive enumeration, used as the
reference, and the Fujishige-Wolfe minimum-norm-point algorithm over the base
polytope. ``LogDetOracle`` specializes the oracle for S -> log det M[S, S]:
greedy vertices come from a single Cholesky factor and brute force runs
batched.

References: P. Wolfe, "Finding the nearest point in a polytope" (1976);
S. Fujishige, T. Hayashi, S. Isotani, RIMS preprint 1571 (2006);
D. Chakrabarty, P. Jain, P. Kothari, arXiv:1411.0095 (2014).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Sequence, TextIO

import numpy as np
import scipy.linalg

from .errors import CapabilityError, ConvergenceError, SingularityError

__all__ = [
    "SubmodularOracle",
    "LogDetOracle",
    "SfmResult",
    "brute_force_min",
    "min_norm_point",
    "min_nonempty",
    "diminishing_returns_violation",
    "BRUTE_FORCE_LIMIT",
    "LOGDET_BRUTE_FORCE_LIMIT",
]

BRUTE_FORCE_LIMIT = 16
LOGDET_BRUTE_FORCE_LIMIT = 20
TIE_RTOL = 1e-12

# Wolfe tolerances, as in Fujishige-Hayashi-Isotani
_Z1 = 1e-12
_Z2 = 1e-10


class SubmodularOracle:
    """Set function on ``ground_set``, normalized so that F(empty) = 0.

    ``func`` receives a tuple of ground elements. Internally subsets are
    handled as position arrays into ``ground_set``.
    """

    brute_force_limit = BRUTE_FORCE_LIMIT

    def __init__(self, ground_set: Sequence[Hashable], func: Callable[[tuple], float], normalize: bool = True):
        self.ground_set = tuple(ground_set)
        self._func = func
        self._offset = float(func(())) if normalize else 0.0

    @property
    def size(self) -> int:
        return len(self.ground_set)

    def positions(self, subset: Iterable[Hashable]) -> list[int]:
        lookup = {g: i for i, g in enumerate(self.ground_set)}
        return sorted(lookup[g] for g in subset)

    def eval_positions(self, pos) -> float:
        return float(self._func(tuple(self.ground_set[i] for i in sorted(pos)))) - self._offset

    def __call__(self, subset: Iterable[Hashable]) -> float:
        return self.eval_positions(self.positions(subset))

    def prefix_values(self, order: Sequence[int]) -> np.ndarray:
        """F of every prefix of ``order`` (length size + 1, first entry 0)."""
        out = np.zeros(len(order) + 1)
        for i in range(1, len(order) + 1):
            out[i] = self.eval_positions(order[:i])
        return out

    def all_subset_values(self) -> np.ndarray:
        """F(S) for every bitmask S over positions."""
        k = self.size
        return np.array([self.eval_positions([i for i in range(k) if m >> i & 1]) for m in range(1 << k)])

    def contract(self, position: int) -> "SubmodularOracle":
        """T -> F(T + {v}) - F({v}) on the ground set without v."""
        v = self.ground_set[position]
        rest = self.ground_set[:position] + self.ground_set[position + 1:]
        base = self.eval_positions([position])
        parent = self

        def func(subset):
            return parent(tuple(subset) + (v,)) - base

        return SubmodularOracle(rest, func, normalize=False)


class LogDetOracle(SubmodularOracle):
    """S -> log det M[S, S] for a PD matrix M (already normalized)."""

    brute_force_limit = LOGDET_BRUTE_FORCE_LIMIT

    def __init__(self, matrix, ground_set: Sequence[Hashable] | None = None):
        m = np.asarray(matrix, dtype=float)
        self.matrix = m
        self.ground_set = tuple(ground_set) if ground_set is not None else tuple(range(m.shape[0]))
        if len(self.ground_set) != m.shape[0]:
            raise ValueError("ground set size does not match the matrix")
        self._offset = 0.0

    def eval_positions(self, pos) -> float:
        pos = sorted(pos)
        if not pos:
            return 0.0
        try:
            L = np.linalg.cholesky(self.matrix[np.ix_(pos, pos)])
        except np.linalg.LinAlgError:
            raise SingularityError(f"principal submatrix on {pos} is not PD") from None
        return 2.0 * float(np.sum(np.log(np.diagonal(L))))

    def prefix_values(self, order: Sequence[int]) -> np.ndarray:
        order = list(order)
        out = np.zeros(len(order) + 1)
        if order:
            try:
                L = np.linalg.cholesky(self.matrix[np.ix_(order, order)])
            except np.linalg.LinAlgError:
                raise SingularityError("matrix is not PD") from None
            out[1:] = np.cumsum(2.0 * np.log(np.diagonal(L)))
        return out

    def all_subset_values(self, chunk: int = 40000) -> np.ndarray:
        k = self.size
        masks = np.arange(1 << k, dtype=np.int64)
        bits = ((masks[:, None] >> np.arange(k)) & 1).astype(bool)
        pop = bits.sum(axis=1)
        values = np.zeros(1 << k)
        for m in range(1, k + 1):
            sel = np.nonzero(pop == m)[0]
            idx = np.nonzero(bits[sel])[1].reshape(-1, m)
            for start in range(0, len(sel), chunk):
                ii = idx[start:start + chunk]
                sub = self.matrix[ii[:, :, None], ii[:, None, :]]
                try:
                    L = np.linalg.cholesky(sub)
                except np.linalg.LinAlgError:
                    raise SingularityError("a principal submatrix is not PD") from None
                diag = np.diagonal(L, axis1=1, axis2=2)
                values[sel[start:start + chunk]] = 2.0 * np.log(diag).sum(axis=1)
        return values

    def contract(self, position: int) -> "LogDetOracle":
        # log det M[T+v] - log det M[v] = log det of the Schur complement of v, on T
        m = self.matrix
        keep = [i for i in range(self.size) if i != position]
        col = m[keep, position]
        schur = m[np.ix_(keep, keep)] - np.outer(col, col) / m[position, position]
        schur = 0.5 * (schur + schur.T)
        return LogDetOracle(schur, [self.ground_set[i] for i in keep])


@dataclass(frozen=True)
class SfmResult:
    minimizer: tuple
    value: float
    method: str
    iterations: int = 0
    certificate_gap: float = 0.0


def _better(value, key, best_value, best_key) -> bool:
    """Strictly better value, or a tie (relative 1e-12) with a smaller key."""
    tol = TIE_RTOL * max(1.0, abs(value), abs(best_value))
    if value < best_value - tol:
        return True
    return abs(value - best_value) <= tol and key < best_key


def _subset_key(pos: Sequence[int]) -> tuple:
    pos = tuple(sorted(pos))
    return (len(pos), pos)


def brute_force_min(
    oracle: SubmodularOracle, require_nonempty: bool = False, max_size: int | None = None
) -> SfmResult:
    """Exact minimizer by enumerating every subset.

    Ties (relative 1e-12) go to the smallest cardinality, then to the
    lexicographically smallest position tuple.
    """
    k = oracle.size
    limit = oracle.brute_force_limit if max_size is None else max_size
    if k > limit:
        raise CapabilityError(f"brute force limited to {limit} elements, got {k}")
    if require_nonempty and k == 0:
        raise ValueError("no non-empty subset of an empty ground set")
    values = oracle.all_subset_values()
    masks = np.arange(1 if require_nonempty else 0, 1 << k)
    vals = values[masks]
    best = float(np.min(vals))
    tol = TIE_RTOL * max(1.0, abs(best))
    candidates = masks[vals <= best + tol]
    chosen = min(
        (tuple(i for i in range(k) if m >> i & 1) for m in candidates.tolist()),
        key=_subset_key,
    )
    return SfmResult(
        minimizer=tuple(oracle.ground_set[i] for i in chosen),
        value=float(values[sum(1 << i for i in chosen)]),
        method="brute_force",
        iterations=len(masks),
        certificate_gap=0.0,
    )


def _greedy(oracle: SubmodularOracle, x: np.ndarray):
    """Base-polytope vertex minimizing <x, q>, plus the prefix values used."""
    order = np.argsort(x, kind="stable")
    prefix = oracle.prefix_values(order.tolist())
    q = np.empty_like(x)
    q[order] = np.diff(prefix)
    return q, order, prefix


def _gram_factor(points: np.ndarray) -> np.ndarray | None:
    """Upper R with R^T R = 1 1^T + P P^T, or None if not PD."""
    g = 1.0 + points @ points.T
    try:
        return np.linalg.cholesky(g).T
    except np.linalg.LinAlgError:
        return None


def _affine_weights(points: np.ndarray, R: np.ndarray | None) -> np.ndarray:
    """Barycentric weights of the min-norm point of the affine hull of ``points``."""
    m = points.shape[0]
    ones = np.ones(m)
    if R is not None:
        z = scipy.linalg.solve_triangular(R, ones, trans="T")
        mu = scipy.linalg.solve_triangular(R, z)
    else:
        kkt = np.zeros((m + 1, m + 1))
        kkt[0, 1:] = kkt[1:, 0] = 1.0
        kkt[1:, 1:] = points @ points.T
        rhs = np.zeros(m + 1)
        rhs[0] = 1.0
        mu = np.linalg.lstsq(kkt, rhs, rcond=None)[0][1:]
    return mu / mu.sum()


def _best_prefix(oracle: SubmodularOracle, order: np.ndarray, prefix: np.ndarray):
    best_i = 0
    for i in range(1, len(prefix)):
        if _better(prefix[i], _subset_key(order[:i]), prefix[best_i], _subset_key(order[:best_i])):
            best_i = i
    return best_i


def min_norm_point(
    oracle: SubmodularOracle,
    tolerance: float = 1e-9,
    max_iter: int | None = None,
    trace: TextIO | None = None,
) -> SfmResult:
    """Fujishige-Wolfe minimum-norm point in the base polytope.

    Stops once the duality gap F(best level set) - x^-(V) is at most
    ``tolerance``. The minimizer is the best prefix of the coordinate order
    of the final point, a sweep that contains every level set of x.
    """
    k = oracle.size
    if k == 0:
        return SfmResult((), 0.0, "min_norm_point", 0, 0.0)
    if max_iter is None:
        max_iter = max(10 * k * k, 10)

    x, order, prefix = _greedy(oracle, np.zeros(k))
    points = x[None, :].copy()
    lam = np.array([1.0])
    R = _gram_factor(points)
    gap = math.inf
    for it in range(1, max_iter + 1):
        q, order, prefix = _greedy(oracle, x)
        best_i = _best_prefix(oracle, order, prefix)
        gap = max(0.0, float(prefix[best_i] - np.minimum(x, 0.0).sum()))
        if trace is not None:
            trace.write(json.dumps({"iter": it, "gap": gap, "active": len(lam), "vertex": q.tolist()}) + "\n")
        if gap <= tolerance:
            break
        scale = max(float(q @ q), float(np.max(np.einsum("ij,ij->i", points, points))))
        if float(x @ x - x @ q) <= _Z1 * scale:
            break  # numerically at the min-norm point
        if np.any(np.all(np.abs(points - q) < _Z2, axis=1)):
            break

        # add q with a triangular update of R, rebuilding on conditioning failure
        if R is not None:
            r = scipy.linalg.solve_triangular(R, 1.0 + points @ q, trans="T")
            rho2 = 1.0 + q @ q - r @ r
            points = np.vstack([points, q])
            if rho2 > _Z2 * (1.0 + q @ q):
                R = np.block([[R, r[:, None]], [np.zeros((1, len(r))), np.array([[math.sqrt(rho2)]])]])
            else:
                R = _gram_factor(points)
        else:
            points = np.vstack([points, q])
            R = _gram_factor(points)
        lam = np.append(lam, 0.0)

        # minor cycles
        while True:
            mu = _affine_weights(points, R)
            if np.all(mu > _Z2):
                lam = mu
                x = mu @ points
                break
            mask = (mu <= _Z2) & (lam - mu > _Z2)
            ratios = lam[mask] / (lam[mask] - mu[mask])
            theta = float(np.min(ratios)) if ratios.size else 0.0
            lam = (1.0 - theta) * lam + theta * mu
            drop = lam <= _Z2
            if not drop.any():
                drop[np.argmin(lam)] = True
            points, lam = points[~drop], lam[~drop]
            lam = lam / lam.sum()
            x = lam @ points
            R = _gram_factor(points)
            if len(lam) == 1:
                break
    else:
        raise ConvergenceError(f"min-norm point did not converge in {max_iter} major cycles", gap=gap)

    best_i = _best_prefix(oracle, order, prefix)
    chosen = sorted(order[:best_i].tolist())
    value = oracle.eval_positions(chosen)
    gap = max(0.0, float(value - np.minimum(x, 0.0).sum()))
    return SfmResult(
        minimizer=tuple(oracle.ground_set[i] for i in chosen),
        value=value,
        method="min_norm_point",
        iterations=it,
        certificate_gap=gap,
    )


_METHODS = {
    "brute_force": "brute_force",
    "brute": "brute_force",
    "min_norm_point": "min_norm_point",
    "mnp": "min_norm_point",
    "auto": "auto",
}


def min_nonempty(
    oracle: SubmodularOracle,
    tolerance: float = 1e-9,
    method: str = "min_norm_point",
    trace: TextIO | None = None,
) -> SfmResult:
    """Minimize F over non-empty subsets.

    With the min-norm-point method, each element v is forced in by
    minimizing the contraction T -> F(T + v) - F(v), which is again
    submodular; the best of those candidates wins. Brute force simply skips
    the empty set. ``"auto"`` uses brute force up to the oracle's enumeration
    limit and min-norm point above it.
    """
    method = _METHODS.get(method)
    if method is None:
        raise ValueError(f"unknown SFM method; choose from {sorted(_METHODS)}")
    if oracle.size == 0:
        raise ValueError("no non-empty subset of an empty ground set")
    if method == "auto":
        method = "brute_force" if oracle.size <= oracle.brute_force_limit else "min_norm_point"
    if method == "brute_force":
        return brute_force_min(oracle, require_nonempty=True)

    best_value, best_key, best_pos = math.inf, None, None
    lower = math.inf
    iterations = 0
    for v in range(oracle.size):
        sub = min_norm_point(oracle.contract(v), tolerance, trace=trace)
        iterations += sub.iterations
        pos = oracle.positions(sub.minimizer) + [v]
        value = oracle.eval_positions(pos)
        lower = min(lower, value - sub.certificate_gap)
        key = _subset_key(pos)
        if best_key is None or _better(value, key, best_value, best_key):
            best_value, best_key, best_pos = value, key, sorted(pos)
    return SfmResult(
        minimizer=tuple(oracle.ground_set[i] for i in best_pos),
        value=best_value,
        method="min_norm_point",
        iterations=iterations,
        certificate_gap=max(0.0, best_value - lower),
    )


def diminishing_returns_violation(oracle: SubmodularOracle, n_checks: int = 200, seed=0) -> float:
    """Largest observed F(T+v) - F(T) - (F(S+v) - F(S)) over random S <= T, v not in T.

    Non-positive means no violation was found.
    """
    rng = np.random.default_rng(seed)
    k = oracle.size
    worst = -math.inf
    if k == 0:
        return worst
    for _ in range(n_checks):
        v = int(rng.integers(k))
        others = [i for i in range(k) if i != v]
        t = [i for i in others if rng.random() < 0.5]
        s = [i for i in t if rng.random() < 0.5]
        gain_s = oracle.eval_positions(s + [v]) - oracle.eval_positions(s)
        gain_t = oracle.eval_positions(t + [v]) - oracle.eval_positions(t)
        worst = max(worst, gain_t - gain_s)
    return worst
