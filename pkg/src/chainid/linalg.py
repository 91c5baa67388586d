"""Covariance algebra: Schur-complement conditioning, log-determinants and
the positive super-additive matrix statistics."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from .errors import CapabilityError, SingularityError

__all__ = [
    "CovMatrix",
    "as_cov",
    "is_symmetric",
    "is_pd",
    "conditional_cov",
    "log_det",
    "factorization_check",
    "StatKind",
    "Statistic",
    "evaluate_statistic",
    "permanent",
    "law_of_conditional_covariance_terms",
    "conditional_covariance_law_check",
    "SYMMETRY_RTOL",
    "PD_RATIO",
    "PERMANENT_MAX_DIM",
]

SYMMETRY_RTOL = 1e-10
PD_RATIO = 1e-10
PERMANENT_MAX_DIM = 14


@dataclass(frozen=True, eq=False)
class CovMatrix:
    """Symmetric matrix whose rows/columns are named by vertex labels."""

    entries: np.ndarray
    labels: tuple[int, ...] = ()

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"covariance must be square, got shape {a.shape}")
        labels = tuple(int(v) for v in self.labels) if len(self.labels) else tuple(range(a.shape[0]))
        if len(labels) != a.shape[0]:
            raise ValueError(f"{len(labels)} labels for a {a.shape[0]}x{a.shape[0]} matrix")
        if len(set(labels)) != len(labels):
            raise ValueError("labels must be distinct")
        if not is_symmetric(a):
            raise ValueError("covariance matrix is not symmetric")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return len(self.labels)

    def positions(self, labels: Iterable[int]) -> np.ndarray:
        lookup = {v: i for i, v in enumerate(self.labels)}
        try:
            return np.array([lookup[int(v)] for v in labels], dtype=int)
        except KeyError as exc:
            raise ValueError(f"label {exc.args[0]} not in {self.labels}") from None

    def submatrix(self, labels: Sequence[int]) -> "CovMatrix":
        idx = self.positions(labels)
        return CovMatrix(self.entries[np.ix_(idx, idx)], tuple(labels))

    def to_dict(self) -> dict:
        return {"labels": list(self.labels), "matrix": self.entries.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "CovMatrix":
        return cls(np.asarray(data["matrix"], dtype=float), tuple(data.get("labels", ())))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.labels)
        for row in self.entries:
            writer.writerow([f"{x:.17g}" for x in row])
        return buf.getvalue()


def as_cov(sigma) -> CovMatrix:
    return sigma if isinstance(sigma, CovMatrix) else CovMatrix(np.asarray(sigma, dtype=float))


def is_symmetric(a: np.ndarray, rtol: float = SYMMETRY_RTOL) -> bool:
    scale = np.max(np.abs(a)) if a.size else 0.0
    return bool(np.max(np.abs(a - a.T), initial=0.0) <= rtol * max(scale, np.finfo(float).tiny))


def is_pd(sigma, ratio: float = PD_RATIO) -> bool:
    """Library PD test: smallest eigenvalue > ratio * largest eigenvalue."""
    a = as_cov(sigma).entries
    if a.shape[0] == 0:
        return True
    w = np.linalg.eigvalsh(a)
    return bool(w[-1] > 0 and w[0] > ratio * w[-1])


def _require_pd(a: np.ndarray, block) -> None:
    if a.shape[0] and not is_pd(CovMatrix(a)):
        raise SingularityError(f"block {list(block)} is numerically singular", block=tuple(block))


def _chol_logdet(a: np.ndarray) -> float:
    """log det through a Cholesky factor; no eigenvalue test (hot path)."""
    if a.shape[0] == 0:
        return 0.0
    try:
        L = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise SingularityError("Cholesky factorization failed") from None
    return 2.0 * float(np.sum(np.log(np.diagonal(L))))


def conditional_cov(sigma, given: Iterable[int]) -> CovMatrix:
    """Schur complement of the ``given`` block: Cov(X_B | X_A) for Gaussian X.

    The result is labelled by the remaining labels, in their original order.
    """
    sigma = as_cov(sigma)
    given = sorted(set(int(v) for v in given))
    a_idx = sigma.positions(given)
    given_set = set(given)
    rest = tuple(v for v in sigma.labels if v not in given_set)
    if not rest:
        raise ValueError("cannot condition on every label")
    b_idx = sigma.positions(rest)
    S = sigma.entries
    s_bb = S[np.ix_(b_idx, b_idx)]
    if not given:
        return CovMatrix(s_bb, rest)
    s_aa = S[np.ix_(a_idx, a_idx)]
    _require_pd(s_aa, given)
    factor = scipy.linalg.cho_factor(s_aa, lower=True)
    s_ab = S[np.ix_(a_idx, b_idx)]
    schur = s_bb - s_ab.T @ scipy.linalg.cho_solve(factor, s_ab)
    return CovMatrix(0.5 * (schur + schur.T), rest)


def log_det(sigma) -> float:
    """Natural log-determinant from Cholesky pivots, after the PD test."""
    sigma = as_cov(sigma)
    _require_pd(sigma.entries, sigma.labels)
    return _chol_logdet(sigma.entries)


def factorization_check(sigma, split: Iterable[int]) -> float:
    """|log det S - log det S_AA - log det Schur(S, A)| for A = ``split``."""
    sigma = as_cov(sigma)
    split = sorted(set(int(v) for v in split))
    if not split:
        raise ValueError("split must be non-empty")
    schur = conditional_cov(sigma, split)
    return abs(log_det(sigma) - log_det(sigma.submatrix(split)) - log_det(schur))


class StatKind(str, Enum):
    DETERMINANT = "determinant"
    DET_ROOT = "det_root"
    TRACE = "trace"
    DIAGONAL = "diagonal"
    PERMANENT = "permanent"
    HADAMARD = "hadamard"


@dataclass(frozen=True)
class Statistic:
    """A member of the positive super-additive family.

    ``index`` is only meaningful for ``diagonal``.
    """

    kind: StatKind = StatKind.DETERMINANT
    index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", StatKind(self.kind))

    @classmethod
    def parse(cls, text: str) -> "Statistic":
        """Parse ``"determinant"``, ``"det_root"``, ``"diagonal:2"``, ..."""
        name, _, arg = text.partition(":")
        kind = StatKind(name.strip())
        if arg and kind is not StatKind.DIAGONAL:
            raise ValueError(f"statistic {kind.value} takes no argument")
        return cls(kind, int(arg) if arg else 0)

    def __str__(self):
        return f"diagonal:{self.index}" if self.kind is StatKind.DIAGONAL else self.kind.value


def permanent(a) -> float:
    """Permanent by Ryser's inclusion-exclusion formula, O(2^n n)."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if n > PERMANENT_MAX_DIM:
        raise CapabilityError(f"permanent limited to dim <= {PERMANENT_MAX_DIM}, got {n}")
    if n == 0:
        return 1.0
    masks = np.arange(1, 1 << n)
    member = ((masks[:, None] >> np.arange(n)) & 1).astype(float)
    row_sums = member @ a.T  # row_sums[s, i] = sum_{j in S} a[i, j]
    sizes = member.sum(axis=1)
    signs = np.where((n - sizes) % 2 == 0, 1.0, -1.0)
    return float(np.sum(signs * np.prod(row_sums, axis=1)))


def evaluate_statistic(stat: Statistic | str, sigma) -> float:
    """Evaluate the statistic on a PSD matrix; strictly positive on PD input."""
    if isinstance(stat, str):
        stat = Statistic.parse(stat)
    a = as_cov(sigma).entries
    n = a.shape[0]
    kind = stat.kind
    if kind in (StatKind.DETERMINANT, StatKind.DET_ROOT):
        if n == 0:
            return 1.0
        w = np.linalg.eigvalsh(a)
        # eigenvalues at roundoff level mean a singular PSD matrix; det^(1/n)
        # would otherwise amplify the noise
        if w[-1] <= 0 or w[0] <= n * np.finfo(float).eps * w[-1]:
            return 0.0
        ld = float(np.sum(np.log(w)))
        return math.exp(ld) if kind is StatKind.DETERMINANT else math.exp(ld / n)
    if kind is StatKind.TRACE:
        return float(np.trace(a))
    if kind is StatKind.DIAGONAL:
        if not 0 <= stat.index < n:
            raise ValueError(f"diagonal index {stat.index} out of range for dim {n}")
        return float(a[stat.index, stat.index])
    if kind is StatKind.HADAMARD:
        return float(np.prod(np.diagonal(a)))
    return permanent(a)


def law_of_conditional_covariance_terms(sigma, x, y, z):
    """Both sides of Cov(X|Y) = E[Cov(X|Y,Z)|Y] + Cov(E[X|Y,Z]|Y) for Gaussians.

    Returns ``(lhs, expected_cov, cov_of_mean)``. The right-hand terms are
    computed from regression coefficients rather than from the left side's
    Schur complement.
    """
    sigma = as_cov(sigma)
    x, y, z = (sorted(set(int(v) for v in s)) for s in (x, y, z))
    if set(x) & set(y) or set(x) & set(z) or set(y) & set(z):
        raise ValueError("index sets must be disjoint")
    if not x:
        raise ValueError("X must be non-empty")
    S = sigma.entries
    ix, iy, iz = sigma.positions(x), sigma.positions(y), sigma.positions(z)
    iw = np.concatenate([iy, iz])

    def cond(target, given):
        block = S[np.ix_(target, target)]
        if len(given) == 0:
            return block
        g = S[np.ix_(given, given)]
        _require_pd(g, [sigma.labels[i] for i in given])
        cross = S[np.ix_(target, given)]
        return block - cross @ np.linalg.solve(g, cross.T)

    lhs = cond(ix, iy)
    expected_cov = cond(ix, iw)
    if len(iz) == 0:
        return lhs, expected_cov, np.zeros_like(lhs)
    s_ww = S[np.ix_(iw, iw)]
    _require_pd(s_ww, [sigma.labels[i] for i in iw])
    coef = np.linalg.solve(s_ww, S[np.ix_(iw, ix)]).T  # E[X | W] = coef @ W
    coef_z = coef[:, len(iy):]
    cov_of_mean = coef_z @ cond(iz, iy) @ coef_z.T
    return lhs, expected_cov, cov_of_mean


def conditional_covariance_law_check(source, x, y, z) -> float:
    """Max-abs residual of the law of conditional covariance.

    ``source`` is an AmpSem (its population covariance is used) or any
    covariance matrix.
    """
    if hasattr(source, "noise_covs"):
        from .sem import population_covariance

        source = population_covariance(source)
    lhs, t1, t2 = law_of_conditional_covariance_terms(source, x, y, z)
    return float(np.max(np.abs(lhs - t1 - t2)))
