import itertools
import math

import numpy as np
import pytest

from chainid.errors import CapabilityError, SingularityError
from chainid.linalg import (
    CovMatrix,
    Statistic,
    StatKind,
    conditional_cov,
    conditional_covariance_law_check,
    evaluate_statistic,
    factorization_check,
    is_pd,
    law_of_conditional_covariance_terms,
    log_det,
    permanent,
)


def random_pd(rng, k):
    g = rng.normal(size=(k, k))
    return g @ g.T / k + 0.3 * np.eye(k)


def test_covmatrix_validation_and_round_trip():
    with pytest.raises(ValueError):
        CovMatrix([[1.0, 0.5], [0.4, 1.0]])
    with pytest.raises(ValueError):
        CovMatrix(np.eye(2), (0, 0))
    c = CovMatrix(np.array([[2.0, 0.1], [0.1, 1.0]]), (4, 7))
    assert CovMatrix.from_dict(c.to_dict()).labels == (4, 7)
    assert np.array_equal(CovMatrix.from_dict(c.to_dict()).entries, c.entries)
    assert c.to_csv().splitlines()[0] == "4,7"


def test_conditional_cov_matches_precision_block():
    rng = np.random.default_rng(1)
    for _ in range(50):
        k = int(rng.integers(2, 9))
        s = random_pd(rng, k)
        given = sorted(rng.choice(k, int(rng.integers(1, k)), replace=False).tolist())
        rest = [i for i in range(k) if i not in given]
        # Cov(X_B | X_A) is the inverse of the B block of the precision matrix
        expected = np.linalg.inv(np.linalg.inv(s)[np.ix_(rest, rest)])
        got = conditional_cov(CovMatrix(s), given)
        assert got.labels == tuple(rest)
        assert np.allclose(got.entries, expected, atol=1e-10)


def test_conditional_cov_errors():
    with pytest.raises(ValueError):
        conditional_cov(np.eye(2), [0, 1])
    singular = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(SingularityError) as info:
        conditional_cov(singular, [0, 1])
    assert info.value.block == (0, 1)


def test_log_det_and_factorization():
    rng = np.random.default_rng(2)
    s = random_pd(rng, 6)
    assert log_det(s) == pytest.approx(np.linalg.slogdet(s)[1], abs=1e-12)
    assert factorization_check(s, [1, 4]) < 1e-12
    assert log_det(np.eye(3)) == 0.0
    with pytest.raises(SingularityError):
        log_det(np.ones((2, 2)))


def test_is_pd_ratio_test():
    assert is_pd(np.eye(3))
    assert not is_pd(np.diag([1.0, 1e-12]))


def test_permanent_against_permutation_sum():
    rng = np.random.default_rng(3)
    for k in range(1, 6):
        a = rng.normal(size=(k, k))
        brute = sum(math.prod(a[i, p[i]] for i in range(k)) for p in itertools.permutations(range(k)))
        assert permanent(a) == pytest.approx(brute, rel=1e-10, abs=1e-12)
    assert permanent(np.ones((4, 4))) == pytest.approx(24.0)
    with pytest.raises(CapabilityError):
        permanent(np.eye(15))


def test_statistic_values():
    a = np.array([[2.0, 1.0], [1.0, 3.0]])
    assert evaluate_statistic("determinant", a) == pytest.approx(5.0)
    assert evaluate_statistic("det_root", a) == pytest.approx(math.sqrt(5.0))
    assert evaluate_statistic("trace", a) == 5.0
    assert evaluate_statistic("diagonal:1", a) == 3.0
    assert evaluate_statistic("permanent", a) == pytest.approx(7.0)
    assert evaluate_statistic("hadamard", a) == 6.0
    assert evaluate_statistic("determinant", np.ones((2, 2))) == 0.0
    with pytest.raises(ValueError):
        evaluate_statistic("diagonal:5", a)
    with pytest.raises(ValueError):
        Statistic.parse("trace:1")


def test_statistic_parse_round_trip():
    for text in ("determinant", "det_root", "trace", "diagonal:3", "permanent", "hadamard"):
        assert str(Statistic.parse(text)) == text
    assert Statistic.parse("diagonal:3") == Statistic(StatKind.DIAGONAL, 3)


def test_law_of_conditional_covariance():
    rng = np.random.default_rng(4)
    for _ in range(30):
        s = random_pd(rng, 7)
        perm = rng.permutation(7)
        x, y, z = perm[:2], perm[2:4], perm[4:]
        assert conditional_covariance_law_check(CovMatrix(s), x, y, z) < 1e-10
        lhs, expected_cov, cov_of_mean = law_of_conditional_covariance_terms(CovMatrix(s), x, [], z)
        assert np.allclose(lhs, s[np.ix_(sorted(x), sorted(x))])
        assert np.all(np.linalg.eigvalsh(cov_of_mean) > -1e-12)
    with pytest.raises(ValueError):
        law_of_conditional_covariance_terms(np.eye(3), [0], [0], [1])
