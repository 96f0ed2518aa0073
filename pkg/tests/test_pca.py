import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from steercomp.errors import ConfigError, DegenerateData
from steercomp.pca import DataMatrix, DegenerateDataWarning, analyze, center, jacobi_eigh

from .pca_fixtures import TABLE_EIGENVALUES, data_with_spectrum


def names(n):
    return [f"f{i}" for i in range(n)]


def test_center_examples():
    c = center(DataMatrix([[1.0], [2.0], [3.0]], ["a"]))
    assert c.values[:, 0].tolist() == [-1.0, 0.0, 1.0]
    again = center(c)
    assert np.array_equal(again.values, c.values)


def test_center_constant_column_flagged():
    d = DataMatrix([[5.0, 1.0], [5.0, 2.0], [5.0, 4.0]], ["c", "x"])
    with pytest.warns(DegenerateDataWarning):
        c = center(d)
    assert c.degenerate == ["c"]
    assert c.values[:, 0].tolist() == [0.0, 0.0, 0.0]
    with pytest.raises(DegenerateData):
        center(d, strict=True)


def test_data_matrix_validation():
    with pytest.raises(ConfigError):
        DataMatrix([[1.0, 2.0]], ["a", "b"])
    with pytest.raises(ConfigError):
        DataMatrix([[1.0], [np.nan]], ["a"])
    with pytest.raises(ConfigError):
        DataMatrix([[1.0], [2.0]], ["a", "b"])


def test_table_contribution_rates():
    x = data_with_spectrum(TABLE_EIGENVALUES)
    rep = analyze(center(DataMatrix(x, names(11))))
    assert 100 * rep.contribution_rates[:3] == pytest.approx([47.80, 47.39, 4.75], abs=0.05)
    assert np.all(100 * rep.contribution_rates[3:] <= 0.0135)
    assert rep.eigenvalues == pytest.approx(TABLE_EIGENVALUES, rel=1e-9, abs=1e-12)
    assert rep.threshold_met


def test_diagonal_covariance():
    lam, vec = jacobi_eigh(np.diag([4.0, 1.0]))
    assert lam.tolist() == [4.0, 1.0]
    x = data_with_spectrum([4.0, 1.0], seed=1)
    # align the spectrum with the axes
    x = x @ np.linalg.eigh(np.cov(x.T))[1][:, ::-1]
    rep = analyze(center(DataMatrix(x, ["a", "b"])), top_k=1)
    assert rep.contribution_rates == pytest.approx([0.8, 0.2])
    assert abs(rep.eigenvectors[0, 0]) == pytest.approx(1.0)
    assert rep.selected == ["a"]


def test_rank_one_data():
    t = np.linspace(-1, 1, 50)
    rep = analyze(center(DataMatrix(np.column_stack([t, 2 * t]), ["x", "y"])), top_k=1)
    assert abs(rep.eigenvalues[1]) < 1e-10
    assert rep.selected == ["y"]


def test_selection_dedups():
    # two components both load on "b" most strongly
    cov = np.array([[1.0, 0.0, 0.0], [0.0, 3.0, 1.5], [0.0, 1.5, 2.0]])
    x = data_with_spectrum(np.linalg.eigvalsh(cov)[::-1], seed=2)
    rep = analyze(center(DataMatrix(x, ["a", "b", "c"])), top_k=3)
    assert len(set(rep.selected)) == 3


def test_jacobi_matches_numpy():
    rng = np.random.default_rng(5)
    a = rng.normal(size=(12, 12))
    a = a + a.T
    lam, _ = jacobi_eigh(a)
    assert np.sort(lam) == pytest.approx(np.linalg.eigvalsh(a), abs=1e-9)


def test_top_k_range():
    d = center(DataMatrix(np.random.default_rng(0).normal(size=(10, 3)), names(3)))
    with pytest.raises(ConfigError):
        analyze(d, top_k=0)
    with pytest.raises(ConfigError):
        analyze(d, top_k=4)


def test_threshold_flag():
    x = data_with_spectrum([1.0, 1.0, 1.0, 1.0], seed=3)
    rep = analyze(center(DataMatrix(x, names(4))), top_k=3, threshold=0.99)
    assert not rep.threshold_met
    assert "threshold 99%" in rep.table()


def test_standardize_flag():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(300, 3)) * [100.0, 1.0, 0.01]
    raw = analyze(center(DataMatrix(x, names(3))), top_k=1)
    std = analyze(center(DataMatrix(x, names(3))), top_k=1, standardize=True)
    assert raw.contribution_rates[0] > 0.99
    assert std.contribution_rates[0] < 0.5


matrices = st.integers(2, 7).flatmap(lambda n: st.tuples(
    st.integers(n + 1, 30).flatmap(lambda m: arrays(np.float64, (m, n), elements=st.floats(-100, 100))),
    st.permutations(range(n))))


def _report(x):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateDataWarning)
        return analyze(center(DataMatrix(x, names(x.shape[1]))), top_k=1)


@given(matrices)
def test_reconstruction_and_trace(case):
    x, _ = case
    rep = _report(x)
    v, lam = rep.eigenvectors, rep.eigenvalues
    scale = max(1.0, np.linalg.norm(rep.covariance))
    assert np.linalg.norm(v @ np.diag(lam) @ v.T - rep.covariance) <= 1e-8 * scale
    assert lam.sum() == pytest.approx(np.trace(rep.covariance), abs=1e-10 * scale)
    assert np.allclose(v.T @ v, np.eye(len(lam)), atol=1e-8)
    assert np.all(np.diff(lam) <= 0) and np.all(lam >= 0)
    if lam.sum() > 0:
        assert rep.contribution_rates.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(rep.contribution_rates >= 0)


@given(matrices)
def test_column_permutation_keeps_rates(case):
    x, perm = case
    a = _report(x).contribution_rates
    b = _report(x[:, list(perm)]).contribution_rates
    scale = max(1.0, np.abs(x).max() ** 2)
    assert np.sort(a) == pytest.approx(np.sort(b), abs=1e-9 * scale)
