"""Principal component analysis of logged channels.

The covariance matrix is diagonalized with cyclic Jacobi rotations, the
components are ranked by eigenvalue and each eigenvalue's share of the
total (its contribution rate) is reported. A component is attributed to
the channel with the largest absolute loading.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateData, NumericalFailure


class DegenerateDataWarning(UserWarning):
    pass


@dataclass
class DataMatrix:
    values: np.ndarray
    feature_names: list
    degenerate: list = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ConfigError("data matrix must be two-dimensional")
        m, n = self.values.shape
        if m < 2 or n < 1:
            raise ConfigError(f"need at least 2 rows and 1 column, got {m}x{n}")
        if len(self.feature_names) != n:
            raise ConfigError("one feature name per column is required")
        if not np.all(np.isfinite(self.values)):
            raise ConfigError("data matrix contains non-finite entries")
        self.feature_names = list(self.feature_names)

    @property
    def shape(self):
        return self.values.shape

    @classmethod
    def from_log(cls, log, names) -> "DataMatrix":
        return cls(log.matrix(names), list(names))


def center(data: DataMatrix, strict: bool = False) -> DataMatrix:
    """Subtract column means.

    Constant columns are kept (they become zero) and listed in
    ``degenerate``; with ``strict=True`` they raise :class:`DegenerateData`
    instead of warning.
    """
    x = data.values
    centered = x - x.mean(axis=0)
    scale = np.maximum(np.abs(x).max(axis=0), 1.0)
    flat = [name for name, col, s in zip(data.feature_names, centered.T, scale)
            if np.all(np.abs(col) <= 1e-12 * s)]
    if flat:
        if strict:
            raise DegenerateData(f"constant columns: {', '.join(flat)}")
        warnings.warn(f"constant columns: {', '.join(flat)}", DegenerateDataWarning, stacklevel=2)
    # subtracting the mean twice removes the rounding residue of the first pass
    centered = centered - centered.mean(axis=0)
    for name in flat:
        centered[:, data.feature_names.index(name)] = 0.0
    return DataMatrix(centered, data.feature_names, degenerate=flat)


def jacobi_eigh(a, tol: float = 1e-10, max_sweeps: int = 100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps over all off-diagonal pairs until the off-diagonal Frobenius
    norm drops below ``tol`` (relative to the matrix norm when that exceeds
    1). Returns ``(eigenvalues, eigenvectors)`` with eigenvectors in columns,
    unsorted.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n) or not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(1.0, np.abs(a).max())):
        raise ConfigError("jacobi_eigh needs a square symmetric matrix")
    v = np.eye(n)
    threshold = tol * max(1.0, float(np.linalg.norm(a)))

    off_mask = ~np.eye(n, dtype=bool)

    def off_norm():
        return float(np.linalg.norm(a[off_mask]))

    for _ in range(max_sweeps):
        if off_norm() < threshold:
            return np.diag(a).copy(), v
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J restricted to rows/cols p, q
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    if off_norm() < threshold:
        return np.diag(a).copy(), v
    raise NumericalFailure(f"Jacobi iteration did not converge in {max_sweeps} sweeps")


def contribution_rates(eigenvalues) -> np.ndarray:
    lam = np.asarray(eigenvalues, dtype=float)
    return lam / lam.sum()


@dataclass
class PcaReport:
    feature_names: list
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # columns, same order as eigenvalues
    contribution_rates: np.ndarray
    selected: list
    covariance: np.ndarray
    attributed: list  # feature with the largest |loading| per component
    threshold: float = 0.99
    threshold_met: bool = True

    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.contribution_rates)

    def table(self) -> str:
        """Plain-text table: attributed feature, eigenvalue, contribution rate."""
        width = max(len("Feature"), *(len(f) for f in self.attributed))
        lines = [f"{'Feature':<{width}}  {'Eigenvalue':>12}  {'Cr':>8}"]
        for name, lam, cr in zip(self.attributed, self.eigenvalues, self.contribution_rates):
            lines.append(f"{name:<{width}}  {lam:>12.3f}  {100 * cr:>7.2f}%")
        lines.append("")
        lines.append("selected: " + ", ".join(self.selected))
        lines.append(f"cumulative Cr of selected components: "
                     f"{100 * self.contribution_rates[:len(self.selected)].sum():.2f}% "
                     f"(threshold {100 * self.threshold:.0f}%)")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "eigenvalues": self.eigenvalues.tolist(),
            "contribution_rates": self.contribution_rates.tolist(),
            "attributed": list(self.attributed),
            "selected": list(self.selected),
            "threshold": self.threshold,
            "threshold_met": self.threshold_met,
            "eigenvectors": self.eigenvectors.tolist(),
        }


def analyze(data: DataMatrix, top_k: int = 3, threshold: float = 0.99,
            standardize: bool = False) -> PcaReport:
    """Rank principal components of centered ``data`` and pick input features.

    For each of the ``top_k`` leading components the not-yet-selected
    feature with the largest absolute loading is chosen. ``threshold_met``
    records whether those components reach the cumulative contribution
    ``threshold``.
    """
    m, n = data.shape
    if not 1 <= top_k <= n:
        raise ConfigError(f"top_k must lie in [1, {n}], got {top_k}")
    x = data.values
    if standardize:
        std = x.std(axis=0, ddof=1)
        x = x / np.where(std > 0, std, 1.0)
    cov = x.T @ x / (m - 1)
    cov = 0.5 * (cov + cov.T)
    lam, vec = jacobi_eigh(cov)
    order = np.argsort(-lam, kind="stable")
    lam = np.clip(lam[order], 0.0, None)
    vec = vec[:, order]
    # sign convention: largest-magnitude loading positive
    for j in range(n):
        i = int(np.argmax(np.abs(vec[:, j])))
        if vec[i, j] < 0:
            vec[:, j] = -vec[:, j]
    cr = contribution_rates(lam) if lam.sum() > 0 else np.zeros(n)
    attributed = [data.feature_names[int(np.argmax(np.abs(vec[:, j])))] for j in range(n)]

    selected = []
    for j in range(top_k):
        ranked = np.argsort(-np.abs(vec[:, j]), kind="stable")
        for i in ranked:
            name = data.feature_names[int(i)]
            if name not in selected:
                selected.append(name)
                break
    return PcaReport(
        feature_names=list(data.feature_names), eigenvalues=lam, eigenvectors=vec,
        contribution_rates=cr, selected=selected, covariance=cov, attributed=attributed,
        threshold=threshold, threshold_met=bool(cr[:top_k].sum() >= threshold),
    )
