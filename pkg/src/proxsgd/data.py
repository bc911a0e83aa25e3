"""LIBSVM-format parsing, synthetic least-squares generators, row rescaling.

Sparse rows are stored as (indices, values) pairs sorted by index; when a
parsed dataset is more than 50% dense the rows are materialized into a single
dense matrix instead (the per-row pair view is then reconstructed on demand).
"""

from __future__ import annotations

import io

import numpy as np


class ParseError(ValueError):
    """Malformed LIBSVM input; carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class Dataset:
    """Feature rows plus labels.

    Parameters
    ----------
    rows : list of (ndarray, ndarray), optional
        Per-row (indices, values) pairs, indices 0-based sorted strictly
        increasing. Exactly one of ``rows`` / ``matrix`` must be given.
    matrix : ndarray (n, d), optional
        Dense feature matrix.
    labels : ndarray (n,)
        Classification labels in {-1, +1} or regression targets.
    d : int
        Feature dimension (needed for the sparse path; ignored when a
        matrix is given).

    Notes
    -----
    Construction from sparse rows switches to dense storage when overall
    density exceeds 50%.
    """

    def __init__(self, labels, rows=None, matrix=None, d=None):
        self.labels = np.asarray(labels, dtype=np.float64)
        if (rows is None) == (matrix is None):
            raise ValueError("give exactly one of rows= or matrix=")
        if matrix is not None:
            matrix = np.ascontiguousarray(matrix, dtype=np.float64)
            if matrix.ndim != 2 or matrix.shape[0] != self.labels.shape[0]:
                raise ValueError("matrix must be (n, d) matching labels")
            self._matrix = matrix
            self._rows = None
            self.n, self.d = matrix.shape
            return
        if d is None:
            raise ValueError("sparse construction needs d")
        if len(rows) != self.labels.shape[0]:
            raise ValueError("rows and labels disagree on n")
        self.n = len(rows)
        self.d = int(d)
        nnz = sum(len(idx) for idx, _ in rows)
        if self.n * self.d > 0 and nnz / (self.n * self.d) > 0.5:
            matrix = np.zeros((self.n, self.d))
            for i, (idx, val) in enumerate(rows):
                matrix[i, idx] = val
            self._matrix = matrix
            self._rows = None
        else:
            self._rows = [(np.asarray(idx, dtype=np.int64),
                           np.asarray(val, dtype=np.float64))
                          for idx, val in rows]
            self._matrix = None

    @property
    def storage(self) -> str:
        return "sparse" if self._rows is not None else "dense"

    def row_pairs(self, i: int):
        """Sparse view of row i as (indices, values)."""
        if self._rows is not None:
            return self._rows[i]
        idx = np.nonzero(self._matrix[i])[0]
        return idx, self._matrix[i, idx]

    def to_matrix(self) -> np.ndarray:
        if self._matrix is not None:
            return self._matrix
        A = np.zeros((self.n, self.d))
        for i, (idx, val) in enumerate(self._rows):
            A[i, idx] = val
        return A

    def row_norms(self) -> np.ndarray:
        """Euclidean norm of every row."""
        if self._matrix is not None:
            return np.linalg.norm(self._matrix, axis=1)
        return np.array([float(np.linalg.norm(val)) for _, val in self._rows])

    def scaled(self, factors) -> "Dataset":
        """New dataset with row i multiplied by factors[i]."""
        factors = np.asarray(factors, dtype=np.float64)
        if factors.shape != (self.n,):
            raise ValueError("factors must have shape (n,)")
        if self._matrix is not None:
            return Dataset(self.labels, matrix=self._matrix * factors[:, None])
        rows = [(idx.copy(), val * factors[i])
                for i, (idx, val) in enumerate(self._rows)]
        return Dataset(self.labels, rows=rows, d=self.d)

    def __repr__(self):
        return (f"Dataset(n={self.n}, d={self.d}, storage={self.storage!r})")


def _normalize_labels(labels: np.ndarray) -> np.ndarray:
    """Map {0,1}- or {1,2}-coded labels onto {-1,+1}; leave anything else.

    The smaller code maps to -1, the larger to +1. Labels already inside
    {-1,+1} (including a single-class file) are kept as-is; real-valued
    targets pass through untouched.
    """
    seen = set(np.unique(labels))
    if seen <= {-1.0, 1.0}:
        return labels
    if seen <= {0.0, 1.0}:
        return np.where(labels == 0.0, -1.0, 1.0)
    if seen <= {1.0, 2.0}:
        return np.where(labels == 1.0, -1.0, 1.0)
    return labels


def parse_libsvm(source, d=None) -> Dataset:
    """Parse LIBSVM text into a Dataset.

    Parameters
    ----------
    source : str or file-like
        The raw text, or a stream yielding it.
    d : int, optional
        Feature dimension override; defaults to the max index seen.

    Raises
    ------
    ParseError
        On a malformed token, a non-increasing or non-positive feature
        index, or an input with no data lines.
    """
    if hasattr(source, "read"):
        source = source.read()
    rows = []
    labels = []
    max_index = 0
    for lineno, raw in enumerate(io.StringIO(source), start=1):
        line = raw.strip()
        if not line:
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise ParseError(lineno, f"bad label {tokens[0]!r}") from None
        idx = []
        val = []
        prev = 0
        for tok in tokens[1:]:
            head, sep, tail = tok.partition(":")
            if not sep:
                raise ParseError(lineno, f"expected idx:val, got {tok!r}")
            try:
                index = int(head)
            except ValueError:
                raise ParseError(lineno, f"bad index {head!r}") from None
            try:
                value = float(tail)
            except ValueError:
                raise ParseError(lineno, f"bad value {tail!r}") from None
            if index <= prev:
                raise ParseError(
                    lineno, f"index {index} not above previous {prev}")
            prev = index
            idx.append(index - 1)
            val.append(value)
        max_index = max(max_index, prev)
        rows.append((np.array(idx, dtype=np.int64),
                     np.array(val, dtype=np.float64)))
        labels.append(label)
    if not rows:
        raise ParseError(0, "no data lines")
    if d is None:
        d = max_index
    elif d < max_index:
        raise ParseError(0, f"d={d} below max feature index {max_index}")
    labels = _normalize_labels(np.array(labels))
    return Dataset(labels, rows=rows, d=d)


def serialize_libsvm(dataset: Dataset) -> str:
    """Inverse of parse_libsvm over stored entries, full float precision."""
    out = []
    for i in range(dataset.n):
        idx, val = dataset.row_pairs(i)
        parts = ["%.17g" % dataset.labels[i]]
        parts += ["%d:%s" % (j + 1, "%.17g" % v) for j, v in zip(idx, val)]
        out.append(" ".join(parts))
    return "\n".join(out) + "\n"


def rescale_rows(dataset: Dataset, rng) -> Dataset:
    """Multiply row i by c*u_i^2, u_i uniform on {1..1000}, with one global
    c making the mean row norm exactly 1.

    All u_i are drawn first, then c = n / sum_i(u_i^2 ||a_i||).

    Raises
    ------
    ValueError
        If every row is zero (no c exists).
    """
    u = rng.integers(1, 1001, size=dataset.n).astype(np.float64)
    norms = dataset.row_norms()
    total = float(np.sum(u * u * norms))
    if total == 0.0:
        raise ValueError("cannot rescale an all-zero dataset")
    c = dataset.n / total
    return dataset.scaled(c * u * u)


def power_iteration(S: np.ndarray, v0=None, tol: float = 1e-10,
                    max_iter: int = 100_000) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration,
    stopping when the Rayleigh quotient is stable to relative ``tol``."""
    d = S.shape[0]
    v = np.full(d, 1.0 / np.sqrt(d)) if v0 is None else \
        np.asarray(v0, dtype=np.float64) / np.linalg.norm(v0)
    lam = float(v @ S @ v)
    for _ in range(max_iter):
        w = S @ v
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        v = w / norm
        lam_new = float(v @ S @ v)
        if abs(lam_new - lam) <= tol * abs(lam_new):
            return lam_new
        lam = lam_new
    return lam


def generate_least_squares(kind: int, n: int, d: int, rng,
                           column_scales=None):
    """Synthetic least-squares data, four flavors.

    1: A with independent standard-normal entries.
    2: flavor 1 rescaled so the top eigenvalue of A^T A is 1.
    3: A_ij = r_ij * w_j with both factors standard normal (w per column).
    4: flavor 3 rescaled like flavor 2.

    b is the all-ones vector in every flavor. ``column_scales`` overrides
    the drawn w for flavors 3/4 (testing hook).

    Returns
    -------
    (A, b) : ndarray (n, d), ndarray (n,)
    """
    if kind not in (1, 2, 3, 4):
        raise ValueError(f"kind must be 1..4, got {kind}")
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    A = rng.standard_normal((n, d))
    if kind in (3, 4):
        w = rng.standard_normal(d) if column_scales is None \
            else np.asarray(column_scales, dtype=np.float64)
        A = A * w
    if kind in (2, 4):
        lam_max = power_iteration(A.T @ A, v0=rng.standard_normal(d))
        if lam_max <= 0.0:
            raise ValueError("degenerate matrix: top eigenvalue is 0")
        A = A / np.sqrt(lam_max)
    return A, np.ones(n)
