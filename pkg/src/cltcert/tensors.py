"""Dense moment tensors, SPD covariance wrappers and sample containers.

The quantities consumed by the bound engine are low-order moment tensors
E[X^{⊗k}] (k up to 6) together with a handful of norms:

* Frobenius norm ‖A‖_F,
* max (entrywise) norm ‖A‖_max,
* symmetric operator norm ‖A‖ = sup_{‖v‖=1} |⟨A, v^{⊗k}⟩|,
* number of nonzero entries N (used by the sparse third-moment surrogate
  m₃·√N).

Everything is stored densely; the admissible sizes (d ≤ 64 for order 4,
d ≤ 22 for order 6) keep the largest tensor under 2^28 entries.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "MomentTensor",
    "SpdMatrix",
    "Sample",
    "OperatorNormResult",
    "empirical_moment",
    "frobenius_norm",
    "max_norm",
    "nonzero_count",
    "operator_norm",
    "whiten",
    "hermite_value",
    "hermite_interval_integral",
]

# hard cap on dense tensor storage: d**order must stay below this
MAX_DENSE_ENTRIES = 2 ** 28

# relative tolerance for the eigendecomposition reconstruction check
SPD_RECONSTRUCTION_RTOL = 1e-10

# SPD matrices with condition number above this are refused by inv_sqrt()
SPD_MAX_CONDITION = 1e12


class TensorShapeError(ValueError):
    """Raised when a tensor's shape is inconsistent with (order, dim)."""


class SpdError(ValueError):
    """Raised when a matrix fails the symmetric-positive-definite contract."""


def _check_dense_size(order: int, dim: int) -> None:
    if dim <= 0:
        raise TensorShapeError(f"dim must be positive, got {dim}")
    if order < 1:
        raise TensorShapeError(f"order must be >= 1, got {order}")
    if dim ** order > MAX_DENSE_ENTRIES:
        raise TensorShapeError(
            f"dense tensor of order {order} and dim {dim} would need "
            f"{dim ** order} > {MAX_DENSE_ENTRIES} entries"
        )


@dataclass(frozen=True)
class MomentTensor:
    """A dense order-k tensor on R^d, typically a moment E[X^{⊗k}].

    ``data`` has shape ``(dim,) * order``.  Entries are stored in full even
    for symmetric tensors; symmetry is the common case but not enforced,
    since differences of moment tensors remain symmetric anyway.
    """

    order: int
    dim: int
    data: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        _check_dense_size(self.order, self.dim)
        arr = np.asarray(self.data, dtype=float)
        if arr.shape != (self.dim,) * self.order:
            raise TensorShapeError(
                f"expected shape {(self.dim,) * self.order}, got {arr.shape}"
            )
        object.__setattr__(self, "data", arr)

    # ---- construction helpers -------------------------------------------
    @classmethod
    def zeros(cls, order: int, dim: int) -> "MomentTensor":
        _check_dense_size(order, dim)
        return cls(order, dim, np.zeros((dim,) * order))

    @classmethod
    def from_flat(cls, order: int, dim: int, entries: Sequence[float]) -> "MomentTensor":
        arr = np.asarray(list(entries), dtype=float)
        if arr.size != dim ** order:
            raise TensorShapeError(
                f"expected {dim ** order} entries for order={order} dim={dim}, "
                f"got {arr.size}"
            )
        return cls(order, dim, arr.reshape((dim,) * order))

    # ---- algebra ---------------------------------------------------------
    def __sub__(self, other: "MomentTensor") -> "MomentTensor":
        if (self.order, self.dim) != (other.order, other.dim):
            raise TensorShapeError("tensor shapes do not match")
        return MomentTensor(self.order, self.dim, self.data - other.data)

    def __add__(self, other: "MomentTensor") -> "MomentTensor":
        if (self.order, self.dim) != (other.order, other.dim):
            raise TensorShapeError("tensor shapes do not match")
        return MomentTensor(self.order, self.dim, self.data + other.data)

    def apply_matrix(self, m: np.ndarray) -> "MomentTensor":
        """Contract every mode with ``m`` (rows index the new coordinates).

        For a moment tensor E[X^{⊗k}] this returns E[(MX)^{⊗k}].
        """
        out = self.data
        for axis in range(self.order):
            out = np.tensordot(m, out, axes=([1], [axis]))
            # tensordot puts the new axis first; rotate it back into place
            out = np.moveaxis(out, 0, axis)
        return MomentTensor(self.order, self.dim, out)

    # ---- serialization ----------------------------------------------------
    def to_json(self) -> str:
        payload = {
            "order": self.order,
            "dim": self.dim,
            "entries": [float(v) for v in self.data.reshape(-1)],
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MomentTensor":
        payload = json.loads(text)
        return cls.from_flat(int(payload["order"]), int(payload["dim"]),
                             payload["entries"])


class SpdMatrix:
    """A symmetric positive-definite matrix with a cached eigendecomposition.

    The decomposition is computed once at construction and validated:
    the input must be symmetric (up to a scaled tolerance), every eigenvalue
    must be strictly positive, and Q diag(λ) Qᵀ must reproduce the input to
    1e-10 relative Frobenius error.
    """

    def __init__(self, matrix: np.ndarray):
        m = np.asarray(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise SpdError(f"expected a square matrix, got shape {m.shape}")
        scale = float(np.abs(m).max()) if m.size else 0.0
        if scale == 0.0:
            raise SpdError("zero matrix is not positive definite")
        if not np.allclose(m, m.T, atol=1e-8 * scale, rtol=0.0):
            raise SpdError("matrix is not symmetric")
        m = 0.5 * (m + m.T)
        eigval, eigvec = np.linalg.eigh(m)
        if eigval[0] <= 0.0:
            raise SpdError(f"matrix is not positive definite (min eigenvalue "
                           f"{eigval[0]:.3e})")
        recon = (eigvec * eigval) @ eigvec.T
        err = np.linalg.norm(recon - m) / np.linalg.norm(m)
        if err > SPD_RECONSTRUCTION_RTOL:
            raise SpdError(f"eigendecomposition reconstruction error {err:.3e} "
                           f"exceeds {SPD_RECONSTRUCTION_RTOL:.1e}")
        self.matrix = m
        self.eigenvalues = eigval
        self.eigenvectors = eigvec

    # ---- basic queries ----------------------------------------------------
    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def max_eigenvalue(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def operator_norm(self) -> float:
        return self.max_eigenvalue

    @property
    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self.matrix))

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))

    @property
    def condition_number(self) -> float:
        return self.max_eigenvalue / self.min_eigenvalue

    # ---- functional calculus ----------------------------------------------
    def _apply(self, f) -> np.ndarray:
        return (self.eigenvectors * f(self.eigenvalues)) @ self.eigenvectors.T

    def sqrt(self) -> np.ndarray:
        return self._apply(np.sqrt)

    def inverse(self) -> np.ndarray:
        return self._apply(lambda lam: 1.0 / lam)

    def inv_sqrt(self) -> np.ndarray:
        """Σ^{-1/2}.  Refuses ill-conditioned inputs rather than amplifying
        noise: condition numbers above 1e12 raise :class:`SpdError`."""
        if self.condition_number > SPD_MAX_CONDITION:
            raise SpdError(
                f"condition number {self.condition_number:.3e} exceeds "
                f"{SPD_MAX_CONDITION:.1e}; refusing to form an inverse square root"
            )
        return self._apply(lambda lam: lam ** -0.5)

    def to_json(self) -> str:
        return json.dumps({
            "dim": self.dim,
            "entries": [float(v) for v in self.matrix.reshape(-1)],
        }, sort_keys=True)


@dataclass
class Sample:
    """An n×d data matrix with provenance (seed and label)."""

    data: np.ndarray
    seed: Optional[int] = None
    label: str = ""

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise ValueError(f"sample data must be 2-D, got ndim={arr.ndim}")
        if not np.isfinite(arr).all():
            raise ValueError("sample contains non-finite entries")
        self.data = arr

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def mean(self) -> np.ndarray:
        return self.data.mean(axis=0)

    def covariance(self, ddof: int = 0) -> np.ndarray:
        """Biased (ddof=0) empirical covariance by default."""
        centered = self.data - self.mean()
        return centered.T @ centered / (self.n - ddof)

    # ---- CSV round-trip ----------------------------------------------------
    def to_csv(self, path_or_buf) -> None:
        close = False
        if isinstance(path_or_buf, (str,)):
            fh = open(path_or_buf, "w", newline="")
            close = True
        else:
            fh = path_or_buf
        try:
            writer = csv.writer(fh)
            writer.writerow([f"x{j + 1}" for j in range(self.dim)])
            for row in self.data:
                writer.writerow([repr(float(v)) for v in row])
        finally:
            if close:
                fh.close()

    @classmethod
    def from_csv(cls, path_or_buf, label: str = "") -> "Sample":
        close = False
        if isinstance(path_or_buf, str):
            fh = open(path_or_buf, "r", newline="")
            close = True
        else:
            fh = path_or_buf
        try:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [[float(v) for v in row] for row in reader if row]
        finally:
            if close:
                fh.close()
        if not rows:
            raise ValueError("CSV sample has a header but no rows")
        arr = np.asarray(rows, dtype=float)
        if arr.shape[1] != len(header):
            raise ValueError("CSV rows do not match the header width")
        return cls(arr, label=label)


# --------------------------------------------------------------------------
# moment computation and norms
# --------------------------------------------------------------------------

_EINSUM_LETTERS = "ijklmp"


def empirical_moment(sample: Sample, order: int, center: bool = False,
                     chunk: int = 262144) -> MomentTensor:
    """Average outer power n^{-1} Σ_i x_i^{⊗k} as a dense tensor.

    With ``center=True`` the sample mean is removed first.  Computation is
    chunked so that order-4/6 moments of large samples do not materialize
    n×d^k intermediates.
    """
    if order < 1 or order > 6:
        raise ValueError(f"order must be in 1..6, got {order}")
    _check_dense_size(order, sample.dim)
    x = sample.data
    if center:
        x = x - x.mean(axis=0)
    n = x.shape[0]
    letters = _EINSUM_LETTERS[:order]
    spec = ",".join(f"n{c}" for c in letters) + "->" + letters
    acc = np.zeros((sample.dim,) * order)
    for start in range(0, n, chunk):
        block = x[start:start + chunk]
        acc += np.einsum(spec, *([block] * order), optimize=True)
    return MomentTensor(order, sample.dim, acc / n)


def frobenius_norm(tensor: MomentTensor) -> float:
    return float(np.sqrt(np.sum(tensor.data ** 2)))


def max_norm(tensor: MomentTensor) -> float:
    return float(np.abs(tensor.data).max())


def nonzero_count(tensor: MomentTensor, tol: Optional[float] = None) -> int:
    """Number of entries with |a| > tol.  Default tol = 1e-12·‖A‖_max, so an
    exactly-zero tensor reports zero entries instead of chasing noise."""
    m = max_norm(tensor)
    if tol is None:
        tol = 1e-12 * m
    return int(np.count_nonzero(np.abs(tensor.data) > tol))


@dataclass(frozen=True)
class OperatorNormResult:
    """Lower estimate of the symmetric operator norm with diagnostics."""

    value: float
    converged: bool
    iterations: int

    def __float__(self) -> float:  # lets callers use the result as a number
        return self.value


def _contract_to_vector(data: np.ndarray, v: np.ndarray, order: int) -> np.ndarray:
    """A · v^{⊗(k-1)}: contract all but the first mode with v."""
    out = data
    for _ in range(order - 1):
        out = np.tensordot(out, v, axes=([out.ndim - 1], [0]))
    return out


def _rayleigh(data: np.ndarray, v: np.ndarray, order: int) -> float:
    return float(_contract_to_vector(data, v, order) @ v)


def operator_norm(tensor: MomentTensor, n_restarts: int = 8, max_iter: int = 200,
                  tol: float = 1e-12, seed: int = 0) -> OperatorNormResult:
    """Estimate ‖A‖ = sup_{‖v‖=1} |⟨A, v^{⊗k}⟩| for a symmetric tensor.

    Uses shifted symmetric higher-order power iteration from canonical basis
    vectors, normalized e_i ± e_j pairs (small d) and ``n_restarts`` random
    unit starts, keeping the best stationary value.  The result is always a
    certified lower bound on the true norm; ``converged`` reports whether the
    final sweep reached the fixed-point tolerance for every start.
    """
    k, d, data = tensor.order, tensor.dim, tensor.data
    if k == 1:
        val = float(np.linalg.norm(data))
        return OperatorNormResult(val, True, 0)
    if k == 2:
        # exact via symmetric eigendecomposition
        sym = 0.5 * (data + data.T)
        eig = np.linalg.eigvalsh(sym)
        return OperatorNormResult(float(np.abs(eig).max()), True, 0)

    rng = np.random.default_rng(seed)
    starts = [e for e in np.eye(d)]
    if d <= 16:
        for i in range(d):
            for j in range(i + 1, d):
                for s in (1.0, -1.0):
                    v = np.zeros(d)
                    v[i], v[j] = 1.0, s
                    starts.append(v / np.sqrt(2.0))
    for _ in range(max(n_restarts, 1)):
        g = rng.standard_normal(d)
        starts.append(g / np.linalg.norm(g))

    # monotonicity shift: |f''| along the sphere is bounded by k(k-1)·‖A‖_F,
    # so this shift convexifies the update for every start
    shift = k * float(np.sqrt(np.sum(data ** 2))) + 1e-30
    signs = (1.0,) if k % 2 == 1 else (1.0, -1.0)

    best = 0.0
    all_converged = True
    total_iters = 0
    for sign in signs:
        a = sign * data
        for v0 in starts:
            v = v0.copy()
            fval = _rayleigh(a, v, k)
            converged = False
            for it in range(max_iter):
                w = _contract_to_vector(a, v, k) + shift * v
                nw = np.linalg.norm(w)
                if nw == 0.0:
                    break
                v_new = w / nw
                f_new = _rayleigh(a, v_new, k)
                step = float(np.linalg.norm(v_new - v))
                v = v_new
                if abs(f_new - fval) <= tol * max(1.0, abs(f_new)) and step < 1e-8:
                    fval = f_new
                    converged = True
                    break
                fval = f_new
            total_iters += it + 1
            all_converged = all_converged and converged
            # odd order: f(-v) = -f(v), so |f| is what we can reach anyway
            cand = abs(fval) if k % 2 == 1 else fval
            if cand > best:
                best = cand
    return OperatorNormResult(best, all_converged, total_iters)


def whiten(sample: Sample, sigma: Optional[SpdMatrix] = None) -> Sample:
    """Rows x_i ↦ Σ^{-1/2} x_i.  With no Σ supplied, the sample's own biased
    covariance is used (and must be well conditioned)."""
    if sigma is None:
        sigma = SpdMatrix(sample.covariance())
    if sigma.dim != sample.dim:
        raise ValueError("covariance dimension does not match the sample")
    w = sample.data @ sigma.inv_sqrt()
    return Sample(w, seed=sample.seed, label=(sample.label + ":whitened").lstrip(":"))


# --------------------------------------------------------------------------
# probabilists' Hermite polynomials and Gaussian-weighted interval integrals
# --------------------------------------------------------------------------


def hermite_value(k: int, x) -> np.ndarray:
    """Probabilists' Hermite polynomial He_k via the three-term recurrence
    He_{j+1}(x) = x·He_j(x) − j·He_{j-1}(x)."""
    if k < 0:
        raise ValueError("k must be >= 0")
    x = np.asarray(x, dtype=float)
    h_prev = np.ones_like(x)
    if k == 0:
        return h_prev
    h = x.copy()
    for j in range(1, k):
        h, h_prev = x * h - j * h_prev, h
    return h


def _phi(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def _std_normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def hermite_interval_integral(k: int, a: float, b: float) -> float:
    """∫_a^b He_k(x) φ(x) dx, exactly.

    For k ≥ 1 the antiderivative of He_k·φ is −He_{k−1}·φ (differentiate and
    use He_k' = k·He_{k−1} together with φ' = −xφ), which vanishes at ±∞.
    k = 0 reduces to the normal CDF difference.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if b < a:
        raise ValueError("need a <= b")
    if k == 0:
        lo = _std_normal_cdf(a) if math.isfinite(a) else 0.0
        hi = _std_normal_cdf(b) if math.isfinite(b) else 1.0
        return hi - lo

    def anti(x: float) -> float:
        if not math.isfinite(x):
            return 0.0
        return -float(hermite_value(k - 1, x)) * _phi(x)

    return anti(b) - anti(a)
