"""稠密实矩阵内核：范数、有效秩、扩张、截断、稳定性与平稳VAR协方差"""
import logging
import math
from typing import List, Sequence, Union

import numpy as np
from scipy import linalg as la

from config.settings import settings
from app.services.errors import CapabilityError, DomainError, InstabilityError, MatrixInputError

logger = logging.getLogger(__name__)

SYMMETRY_RTOL = 1e-10
PSD_RTOL = 1e-10
MAX_DOUBLINGS = 64
RESIDUAL_RTOL = 1e-10
ENUMERATION_CHUNK = 1 << 15

# ψ2 norm of a unit-variance Gaussian under inf{k : E exp(X²/k²) <= 2}
GAUSSIAN_PSI2 = math.sqrt(8.0 / 3.0)


class DenseMatrix:
    """只读稠密实矩阵"""

    def __init__(self, entries):
        data = np.array(entries, dtype=float)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise MatrixInputError(f"expected a non-empty 2-D matrix, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise MatrixInputError("matrix has non-finite entries")
        data.setflags(write=False)
        self._data = data

    @property
    def array(self) -> np.ndarray:
        return self._data

    @property
    def rows(self) -> int:
        return self.array.shape[0]

    @property
    def cols(self) -> int:
        return self.array.shape[1]

    @property
    def shape(self):
        return self.array.shape

    @property
    def entries(self) -> np.ndarray:
        """行主序的元素"""
        return self.array.ravel()

    @property
    def T(self) -> "DenseMatrix":
        return DenseMatrix(self.array.T)

    def tolist(self) -> List[List[float]]:
        return self.array.tolist()

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.array
        return self.array.astype(dtype)

    def __sub__(self, other):
        return DenseMatrix(self.array - as_array(other))

    def __add__(self, other):
        return DenseMatrix(self.array + as_array(other))

    def __repr__(self):
        return f"{type(self).__name__}(shape={self.shape})"


class SymmetricMatrix(DenseMatrix):
    """只存储上三角的对称矩阵，访问时展开"""

    def __init__(self, entries, check: bool = True):
        data = np.array(entries, dtype=float)
        if data.ndim != 2 or data.shape[0] != data.shape[1] or data.shape[0] < 1:
            raise MatrixInputError(f"symmetric matrix must be square, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise MatrixInputError("matrix has non-finite entries")
        if check:
            scale = max(1.0, float(np.max(np.abs(data))))
            if np.max(np.abs(data - data.T)) > SYMMETRY_RTOL * scale:
                raise MatrixInputError("matrix is not symmetric")
        self._dim = data.shape[0]
        self._packed = data[np.triu_indices(self._dim)].copy()
        self._packed.setflags(write=False)

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def array(self) -> np.ndarray:
        full = np.zeros((self._dim, self._dim))
        iu = np.triu_indices(self._dim)
        full[iu] = self._packed
        full[iu[1], iu[0]] = self._packed
        full.setflags(write=False)
        return full

    @property
    def T(self) -> "SymmetricMatrix":
        return self


MatrixLike = Union[DenseMatrix, np.ndarray, Sequence[Sequence[float]]]


def as_array(m: MatrixLike) -> np.ndarray:
    """转为有限的二维 float 数组"""
    if isinstance(m, DenseMatrix):
        return m.array
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise MatrixInputError(f"expected a non-empty 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise MatrixInputError("matrix has non-finite entries")
    return a


def _is_symmetric(m: MatrixLike, a: np.ndarray) -> bool:
    if isinstance(m, SymmetricMatrix):
        return True
    return a.shape[0] == a.shape[1] and np.array_equal(a, a.T)


def _like(template: MatrixLike, a: np.ndarray):
    # keep the caller's container type
    if isinstance(template, SymmetricMatrix):
        return SymmetricMatrix(a, check=False)
    if isinstance(template, DenseMatrix):
        return DenseMatrix(a)
    return a


def spectral_norm(m: MatrixLike) -> float:
    """谱范数（最大奇异值）"""
    a = as_array(m)
    if _is_symmetric(m, a):
        w = la.eigvalsh(a)
        return float(max(abs(w[0]), abs(w[-1])))
    gram = a.T @ a if a.shape[1] <= a.shape[0] else a @ a.T
    lam = la.eigvalsh(gram)[-1]
    return float(np.sqrt(max(lam, 0.0)))


def nuclear_norm(m: MatrixLike) -> float:
    """核范数（奇异值之和）"""
    a = as_array(m)
    if _is_symmetric(m, a):
        return float(np.sum(np.abs(la.eigvalsh(a))))
    return float(np.sum(la.svdvals(a)))


def psd_eigenvalues(a: np.ndarray) -> np.ndarray:
    if a.shape[0] != a.shape[1]:
        raise MatrixInputError(f"expected a square matrix, got shape {a.shape}")
    if np.max(np.abs(a - a.T)) > SYMMETRY_RTOL * max(1.0, float(np.max(np.abs(a)))):
        raise MatrixInputError("matrix is not symmetric")
    w = la.eigvalsh(a)
    if w[0] < -PSD_RTOL * max(abs(w[-1]), abs(w[0])):
        raise DomainError(f"matrix is indefinite (lambda_min={w[0]:.3e}, lambda_max={w[-1]:.3e})")
    return w


def effective_rank(s: MatrixLike) -> float:
    """有效秩 r(S) = Tr(S)/||S||"""
    a = as_array(s)
    if not np.any(a):
        raise DomainError("effective rank of the zero matrix is undefined")
    w = psd_eigenvalues(a)
    r = float(np.trace(a)) / float(max(abs(w[0]), abs(w[-1])))
    return float(np.clip(r, 1.0, a.shape[0]))


def dilate(z: MatrixLike) -> SymmetricMatrix:
    """矩阵扩张 [[0, Z], [Z^T, 0]]"""
    a = as_array(z)
    r, c = a.shape
    full = np.zeros((r + c, r + c))
    full[:r, r:] = a
    full[r:, :r] = a.T
    return SymmetricMatrix(full, check=False)


def truncate(x: MatrixLike, level: float):
    """截断算子 X^M = (M ∧ ||X||)/||X|| · X；零矩阵原样返回"""
    if not level > 0:
        raise DomainError(f"truncation level must be positive, got {level}")
    a = as_array(x)
    norm = spectral_norm(x)
    if norm <= level:
        return x if isinstance(x, DenseMatrix) else a.copy()
    return _like(x, a * (level / norm))


def spectral_radius(a: MatrixLike) -> float:
    """谱半径（复特征值模的最大值）"""
    arr = as_array(a)
    if arr.shape[0] != arr.shape[1]:
        raise MatrixInputError(f"spectral radius needs a square matrix, got shape {arr.shape}")
    return float(np.max(np.abs(la.eigvals(arr))))


def companion_matrix(a: Sequence[float]) -> DenseMatrix:
    """伴随矩阵：首行为 a，次对角线为 1"""
    coefs = np.asarray(a, dtype=float).ravel()
    if coefs.size == 0:
        raise MatrixInputError("companion matrix needs at least one coefficient")
    d = coefs.size
    out = np.zeros((d, d))
    out[0, :] = coefs
    if d > 1:
        out[1:, :-1] = np.eye(d - 1)
    return DenseMatrix(out)


def psd_factor(s: MatrixLike) -> np.ndarray:
    """返回 L 使得 L L^T = S（奇异时退化为特征分解）"""
    a = as_array(s)
    try:
        return la.cholesky(a, lower=True)
    except la.LinAlgError:
        w, v = la.eigh(a)
        return v * np.sqrt(np.clip(w, 0.0, None))


def _doubling_sum(arr: np.ndarray, q: np.ndarray, scale: float) -> np.ndarray:
    # S_{k+1} = S_k + A_k S_k A_k^T, A_{k+1} = A_k^2 sums 2^k series terms per step
    total = q.copy()
    power = arr.copy()
    for step in range(MAX_DOUBLINGS):
        term = power @ total @ power.T
        total = total + term
        if spectral_norm(term) < settings.lyapunov_rel_tol * scale:
            break
        power = power @ power
    else:
        raise InstabilityError(f"Lyapunov series did not converge after {MAX_DOUBLINGS} doublings")
    logger.debug(f"Lyapunov series converged in {step + 1} doublings")
    return 0.5 * (total + total.T)


def stationary_var1_covariance(a: MatrixLike, sigma_e: MatrixLike) -> SymmetricMatrix:
    """解离散 Lyapunov 方程 Σ0 = AΣ0A^T + Σ_E（几何级数求和，倍增加速）"""
    arr = as_array(a)
    q = as_array(sigma_e)
    if arr.shape[0] != arr.shape[1] or q.shape != arr.shape:
        raise MatrixInputError(f"shape mismatch: A {arr.shape}, Sigma_E {q.shape}")
    psd_eigenvalues(q)

    rho = spectral_radius(arr)
    if rho >= 1.0 - settings.instability_margin:
        raise InstabilityError(f"spectral radius {rho:.8f} too close to or above 1")

    scale = spectral_norm(q)
    if scale == 0.0:
        return SymmetricMatrix(np.zeros_like(q), check=False)

    total = _doubling_sum(arr, q, scale)
    residual = total - arr @ total @ arr.T - q
    if spectral_norm(residual) > RESIDUAL_RTOL * scale:
        # one refinement pass: X = A X A^T + R, then Σ0 - X
        total = total - _doubling_sum(arr, residual, scale)
        residual = total - arr @ total @ arr.T - q
    error = spectral_norm(residual)
    logger.debug(f"Lyapunov solved, rho={rho:.4f}, residual={error:.3e}")
    if error > RESIDUAL_RTOL * scale:
        raise InstabilityError(f"Lyapunov residual {error:.3e} exceeds {RESIDUAL_RTOL:g} * ||Sigma_E||")
    return SymmetricMatrix(total, check=False)


def var1_autocovariance(a: MatrixLike, sigma0: MatrixLike, m: int) -> DenseMatrix:
    """VAR(1) 总体自协方差 Σ_m = Σ0 (A^T)^m"""
    if m < 0:
        raise MatrixInputError(f"lag must be nonnegative, got {m}")
    if m == 0:
        return sigma0 if isinstance(sigma0, DenseMatrix) else SymmetricMatrix(as_array(sigma0))
    arr = as_array(a)
    return DenseMatrix(as_array(sigma0) @ np.linalg.matrix_power(arr.T, m))


def block_companion(coefs: Sequence[MatrixLike]) -> np.ndarray:
    """VAR(d) 的分块伴随矩阵（pd × pd）"""
    mats = [as_array(c) for c in coefs]
    if not mats:
        raise MatrixInputError("VAR needs at least one coefficient matrix")
    p = mats[0].shape[0]
    d = len(mats)
    big = np.zeros((p * d, p * d))
    big[:p, :] = np.hstack(mats)
    if d > 1:
        big[p:, :-p] = np.eye(p * (d - 1))
    return big


def stationary_var_covariance(coefs: Sequence[MatrixLike], sigma_e: MatrixLike) -> SymmetricMatrix:
    """VAR(d) 堆叠状态 (Y_t, ..., Y_{t-d+1}) 的平稳协方差"""
    big = block_companion(coefs)
    q = as_array(sigma_e)
    p = q.shape[0]
    padded = np.zeros_like(big)
    padded[:p, :p] = q
    return stationary_var1_covariance(big, padded)


def var_autocovariance(coefs: Sequence[MatrixLike], sigma_e: MatrixLike, m: int) -> DenseMatrix:
    """VAR(d) 总体自协方差 Σ_m = E Y_t Y_{t+m}^T"""
    q = as_array(sigma_e)
    p = q.shape[0]
    if len(coefs) == 1:
        sigma0 = stationary_var1_covariance(coefs[0], q)
        return var1_autocovariance(coefs[0], sigma0, m)
    big = block_companion(coefs)
    gamma = stationary_var_covariance(coefs, q)
    stacked = var1_autocovariance(big, gamma, m).array
    block = stacked[:p, :p]
    return SymmetricMatrix(block, check=False) if m == 0 else DenseMatrix(block)


def hypercube_quadratic_max(s: MatrixLike, max_dim: int = None) -> float:
    """max over v in {±1}^p of v^T S v（固定 v_1 = +1，枚举 2^{p-1} 个符号类）"""
    a = as_array(s)
    p = a.shape[0]
    off = a[~np.eye(p, dtype=bool)]
    if np.all(off >= 0.0):
        # v = (1, ..., 1) maximizes every off-diagonal term
        return float(a.sum())
    limit = settings.enumerate_max_dim if max_dim is None else max_dim
    if p > limit:
        raise CapabilityError(f"hypercube enumeration limited to p <= {limit}, got p = {p}")
    shifts = np.arange(p - 1)
    best = -np.inf
    total = 1 << (p - 1)
    for start in range(0, total, ENUMERATION_CHUNK):
        idx = np.arange(start, min(start + ENUMERATION_CHUNK, total))
        bits = (idx[:, None] >> shifts) & 1
        signs = np.hstack([np.ones((idx.size, 1)), 1.0 - 2.0 * bits])
        values = np.einsum("ij,jk,ik->i", signs, a, signs)
        best = max(best, float(values.max()))
    return best
