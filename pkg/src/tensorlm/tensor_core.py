"""Dense multilinear algebra on small real tensors.

Everything here is exact float64, row-major, and CPU-only. Tensors are
immutable values; all operations are pure functions, so results can be
shared freely across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Hard guard against accidentally materializing huge dense tensors.
MAX_TENSOR_ELEMENTS = 10_000_000

_JACOBI_TOL = 1e-12
_MAX_JACOBI_SWEEPS = 64
_RANK_CUTOFF = 1e-13


def check_tensor_size(n_elements: int) -> None:
    if n_elements > MAX_TENSOR_ELEMENTS:
        raise ValueError(
            f"tensor with {n_elements} elements exceeds the "
            f"{MAX_TENSOR_ELEMENTS}-element guard"
        )


@dataclass(frozen=True)
class DenseTensor:
    """Arbitrary-order real tensor with an explicit shape.

    Values are stored as a read-only float64 ndarray in row-major order
    (last index fastest). A scalar is an order-0 tensor with one element.
    """

    array: np.ndarray

    def __post_init__(self):
        arr = np.array(self.array, dtype=np.float64, order="C")
        arr.flags.writeable = False
        object.__setattr__(self, "array", arr)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.array.shape

    @property
    def order(self) -> int:
        return self.array.ndim

    @property
    def data(self) -> np.ndarray:
        """Flat row-major view of the entries."""
        return self.array.reshape(-1)

    def item(self) -> float:
        if self.array.size != 1:
            raise ValueError("item() requires a single-element tensor")
        return float(self.array.reshape(-1)[0])

    def __getitem__(self, idx):
        return self.array[idx]


def as_tensor(value) -> DenseTensor:
    """Coerce an array-like (or pass through a DenseTensor)."""
    if isinstance(value, DenseTensor):
        return value
    return DenseTensor(np.asarray(value, dtype=np.float64))


def tensor_product(a, b) -> DenseTensor:
    """Tensor product: shape is concat(a.shape, b.shape), entries multiply."""
    a, b = as_tensor(a), as_tensor(b)
    check_tensor_size(a.array.size * b.array.size)
    return DenseTensor(np.multiply.outer(a.array, b.array))


def rank_one(vectors) -> DenseTensor:
    """Tensor product of one or more vectors.

    Entry (d_1, ..., d_n) is the product of vectors[i][d_i].
    """
    vecs = [np.asarray(v, dtype=np.float64) for v in vectors]
    if not vecs:
        raise ValueError("rank_one needs at least one vector")
    for v in vecs:
        if v.ndim != 1:
            raise ValueError("rank_one operands must be vectors")
    check_tensor_size(math.prod(v.size for v in vecs))
    out = vecs[0]
    for v in vecs[1:]:
        out = np.multiply.outer(out, v)
    return DenseTensor(out)


def inner_product(a, b) -> float:
    """Sum of entrywise products of two same-shape tensors."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.dot(a.data, b.data))


def delta_tensor(order: int, dim: int) -> DenseTensor:
    """Super-diagonal tensor: 1 where all indices are equal, else 0."""
    if order < 1 or dim < 1:
        raise ValueError("delta_tensor requires order >= 1 and dim >= 1")
    check_tensor_size(dim**order)
    arr = np.zeros((dim,) * order)
    arr[(np.arange(dim),) * order] = 1.0
    return DenseTensor(arr)


def matricize_last(t) -> np.ndarray:
    """Unfold a tensor into a (m_1*...*m_{n-1}) x m_n matrix.

    Rows enumerate the leading modes in row-major order, so the unfolding
    is a plain reshape and the round trip is bit-exact.
    """
    t = as_tensor(t)
    if t.order < 2:
        raise ValueError("matricize_last requires order >= 2")
    return t.array.reshape(-1, t.shape[-1])


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD a = u @ diag(singular_values) @ v.

    u has orthonormal columns, v has orthonormal rows, and the singular
    values are nonnegative and nonincreasing.
    """

    u: np.ndarray
    singular_values: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        s = self.singular_values
        if np.any(s < 0) or np.any(np.diff(s) > 0):
            raise ValueError("singular values must be nonnegative and nonincreasing")

    def compose(self) -> np.ndarray:
        return (self.u * self.singular_values) @ self.v


def _orthonormal_fill(u: np.ndarray, col: int) -> None:
    """Replace column `col` with a unit vector orthogonal to columns < col."""
    m = u.shape[0]
    best = None
    best_norm = -1.0
    for j in range(m):
        cand = np.zeros(m)
        cand[j] = 1.0
        for k in range(col):
            cand -= (u[:, k] @ cand) * u[:, k]
        norm = np.linalg.norm(cand)
        if norm > best_norm:
            best_norm, best = norm, cand
    u[:, col] = best / best_norm


def _jacobi(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One-sided Jacobi SVD of a matrix with rows >= cols.

    Sweeps rotate column pairs until all pairs satisfy
    |<m_p, m_q>| <= tol * |m_p| * |m_q|, then singular values are the
    column norms. Rotations are applied identically to an accumulator V,
    so a = M @ V.T holds to rounding throughout.
    """
    m, n = a.shape
    M = a.copy()
    V = np.eye(n)
    for _ in range(_MAX_JACOBI_SWEEPS):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                mp, mq = M[:, p], M[:, q]
                app, aqq, apq = mp @ mp, mq @ mq, mp @ mq
                if apq * apq <= (_JACOBI_TOL**2) * app * aqq:
                    continue
                theta = 0.5 * np.arctan2(2.0 * apq, app - aqq)
                c, s = np.cos(theta), np.sin(theta)
                new_p = c * mp + s * mq
                new_q = -s * mp + c * mq
                M[:, p], M[:, q] = new_p, new_q
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp + s * vq
                V[:, q] = -s * vp + c * vq
                rotated = True
        if not rotated:
            break

    norms = np.linalg.norm(M, axis=0)
    order = np.argsort(-norms, kind="stable")
    norms = norms[order]
    U = M[:, order]
    for i in range(n):
        if norms[i] > 0.0:
            U[:, i] /= norms[i]
        else:
            _orthonormal_fill(U, i)
    return U, norms, V[:, order].T


def svd(a) -> SvdResult:
    """One-sided Jacobi SVD with a deterministic sign convention.

    Each (u_i, v_i) pair is flipped so that the largest-magnitude entry of
    u_i is positive (first index wins ties), making results reproducible
    across runs and platforms.
    """
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("svd expects a matrix")
    if not np.all(np.isfinite(arr)):
        raise ValueError("svd input must be finite")
    if arr.shape[0] >= arr.shape[1]:
        u, s, v = _jacobi(arr)
    else:
        ut, s, vt = _jacobi(arr.T)
        u, v = vt.T, ut.T
    for i in range(s.size):
        j = int(np.argmax(np.abs(u[:, i])))
        if u[j, i] < 0.0:
            u[:, i] = -u[:, i]
            v[i, :] = -v[i, :]
    return SvdResult(u=u, singular_values=s, v=v)


@dataclass(frozen=True)
class DecompChain:
    """Factor chain from the recursive last-mode decomposition.

    The top level splits the final mode: t = sum_i lambda_i S_i (x) u_i,
    where u_i are the rows of `u_mat` and the S_i are carried implicitly.
    Each deeper level splits one more trailing mode; its factors are kept
    as a full transfer core of shape (rank_out, dim, rank_in) rather than
    a square mixing matrix, because a shared-U square-matrix chain cannot
    represent generic tensors exactly (see `build_param_tensor` in
    tslm_model for the shared-factor variant used by the model).
    `head` is the leading-mode factor closing the chain.
    """

    dim: int
    order: int
    lambdas: np.ndarray
    u_mat: np.ndarray
    cores: tuple
    head: np.ndarray

    def __post_init__(self):
        r = self.lambdas.shape[0]
        if self.u_mat.shape != (r, self.dim):
            raise ValueError("u_mat inconsistent with lambdas/dim")
        junction = r
        for core in self.cores:
            if core.ndim != 3 or core.shape[1] != self.dim or core.shape[2] != junction:
                raise ValueError("core dimensions inconsistent")
            junction = core.shape[0]
        head_rows = self.dim if self.order > 1 else 1
        if self.head.shape != (head_rows, junction):
            raise ValueError("head inconsistent with chain")

    @property
    def rank(self) -> int:
        return int(self.lambdas.shape[0])


def recursive_decompose(t, rank: int) -> DecompChain:
    """Decompose a cubical tensor by repeated last-mode unfolding + SVD.

    The top-level SVD is truncated to `rank`; deeper levels keep full
    numerical rank, so the reconstruction error equals the discarded
    top-level singular-value energy. With rank == dim the round trip is
    lossless for any order.
    """
    t = as_tensor(t)
    if t.order < 1:
        raise ValueError("cannot decompose an order-0 tensor")
    m = t.shape[0]
    if any(d != m for d in t.shape):
        raise ValueError("all mode dimensions must be equal")
    if rank < 1 or rank > m:
        raise ValueError(f"rank must be in [1, {m}], got {rank}")

    top = svd(t.array.reshape(-1, m))
    lambdas = top.singular_values[:rank].copy()
    u_mat = top.v[:rank, :].copy()
    carry = top.u[:, :rank].copy()

    cores = []
    for level in range(t.order - 1, 1, -1):
        prev_rank = carry.shape[1]
        block = carry.reshape(m ** (level - 1), m * prev_rank)
        res = svd(block)
        s = res.singular_values
        keep = max(1, int(np.sum(s > s[0] * _RANK_CUTOFF))) if s[0] > 0 else 1
        core = (s[:keep, None] * res.v[:keep]).reshape(keep, m, prev_rank)
        cores.append(core)
        carry = res.u[:, :keep].copy()

    return DecompChain(
        dim=m,
        order=t.order,
        lambdas=lambdas,
        u_mat=u_mat,
        cores=tuple(cores),
        head=carry,
    )


def reconstruct(chain: DecompChain, order: int) -> DenseTensor:
    """Materialize the tensor represented by a DecompChain."""
    if order != chain.order:
        raise ValueError(f"chain holds an order-{chain.order} tensor, not {order}")
    check_tensor_size(chain.dim**order)
    block = chain.head
    for core in reversed(chain.cores):
        block = np.einsum("...j,jdi->...di", block, core)
    full = np.einsum("...i,i,im->...m", block, chain.lambdas, chain.u_mat)
    return DenseTensor(full.reshape((chain.dim,) * order))
