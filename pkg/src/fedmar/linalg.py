"""Dense linear-algebra primitives shared by the numerical modules.

Everything here is a pure function on float64 arrays. Randomness enters only
through explicit seeds, and no NaN/Inf is ever admitted into a result.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import BadMagic, DimensionMismatch, SingularSystem, TruncatedFile

MATRIX_MAGIC = b"MARM"
# 16-byte header: magic, u32 rows, u32 cols, 4 reserved zero bytes, all
# little-endian; payload is row-major float64 little-endian.
_HEADER = struct.Struct("<4sII4x")

SOLVE_RESIDUAL_RTOL = 1e-8


def as_matrix(values, name: str = "matrix") -> np.ndarray:
    """Validate and return a 2-D float64 array with finite entries."""
    m = np.asarray(values, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise DimensionMismatch(f"{name} must be 2-D with positive shape, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DimensionMismatch(f"{name} contains non-finite entries")
    return m


def frobenius_norm_sq(m) -> float:
    """Sum of squared entries."""
    m = as_matrix(m)
    return float(np.sum(m * m))


def solve_spd(gram, rhs, ridge: float = 0.0) -> np.ndarray:
    """Solve (gram + ridge*I) @ x = rhs for a symmetric PSD gram matrix.

    Uses a Cholesky factorization and verifies the residual afterwards, so a
    rank-deficient or numerically unusable system always surfaces as
    SingularSystem instead of silently returning garbage. Escalating the
    ridge on failure is the caller's job.
    """
    g = as_matrix(gram, "gram")
    b = as_matrix(rhs, "rhs")
    n = g.shape[0]
    if g.shape[1] != n:
        raise DimensionMismatch(f"gram must be square, got {g.shape}")
    if b.shape[0] != n:
        raise DimensionMismatch(f"rhs has {b.shape[0]} rows, expected {n}")
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    scale = np.max(np.abs(g)) if n else 0.0
    if scale > 0 and np.max(np.abs(g - g.T)) > 1e-9 * scale:
        raise DimensionMismatch("gram matrix is not symmetric")

    a = 0.5 * (g + g.T)
    if ridge > 0:
        a = a + ridge * np.eye(n)
    try:
        cho = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
        x = scipy.linalg.cho_solve(cho, b, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise SingularSystem(f"Cholesky factorization failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystem("solution contains non-finite entries")
    residual = np.linalg.norm(a @ x - b)
    if residual > SOLVE_RESIDUAL_RTOL * (1.0 + np.linalg.norm(b)):
        raise SingularSystem(f"residual {residual:.3e} exceeds tolerance")
    return x


def top_right_singular_vector(m, iters: int = 50, seed: int = 0) -> np.ndarray:
    """Unit vector v maximizing ||m @ v||, via seeded power iteration on mᵀm.

    A degenerate all-zero input returns the seeded initial unit vector.
    """
    m = as_matrix(m)
    if iters < 1:
        raise ValueError("iters must be >= 1")
    n = m.shape[1]
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    norm = np.linalg.norm(v)
    if norm == 0.0:  # astronomically unlikely, but keep the contract total
        v = np.zeros(n)
        v[0] = 1.0
    else:
        v = v / norm
    for _ in range(iters):
        w = m.T @ (m @ v)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            break
        v = w / norm
    return v


def save_matrices(path, matrices) -> None:
    """Write matrices to `path` in the binary dump format, one header each."""
    path = Path(path)
    with path.open("wb") as fh:
        for m in matrices:
            m = as_matrix(m)
            fh.write(_HEADER.pack(MATRIX_MAGIC, m.shape[0], m.shape[1]))
            fh.write(np.ascontiguousarray(m, dtype="<f8").tobytes())


def load_matrices(path) -> list[np.ndarray]:
    """Read back every matrix written by save_matrices."""
    data = Path(path).read_bytes()
    out = []
    offset = 0
    while offset < len(data):
        if len(data) - offset < _HEADER.size:
            raise TruncatedFile(f"{path}: incomplete header at offset {offset}")
        magic, rows, cols = _HEADER.unpack_from(data, offset)
        if magic != MATRIX_MAGIC:
            raise BadMagic(f"{path}: expected {MATRIX_MAGIC!r}, found {magic!r}")
        offset += _HEADER.size
        nbytes = rows * cols * 8
        if len(data) - offset < nbytes:
            raise TruncatedFile(f"{path}: payload truncated at offset {offset}")
        flat = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=offset)
        out.append(flat.reshape(rows, cols).astype(np.float64))
        offset += nbytes
    return out
