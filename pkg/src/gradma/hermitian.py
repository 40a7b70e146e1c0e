"""Batched kernels for tiny Hermitian matrices (n <= 3) stored on trailing axes.

Determinants, inverses and eigenvalues use closed forms for n <= 2. For n = 3 the
eigen-decomposition is a cyclic complex Jacobi iteration.
"""

from __future__ import annotations

import numpy as np

JACOBI_TOL = 1e-13
JACOBI_MAX_SWEEPS = 30


def det(m: np.ndarray) -> np.ndarray:
    """Real determinant of Hermitian matrices ``m[..., n, n]``."""
    n = m.shape[-1]
    if n == 1:
        return m[..., 0, 0].real
    if n == 2:
        return (m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]).real
    if n == 3:
        a, b, c = m[..., 0, 0], m[..., 0, 1], m[..., 0, 2]
        d, e, f = m[..., 1, 0], m[..., 1, 1], m[..., 1, 2]
        g, h, k = m[..., 2, 0], m[..., 2, 1], m[..., 2, 2]
        return (a * (e * k - f * h) - b * (d * k - f * g) + c * (d * h - e * g)).real
    raise ValueError(f"unsupported matrix size {n}")


def inv(m: np.ndarray) -> np.ndarray:
    """Inverse via the adjugate; callers guarantee non-singularity."""
    n = m.shape[-1]
    if n == 1:
        return 1.0 / m
    if n == 2:
        out = np.empty_like(m)
        out[..., 0, 0] = m[..., 1, 1]
        out[..., 1, 1] = m[..., 0, 0]
        out[..., 0, 1] = -m[..., 0, 1]
        out[..., 1, 0] = -m[..., 1, 0]
        return out / det(m)[..., None, None]
    if n == 3:
        adj = np.empty_like(m)
        for i in range(3):
            for j in range(3):
                r = [x for x in range(3) if x != j]
                c = [x for x in range(3) if x != i]
                minor = m[..., r[0], c[0]] * m[..., r[1], c[1]] - m[..., r[0], c[1]] * m[..., r[1], c[0]]
                adj[..., i, j] = (-1) ** (i + j) * minor
        return adj / det(m)[..., None, None]
    raise ValueError(f"unsupported matrix size {n}")


def cholesky(m: np.ndarray) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L^H = m`` for positive definite ``m``."""
    n = m.shape[-1]
    out = np.zeros_like(m)
    for j in range(n):
        s = m[..., j, j].real - np.sum(np.abs(out[..., j, :j]) ** 2, axis=-1)
        out[..., j, j] = np.sqrt(s)
        for i in range(j + 1, n):
            t = m[..., i, j] - np.sum(out[..., i, :j] * out[..., j, :j].conj(), axis=-1)
            out[..., i, j] = t / out[..., j, j]
    return out


def tri_solve_lower(lower: np.ndarray, m: np.ndarray) -> np.ndarray:
    """``lower^{-1} @ m`` by forward substitution."""
    n = lower.shape[-1]
    out = np.empty_like(m, dtype=complex)
    for i in range(n):
        acc = m[..., i, :] - np.einsum("...k,...kj->...j", lower[..., i, :i], out[..., :i, :])
        out[..., i, :] = acc / lower[..., i, i][..., None]
    return out


def congruence(g: np.ndarray, m: np.ndarray) -> np.ndarray:
    """``L^{-1} m L^{-H}`` where ``g = L L^H``; its eigenvalues are those of ``g^{-1} m``."""
    lower = cholesky(g)
    half = tri_solve_lower(lower, m)
    full = tri_solve_lower(lower, np.swapaxes(half, -1, -2).conj())
    return 0.5 * (full + np.swapaxes(full, -1, -2).conj())


def _eigvalsh2(m: np.ndarray) -> np.ndarray:
    a, d = m[..., 0, 0].real, m[..., 1, 1].real
    mid = 0.5 * (a + d)
    rad = np.hypot(0.5 * (a - d), np.abs(m[..., 0, 1]))
    return np.stack([mid - rad, mid + rad], axis=-1)


def jacobi_eigh(m: np.ndarray, tol: float = JACOBI_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigen-decomposition of Hermitian ``m[..., n, n]``.

    Returns ascending eigenvalues and unitary eigenvectors (columns). Sweeps stop
    once the off-diagonal Frobenius mass is below ``tol`` times the total mass.
    """
    a = np.array(m, dtype=complex)
    n = a.shape[-1]
    batch = a.shape[:-2]
    v = np.broadcast_to(np.eye(n, dtype=complex), a.shape).copy()
    total = np.sqrt(np.sum(np.abs(a) ** 2, axis=(-1, -2)))
    total = np.where(total == 0, 1.0, total)
    for _ in range(JACOBI_MAX_SWEEPS):
        off = np.sqrt(np.sum(np.abs(a) ** 2, axis=(-1, -2)) - np.sum(np.abs(np.diagonal(a, axis1=-2, axis2=-1)) ** 2, axis=-1).clip(0))
        if np.all(off <= tol * total):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[..., p, q]
                mag = np.abs(apq)
                active = mag > 1e-300
                phase = np.where(active, apq / np.where(active, mag, 1.0), 1.0)
                safe = np.where(active, mag, 1.0)
                theta = (a[..., q, q].real - a[..., p, p].real) / (2 * safe)
                t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
                t = np.where(theta == 0, 1.0, t)
                c = 1.0 / np.sqrt(t**2 + 1)
                s = t * c
                c = np.where(active, c, 1.0)
                s = np.where(active, s, 0.0)
                ph = phase.conj()
                # columns: A <- A U with U[:, p] = (c, -s ph), U[:, q] = (s, c ph)
                colp, colq = a[..., :, p].copy(), a[..., :, q].copy()
                a[..., :, p] = c[..., None] * colp - (s * ph)[..., None] * colq
                a[..., :, q] = s[..., None] * colp + (c * ph)[..., None] * colq
                rowp, rowq = a[..., p, :].copy(), a[..., q, :].copy()
                a[..., p, :] = c[..., None] * rowp - (s * phase)[..., None] * rowq
                a[..., q, :] = s[..., None] * rowp + (c * phase)[..., None] * rowq
                a[..., p, q] = 0.0
                a[..., q, p] = 0.0
                vp, vq = v[..., :, p].copy(), v[..., :, q].copy()
                v[..., :, p] = c[..., None] * vp - (s * ph)[..., None] * vq
                v[..., :, q] = s[..., None] * vp + (c * ph)[..., None] * vq
    w = np.diagonal(a, axis1=-2, axis2=-1).real
    order = np.argsort(w, axis=-1)
    w = np.take_along_axis(w, order, axis=-1)
    v = np.take_along_axis(v, order[..., None, :].repeat(n, axis=-2), axis=-1)
    assert w.shape == batch + (n,)
    return w, v


def eigvalsh(m: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of Hermitian ``m[..., n, n]``."""
    n = m.shape[-1]
    if n == 1:
        return m[..., 0:1, 0].real.copy()
    if n == 2:
        return _eigvalsh2(m)
    return jacobi_eigh(m)[0]


def eigh(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if m.shape[-1] == 1:
        return m[..., 0:1, 0].real.copy(), np.ones_like(m)
    return jacobi_eigh(m)


def min_eigenvalue(m: np.ndarray) -> np.ndarray:
    return eigvalsh(m)[..., 0]


def trace_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pointwise ``tr(a @ b)``."""
    return np.einsum("...ij,...ji->...", a, b)
