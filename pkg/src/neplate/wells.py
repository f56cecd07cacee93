"""The energy well ``SO(3) A``, its squared distance, and the quadratic forms Q3 and Q2.

Functions broadcast over leading axes: ``F`` of shape ``(..., 3, 3)`` together
with ``A`` of shape ``(..., 3, 3)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NotSPD

NONSMOOTH_TOL = 1e-10


def _T(M):
    return np.swapaxes(M, -1, -2)


def _fro2(M):
    return np.einsum("...ij,...ij->...", M, M)


def _check_A(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if np.abs(A - _T(A)).max(initial=0.0) > 1e-10 * max(1.0, np.abs(A).max(initial=0.0)):
        raise NotSPD("well matrix A is not symmetric")
    if np.any(~(np.linalg.eigvalsh(A) > 0)):
        raise NotSPD("well matrix A is not positive definite")
    return A


@dataclass(frozen=True)
class WellDistance:
    value: np.ndarray
    nearest_rotation: np.ndarray
    smooth: np.ndarray


def _nearest(F: np.ndarray, A: np.ndarray):
    # max over R in SO(3) of <F, R A> = <F A, R>: orthogonal Procrustes on F A
    U, s, Vt = np.linalg.svd(F @ A)
    d = np.sign(np.linalg.det(U) * np.linalg.det(Vt))
    d = np.where(d == 0, 1.0, d)
    D = np.ones(s.shape)
    D[..., -1] = d
    R = (U * D[..., None, :]) @ Vt
    smooth = (s[..., 1] + d * s[..., 2]) > NONSMOOTH_TOL
    return R, smooth


def dist_to_well(F, A) -> WellDistance:
    """Squared Frobenius distance from ``F`` to ``SO(3) A`` and the minimizing rotation."""
    F = np.asarray(F, dtype=float)
    A = _check_A(A)
    R, smooth = _nearest(F, A)
    value = _fro2(F - R @ A)
    return WellDistance(value=value, nearest_rotation=R, smooth=smooth)


def well_value_and_gradient(F, A, check: bool = True):
    """``(dist^2(F, SO(3)A), 2 (F - R A))`` without building a :class:`WellDistance`."""
    F = np.asarray(F, dtype=float)
    A = _check_A(A) if check else A
    R, _ = _nearest(F, A)
    diff = F - R @ A
    return _fro2(diff), 2.0 * diff


def well_gradient(F, A) -> np.ndarray:
    """Derivative of ``dist_to_well`` in ``F``; a subgradient on the nonsmooth set."""
    return well_value_and_gradient(F, A)[1]


# -- projection onto sym . A^{-1} ---------------------------------------------


def project_sym_Ainv(F, A) -> np.ndarray:
    """Frobenius-orthogonal projection of ``F`` onto ``{S A^{-1} : S symmetric}``.

    Writes the projection as ``B A^{-1}`` and solves the Lyapunov equation
    ``B A^{-2} + A^{-2} B = F A^{-1} + (F A^{-1})^T`` in the eigenbasis of
    ``A^{-2}``.  Works for any matrix size.
    """
    F = np.asarray(F, dtype=float)
    A = _check_A(A)
    Ainv = np.linalg.inv(A)
    lam, V = np.linalg.eigh(Ainv @ Ainv)
    M = F @ Ainv
    M = M + _T(M)
    Mh = _T(V) @ M @ V
    Bh = Mh / (lam[..., :, None] + lam[..., None, :])
    B = V @ Bh @ _T(V)
    return B @ Ainv


def _tangential_block(A: np.ndarray) -> np.ndarray:
    if np.abs(A[..., :2, 2]).max(initial=0.0) > 1e-12 or np.abs(A[..., 2, :2]).max(initial=0.0) > 1e-12 \
            or np.abs(A[..., 2, 2] - 1).max(initial=0.0) > 1e-12:
        raise ValueError("A does not have the block form [[A_tan, 0], [0, 1]]")
    return A[..., :2, :2]


def offblock_coefficients(F, A_tan) -> np.ndarray:
    """The vector ``b`` describing the off-block part of the projection of ``F``.

    ``[b1 b2] (Id + A_tan^{-2}) = [f13 f23] + [f31 f32] A_tan^{-1}`` and ``b3 = f33``.
    """
    F = np.asarray(F, dtype=float)
    A_tan_inv = np.linalg.inv(A_tan)
    rhs = F[..., :2, 2] + np.einsum("...i,...ij->...j", F[..., 2, :2], A_tan_inv)
    K = np.eye(2) + A_tan_inv @ A_tan_inv
    b12 = np.linalg.solve(K, rhs[..., None])[..., 0]  # K symmetric
    return np.concatenate([b12, F[..., 2:3, 2]], axis=-1)


def assemble_block(P_tan: np.ndarray, b: np.ndarray, A_tan: np.ndarray) -> np.ndarray:
    """``[[P_tan, (b1, b2)^T], [(b1, b2) A_tan^{-1}, b3]]``, an element of sym . A^{-1}."""
    out = np.zeros(P_tan.shape[:-2] + (3, 3))
    out[..., :2, :2] = P_tan
    out[..., :2, 2] = b[..., :2]
    out[..., 2, :2] = np.einsum("...i,...ij->...j", b[..., :2], np.linalg.inv(A_tan))
    out[..., 2, 2] = b[..., 2]
    return out


def project_sym_Ainv_block(F, A) -> np.ndarray:
    """Block-structured evaluation of :func:`project_sym_Ainv` for ``A = diag(A_tan, 1)``.

    The tangential block is projected with the 2x2 formula and the remaining
    entries come from the ``(Id + A_tan^{-2})`` system of
    :func:`offblock_coefficients`.
    """
    F = np.asarray(F, dtype=float)
    A = _check_A(A)
    A_tan = _tangential_block(A)
    P_tan = project_sym_Ainv(F[..., :2, :2], A_tan)
    return assemble_block(P_tan, offblock_coefficients(F, A_tan), A_tan)


# -- quadratic forms ----------------------------------------------------------

QuadraticForm = Callable[[np.ndarray, np.ndarray], np.ndarray]


def q3(A, F) -> np.ndarray:
    """Hessian of ``dist^2(., SO(3)A)`` at ``A`` in direction ``F``: ``2 |P F|^2``."""
    return 2.0 * _fro2(project_sym_Ainv(F, A))


def polarize(form: QuadraticForm, A, X, Y) -> np.ndarray:
    """Bilinear form ``B(X, Y)`` recovered from the quadratic form ``B(X, X)``."""
    return 0.25 * (form(A, X + Y) - form(A, X - Y))


@dataclass(frozen=True)
class ReductionMaps:
    b: np.ndarray
    c: np.ndarray


def _offblock_basis(A_tan: np.ndarray) -> np.ndarray:
    """``E[..., k]``: the sym.A^{-1} matrices with ``b = e_k`` and zero tangential block."""
    eye3 = np.eye(3)
    lead = A_tan.shape[:-2]
    Z = np.zeros(lead + (2, 2))
    return np.stack(
        [assemble_block(Z, np.broadcast_to(eye3[k], lead + (3,)), A_tan) for k in range(3)],
        axis=-3,
    )


def _block_A(A_tan: np.ndarray) -> np.ndarray:
    A = np.zeros(A_tan.shape[:-2] + (3, 3))
    A[..., :2, :2] = A_tan
    A[..., 2, 2] = 1.0
    return A


def _minimize_quadratic(form, A, F0, basis):
    """argmin_z form(A, F0 + sum_k z_k basis_k) via the normal equations (least-norm)."""
    n = basis.shape[-3]
    H = np.empty(F0.shape[:-2] + (n, n))
    r = np.empty(F0.shape[:-2] + (n,))
    for k in range(n):
        Ek = basis[..., k, :, :]
        r[..., k] = polarize(form, A, F0, Ek)
        for m in range(k, n):
            H[..., k, m] = H[..., m, k] = polarize(form, A, Ek, basis[..., m, :, :])
    z = -np.einsum("...ij,...j->...i", np.linalg.pinv(H, rcond=1e-12, hermitian=True), r)
    return z


def lemma2_maps(A_tan, F_tan, form: QuadraticForm = q3) -> ReductionMaps:
    """Optimal normal completion of a tangential strain.

    ``b`` minimizes ``form`` over the off-block part of the projected
    completion; ``c = diag(Id + A_tan^{-2}, 1) b`` is the matching completion
    ``[[F_tan, (c1, c2)^T], [0, c3]]`` of ``F_tan`` itself.  For the default
    ``dist^2`` well both vanish identically.
    """
    A_tan = _check_A(A_tan)
    F_tan = np.asarray(F_tan, dtype=float)
    lead = np.broadcast_shapes(A_tan.shape[:-2], F_tan.shape[:-2])
    A_tan = np.broadcast_to(A_tan, lead + (2, 2))
    F_tan = np.broadcast_to(F_tan, lead + (2, 2))
    A = _block_A(A_tan)
    P_tan = project_sym_Ainv(F_tan, A_tan)
    M0 = assemble_block(P_tan, np.zeros(lead + (3,)), A_tan)
    b = _minimize_quadratic(form, A, M0, _offblock_basis(A_tan))
    A_tan_inv = np.linalg.inv(A_tan)
    K = np.eye(2) + A_tan_inv @ A_tan_inv
    c = np.concatenate([np.einsum("...ij,...j->...i", K, b[..., :2]), b[..., 2:]], axis=-1)
    return ReductionMaps(b=b, c=c)


def completion(F_tan, c) -> np.ndarray:
    """``[[F_tan, (c1, c2)^T], [0, c3]]``."""
    F_tan = np.asarray(F_tan, dtype=float)
    c = np.asarray(c, dtype=float)
    out = np.zeros(np.broadcast_shapes(F_tan.shape[:-2], c.shape[:-1]) + (3, 3))
    out[..., :2, :2] = F_tan
    out[..., :2, 2] = c[..., :2]
    out[..., 2, 2] = c[..., 2]
    return out


def q2(A_tan, F_tan, form: QuadraticForm = q3) -> np.ndarray:
    """Reduced form ``min{Q3(F~) : F~_tan = F_tan}`` through the optimal completion."""
    A_tan = _check_A(A_tan)
    F_tan = np.asarray(F_tan, dtype=float)
    maps = lemma2_maps(A_tan, F_tan, form)
    P_tan = project_sym_Ainv(F_tan, A_tan)
    lead = maps.b.shape[:-1]
    M = assemble_block(P_tan, maps.b, np.broadcast_to(A_tan, lead + (2, 2)))
    return form(_block_A(np.broadcast_to(A_tan, lead + (2, 2))), M)


def q2_dist2(A_tan, F_tan) -> np.ndarray:
    """Closed form ``2 |P F_tan|^2`` of :func:`q2` for the default ``dist^2`` well."""
    return 2.0 * _fro2(project_sym_Ainv(F_tan, A_tan))


def q2_gradient(A_tan, F_tan) -> np.ndarray:
    """Derivative of the default :func:`q2` with respect to ``F_tan`` (``4 P F_tan``)."""
    return 4.0 * project_sym_Ainv(F_tan, A_tan)


def q2_bruteforce(A_tan, F_tan, form: QuadraticForm = q3, return_completion: bool = False):
    """Minimize ``form`` over the five free entries of a 3x3 completion of ``F_tan``.

    Uses the exact quadratic structure: the 5x5 normal equations are solved in
    the least-norm sense, so the returned completion is the smallest minimizer.
    """
    A_tan = _check_A(A_tan)
    F_tan = np.asarray(F_tan, dtype=float)
    lead = np.broadcast_shapes(A_tan.shape[:-2], F_tan.shape[:-2])
    A = _block_A(np.broadcast_to(A_tan, lead + (2, 2)))
    F0 = completion(np.broadcast_to(F_tan, lead + (2, 2)), np.zeros(lead + (3,)))
    basis = np.zeros((5, 3, 3))
    for k, (i, j) in enumerate([(0, 2), (1, 2), (2, 0), (2, 1), (2, 2)]):
        basis[k, i, j] = 1.0
    basis = np.broadcast_to(basis, lead + (5, 3, 3))
    H = np.empty(lead + (5, 5))
    r = np.empty(lead + (5,))
    for k in range(5):
        r[..., k] = polarize(form, A, F0, basis[..., k, :, :])
        for m in range(5):
            H[..., k, m] = polarize(form, A, basis[..., k, :, :], basis[..., m, :, :])
    Hf = H.reshape(-1, 5, 5)
    rf = r.reshape(-1, 5)
    z = np.stack([np.linalg.lstsq(Hk, -rk, rcond=None)[0] for Hk, rk in zip(Hf, rf)])
    z = z.reshape(lead + (5,))
    Fopt = F0 + np.einsum("...k,...kij->...ij", z, basis)
    value = form(A, Fopt)
    return (value, Fopt) if return_completion else value


@dataclass(frozen=True)
class StoredEnergy:
    """A stored-energy density given by value, gradient and Hessian-form callbacks.

    ``value(F, A)`` and ``gradient(F, A)`` act on stacks of 3x3 matrices;
    ``hessian_form(A, F)`` is the quadratic form of the Hessian at ``A``.
    """

    name: str
    value: Callable[[np.ndarray, np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray, np.ndarray], np.ndarray]
    hessian_form: QuadraticForm
    value_and_gradient: Callable | None = None

    def evaluate(self, F, A):
        if self.value_and_gradient is not None:
            return self.value_and_gradient(F, A)
        return self.value(F, A), self.gradient(F, A)


DIST2 = StoredEnergy(
    name="dist2",
    value=lambda F, A: dist_to_well(F, A).value,
    gradient=well_gradient,
    hessian_form=q3,
    value_and_gradient=lambda F, A: well_value_and_gradient(F, A, check=False),
)


def hessian_form_fd(value: Callable, A, F, eps: float = 1e-4) -> np.ndarray:
    """Second-difference estimate of ``d^2/dt^2 value(A + t F, A)`` at ``t = 0``."""
    A = np.asarray(A, dtype=float)
    F = np.asarray(F, dtype=float)
    return (value(A + eps * F, A) + value(A - eps * F, A) - 2 * value(A, A)) / eps**2
