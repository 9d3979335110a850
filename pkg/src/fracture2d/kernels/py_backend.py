"""Numpy reference implementation of the batched integration kernels.

Array conventions (n elements, q quadrature points, k nodes per element):
``B`` is the strain-displacement operator (n, q, 3, 2k), ``Bs`` the scalar
gradient operator (n, q, 2, k), ``N`` the scalar shape values (q, k) shared by
every element of a batch, ``detJw`` the quadrature weight times Jacobian
determinant times thickness (n, q).
"""

import numpy as np


def u_internal_force(B, detJw, sigma):
    """f_a = sum_q w B^T sigma  ->  (n, 2k)."""
    return np.einsum("nqia,nq,nqi->na", B, detJw, sigma, optimize=True)


def u_stiffness(B, detJw, dmat):
    """K = sum_q w B^T D B  ->  (n, 2k, 2k)."""
    return np.einsum("nqia,nqij,nqjb,nq->nab", B, dmat, B, detJw, optimize=True)


def scalar_residual(N, Bs, detJw, c1, gcoef, phi):
    """R = sum_q w [N^T c1 + gcoef B^T B phi]  ->  (n, k)."""
    r = np.einsum("qa,nq,nq->na", N, c1, detJw, optimize=True)
    grad = np.einsum("nqik,nk->nqi", Bs, phi, optimize=True)
    r += gcoef[:, None] * np.einsum("nqia,nqi,nq->na", Bs, grad, detJw, optimize=True)
    return r


def scalar_stiffness(N, Bs, detJw, c2, gcoef):
    """K = sum_q w [c2 N^T N + gcoef B^T B]  ->  (n, k, k)."""
    k = np.einsum("qa,qb,nq->nab", N, N, c2 * detJw, optimize=True)
    k += gcoef[:, None, None] * np.einsum("nqia,nqib,nq->nab", Bs, Bs, detJw, optimize=True)
    return k
