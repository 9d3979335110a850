"""Per-element kernels of the coupled displacement / phase-field problem.

Plane stress with unit thickness.  The damage-driving energy is the Rankine
equivalent of the effective (undamaged) stress, ``<sigma_1>^2 / (2E)``; the
Cauchy stress degrades the spectral positive part of the effective stress,
``sigma = omega(phi) sigma_plus + sigma_minus``, so compression never drives
or feels damage.  Element matrices integrate with 2x2 Gauss points (quad4) or
one centroid point (tri3); the batched integration runs on the kernels
backend.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .materials import (
    CPFM,
    FractureModel,
    PhaseProperties,
    alpha,
    omega,
    psi_eq_threshold,
)
from .mesh import QUAD4, TRI3


class KernelError(ValueError):
    """Bad element geometry or non-finite nodal input."""


# ---------------------------------------------------------------------------
# Shape functions and quadrature
# ---------------------------------------------------------------------------

_GP = 1.0 / math.sqrt(3.0)
QUADRATURE = {
    QUAD4: (np.array([[-_GP, -_GP], [_GP, -_GP], [_GP, _GP], [-_GP, _GP]]), np.array([1.0] * 4)),
    TRI3: (np.array([[1.0 / 3.0, 1.0 / 3.0]]), np.array([0.5])),
}


def _shape_local(kind: str, xi: np.ndarray):
    """Shape values N (k,) and local gradients dN (k, 2) at one local point."""
    if kind == QUAD4:
        r, s = xi
        N = 0.25 * np.array([(1 - r) * (1 - s), (1 + r) * (1 - s), (1 + r) * (1 + s), (1 - r) * (1 + s)])
        dN = 0.25 * np.array(
            [
                [-(1 - s), -(1 - r)],
                [(1 - s), -(1 + r)],
                [(1 + s), (1 + r)],
                [-(1 + s), (1 - r)],
            ]
        )
        return N, dN
    if kind == TRI3:
        r, s = xi
        N = np.array([1 - r - s, r, s])
        dN = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        return N, dN
    raise KernelError(f"unsupported element kind {kind!r}")


def shape_functions(kind: str, coords: np.ndarray, xi):
    """Shape data of one element at one local point.

    Returns ``(N_u, N_phi, B_u, B_phi, jacobian_det)`` where ``N_u`` is
    (2, 2k), ``N_phi`` (k,), ``B_u`` (3, 2k), ``B_phi`` (2, k).  Raises on
    non-positive Jacobian.
    """
    coords = np.asarray(coords, dtype=float)
    N, dN = _shape_local(kind, np.asarray(xi, dtype=float))
    jac = coords.T @ dN  # J[i, j] = d x_i / d xi_j
    det = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
    if det <= 0:
        raise KernelError(f"non-positive Jacobian ({det:.3e}) in {kind} element")
    dNdx = dN @ np.linalg.inv(jac)
    k = len(N)
    N_u = np.zeros((2, 2 * k))
    N_u[0, 0::2] = N
    N_u[1, 1::2] = N
    B_u = np.zeros((3, 2 * k))
    B_u[0, 0::2] = dNdx[:, 0]
    B_u[1, 1::2] = dNdx[:, 1]
    B_u[2, 0::2] = dNdx[:, 1]
    B_u[2, 1::2] = dNdx[:, 0]
    return N_u, N, B_u, dNdx.T, det


# ---------------------------------------------------------------------------
# Constitutive point functions
# ---------------------------------------------------------------------------


def plane_stress_matrix(props: PhaseProperties) -> np.ndarray:
    """Voigt stiffness for plane stress, [eps_x, eps_y, gamma_xy] ordering."""
    f = props.E / (1.0 - props.nu**2)
    return f * np.array(
        [[1.0, props.nu, 0.0], [props.nu, 1.0, 0.0], [0.0, 0.0, (1.0 - props.nu) / 2.0]]
    )


def effective_stress(props: PhaseProperties, strain) -> np.ndarray:
    """Undamaged plane-stress stress for Voigt strain(s)."""
    strain = np.asarray(strain, dtype=float)
    return strain @ plane_stress_matrix(props).T


def principal_values(sigma) -> tuple[np.ndarray, np.ndarray]:
    """Principal values (s1 >= s2) of Voigt stress tensors (..., 3)."""
    sigma = np.asarray(sigma, dtype=float)
    mean = 0.5 * (sigma[..., 0] + sigma[..., 1])
    rad = np.sqrt((0.5 * (sigma[..., 0] - sigma[..., 1])) ** 2 + sigma[..., 2] ** 2)
    return mean + rad, mean - rad


def driving_energy(props: PhaseProperties, sigma) -> np.ndarray:
    """Rankine driving energy <sigma_1>^2 / (2E) of effective stress(es)."""
    s1, _ = principal_values(sigma)
    return np.maximum(s1, 0.0) ** 2 / (2.0 * props.E)


def update_history(H, psi_eq, model: FractureModel, props: PhaseProperties):
    """Monotone history update; the cohesive scheme floors at the threshold."""
    H = np.maximum(H, psi_eq)
    if model.scheme == CPFM:
        H = np.maximum(H, psi_eq_threshold(props))
    return H


def initial_history(shape, model: FractureModel, props: PhaseProperties) -> np.ndarray:
    H = np.zeros(shape)
    if model.scheme == CPFM:
        H += psi_eq_threshold(props)
    return H


def _principal_frame(sigma):
    """Principal values and double-angle direction of Voigt stresses."""
    mean = 0.5 * (sigma[..., 0] + sigma[..., 1])
    diff = 0.5 * (sigma[..., 0] - sigma[..., 1])
    rad = np.sqrt(diff**2 + sigma[..., 2] ** 2)
    safe = rad > 1e-300
    c2t = np.where(safe, diff / np.where(safe, rad, 1.0), 1.0)
    s2t = np.where(safe, sigma[..., 2] / np.where(safe, rad, 1.0), 0.0)
    return mean + rad, mean - rad, c2t, s2t


# The tension/compression switch is smoothed over a +-SPLIT_EPS principal
# stress band (MPa): the Macaulay bracket of each principal component is
# replaced by its Huber-style C1 regularization, so the split stress is a
# monotone C1 function of strain with tangent slopes between omega and one.
# Components beyond the band are treated exactly; inside it the
# perturbation is bounded by SPLIT_EPS / 4, i.e. it only touches directions
# that are essentially stress-free.  Without the smoothing, heavily damaged
# states whose minor principal stress hovers around zero expose the Newton
# loop to 4-orders-of-magnitude stiffness jumps at the switch and it stalls.
SPLIT_EPS = 0.25


def _positive_part_smooth(s, eps=SPLIT_EPS):
    """C1 regularized Macaulay bracket and its derivative (in [0, 1])."""
    inside = np.abs(s) < eps
    p = np.where(inside, (s + eps) ** 2 / (4.0 * eps), np.maximum(s, 0.0))
    dp = np.where(inside, (s + eps) / (2.0 * eps), (s > 0.0).astype(float))
    return p, dp


def _split_principals(s1, s2, w):
    """Degraded principal stresses sigma_i - (1 - w) <s_i>_smooth."""
    p1, _ = _positive_part_smooth(s1)
    p2, _ = _positive_part_smooth(s2)
    return s1 - (1.0 - w) * p1, s2 - (1.0 - w) * p2


def split_stress(sigma, w):
    """Degraded Cauchy stress omega * sigma_plus + sigma_minus (Voigt).

    Positive principal components of the effective stress scale by ``w``,
    negative ones are kept, so compression transmits undegraded; the switch
    is C1-smoothed over the +-SPLIT_EPS band.
    """
    sigma = np.asarray(sigma, dtype=float)
    w = np.asarray(w, dtype=float)
    s1, s2, c2t, s2t = _principal_frame(sigma)
    p1, p2 = _split_principals(s1, s2, w)
    out = np.empty_like(sigma)
    out[..., 0] = 0.5 * (p1 + p2) + 0.5 * (p1 - p2) * c2t
    out[..., 1] = 0.5 * (p1 + p2) - 0.5 * (p1 - p2) * c2t
    out[..., 2] = 0.5 * (p1 - p2) * s2t
    return out


def _split_weights(sigma, w):
    """Tangent weights (w1, w2, w_rot) of the split in the principal frame.

    ``w_i = 1 - (1 - w) d<s_i>/ds`` are the exact slopes of the smoothed
    split, all within [w, 1]; ``w_rot = (p1 - p2)/(s1 - s2)`` is the exact
    shear (frame-rotation) tangent weight of the spectral decomposition.
    """
    s1, s2, c2t, s2t = _principal_frame(sigma)
    _, dp1 = _positive_part_smooth(s1)
    _, dp2 = _positive_part_smooth(s2)
    w1 = 1.0 - (1.0 - w) * dp1
    w2 = 1.0 - (1.0 - w) * dp2
    p1, p2 = _split_principals(s1, s2, w)
    gap = s1 - s2
    safe = gap > 1e-300
    w_rot = np.where(safe, (p1 - p2) / np.where(safe, gap, 1.0), w1)
    w_rot = np.clip(w_rot, 1e-8, 1.0)
    w1 = np.maximum(w1, 1e-8)
    w2 = np.maximum(w2, 1e-8)
    return w1, w2, w_rot, c2t, s2t


def _strain_rotation(shape, c2t, s2t):
    """Voigt rotation of engineering-strain vectors into the principal frame."""
    cc = 0.5 * (1.0 + c2t)   # cos^2
    ss = 0.5 * (1.0 - c2t)   # sin^2
    cs = 0.5 * s2t           # cos*sin
    T = np.zeros(shape + (3, 3))
    T[..., 0, 0] = cc
    T[..., 0, 1] = ss
    T[..., 0, 2] = cs
    T[..., 1, 0] = ss
    T[..., 1, 1] = cc
    T[..., 1, 2] = -cs
    T[..., 2, 0] = -2.0 * cs
    T[..., 2, 1] = 2.0 * cs
    T[..., 2, 2] = c2t
    return T


def split_secant_matrices(sigma, w, dmat):
    """Symmetric positive-definite secant stiffness of the split stress.

    In the (shared) principal frame the undamaged stiffness is scaled by
    sqrt(w_i) from both sides, with the shear slot carrying the rotation
    weight; pure tension reduces to w * D and pure compression to D exactly.
    ``sigma`` (n, q, 3) fixes the frame and signs, ``w`` (n, q) the
    degradation, ``dmat`` (n, 3, 3) the undamaged stiffness.

    Returns (n, q, 3, 3).
    """
    sigma = np.asarray(sigma, dtype=float)
    w = np.asarray(w, dtype=float)
    w1, w2, w_rot, c2t, s2t = _split_weights(sigma, w)
    T = _strain_rotation(sigma.shape[:-1], c2t, s2t)
    sqw = np.stack([np.sqrt(w1), np.sqrt(w2), np.sqrt(np.maximum(w_rot, 0.0))], axis=-1)
    # D = T^T (S dmat S) T with S = diag(sqw); dmat is frame-invariant (isotropy)
    core = sqw[..., :, None] * dmat[:, None, :, :] * sqw[..., None, :]
    return np.einsum("nqji,nqjk,nqkl->nqil", T, core, T, optimize=True)


def split_tangent_matrices(sigma, w, dmat):
    """Exact tangent of the split stress with the split held fixed.

    The operator ``omega E_plus + E_minus`` with the spectral projections
    frozen at the given state: rows of the principal-frame stiffness scale by
    (w1, w2, w_rot).  Mildly non-symmetric in mixed tension/compression
    states; exact otherwise.  Used by the displacement Newton loop (the
    symmetric secant of :func:`split_secant_matrices` is its SPD
    approximation).
    """
    sigma = np.asarray(sigma, dtype=float)
    w = np.asarray(w, dtype=float)
    w1, w2, w_rot, c2t, s2t = _split_weights(sigma, w)
    T = _strain_rotation(sigma.shape[:-1], c2t, s2t)
    weights = np.stack([w1, w2, w_rot], axis=-1)
    core = weights[..., :, None] * dmat[:, None, :, :]
    return np.einsum("nqji,nqjk,nqkl->nqil", T, core, T, optimize=True)


def split_energy_density(sigma, strain, w):
    """Elastic energy with the positive principal pairs degraded by ``w``.

    The principal axes of stress and strain coincide for isotropy, so the
    energy splits exactly into per-direction pairs sigma_i eps_i / 2.
    """
    sigma = np.asarray(sigma, dtype=float)
    strain = np.asarray(strain, dtype=float)
    s1, s2 = principal_values(sigma)
    mean_e = 0.5 * (strain[..., 0] + strain[..., 1])
    diff = 0.5 * (sigma[..., 0] - sigma[..., 1])
    rad = np.sqrt(diff**2 + sigma[..., 2] ** 2)
    safe = rad > 1e-300
    c2t = np.where(safe, diff / np.where(safe, rad, 1.0), 1.0)
    s2t = np.where(safe, sigma[..., 2] / np.where(safe, rad, 1.0), 0.0)
    # strain in the stress principal frame (engineering shear halved)
    diff_e = 0.5 * (strain[..., 0] - strain[..., 1]) * c2t + 0.5 * strain[..., 2] * s2t
    e1 = mean_e + diff_e
    e2 = mean_e - diff_e
    p1, p2 = _split_principals(s1, s2, np.asarray(w, dtype=float))
    return 0.5 * (p1 * e1 + p2 * e2)


def von_mises(sigma) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    sx, sy, txy = sigma[..., 0], sigma[..., 1], sigma[..., 2]
    return np.sqrt(sx**2 + sy**2 - sx * sy + 3.0 * txy**2)


# ---------------------------------------------------------------------------
# Batched element groups
# ---------------------------------------------------------------------------


@dataclass
class ElementGroup:
    """Precomputed geometry and material tables for same-kind bulk elements.

    Geometry (B operators, Jacobians) is fixed for the whole run; only nodal
    fields change.  ``dofs`` maps local displacement DOFs to global ones.
    """

    kind: str
    conn: np.ndarray          # (n, k) node ids
    coords: np.ndarray        # (n, k, 2)
    N: np.ndarray             # (q, k)
    B_u: np.ndarray           # (n, q, 3, 2k)
    B_s: np.ndarray           # (n, q, 2, k)
    detJw: np.ndarray         # (n, q) includes thickness
    dofs: np.ndarray          # (n, 2k)
    dmat: np.ndarray          # (n, 3, 3) undamaged plane-stress stiffness
    E: np.ndarray             # (n,)
    Gc: np.ndarray            # (n,)
    psi0: np.ndarray          # (n,) damage threshold per element
    a1: np.ndarray            # (n,)
    lc: np.ndarray            # (n,)

    @property
    def n_elements(self) -> int:
        return self.conn.shape[0]

    @property
    def n_qp(self) -> int:
        return self.N.shape[0]


def build_element_group(mesh, ids, props_of, model: FractureModel, lc: float, thickness: float = 1.0):
    """Assemble an :class:`ElementGroup` for bulk elements ``ids``.

    ``props_of(element_id) -> PhaseProperties`` resolves per-phase materials.
    """
    from .materials import derive_constants

    ids = np.asarray(ids, dtype=np.int64)
    if len(ids) == 0:
        return None
    kind = mesh.kind_name(mesh.elem_kind[ids[0]])
    if np.any(mesh.elem_kind[ids] != mesh.elem_kind[ids[0]]):
        raise KernelError("element group must be single-kind")
    k = 4 if kind == QUAD4 else 3
    conn = mesh.elem_nodes[ids][:, :k]
    coords = mesh.nodes[conn]
    pts, wts = QUADRATURE[kind]
    q = len(wts)
    n = len(ids)
    Nmat = np.zeros((q, k))
    B_u = np.zeros((n, q, 3, 2 * k))
    B_s = np.zeros((n, q, 2, k))
    detJw = np.zeros((n, q))
    for qi, (xi, wq) in enumerate(zip(pts, wts)):
        N, dN = _shape_local(kind, xi)
        Nmat[qi] = N
        jac = np.einsum("nki,ka->nia", coords, dN)  # J[i, a] = d x_i / d xi_a
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        if np.any(det <= 0):
            bad = ids[int(np.argmin(det))]
            raise KernelError(f"non-positive Jacobian in element {int(bad)}")
        inv = np.empty_like(jac)
        inv[:, 0, 0] = jac[:, 1, 1]
        inv[:, 1, 1] = jac[:, 0, 0]
        inv[:, 0, 1] = -jac[:, 0, 1]
        inv[:, 1, 0] = -jac[:, 1, 0]
        inv /= det[:, None, None]
        dNdx = np.einsum("ka,nab->nkb", dN, inv)  # (n, k, 2)
        B_u[:, qi, 0, 0::2] = dNdx[:, :, 0]
        B_u[:, qi, 1, 1::2] = dNdx[:, :, 1]
        B_u[:, qi, 2, 0::2] = dNdx[:, :, 1]
        B_u[:, qi, 2, 1::2] = dNdx[:, :, 0]
        B_s[:, qi] = dNdx.transpose(0, 2, 1)
        detJw[:, qi] = det * wq * thickness

    dofs = np.empty((n, 2 * k), dtype=np.int64)
    dofs[:, 0::2] = 2 * conn
    dofs[:, 1::2] = 2 * conn + 1

    dmat = np.zeros((n, 3, 3))
    E = np.zeros(n)
    Gc = np.zeros(n)
    psi0 = np.zeros(n)
    a1 = np.ones(n)
    for pos, e in enumerate(ids):
        props = props_of(int(e))
        dmat[pos] = plane_stress_matrix(props)
        E[pos] = props.E
        Gc[pos] = props.Gc
        psi0[pos] = psi_eq_threshold(props)
        if model.scheme == CPFM:
            a1[pos] = derive_constants(model, props, lc).a1
    return ElementGroup(
        kind=kind, conn=conn, coords=coords, N=Nmat, B_u=np.ascontiguousarray(B_u),
        B_s=np.ascontiguousarray(B_s), detJw=np.ascontiguousarray(detJw), dofs=dofs,
        dmat=dmat, E=E, Gc=Gc, psi0=psi0, a1=a1, lc=np.full(n, float(lc)),
    )


def group_strain(group: ElementGroup, u_elem: np.ndarray) -> np.ndarray:
    """Voigt strains at quadrature points: (n, q, 3)."""
    return np.einsum("nqia,na->nqi", group.B_u, u_elem, optimize=True)


def group_effective_stress(group: ElementGroup, strain: np.ndarray) -> np.ndarray:
    return np.einsum("nij,nqj->nqi", group.dmat, strain, optimize=True)


def group_internal_force(group: ElementGroup, u_elem: np.ndarray, omega_qp: np.ndarray):
    """Batched internal force of the displacement problem.

    Returns ``(f, sigma_eff, sigma_cauchy)`` with the live stress split.
    """
    if not np.all(np.isfinite(u_elem)):
        raise KernelError("non-finite nodal displacement input")
    strain = group_strain(group, u_elem)
    sigma_eff = group_effective_stress(group, strain)
    sigma = split_stress(sigma_eff, omega_qp)
    f = kernels.u_internal_force(group.B_u, group.detJw, np.ascontiguousarray(sigma))
    return f, sigma_eff, sigma


def group_displacement_tangent(group: ElementGroup, sigma_eff: np.ndarray, omega_qp: np.ndarray):
    """Batched secant stiffness, split frozen at the given stress state."""
    # small floor keeps the factorization regular across fully failed bands
    w = np.maximum(np.asarray(omega_qp, dtype=float), 1e-8)
    dmat_q = split_secant_matrices(sigma_eff, w, group.dmat)
    return kernels.u_stiffness(group.B_u, group.detJw, np.ascontiguousarray(dmat_q))


def group_displacement_kernel(group: ElementGroup, u_elem: np.ndarray, omega_qp: np.ndarray):
    """Internal force plus the secant stiffness at the same state.

    Returns ``(f, K, sigma_eff, sigma_cauchy)``.
    """
    f, sigma_eff, sigma = group_internal_force(group, u_elem, omega_qp)
    K = group_displacement_tangent(group, sigma_eff, omega_qp)
    return f, K, sigma_eff, sigma


def group_phasefield_kernel(group: ElementGroup, model: FractureModel, phi_elem: np.ndarray, H: np.ndarray):
    """Batched residual and stiffness of the damage problem.

    Implements R = int { N^T [omega' H + Gc/(c0 lc) alpha'] + (2 lc Gc / c0)
    B^T B phi } dV and its phi-derivative with the analytic omega/alpha
    second derivatives.
    """
    if not np.all(np.isfinite(phi_elem)):
        raise KernelError("non-finite nodal damage input")
    from .materials import c0 as c0_of

    cc = c0_of(model)
    phi_qp = np.einsum("qk,nk->nq", group.N, phi_elem, optimize=True)
    phi_qp = np.clip(phi_qp, 0.0, 1.0)
    w, dw, d2w = omega_derivatives(model, group.a1[:, None], phi_qp)
    _, da, d2a = alpha(model, phi_qp)
    gc_loc = (group.Gc / (cc * group.lc))[:, None]
    c1 = dw * H + gc_loc * da
    c2 = d2w * H + gc_loc * d2a
    gcoef = np.ascontiguousarray(2.0 * group.lc * group.Gc / cc)
    R = kernels.scalar_residual(group.N, group.B_s, group.detJw, np.ascontiguousarray(c1), gcoef, np.ascontiguousarray(phi_elem))
    K = kernels.scalar_stiffness(group.N, group.B_s, group.detJw, np.ascontiguousarray(c2), gcoef)
    return R, K


def omega_derivatives(model, a1, phi):
    """Vectorized degradation evaluation with per-element a1 (broadcast)."""
    if model.scheme != CPFM:
        k = model.k_residual
        return (1.0 - phi) ** 2 + k, -2.0 * (1.0 - phi), 2.0 * np.ones_like(phi)
    a2, a3 = model.cornelissen
    n = (1.0 - phi) ** 2
    dn = -2.0 * (1.0 - phi)
    den = n + a1 * phi + a1 * a2 * phi**2 + a1 * a2 * a3 * phi**3
    dden = dn + a1 + 2.0 * a1 * a2 * phi + 3.0 * a1 * a2 * a3 * phi**2
    d2den = 2.0 + 2.0 * a1 * a2 + 6.0 * a1 * a2 * a3 * phi
    w = n / den
    dw = (dn * den - n * dden) / den**2
    d2w = (2.0 * den - n * d2den) / den**2 - 2.0 * dden * (dn * den - n * dden) / den**3
    return w, dw, d2w


# ---------------------------------------------------------------------------
# Single-element convenience wrappers (spec-level surface, used by tests)
# ---------------------------------------------------------------------------


class _SingleProps:
    def __init__(self, props):
        self._p = props

    def __call__(self, _e):
        return self._p


def _single_group(coords, kind, props, model, lc):
    from .mesh import Mesh

    coords = np.asarray(coords, dtype=float)
    k = len(coords)
    elem_nodes = -np.ones((1, 4), dtype=np.int64)
    elem_nodes[0, :k] = np.arange(k)
    m = Mesh(
        coords,
        elem_nodes,
        np.array([Mesh.kind_id(kind)], dtype=np.uint8),
        np.array([Mesh.phase_id("matrix")], dtype=np.uint8),
        {},
    )
    return build_element_group(m, [0], _SingleProps(props), model, lc)


def element_displacement_kernel(coords, kind, props, model, consts, nodal_u, phi_qp):
    """Residual and secant stiffness of one bulk element.

    ``nodal_u`` is (k, 2); ``phi_qp`` the damage at each quadrature point.
    """
    group = _single_group(coords, kind, props, model, consts.lc)
    u = np.asarray(nodal_u, dtype=float).reshape(1, -1)
    w, _, _ = omega(model, consts, np.asarray(phi_qp, dtype=float))
    f, K, _, _ = group_displacement_kernel(group, u, w.reshape(1, -1))
    return f[0], K[0]


def element_phasefield_kernel(coords, kind, props, model, consts, nodal_phi, H_qp):
    """Residual and stiffness of one bulk element's damage problem."""
    group = _single_group(coords, kind, props, model, consts.lc)
    phi = np.asarray(nodal_phi, dtype=float).reshape(1, -1)
    H = np.asarray(H_qp, dtype=float).reshape(1, -1)
    R, K = group_phasefield_kernel(group, model, phi, H)
    return R[0], K[0]
