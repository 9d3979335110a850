"""Zero-thickness cohesive interface elements.

A cohesive element is a 4-node line element whose two node pairs coincide in
the reference configuration.  Kinematics produce normal/tangential relative
displacements at two end integration points (Newton-Cotes, which avoids the
traction oscillations of Gauss points with high penalty stiffness); the
bilinear mixed-mode traction-separation law with quadratic initiation and the
Benzeggagh-Kenane mixed-mode fracture energy governs the response.

Scalar single-point operations live alongside a vectorized ``CohesiveBlock``
that the solvers use for whole-mesh updates; both share the same formulas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


class CohesiveError(ValueError):
    """Inconsistent cohesive-law inputs or states."""


# The tension/compression switch of the normal traction is smoothed over an
# opening band of +-CONTACT_EPS_STRESS / K (a C1 Huber regularization of the
# Macaulay bracket).  The traction perturbation is bounded by a quarter of
# CONTACT_EPS_STRESS; outside the band the bilinear law is exact.  Damaged
# interfaces in contact otherwise flip between full penalty and released
# stiffness at machine scale and stall the implicit solver.
CONTACT_EPS_STRESS = 0.25


def _opening_smooth(delta, eps):
    """C1 positive part of the opening and its derivative in [0, 1]."""
    inside = np.abs(delta) < eps
    p = np.where(inside, (delta + eps) ** 2 / (4.0 * eps), np.maximum(delta, 0.0))
    dp = np.where(inside, (delta + eps) / (2.0 * eps), (delta > 0.0).astype(float))
    return p, dp


@dataclass(frozen=True)
class CohesiveLaw:
    """Bilinear traction-separation law parameters.

    ``K`` is the penalty stiffness (equal in normal and shear), strengths are
    MPa, fracture energies N/mm, ``eta`` the B-K mixing exponent.  A law with
    ``sigma_n0 = None`` never initiates damage (purely elastic bond, used for
    cohesive elements inside inclusions).
    """

    K: float
    sigma_n0: float | None = None
    sigma_s0: float | None = None
    G_I: float | None = None
    G_II: float | None = None
    eta: float | None = None

    def __post_init__(self):
        if not self.K > 0:
            raise CohesiveError(f"penalty stiffness must be positive, got {self.K}")
        if self.sigma_n0 is not None:
            for name in ("sigma_n0", "sigma_s0", "G_I", "G_II", "eta"):
                value = getattr(self, name)
                if value is None or not value > 0:
                    raise CohesiveError(f"{name} must be positive, got {value}")

    @classmethod
    def elastic(cls, K: float) -> "CohesiveLaw":
        return cls(K=K)

    @property
    def can_damage(self) -> bool:
        return self.sigma_n0 is not None

    @property
    def delta_n0(self) -> float:
        return self.sigma_n0 / self.K

    @property
    def delta_s0(self) -> float:
        return self.sigma_s0 / self.K


@dataclass
class CohesiveState:
    """Damage state of one integration point."""

    D: float = 0.0
    delta_m_max: float = 0.0
    delta_m0: float = 0.0
    delta_mf: float = 0.0
    initiated: bool = False


@dataclass(frozen=True)
class Separation:
    """Signed relative displacement in the local interface frame (mm)."""

    delta_n: float
    delta_s: float


def effective_displacement(sep: Separation) -> float:
    """Mixed-mode effective opening sqrt(<delta_n>^2 + delta_s^2)."""
    dn = max(sep.delta_n, 0.0)
    return math.hypot(dn, sep.delta_s)


def initiation_check(law: CohesiveLaw, t_n: float, t_s: float) -> tuple[bool, float]:
    """Quadratic stress initiation criterion on trial (undamaged) tractions.

    Returns ``(initiated, criterion_value)`` where the criterion is
    ``(<t_n>/sigma_n0)^2 + (t_s/sigma_s0)^2`` and initiation means >= 1.
    Compression never initiates damage.
    """
    if not law.can_damage:
        return False, 0.0
    value = (max(t_n, 0.0) / law.sigma_n0) ** 2 + (t_s / law.sigma_s0) ** 2
    return value >= 1.0, value


def mixed_mode_initiation_opening(law: CohesiveLaw, beta: float) -> float:
    """Effective opening at initiation for proportional loading at mixity beta.

    ``beta = delta_s / <delta_n>``; the returned value is the unique opening at
    which the quadratic criterion first reaches one along that path.  Pure
    shear (or compressive normal opening) reduces to ``delta_s0``.
    """
    dn0 = law.delta_n0
    ds0 = law.delta_s0
    if not math.isfinite(beta):
        return ds0
    return dn0 * ds0 * math.sqrt((1.0 + beta * beta) / (ds0 * ds0 + (beta * dn0) ** 2))


def bk_final_opening(law: CohesiveLaw, delta_m0: float, G_n: float, G_s: float) -> float:
    """Effective opening at complete failure from the B-K criterion.

    delta_mf = (2 / (K delta_m0)) [G_I + (G_II - G_I) (G_s/(G_n+G_s))^eta].
    """
    if not delta_m0 > 0:
        raise CohesiveError(f"delta_m0 must be positive, got {delta_m0}")
    total = G_n + G_s
    if not total > 0:
        raise CohesiveError("undefined mode mixity: G_n + G_s must be positive")
    gc = law.G_I + (law.G_II - law.G_I) * (G_s / total) ** law.eta
    return 2.0 * gc / (law.K * delta_m0)


def damage_update(state: CohesiveState, delta_m_current: float) -> CohesiveState:
    """Advance the damage variable for the current effective opening.

    D = delta_mf (delta_m_max - delta_m0) / (delta_m_max (delta_mf - delta_m0)),
    clamped to [0, 1] and never decreasing.
    """
    if not state.initiated:
        raise CohesiveError("damage_update requires an initiated state")
    if state.delta_mf <= state.delta_m0:
        raise CohesiveError(
            f"non-dissipative law: delta_mf={state.delta_mf} <= delta_m0={state.delta_m0}"
        )
    dmax = max(state.delta_m_max, delta_m_current)
    if dmax > state.delta_m0:
        d = state.delta_mf * (dmax - state.delta_m0) / (dmax * (state.delta_mf - state.delta_m0))
    else:
        d = 0.0
    d = min(max(d, 0.0), 1.0)
    return replace(state, D=max(state.D, d), delta_m_max=dmax)


def traction(law: CohesiveLaw, state: CohesiveState, sep: Separation):
    """Tractions and the frozen-damage tangent at one integration point.

    Tension and shear follow ``(1 - D) K delta``; a negative normal opening
    returns the full penalty traction ``K delta_n`` regardless of damage, so
    contact is retained across failed interfaces.  The normal switch is
    C1-smoothed over the tiny CONTACT_EPS_STRESS / K opening band.
    """
    d = state.D
    eps = CONTACT_EPS_STRESS / law.K
    p, dp = _opening_smooth(np.float64(sep.delta_n), eps)
    t_n = law.K * (sep.delta_n - d * float(p))
    k_nn = law.K * (1.0 - d * float(dp))
    t_s = (1.0 - d) * law.K * sep.delta_s
    k_ss = (1.0 - d) * law.K
    return t_n, t_s, np.array([[k_nn, 0.0], [0.0, k_ss]])


def dissipated_energy(law: CohesiveLaw, history) -> float:
    """Trapezoidal work of traction over a separation history.

    ``history`` is a sequence of ``(traction_vector, separation_vector)`` with
    2-component entries ``(t_n, t_s)`` / ``(delta_n, delta_s)``.  For a
    monotone history to full failure this converges to the mixed-mode fracture
    energy of the law.
    """
    total = 0.0
    for (t0, s0), (t1, s1) in zip(history[:-1], history[1:]):
        total += 0.5 * (t0[0] + t1[0]) * (s1[0] - s0[0])
        total += 0.5 * (t0[1] + t1[1]) * (s1[1] - s0[1])
    return total


def pull_apart(law: CohesiveLaw, beta: float, n_steps: int = 2000):
    """Drive one point proportionally (mixity beta) to full failure.

    Returns the (traction, separation) history; a direct way to measure the
    dissipated energy of a law.  ``beta = inf`` loads in pure shear.
    """
    state = CohesiveState()
    dm0 = mixed_mode_initiation_opening(law, beta)
    if math.isinf(beta):
        dn_of = lambda dm: 0.0
        ds_of = lambda dm: dm
    else:
        scale = math.sqrt(1.0 + beta * beta)
        dn_of = lambda dm: dm / scale
        ds_of = lambda dm: dm * beta / scale
    # elastic works at initiation set the B-K mixity
    g_n = 0.5 * law.K * dn_of(dm0) ** 2
    g_s = 0.5 * law.K * ds_of(dm0) ** 2
    dmf = bk_final_opening(law, dm0, g_n, g_s)
    state = CohesiveState(initiated=True, delta_m0=dm0, delta_mf=dmf, delta_m_max=dm0)
    history = []
    for dm in np.linspace(0.0, dmf, n_steps):
        sep = Separation(dn_of(dm), ds_of(dm))
        if dm >= dm0:
            state = damage_update(state, effective_displacement(sep))
        t_n, t_s, _ = traction(law, state, sep)
        history.append(((t_n, t_s), (sep.delta_n, sep.delta_s)))
    return history


# ---------------------------------------------------------------------------
# Whole-mesh cohesive block (vectorized over elements x 2 integration points)
# ---------------------------------------------------------------------------

# Element DOF layout: nodes (bottom-left, bottom-right, top-right, top-left),
# coincident pairs (0, 3) and (1, 2).  Integration point 0 sits at the left
# pair, point 1 at the right pair; each carries half the mid-plane length.
_PAIR_BOTTOM = (0, 1)
_PAIR_TOP = (3, 2)


def cie_kinematics(coords: np.ndarray, u: np.ndarray):
    """Separations and local frame of cohesive elements.

    Parameters
    ----------
    coords : (n, 4, 2) reference node coordinates.
    u : (n, 4, 2) nodal displacements.

    Returns
    -------
    delta_n, delta_s : (n, 2) separations at the two end points.
    tangent, normal : (n, 2) unit vectors of the deformed mid-plane frame
        (normal is the 90-degree counter-clockwise rotation of the tangent).
    length : (n,) deformed mid-plane length.
    """
    coords = np.asarray(coords, dtype=float)
    u = np.asarray(u, dtype=float)
    x = coords + u
    mid_a = 0.5 * (x[:, 0] + x[:, 3])
    mid_b = 0.5 * (x[:, 1] + x[:, 2])
    chord = mid_b - mid_a
    length = np.linalg.norm(chord, axis=1)
    if np.any(length <= 1e-14):
        bad = int(np.argmin(length))
        raise CohesiveError(f"degenerate cohesive element {bad}: zero-length mid-plane")
    tangent = chord / length[:, None]
    normal = np.stack([-tangent[:, 1], tangent[:, 0]], axis=1)
    rel_a = u[:, 3] - u[:, 0]
    rel_b = u[:, 2] - u[:, 1]
    delta_n = np.stack([np.einsum("ni,ni->n", rel_a, normal), np.einsum("ni,ni->n", rel_b, normal)], axis=1)
    delta_s = np.stack([np.einsum("ni,ni->n", rel_a, tangent), np.einsum("ni,ni->n", rel_b, tangent)], axis=1)
    return delta_n, delta_s, tangent, normal, length


class CohesiveBlock:
    """State and force evaluation for all cohesive elements of a mesh.

    Laws are per element; damage state is per integration point.  State
    advances only through :meth:`commit_state`, which the solvers call once a
    step is accepted, so force evaluations within an iteration see frozen
    damage.
    """

    def __init__(self, coords: np.ndarray, laws: list[CohesiveLaw], thickness: float = 1.0):
        self.coords = np.asarray(coords, dtype=float)
        n = self.coords.shape[0]
        if len(laws) != n:
            raise CohesiveError("one law per cohesive element required")
        self.thickness = thickness
        self.K = np.array([law.K for law in laws])
        self.can_damage = np.array([law.can_damage for law in laws], dtype=bool)
        self.sn0 = np.array([law.sigma_n0 if law.can_damage else np.inf for law in laws])
        self.ss0 = np.array([law.sigma_s0 if law.can_damage else np.inf for law in laws])
        self.GI = np.array([law.G_I if law.can_damage else np.inf for law in laws])
        self.GII = np.array([law.G_II if law.can_damage else np.inf for law in laws])
        self.eta = np.array([law.eta if law.can_damage else 1.0 for law in laws])
        shape = (n, 2)
        self.D = np.zeros(shape)
        self.initiated = np.zeros(shape, dtype=bool)
        self.delta_m_max = np.zeros(shape)
        self.delta_m0 = np.zeros(shape)
        self.delta_mf = np.zeros(shape)
        self.work_n = np.zeros(shape)
        self.work_s = np.zeros(shape)
        self.dissipated = np.zeros(shape)
        self._last_tn = np.zeros(shape)
        self._last_ts = np.zeros(shape)
        self._last_dn = np.zeros(shape)
        self._last_ds = np.zeros(shape)

    @property
    def n_elements(self) -> int:
        return self.coords.shape[0]

    def copy(self) -> "CohesiveBlock":
        other = object.__new__(CohesiveBlock)
        other.coords = self.coords
        other.thickness = self.thickness
        for name in ("K", "can_damage", "sn0", "ss0", "GI", "GII", "eta"):
            setattr(other, name, getattr(self, name))
        for name in (
            "D", "initiated", "delta_m_max", "delta_m0", "delta_mf",
            "work_n", "work_s", "dissipated", "_last_tn", "_last_ts", "_last_dn", "_last_ds",
        ):
            setattr(other, name, getattr(self, name).copy())
        return other

    def _tractions(self, delta_n, delta_s):
        """Tractions at frozen damage, with contact retention in compression."""
        d = self.D
        k = self.K[:, None]
        eps = CONTACT_EPS_STRESS / k
        p, dp = _opening_smooth(delta_n, eps)
        t_n = k * (delta_n - d * p)
        t_s = (1.0 - d) * k * delta_s
        k_nn = k * (1.0 - d * dp)
        k_ss = (1.0 - d) * k
        return t_n, t_s, k_nn, k_ss

    def force_and_stiffness(self, u: np.ndarray, with_stiffness: bool = True):
        """Internal force (n, 8) and tangent (n, 8, 8) at frozen damage.

        ``u`` has shape (n, 4, 2).  DOF ordering is (n0x, n0y, ..., n3x, n3y).
        """
        delta_n, delta_s, tangent, normal, length = cie_kinematics(self.coords, u)
        t_n, t_s, k_nn, k_ss = self._tractions(delta_n, delta_s)
        n = self.n_elements
        f = np.zeros((n, 8))
        kmat = np.zeros((n, 8, 8)) if with_stiffness else None
        w = 0.5 * length * self.thickness  # Newton-Cotes end-point weights
        for ip, (nb, nt) in enumerate(zip(_PAIR_BOTTOM, _PAIR_TOP)):
            # traction vector in global frame
            tvec = t_n[:, ip, None] * normal + t_s[:, ip, None] * tangent
            fw = w[:, None] * tvec
            bx, tx = 2 * nb, 2 * nt
            f[:, tx : tx + 2] += fw
            f[:, bx : bx + 2] -= fw
            if not with_stiffness:
                continue
            # local stiffness rotated to global: k_nn n x n + k_ss t x t
            kg = (
                k_nn[:, ip, None, None] * np.einsum("ni,nj->nij", normal, normal)
                + k_ss[:, ip, None, None] * np.einsum("ni,nj->nij", tangent, tangent)
            )
            kw = w[:, None, None] * kg
            kmat[:, tx : tx + 2, tx : tx + 2] += kw
            kmat[:, bx : bx + 2, bx : bx + 2] += kw
            kmat[:, tx : tx + 2, bx : bx + 2] -= kw
            kmat[:, bx : bx + 2, tx : tx + 2] -= kw
        return f, kmat

    def force_only(self, u: np.ndarray) -> np.ndarray:
        return self.force_and_stiffness(u, with_stiffness=False)[0]

    def commit_state(self, u: np.ndarray) -> np.ndarray:
        """Advance damage, peak openings and work integrals for accepted ``u``.

        Returns the internal force (n, 8) at the committed state, which saves
        the explicit integrator a second kinematics pass per step.
        """
        delta_n, delta_s, tangent, normal, length = cie_kinematics(self.coords, u)
        k = self.K[:, None]
        dn_pos = np.maximum(delta_n, 0.0)
        delta_m = np.hypot(dn_pos, delta_s)

        # initiation on trial (undamaged) tractions
        crit = (k * dn_pos / self.sn0[:, None]) ** 2 + (k * delta_s / self.ss0[:, None]) ** 2
        fresh = (~self.initiated) & (crit >= 1.0) & self.can_damage[:, None]
        if np.any(fresh):
            # rows that can never damage carry infinite strengths; their
            # entries are computed but masked out by ``fresh``
            with np.errstate(divide="ignore", invalid="ignore"):
                beta = np.where(dn_pos > 0, np.abs(delta_s) / np.where(dn_pos > 0, dn_pos, 1.0), np.inf)
                dn0 = (self.sn0 / self.K)[:, None]
                ds0 = (self.ss0 / self.K)[:, None]
                finite = np.isfinite(beta)
                dm0 = np.where(
                    finite,
                    dn0 * ds0 * np.sqrt((1.0 + beta**2) / (ds0**2 + np.where(finite, (beta * dn0) ** 2, 0.0))),
                    ds0,
                )
                # mode mixity from accumulated works at initiation
                g_n = self.work_n + 0.5 * k * dn_pos**2 - 0.5 * self._last_tn * self._last_dn
                g_s = self.work_s + 0.5 * k * delta_s**2 - 0.5 * self._last_ts * self._last_ds
                g_n = np.maximum(g_n, 0.0)
                g_s = np.maximum(g_s, 0.0)
                total = np.maximum(g_n + g_s, 1e-300)
                gc = self.GI[:, None] + (self.GII - self.GI)[:, None] * (g_s / total) ** self.eta[:, None]
                dmf = 2.0 * gc / (k * dm0)
                self.delta_m0[fresh] = dm0[fresh]
                self.delta_mf[fresh] = np.maximum(dmf, dm0 * (1.0 + 1e-12))[fresh]
            self.initiated |= fresh
            self.delta_m_max[fresh] = np.maximum(self.delta_m_max, self.delta_m0)[fresh]

        live = self.initiated
        if np.any(live):
            dmax = np.maximum(self.delta_m_max, delta_m)
            span = self.delta_mf - self.delta_m0
            with np.errstate(divide="ignore", invalid="ignore"):
                d_new = self.delta_mf * (dmax - self.delta_m0) / (np.maximum(dmax, 1e-300) * span)
            d_new = np.clip(d_new, 0.0, 1.0)
            self.D[live] = np.maximum(self.D, d_new)[live]
            self.delta_m_max[live] = dmax[live]

        # work integrals (trapezoid over the accepted path) and dissipation
        t_n, t_s, _, _ = self._tractions(delta_n, delta_s)
        t_n_pos = np.maximum(t_n, 0.0)
        self.work_n += 0.5 * (t_n_pos + self._last_tn) * (dn_pos - self._last_dn)
        self.work_s += 0.5 * (t_s + self._last_ts) * (delta_s - self._last_ds)
        recoverable = 0.5 * (1.0 - self.D) * k * (dn_pos**2 + delta_s**2)
        self.dissipated = np.maximum(self.dissipated, self.work_n + self.work_s - recoverable)
        self._last_tn = t_n_pos
        self._last_ts = t_s
        self._last_dn = dn_pos
        self._last_ds = delta_s

        # internal force at the committed state (weights as in force_and_stiffness)
        f = np.zeros((self.n_elements, 8))
        w = 0.5 * length * self.thickness
        for ip, (nb, nt) in enumerate(zip(_PAIR_BOTTOM, _PAIR_TOP)):
            tvec = t_n[:, ip, None] * normal + t_s[:, ip, None] * tangent
            fw = w[:, None] * tvec
            f[:, 2 * nt : 2 * nt + 2] += fw
            f[:, 2 * nb : 2 * nb + 2] -= fw
        return f

    def elastic_energy(self, u: np.ndarray) -> float:
        """Recoverable energy stored in the cohesive layer (per unit thickness)."""
        delta_n, delta_s, _, _, length = cie_kinematics(self.coords, u)
        k = self.K[:, None]
        dn_pos = np.maximum(delta_n, 0.0)
        dn_neg = np.minimum(delta_n, 0.0)
        density = 0.5 * (1.0 - self.D) * k * (dn_pos**2 + delta_s**2) + 0.5 * k * dn_neg**2
        w = 0.5 * length * self.thickness
        return float(np.sum(density * w[:, None]))

    def dissipated_energy_total(self, u: np.ndarray | None = None) -> float:
        if self.n_elements == 0:
            return 0.0
        lengths = np.linalg.norm(
            0.5 * (self.coords[:, 1] + self.coords[:, 2]) - 0.5 * (self.coords[:, 0] + self.coords[:, 3]),
            axis=1,
        )
        w = 0.5 * lengths * self.thickness
        return float(np.sum(self.dissipated * w[:, None]))
