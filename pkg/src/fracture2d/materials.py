"""Constitutive scalar functions and per-phase property tables.

Everything here is a pure function of plain floats / numpy arrays: the
degradation function ``omega``, the crack geometric function ``alpha``, the
normalization constant ``c0``, the rational-degradation coefficients of the
cohesive phase-field scheme, and the driving-energy threshold.  Units are
mm / MPa / N throughout (so fracture energies are N/mm and energy densities
MPa).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Fracture schemes for the bulk phase-field problem.
AT1 = "AT1"
AT2 = "AT2"
CPFM = "CPFM"
SCHEMES = (AT1, AT2, CPFM)

# Cornelissen softening constants for concrete-like quasi-brittle response.
CORNELISSEN_A2 = 1.3868
CORNELISSEN_A3 = 0.6567

PHI_TOL = 1e-9


class MaterialError(ValueError):
    """Invalid material parameters or property-table entries."""


@dataclass(frozen=True)
class PhaseProperties:
    """Elastic and fracture parameters of one bulk phase.

    Attributes
    ----------
    E : float
        Young's modulus in MPa.
    nu : float
        Poisson's ratio.
    Gc : float
        Critical energy release rate in N/mm.
    sigma_u : float
        Failure strength in MPa.
    """

    E: float
    nu: float
    Gc: float
    sigma_u: float

    def __post_init__(self):
        if not (self.E > 0 and math.isfinite(self.E)):
            raise MaterialError(f"E must be positive, got {self.E}")
        if not (0.0 <= self.nu < 0.5):
            raise MaterialError(f"nu must be in [0, 0.5), got {self.nu}")
        if not (self.Gc > 0):
            raise MaterialError(f"Gc must be positive, got {self.Gc}")
        if not (self.sigma_u > 0):
            raise MaterialError(f"sigma_u must be positive, got {self.sigma_u}")


@dataclass(frozen=True)
class FractureModel:
    """Bulk fracture scheme selector plus its scalar knobs.

    ``k_residual`` is the small stiffness floor of the quadratic degradation
    (standard phase-field only).  ``cornelissen`` holds the (a2, a3) softening
    constants of the rational degradation function.
    """

    scheme: str
    k_residual: float = 1e-7
    cornelissen: tuple[float, float] = (CORNELISSEN_A2, CORNELISSEN_A3)

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise MaterialError(f"unknown scheme {self.scheme!r}, expected one of {SCHEMES}")
        if not (0.0 < self.k_residual <= 1e-4):
            raise MaterialError(f"k_residual must be in (0, 1e-4], got {self.k_residual}")


@dataclass(frozen=True)
class DerivedModelConstants:
    """Scheme- and phase-dependent constants entering the element kernels."""

    c0: float
    a1: float
    lc: float

    def __post_init__(self):
        if not (self.lc > 0):
            raise MaterialError(f"lc must be positive, got {self.lc}")
        if not (self.a1 > 0):
            raise MaterialError(f"a1 must be positive, got {self.a1}")


def _check_phi(phi):
    phi = np.asarray(phi, dtype=float)
    if np.any(phi < -PHI_TOL) or np.any(phi > 1.0 + PHI_TOL):
        bad = phi[(phi < -PHI_TOL) | (phi > 1.0 + PHI_TOL)]
        raise MaterialError(f"damage value outside [0, 1]: {bad.flat[0]}")
    return np.clip(phi, 0.0, 1.0)


def alpha(model: FractureModel, phi):
    """Crack geometric function and its first two derivatives.

    AT1: (phi, 1, 0); AT2: (phi^2, 2 phi, 2); CPFM: (2 phi - phi^2, 2 - 2 phi, -2).
    Accepts scalars or arrays.
    """
    phi = _check_phi(phi)
    one = np.ones_like(phi)
    if model.scheme == AT1:
        return phi, one, np.zeros_like(phi)
    if model.scheme == AT2:
        return phi * phi, 2.0 * phi, 2.0 * one
    return 2.0 * phi - phi * phi, 2.0 - 2.0 * phi, -2.0 * one


def c0(model: FractureModel) -> float:
    """Normalization constant of the crack surface density.

    Equals 4 * integral_0^1 sqrt(alpha(x)) dx: 8/3 (AT1), 2 (AT2), pi (CPFM).
    """
    if model.scheme == AT1:
        return 8.0 / 3.0
    if model.scheme == AT2:
        return 2.0
    return math.pi


def omega(model: FractureModel, consts: DerivedModelConstants, phi):
    """Degradation function with first and second derivatives.

    Quadratic ``(1-phi)^2 + k`` for AT1/AT2; the rational cohesive form

        (1-phi)^2 / [(1-phi)^2 + a1 phi + a1 a2 phi^2 + a1 a2 a3 phi^3]

    for CPFM, which satisfies omega(1) = 0 and omega'(1) = 0.
    """
    phi = _check_phi(phi)
    if model.scheme in (AT1, AT2):
        k = model.k_residual
        return (1.0 - phi) ** 2 + k, -2.0 * (1.0 - phi), 2.0 * np.ones_like(phi)

    a1 = consts.a1
    a2, a3 = model.cornelissen
    n = (1.0 - phi) ** 2
    dn = -2.0 * (1.0 - phi)
    d2n = 2.0
    den = n + a1 * phi + a1 * a2 * phi**2 + a1 * a2 * a3 * phi**3
    dden = dn + a1 + 2.0 * a1 * a2 * phi + 3.0 * a1 * a2 * a3 * phi**2
    d2den = d2n + 2.0 * a1 * a2 + 6.0 * a1 * a2 * a3 * phi
    w = n / den
    dw = (dn * den - n * dden) / den**2
    d2w = (d2n * den - n * d2den) / den**2 - 2.0 * dden * (dn * den - n * dden) / den**3
    return w, dw, d2w


def cpfm_a1(props: PhaseProperties, lc: float) -> float:
    """Base rational-degradation coefficient 2 E Gc / (sigma_u^2 pi lc)."""
    if not lc > 0:
        raise MaterialError(f"lc must be positive, got {lc}")
    return 2.0 * props.E * props.Gc / (props.sigma_u**2 * math.pi * lc)


def cpfm_a2_general(k0: float, Gc: float, sigma_u: float, p: float) -> float:
    """General expression for the a2 softening coefficient.

    ``k0`` is the (negative) initial slope of the traction--separation
    softening curve and ``p`` a material exponent.  Not used by the default
    tables, which carry the Cornelissen constants directly.
    """
    if k0 >= 0:
        raise MaterialError("initial softening slope k0 must be negative")
    return 2.0 * (-2.0 * k0 * Gc / sigma_u**2) ** (2.0 / 3.0) - (p + 0.5)


def cpfm_a3_general(a2: float, d_u: float, Gc: float, sigma_u: float, p: float) -> float:
    """General expression for the a3 softening coefficient (zero when p > 0)."""
    if p > 0:
        return 0.0
    return (0.125 * (d_u * sigma_u / Gc) ** 2 - (1.0 + a2)) / a2


def psi_eq_threshold(props: PhaseProperties) -> float:
    """Driving-energy threshold sigma_u^2 / (2 E) below which damage cannot grow."""
    return props.sigma_u**2 / (2.0 * props.E)


def derive_constants(model: FractureModel, props: PhaseProperties, lc: float) -> DerivedModelConstants:
    """Assemble the per-phase kernel constants for a scheme at length scale lc.

    For the cohesive scheme, a1 is calibrated from the onset identity

        a1 * psi_eq_threshold == alpha'(0) * Gc / (c0 * lc)

    so that the local damage criterion sits exactly at equality when the
    driving history reaches the threshold.  A homogeneous tension test then
    peaks at the failure strength sigma_u.
    """
    if not lc > 0:
        raise MaterialError(f"lc must be positive, got {lc}")
    cc = c0(model)
    if model.scheme == CPFM:
        _, dalpha0, _ = alpha(model, 0.0)
        a1 = float(dalpha0) * props.Gc / (cc * lc * psi_eq_threshold(props))
    else:
        a1 = 1.0  # unused by the quadratic degradation
    return DerivedModelConstants(c0=cc, a1=a1, lc=lc)


# ---------------------------------------------------------------------------
# Property tables
# ---------------------------------------------------------------------------

BULK_PHASES = ("matrix", "inclusion", "interface")

# Default bulk elasticity + fracture parameters (mm-MPa-N units).
_DEFAULT_BULK = {
    "inclusion": dict(E=72000.0, nu=0.16, Gc=0.2, sigma_u=20.0),
    "matrix": dict(E=28000.0, nu=0.2, Gc=0.06, sigma_u=4.0),
    "interface": dict(E=21900.0, nu=0.2, Gc=0.02, sigma_u=2.4),
}

# Named interface-phase variants for the interface-property study.
INTERFACE_PRESETS = {
    "interface1": dict(Gc=0.008, sigma_u=1.0),
    "interface2": dict(Gc=0.02, sigma_u=2.4),
    "interface3": dict(Gc=0.4, sigma_u=6.0),
}

# Default cohesive traction-separation parameters, keyed by cohesive-element
# phase.  The inclusion set stays elastic (no initiation), so it carries no
# strengths or fracture energies.
_DEFAULT_COHESIVE = {
    "cie_interface": dict(K=1e6, sigma_n0=2.4, sigma_s0=10.0, G_I=0.02, G_II=0.4, eta=1.2),
    "cie_matrix": dict(K=1e6, sigma_n0=4.0, sigma_s0=30.0, G_I=0.06, G_II=1.2, eta=1.2),
    "cie_inclusion": dict(K=1e6),
}


@dataclass(frozen=True)
class MaterialTable:
    """Resolved per-phase property tables for one run."""

    bulk: dict[str, PhaseProperties]
    cohesive: dict[str, "object"]  # phase -> cohesive.CohesiveLaw

    def bulk_for(self, phase: str) -> PhaseProperties:
        try:
            return self.bulk[phase]
        except KeyError:
            raise MaterialError(f"no bulk properties for phase {phase!r}") from None


def load_property_tables(config: dict | None = None) -> MaterialTable:
    """Build the material tables, applying overrides from a parsed config.

    ``config`` maps phase names to dicts of field overrides, e.g.
    ``{"interface": {"preset": "interface3"}}`` or
    ``{"matrix": {"Gc": 0.08}}``.  Defaults reproduce the reference tables.
    Missing phases or unknown fields raise :class:`MaterialError` naming the
    offender.
    """
    from .cohesive import CohesiveLaw

    config = dict(config or {})
    bulk: dict[str, PhaseProperties] = {}
    for phase in BULK_PHASES:
        values = dict(_DEFAULT_BULK[phase])
        overrides = dict(config.pop(phase, {}))
        preset = overrides.pop("preset", None)
        if preset is not None:
            if phase != "interface":
                raise MaterialError(f"presets exist only for the interface phase, not {phase!r}")
            try:
                values.update(INTERFACE_PRESETS[preset])
            except KeyError:
                raise MaterialError(f"unknown interface preset {preset!r}") from None
        for key, val in overrides.items():
            if key not in values:
                raise MaterialError(f"unknown property {key!r} for phase {phase!r}")
            values[key] = float(val)
        bulk[phase] = PhaseProperties(**values)

    cohesive: dict[str, CohesiveLaw] = {}
    for phase, defaults in _DEFAULT_COHESIVE.items():
        values = dict(defaults)
        overrides = dict(config.pop(phase, {}))
        for key, val in overrides.items():
            if key not in ("K", "sigma_n0", "sigma_s0", "G_I", "G_II", "eta"):
                raise MaterialError(f"unknown property {key!r} for phase {phase!r}")
            values[key] = float(val)
        if "sigma_n0" in values:
            cohesive[phase] = CohesiveLaw(**values)
        else:
            cohesive[phase] = CohesiveLaw.elastic(values["K"])

    if config:
        raise MaterialError(f"unknown phase entries in material config: {sorted(config)}")
    return MaterialTable(bulk=bulk, cohesive=cohesive)
