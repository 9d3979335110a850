"""Random and fixed multi-inclusion geometry generation.

Random layouts use rejection sampling (random sequential addition): shapes are
drawn uniformly in size, orientation and position and accepted when the
inclusion plus its interface ring keeps the minimum gap from everything
already placed and from the domain boundary.  Placement is a pure function of
the spec and seed.  Fixed layouts reproduce the single / dual / quad ellipse
configurations with identical inclusion and interface area fractions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mesh import GeometrySpec, Inclusion, MeshError


class PackingError(RuntimeError):
    pass


@dataclass(frozen=True)
class MicrostructureSpec:
    width: float = 50.0
    height: float = 50.0
    shape: str = "circle"  # circle | ellipse | polygon
    size_range: tuple[float, float] = (6.0, 8.0)  # overall diameter
    volume_fraction: float = 0.20
    interface_thickness: float = 0.5
    min_gap: float = 1.0
    seed: int = 0
    edge_length: float = 0.15

    def __post_init__(self):
        if not (0.0 < self.volume_fraction <= 0.5):
            raise MeshError(f"volume_fraction must be in (0, 0.5], got {self.volume_fraction}")
        if self.size_range[0] > self.size_range[1] or self.size_range[0] <= 0:
            raise MeshError(f"bad size_range {self.size_range}")
        if self.size_range[1] + 2 * (self.interface_thickness + self.min_gap) > min(self.width, self.height):
            raise MeshError("inclusion sizes do not fit the domain")


def _ring_polygon(inc: Inclusion, n: int = 64) -> np.ndarray:
    """Polygonal proxy of the inclusion-plus-ring outline for overlap tests."""
    cx, cy = inc.center
    t = inc.interface_thickness
    if inc.shape == "circle":
        r = inc.params[0] + t
        ang = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
        return np.stack([cx + r * np.cos(ang), cy + r * np.sin(ang)], axis=1)
    if inc.shape == "ellipse":
        a, b, theta = inc.params
        ang = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
        x = (a + t) * np.cos(ang)
        y = (b + t) * np.sin(ang)
        c, s = math.cos(theta), math.sin(theta)
        return np.stack([cx + c * x - s * y, cy + s * x + c * y], axis=1)
    from .mesh import _offset_polygon

    return _offset_polygon(np.asarray(inc.params, dtype=float), t)


def _polygons_clearance(p: np.ndarray, q: np.ndarray) -> float:
    """Minimum vertex-to-edge distance between two convex outlines.

    Returns 0 when they intersect.
    """
    from .mesh import _distance_to_polygon, _points_in_polygon

    if np.any(_points_in_polygon(p, q)) or np.any(_points_in_polygon(q, p)):
        return 0.0
    return float(min(np.min(_distance_to_polygon(p, q)), np.min(_distance_to_polygon(q, p))))


def _fits(inc: Inclusion, placed: list[Inclusion], spec: MicrostructureSpec) -> bool:
    r_out = inc.outer_radius()
    cx, cy = inc.center
    gap = spec.min_gap
    # circumscribed-circle boundary clearance (conservative, keeps the spec valid)
    if not (
        r_out + gap <= cx <= spec.width - r_out - gap
        and r_out + gap <= cy <= spec.height - r_out - gap
    ):
        return False
    poly = None
    for other in placed:
        dist = math.hypot(inc.center[0] - other.center[0], inc.center[1] - other.center[1])
        if dist >= r_out + other.outer_radius() + gap:
            continue  # circumscribed circles already clear
        if inc.shape == "circle" and other.shape == "circle":
            return False  # the circumscribed test is exact for circles
        poly = _ring_polygon(inc) if poly is None else poly
        if _polygons_clearance(poly, _ring_polygon(other)) < gap:
            return False
    return True


def _sample_inclusion(rng: np.random.Generator, spec: MicrostructureSpec, size: float) -> Inclusion:
    cx = rng.uniform(0.0, spec.width)
    cy = rng.uniform(0.0, spec.height)
    t = spec.interface_thickness
    if spec.shape == "circle":
        return Inclusion("circle", (cx, cy), (size / 2.0,), t)
    if spec.shape == "ellipse":
        aspect = rng.uniform(1.5, 2.5)
        a = size / 2.0
        b = a / aspect
        theta = rng.uniform(0.0, math.pi)
        return Inclusion("ellipse", (cx, cy), (a, b, theta), t)
    n = int(rng.integers(5, 9))
    theta0 = rng.uniform(0.0, 2 * math.pi)
    r = size / 2.0
    ang = theta0 + np.linspace(0.0, 2 * math.pi, n, endpoint=False)
    verts = np.stack([cx + r * np.cos(ang), cy + r * np.sin(ang)], axis=1)
    return Inclusion("polygon", (cx, cy), tuple(map(tuple, verts)), t)


def _area_of(shape: str, size: float, aspect: float = 2.0, n: int = 6) -> float:
    if shape == "circle":
        return math.pi * (size / 2.0) ** 2
    if shape == "ellipse":
        return math.pi * (size / 2.0) ** 2 / aspect
    return 0.5 * n * (size / 2.0) ** 2 * math.sin(2 * math.pi / n)


def place_inclusions(spec: MicrostructureSpec) -> GeometrySpec:
    """Random sequential addition up to the target volume fraction.

    Deterministic for a fixed seed.  Raises :class:`PackingError` after 10000
    consecutive rejections (jamming) or when the achieved fraction misses the
    target by more than 1 % absolute.
    """
    rng = np.random.default_rng(spec.seed)
    domain_area = spec.width * spec.height
    target = spec.volume_fraction * domain_area
    lo, hi = spec.size_range

    placed: list[Inclusion] = []
    area = 0.0
    rejections = 0
    while area < target - 0.01 * domain_area:
        remaining = target - area
        # choose a size; when the deficit is within reach of the allowed size
        # range, pick the size that closes it exactly
        lo_area = _area_of(spec.shape, lo)
        hi_area = _area_of(spec.shape, hi)
        if lo_area <= remaining <= hi_area:
            # invert area(size) by bisection (monotone in size)
            a, b = lo, hi
            for _ in range(60):
                m = 0.5 * (a + b)
                if _area_of(spec.shape, m) < remaining:
                    a = m
                else:
                    b = m
            size = 0.5 * (a + b)
        elif remaining < lo_area:
            size = lo
        else:
            size = rng.uniform(lo, hi)
        candidate = _sample_inclusion(rng, spec, size)
        try:
            ok = _fits(candidate, placed, spec)
        except MeshError:
            ok = False
        if ok:
            placed.append(candidate)
            area += candidate.area()
            rejections = 0
        else:
            rejections += 1
            if rejections >= 10_000:
                raise PackingError("jamming: reduce fraction or sizes")
    achieved = area / domain_area
    if abs(achieved - spec.volume_fraction) > 0.01:
        raise PackingError(
            f"achieved fraction {achieved:.4f} misses target {spec.volume_fraction:.4f} by > 1 %"
        )
    return GeometrySpec(
        width=spec.width,
        height=spec.height,
        edge_length=spec.edge_length,
        inclusions=tuple(placed),
    )


# ---------------------------------------------------------------------------
# Fixed layouts on the 20 x 20 benchmark domain
# ---------------------------------------------------------------------------

_DOMAIN = 20.0
_EDGE = 0.3
_TOTAL_INCLUSION_AREA = math.pi * 16.0  # matches the circular benchmark inclusion
_ASPECT = 2.0  # semi-major : semi-minor, major axis vertical
_T_SINGLE = 0.6

FIXED_LAYOUTS = ("single", "two_ellipses_a", "two_ellipses_b", "four_ellipses")


def _ellipse_semi_axes(count: int) -> tuple[float, float]:
    # each ellipse carries 1/count of the total area; pi a b = area, b = aspect a
    ab = _TOTAL_INCLUSION_AREA / (math.pi * count)
    a = math.sqrt(ab / _ASPECT)
    return a, _ASPECT * a


def _ring_thickness(count: int, a: float, b: float, target_ring_area: float) -> float:
    # solve count * pi * t * (a + b + t) = target ring area for t > 0
    s = a + b
    c = target_ring_area / (count * math.pi)
    return 0.5 * (-s + math.sqrt(s * s + 4.0 * c))


def fixed_layouts(name: str) -> GeometrySpec:
    """Hand-coded ellipse layouts with equal inclusion and interface fractions.

    ``single``: one centered vertical ellipse; ``two_ellipses_a``: two side by
    side (two independent crack planes under horizontal tension);
    ``two_ellipses_b``: two on a diagonal; ``four_ellipses``: one per quadrant.
    Interface ring thicknesses are solved per layout so the ring area matches
    the single-ellipse layout to well within 0.5 %.
    """
    if name not in FIXED_LAYOUTS:
        raise MeshError(f"unknown fixed layout {name!r}, expected one of {FIXED_LAYOUTS}")
    a1, b1 = _ellipse_semi_axes(1)
    ring_area = math.pi * _T_SINGLE * (a1 + b1 + _T_SINGLE)
    vertical = math.pi / 2.0  # major axis along y: cracks run vertically across it

    if name == "single":
        incs = [Inclusion("ellipse", (10.0, 10.0), (b1, a1, vertical), _T_SINGLE)]
    elif name == "two_ellipses_a":
        a, b = _ellipse_semi_axes(2)
        t = _ring_thickness(2, a, b, ring_area)
        incs = [
            Inclusion("ellipse", (6.0, 10.0), (b, a, vertical), t),
            Inclusion("ellipse", (14.0, 10.0), (b, a, vertical), t),
        ]
    elif name == "two_ellipses_b":
        a, b = _ellipse_semi_axes(2)
        t = _ring_thickness(2, a, b, ring_area)
        incs = [
            Inclusion("ellipse", (6.5, 6.5), (b, a, vertical), t),
            Inclusion("ellipse", (13.5, 13.5), (b, a, vertical), t),
        ]
    else:
        a, b = _ellipse_semi_axes(4)
        t = _ring_thickness(4, a, b, ring_area)
        incs = [
            Inclusion("ellipse", (5.5, 5.5), (b, a, vertical), t),
            Inclusion("ellipse", (14.5, 5.5), (b, a, vertical), t),
            Inclusion("ellipse", (5.5, 14.5), (b, a, vertical), t),
            Inclusion("ellipse", (14.5, 14.5), (b, a, vertical), t),
        ]
    return GeometrySpec(width=_DOMAIN, height=_DOMAIN, edge_length=_EDGE, inclusions=tuple(incs))


# ---------------------------------------------------------------------------
# Geometry text format
# ---------------------------------------------------------------------------

_GEOM_HEADER = "# fracture2d geometry 1"


def write_geometry_text(spec: GeometrySpec) -> str:
    r = lambda v: repr(float(v))
    lines = [_GEOM_HEADER, f"DOMAIN {r(spec.width)} {r(spec.height)}", f"EDGE {r(spec.edge_length)}"]
    for inc in spec.inclusions:
        cx, cy = inc.center
        t = inc.interface_thickness
        if inc.shape == "circle":
            lines.append(f"INCLUSION circle {r(cx)} {r(cy)} {r(t)} {r(inc.params[0])}")
        elif inc.shape == "ellipse":
            a, b, theta = inc.params
            lines.append(f"INCLUSION ellipse {r(cx)} {r(cy)} {r(t)} {r(a)} {r(b)} {r(theta)}")
        else:
            flat = " ".join(f"{r(x)} {r(y)}" for x, y in inc.params)
            lines.append(f"INCLUSION polygon {r(cx)} {r(cy)} {r(t)} {len(inc.params)} {flat}")
    return "\n".join(lines) + "\n"


def read_geometry_text(text: str) -> GeometrySpec:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != _GEOM_HEADER:
        raise MeshError("not a fracture2d geometry file (bad header)")
    width = height = edge = None
    incs = []
    for ln in lines[1:]:
        parts = ln.split()
        if parts[0] == "DOMAIN":
            width, height = float(parts[1]), float(parts[2])
        elif parts[0] == "EDGE":
            edge = float(parts[1])
        elif parts[0] == "INCLUSION":
            shape = parts[1]
            cx, cy, t = float(parts[2]), float(parts[3]), float(parts[4])
            if shape == "circle":
                incs.append(Inclusion("circle", (cx, cy), (float(parts[5]),), t))
            elif shape == "ellipse":
                incs.append(
                    Inclusion("ellipse", (cx, cy), (float(parts[5]), float(parts[6]), float(parts[7])), t)
                )
            elif shape == "polygon":
                k = int(parts[5])
                vals = [float(v) for v in parts[6 : 6 + 2 * k]]
                verts = tuple((vals[2 * i], vals[2 * i + 1]) for i in range(k))
                incs.append(Inclusion("polygon", (cx, cy), verts, t))
            else:
                raise MeshError(f"unknown inclusion shape {shape!r}")
        else:
            raise MeshError(f"unknown geometry directive {parts[0]!r}")
    if width is None or edge is None:
        raise MeshError("geometry file missing DOMAIN or EDGE")
    return GeometrySpec(width=width, height=height, edge_length=edge, inclusions=tuple(incs))


def write_geometry_file(spec: GeometrySpec, path) -> None:
    with open(path, "w") as fh:
        fh.write(write_geometry_text(spec))


def read_geometry_file(path) -> GeometrySpec:
    with open(path) as fh:
        return read_geometry_text(fh.read())
