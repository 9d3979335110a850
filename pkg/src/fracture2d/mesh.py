"""Mesh construction for the three-phase composite models.

Builds structured quad4 / tri3 meshes over rectangular domains, tags bulk
elements by phase (matrix / inclusion / interface ring) from a geometry
description, checks interface resolution, and inserts zero-thickness 4-node
cohesive elements by node duplication.  Meshes are plain numpy containers and
are treated as immutable once built.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# element kinds
QUAD4 = "quad4"
TRI3 = "tri3"
CIE4 = "cie4"
_KIND_IDS = {QUAD4: 0, TRI3: 1, CIE4: 2}
_KIND_NAMES = {v: k for k, v in _KIND_IDS.items()}
_KIND_NNODES = {QUAD4: 4, TRI3: 3, CIE4: 4}

# phases
BULK_PHASE_NAMES = ("matrix", "inclusion", "interface")
CIE_PHASE_NAMES = ("cie_matrix", "cie_inclusion", "cie_interface")
_PHASE_IDS = {name: i for i, name in enumerate(BULK_PHASE_NAMES + CIE_PHASE_NAMES)}
_PHASE_IDS["untagged"] = 255
_PHASE_NAMES = {v: k for k, v in _PHASE_IDS.items()}

COINCIDENCE_TOL = 1e-12


class MeshError(ValueError):
    """Invalid mesh, geometry, or insertion input."""


@dataclass(frozen=True)
class Inclusion:
    """One inclusion with its interface ring.

    ``params`` depends on ``shape``: ``(r,)`` for a circle, ``(a, b, theta)``
    for an ellipse (semi-axes and rotation in radians), or an (k, 2) array of
    absolute vertex coordinates for a convex polygon.
    """

    shape: str
    center: tuple[float, float]
    params: tuple
    interface_thickness: float

    def __post_init__(self):
        if self.shape not in ("circle", "ellipse", "polygon"):
            raise MeshError(f"unknown inclusion shape {self.shape!r}")
        if not self.interface_thickness > 0:
            raise MeshError("interface_thickness must be positive")

    # -- containment tests -------------------------------------------------
    def _local(self, pts):
        return np.asarray(pts, dtype=float) - np.asarray(self.center)

    def contains(self, pts) -> np.ndarray:
        """True where points fall inside the inclusion itself."""
        p = self._local(np.atleast_2d(pts))
        if self.shape == "circle":
            (r,) = self.params
            return np.einsum("ij,ij->i", p, p) <= r * r
        if self.shape == "ellipse":
            a, b, theta = self.params
            c, s = math.cos(theta), math.sin(theta)
            x = c * p[:, 0] + s * p[:, 1]
            y = -s * p[:, 0] + c * p[:, 1]
            return (x / a) ** 2 + (y / b) ** 2 <= 1.0
        verts = np.asarray(self.params, dtype=float) - np.asarray(self.center)
        return _points_in_polygon(p, verts)

    def in_ring(self, pts) -> np.ndarray:
        """True where points fall inside the interface ring (excluding inside)."""
        p = np.atleast_2d(pts)
        t = self.interface_thickness
        inside = self.contains(p)
        q = self._local(p)
        if self.shape == "circle":
            (r,) = self.params
            outer = np.einsum("ij,ij->i", q, q) <= (r + t) ** 2
        elif self.shape == "ellipse":
            a, b, theta = self.params
            c, s = math.cos(theta), math.sin(theta)
            x = c * q[:, 0] + s * q[:, 1]
            y = -s * q[:, 0] + c * q[:, 1]
            outer = (x / (a + t)) ** 2 + (y / (b + t)) ** 2 <= 1.0
        else:
            verts = np.asarray(self.params, dtype=float) - np.asarray(self.center)
            outer = _points_in_polygon(q, verts) | (_distance_to_polygon(q, verts) <= t)
        return outer & ~inside

    # -- geometry helpers ---------------------------------------------------
    def area(self) -> float:
        if self.shape == "circle":
            return math.pi * self.params[0] ** 2
        if self.shape == "ellipse":
            return math.pi * self.params[0] * self.params[1]
        return _polygon_area(np.asarray(self.params, dtype=float))

    def ring_area(self) -> float:
        t = self.interface_thickness
        if self.shape == "circle":
            r = self.params[0]
            return math.pi * ((r + t) ** 2 - r * r)
        if self.shape == "ellipse":
            a, b, _ = self.params
            return math.pi * ((a + t) * (b + t) - a * b)
        verts = np.asarray(self.params, dtype=float)
        return _polygon_area(_offset_polygon(verts, t)) - _polygon_area(verts)

    def outer_radius(self) -> float:
        """Circumscribed radius of the inclusion plus its ring."""
        t = self.interface_thickness
        if self.shape == "circle":
            return self.params[0] + t
        if self.shape == "ellipse":
            return max(self.params[0], self.params[1]) + t
        verts = np.asarray(self.params, dtype=float) - np.asarray(self.center)
        return float(np.max(np.linalg.norm(verts, axis=1))) + t

    def boundary_samples(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """``n`` points on the inclusion boundary with outward unit normals."""
        cx, cy = self.center
        if self.shape == "circle":
            (r,) = self.params
            ang = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
            nrm = np.stack([np.cos(ang), np.sin(ang)], axis=1)
            return np.array([cx, cy]) + r * nrm, nrm
        if self.shape == "ellipse":
            a, b, theta = self.params
            ang = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
            xl = a * np.cos(ang)
            yl = b * np.sin(ang)
            # outward normal of (x/a)^2 + (y/b)^2 = 1 is (x/a^2, y/b^2)
            nl = np.stack([xl / a**2, yl / b**2], axis=1)
            nl /= np.linalg.norm(nl, axis=1)[:, None]
            c, s = math.cos(theta), math.sin(theta)
            rot = np.array([[c, -s], [s, c]])
            return np.array([cx, cy]) + np.stack([xl, yl], axis=1) @ rot.T, nl @ rot.T
        verts = np.asarray(self.params, dtype=float)
        pts, nrms = [], []
        k = len(verts)
        per_edge = max(1, n // k)
        for i in range(k):
            a_, b_ = verts[i], verts[(i + 1) % k]
            edge = b_ - a_
            nrm = np.array([edge[1], -edge[0]])
            nrm /= np.linalg.norm(nrm)
            for f in np.linspace(0.1, 0.9, per_edge):
                pts.append(a_ + f * edge)
                nrms.append(nrm)
        return np.asarray(pts), np.asarray(nrms)


@dataclass(frozen=True)
class GeometrySpec:
    """Rectangular domain with inclusions and a target element edge length."""

    width: float
    height: float
    edge_length: float
    inclusions: tuple[Inclusion, ...] = ()

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise MeshError("domain dimensions must be positive")
        if not self.edge_length > 0:
            raise MeshError("edge_length must be positive")
        for inc in self.inclusions:
            r = inc.outer_radius()
            cx, cy = inc.center
            if not (r < cx < self.width - r and r < cy < self.height - r):
                raise MeshError(
                    f"inclusion at ({cx}, {cy}) with outer radius {r:.3g} "
                    "does not lie strictly inside the domain"
                )


def _polygon_area(verts: np.ndarray) -> float:
    x, y = verts[:, 0], verts[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _offset_polygon(verts: np.ndarray, t: float) -> np.ndarray:
    """Outward offset of a convex polygon by moving vertices along angle bisectors."""
    centroid = verts.mean(axis=0)
    out = []
    k = len(verts)
    for i in range(k):
        prev_edge = verts[i] - verts[i - 1]
        next_edge = verts[(i + 1) % k] - verts[i]
        n1 = np.array([prev_edge[1], -prev_edge[0]])
        n2 = np.array([next_edge[1], -next_edge[0]])
        n1 /= np.linalg.norm(n1)
        n2 /= np.linalg.norm(n2)
        if np.dot(n1, verts[i] - centroid) < 0:
            n1, n2 = -n1, -n2
        bis = n1 + n2
        bis /= np.linalg.norm(bis)
        out.append(verts[i] + t * bis / max(abs(np.dot(bis, n1)), 1e-12))
    return np.asarray(out)


def _points_in_polygon(pts: np.ndarray, verts: np.ndarray) -> np.ndarray:
    """Ray-casting point-in-polygon for a batch of points."""
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    k = len(verts)
    for i in range(k):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % k]
        crosses = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xin = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < np.where(crosses, xin, np.inf))
    return inside


def _distance_to_polygon(pts: np.ndarray, verts: np.ndarray) -> np.ndarray:
    """Distance from points to the polygon boundary (segments)."""
    best = np.full(len(pts), np.inf)
    k = len(verts)
    for i in range(k):
        a, b = verts[i], verts[(i + 1) % k]
        ab = b - a
        denom = float(np.dot(ab, ab))
        t = np.clip(((pts - a) @ ab) / denom, 0.0, 1.0)
        proj = a + t[:, None] * ab
        best = np.minimum(best, np.linalg.norm(pts - proj, axis=1))
    return best


class Mesh:
    """2D mesh: nodes, mixed-kind elements, and named node sets.

    Elements are stored in flat arrays: ``elem_nodes`` is (E, 4) with -1
    padding for tri3, ``elem_kind`` and ``elem_phase`` are small-integer codes
    translated by :meth:`kind_name` / :meth:`phase_name`.
    """

    def __init__(self, nodes, elem_nodes, elem_kind, elem_phase, node_sets=None):
        self.nodes = np.ascontiguousarray(nodes, dtype=float)
        self.elem_nodes = np.ascontiguousarray(elem_nodes, dtype=np.int64)
        self.elem_kind = np.ascontiguousarray(elem_kind, dtype=np.uint8)
        self.elem_phase = np.ascontiguousarray(elem_phase, dtype=np.uint8)
        self.node_sets = {k: np.asarray(v, dtype=np.int64) for k, v in (node_sets or {}).items()}
        if not np.all(np.isfinite(self.nodes)):
            raise MeshError("node coordinates must be finite")
        if self.elem_nodes.size and self.elem_nodes.max() >= len(self.nodes):
            raise MeshError("element references a missing node")
        for name, ids in self.node_sets.items():
            if ids.size and ids.max() >= len(self.nodes):
                raise MeshError(f"node set {name!r} references a missing node")

    # -- basic queries ------------------------------------------------------
    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elem_nodes)

    @staticmethod
    def kind_name(code: int) -> str:
        return _KIND_NAMES[int(code)]

    @staticmethod
    def phase_name(code: int) -> str:
        return _PHASE_NAMES[int(code)]

    @staticmethod
    def phase_id(name: str) -> int:
        return _PHASE_IDS[name]

    @staticmethod
    def kind_id(name: str) -> int:
        return _KIND_IDS[name]

    @property
    def bulk_ids(self) -> np.ndarray:
        return np.flatnonzero(self.elem_kind != _KIND_IDS[CIE4])

    @property
    def cie_ids(self) -> np.ndarray:
        return np.flatnonzero(self.elem_kind == _KIND_IDS[CIE4])

    def element_sets(self) -> dict[str, np.ndarray]:
        return {
            name: np.flatnonzero(self.elem_phase == code)
            for name, code in _PHASE_IDS.items()
            if name != "untagged" and np.any(self.elem_phase == code)
        }

    def element_nodes(self, e: int) -> np.ndarray:
        row = self.elem_nodes[e]
        return row[row >= 0]

    def centroids(self, ids=None) -> np.ndarray:
        ids = self.bulk_ids if ids is None else np.asarray(ids)
        out = np.zeros((len(ids), 2))
        for pos, e in enumerate(ids):
            out[pos] = self.nodes[self.element_nodes(e)].mean(axis=0)
        return out

    def bulk_kind(self) -> str:
        kinds = set(self.elem_kind[self.bulk_ids].tolist())
        if len(kinds) != 1:
            raise MeshError("mixed bulk element kinds are not supported")
        return _KIND_NAMES[kinds.pop()]


# ---------------------------------------------------------------------------
# Structured generation
# ---------------------------------------------------------------------------


def _cell_count(extent: float, edge: float) -> int:
    return int(math.ceil(extent / edge - 1e-9))


def generate_structured_mesh(spec: GeometrySpec, element_kind: str = QUAD4) -> Mesh:
    """Structured grid over the rectangular domain.

    quad4 cells, or tri3 with the diagonal direction alternating per cell in a
    checkerboard (crossed-diagonal) pattern so no global crack direction is
    preferred.  Nodes on x = 0 / x = width populate the ``left_edge`` /
    ``right_edge`` sets; the node at the origin is ``bottom_left_corner``.
    """
    if element_kind not in (QUAD4, TRI3):
        raise MeshError(f"element_kind must be quad4 or tri3, got {element_kind!r}")
    edge = spec.edge_length
    # fewer than two cells in a direction is a degenerate discretization
    if edge > min(spec.width, spec.height) / 2.0:
        raise MeshError(
            f"edge length {edge} too coarse for domain "
            f"{spec.width} x {spec.height} (fewer than two cells per direction)"
        )
    nx = _cell_count(spec.width, edge)
    ny = _cell_count(spec.height, edge)
    xs = np.linspace(0.0, spec.width, nx + 1)
    ys = np.linspace(0.0, spec.height, ny + 1)
    xv, yv = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.stack([xv.ravel(), yv.ravel()], axis=1)

    def nid(i, j):
        return j * (nx + 1) + i

    elems = []
    if element_kind == QUAD4:
        for j in range(ny):
            for i in range(nx):
                elems.append((nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)))
        kind_code = _KIND_IDS[QUAD4]
        elem_nodes = np.array(elems, dtype=np.int64)
    else:
        for j in range(ny):
            for i in range(nx):
                n00, n10 = nid(i, j), nid(i + 1, j)
                n11, n01 = nid(i + 1, j + 1), nid(i, j + 1)
                if (i + j) % 2 == 0:  # diagonal n00-n11
                    elems.append((n00, n10, n11, -1))
                    elems.append((n00, n11, n01, -1))
                else:  # diagonal n10-n01
                    elems.append((n00, n10, n01, -1))
                    elems.append((n10, n11, n01, -1))
        kind_code = _KIND_IDS[TRI3]
        elem_nodes = np.array(elems, dtype=np.int64)

    n_elem = len(elem_nodes)
    node_sets = {
        "left_edge": np.array([nid(0, j) for j in range(ny + 1)], dtype=np.int64),
        "right_edge": np.array([nid(nx, j) for j in range(ny + 1)], dtype=np.int64),
        "bottom_left_corner": np.array([nid(0, 0)], dtype=np.int64),
    }
    return Mesh(
        nodes,
        elem_nodes,
        np.full(n_elem, kind_code, dtype=np.uint8),
        np.full(n_elem, _PHASE_IDS["untagged"], dtype=np.uint8),
        node_sets,
    )


def tag_phases(mesh: Mesh, spec: GeometrySpec) -> Mesh:
    """Tag every bulk element by the phase containing its centroid.

    Priority: inside any inclusion -> ``inclusion``; inside any interface ring
    -> ``interface``; otherwise ``matrix``.  Deterministic and total.
    """
    ids = mesh.bulk_ids
    cents = mesh.centroids(ids)
    phase = np.full(len(ids), _PHASE_IDS["matrix"], dtype=np.uint8)
    ring = np.zeros(len(ids), dtype=bool)
    inside = np.zeros(len(ids), dtype=bool)
    for inc in spec.inclusions:
        inside |= inc.contains(cents)
        ring |= inc.in_ring(cents)
    phase[ring & ~inside] = _PHASE_IDS["interface"]
    phase[inside] = _PHASE_IDS["inclusion"]
    mesh.elem_phase[ids] = phase
    return mesh


@dataclass
class InterfaceResolutionReport:
    """Per-inclusion minimum interface-element counts across the ring."""

    min_counts: list[int]
    required: int = 4

    @property
    def passed(self) -> bool:
        return all(c >= self.required for c in self.min_counts)


class _ElementLocator:
    """Grid-bucket point location over bulk elements."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        ids = mesh.bulk_ids
        self.ids = ids
        lo = mesh.nodes.min(axis=0)
        hi = mesh.nodes.max(axis=0)
        edges = []
        for e in ids[: min(len(ids), 64)]:
            nn = mesh.element_nodes(e)
            edges.append(np.linalg.norm(mesh.nodes[nn[1]] - mesh.nodes[nn[0]]))
        self.cell = max(float(np.median(edges)), 1e-9)
        self.lo = lo
        self.nx = max(1, int((hi[0] - lo[0]) / self.cell) + 1)
        self.ny = max(1, int((hi[1] - lo[1]) / self.cell) + 1)
        self.buckets: dict[tuple[int, int], list[int]] = {}
        for e in ids:
            pts = mesh.nodes[mesh.element_nodes(e)]
            i0, j0 = self._key(pts.min(axis=0))
            i1, j1 = self._key(pts.max(axis=0))
            for i in range(i0, i1 + 1):
                for j in range(j0, j1 + 1):
                    self.buckets.setdefault((i, j), []).append(int(e))

    def _key(self, p):
        return (
            min(max(int((p[0] - self.lo[0]) / self.cell), 0), self.nx - 1),
            min(max(int((p[1] - self.lo[1]) / self.cell), 0), self.ny - 1),
        )

    def find(self, p) -> int:
        for e in self.buckets.get(self._key(p), ()):
            pts = self.mesh.nodes[self.mesh.element_nodes(e)]
            if _point_in_convex(p, pts):
                return e
        return -1


def _point_in_convex(p, verts, tol=1e-9):
    k = len(verts)
    sign = 0.0
    for i in range(k):
        a, b = verts[i], verts[(i + 1) % k]
        cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
        if abs(cross) < tol:
            continue
        if sign == 0.0:
            sign = cross
        elif cross * sign < 0:
            return False
    return True


def validate_interface_resolution(
    mesh: Mesh, spec: GeometrySpec, n_angles: int = 16, required: int = 4
) -> InterfaceResolutionReport:
    """Count interface-tagged elements crossed along boundary-normal rays.

    For each inclusion, rays start just inside the inclusion boundary and end
    just beyond the ring.  Each direction is probed with three laterally
    shifted parallel rays (the best of the three counts) so that rays
    threading exactly through cell corners of the structured grid do not
    under-count; the report flags failure when fewer than ``required``
    distinct interface elements are crossed at any sampled angle.  Advisory.
    """
    locator = _ElementLocator(mesh)
    iface = _PHASE_IDS["interface"]
    h = spec.edge_length
    mins = []
    for inc in spec.inclusions:
        pts, nrms = inc.boundary_samples(n_angles)
        t = inc.interface_thickness
        stations = np.linspace(-0.1 * t, 1.1 * t, max(12, int(1.2 * t / (h / 4))))
        worst = math.inf
        for p0, n in zip(pts, nrms):
            lateral = np.array([-n[1], n[0]])
            best = 0
            for shift in (-h / 3.0, 0.0, h / 3.0):
                origin = p0 + shift * lateral
                hit: set[int] = set()
                for s in stations:
                    e = locator.find(origin + s * n)
                    if e >= 0 and mesh.elem_phase[e] == iface:
                        hit.add(e)
                best = max(best, len(hit))
            worst = min(worst, best)
        mins.append(int(worst) if math.isfinite(worst) else 0)
    return InterfaceResolutionReport(min_counts=mins, required=required)


# ---------------------------------------------------------------------------
# Cohesive element insertion
# ---------------------------------------------------------------------------

ALL_FACETS = "all_facets"
INTERFACE_BOUNDARY_ONLY = "interface_boundary_only"


def _bulk_facets(mesh: Mesh):
    """Map (sorted node pair) -> list of (element, ordered (a, b) as traversed)."""
    facets: dict[tuple[int, int], list[tuple[int, tuple[int, int]]]] = {}
    for e in mesh.bulk_ids:
        nn = mesh.element_nodes(e)
        k = len(nn)
        for i in range(k):
            a, b = int(nn[i]), int(nn[(i + 1) % k])
            facets.setdefault((min(a, b), max(a, b)), []).append((int(e), (a, b)))
    return facets


def _check_conforming(mesh: Mesh, facets) -> None:
    for key, incidences in facets.items():
        if len(incidences) > 2:
            raise MeshError(f"non-conforming mesh: facet {key} shared by {len(incidences)} elements")
    # hanging nodes: a boundary-looking facet with another node strictly inside it
    single = [key for key, inc in facets.items() if len(inc) == 1]
    if single:
        nodes = mesh.nodes
        for a, b in single:
            pa, pb = nodes[a], nodes[b]
            ab = pb - pa
            L2 = float(np.dot(ab, ab))
            t = ((nodes - pa) @ ab) / L2
            on_seg = (t > 1e-9) & (t < 1 - 1e-9)
            if not np.any(on_seg):
                continue
            proj = pa + t[:, None] * ab
            d = np.linalg.norm(nodes - proj, axis=1)
            inside = on_seg & (d < 1e-9)
            inside[a] = inside[b] = False
            if np.any(inside):
                raise MeshError(
                    f"non-conforming mesh: node {int(np.flatnonzero(inside)[0])} hangs on facet ({a}, {b})"
                )


def _signed_area(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * (np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def insert_cohesive_elements(mesh: Mesh, mode: str = ALL_FACETS) -> Mesh:
    """Split bulk facets and emit zero-thickness cohesive elements.

    ``all_facets`` splits every interior bulk-bulk facet (tri3 meshes);
    ``interface_boundary_only`` splits only facets whose two neighbors carry
    different phases.  Nodes are duplicated so each bulk element owns private
    copies along split facets; one cie4 per split facet keeps the connectivity
    watertight.  Cohesive phases: ``cie_matrix`` (both neighbors matrix),
    ``cie_inclusion`` (both inclusion), ``cie_interface`` otherwise.
    """
    if mode not in (ALL_FACETS, INTERFACE_BOUNDARY_ONLY):
        raise MeshError(f"unknown insertion mode {mode!r}")
    if len(mesh.cie_ids):
        raise MeshError("mesh already contains cohesive elements")
    if mode == ALL_FACETS and mesh.bulk_kind() != TRI3:
        raise MeshError("all_facets insertion requires a tri3 bulk mesh")

    # CCW orientation is assumed by the bottom/top convention below
    for e in mesh.bulk_ids:
        if _signed_area(mesh.nodes[mesh.element_nodes(e)]) <= 0:
            raise MeshError(f"element {int(e)} is not counter-clockwise ordered")

    facets = _bulk_facets(mesh)
    _check_conforming(mesh, facets)

    interior = {k: v for k, v in facets.items() if len(v) == 2}
    if mode == ALL_FACETS:
        split = set(interior)
    else:
        split = {
            key
            for key, ((e1, _), (e2, _)) in interior.items()
            if mesh.elem_phase[e1] != mesh.elem_phase[e2]
        }

    # group the elements around each node by connectivity through unsplit facets
    node_elems: dict[int, list[int]] = {}
    for e in mesh.bulk_ids:
        for v in mesh.element_nodes(e):
            node_elems.setdefault(int(v), []).append(int(e))

    unsplit_pairs: dict[int, list[tuple[int, int]]] = {}
    for key, incidences in interior.items():
        if key in split:
            continue
        (e1, _), (e2, _) = incidences
        for v in key:
            unsplit_pairs.setdefault(v, []).append((e1, e2))

    new_nodes: list[np.ndarray] = []
    owner: dict[tuple[int, int], int] = {}  # (element, original node) -> node id
    n_orig = mesh.n_nodes
    set_members: dict[str, list[int]] = {name: list(ids) for name, ids in mesh.node_sets.items()}

    for v in sorted(node_elems):
        elems = node_elems[v]
        parent = {e: e for e in elems}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for e1, e2 in unsplit_pairs.get(v, ()):
            r1, r2 = find(e1), find(e2)
            if r1 != r2:
                parent[max(r1, r2)] = min(r1, r2)
        groups: dict[int, list[int]] = {}
        for e in elems:
            groups.setdefault(find(e), []).append(e)
        for gi, root in enumerate(sorted(groups)):
            if gi == 0:
                nid = v
            else:
                nid = n_orig + len(new_nodes)
                new_nodes.append(mesh.nodes[v].copy())
                for name, members in set_members.items():
                    if v in mesh.node_sets[name]:
                        members.append(nid)
            for e in groups[root]:
                owner[(e, v)] = nid

    nodes = np.vstack([mesh.nodes] + [np.asarray(new_nodes)]) if new_nodes else mesh.nodes.copy()

    # rewrite bulk connectivity with owned copies
    elem_nodes = mesh.elem_nodes.copy()
    for e in mesh.bulk_ids:
        for slot, v in enumerate(mesh.element_nodes(e)):
            elem_nodes[e, slot] = owner[(int(e), int(v))]

    # one cie4 per split facet: bottom = element traversing (b -> a)
    cie_rows, cie_phase = [], []
    for key in sorted(split):
        (e1, d1), (e2, d2) = interior[key]
        a, b = d1
        if d2 != (b, a):
            raise MeshError(f"inconsistent facet orientation at {key}")
        top, bottom = e1, e2  # e1 traverses a->b: its interior lies along +90 CCW of (b-a)
        n0 = owner[(bottom, a)]
        n1 = owner[(bottom, b)]
        n2 = owner[(top, b)]
        n3 = owner[(top, a)]
        cie_rows.append((n0, n1, n2, n3))
        p1 = mesh.phase_name(mesh.elem_phase[bottom])
        p2 = mesh.phase_name(mesh.elem_phase[top])
        if p1 == p2 == "matrix":
            cie_phase.append(_PHASE_IDS["cie_matrix"])
        elif p1 == p2 == "inclusion":
            cie_phase.append(_PHASE_IDS["cie_inclusion"])
        else:
            cie_phase.append(_PHASE_IDS["cie_interface"])

    if cie_rows:
        elem_nodes = np.vstack([elem_nodes, np.array(cie_rows, dtype=np.int64)])
        elem_kind = np.concatenate(
            [mesh.elem_kind, np.full(len(cie_rows), _KIND_IDS[CIE4], dtype=np.uint8)]
        )
        elem_phase = np.concatenate([mesh.elem_phase, np.array(cie_phase, dtype=np.uint8)])
    else:
        elem_kind = mesh.elem_kind.copy()
        elem_phase = mesh.elem_phase.copy()

    node_sets = {name: np.array(sorted(members), dtype=np.int64) for name, members in set_members.items()}
    out = Mesh(nodes, elem_nodes, elem_kind, elem_phase, node_sets)

    # coincidence of the duplicated pairs is exact by construction; verify anyway
    for row in cie_rows:
        if np.linalg.norm(out.nodes[row[0]] - out.nodes[row[3]]) > COINCIDENCE_TOL:
            raise MeshError("cohesive pair not coincident after insertion")
        if np.linalg.norm(out.nodes[row[1]] - out.nodes[row[2]]) > COINCIDENCE_TOL:
            raise MeshError("cohesive pair not coincident after insertion")
    return out


def merge_cohesive_nodes(mesh: Mesh) -> Mesh:
    """Undo node duplication: merge coincident nodes and drop cohesive elements."""
    order = np.lexsort((mesh.nodes[:, 1], mesh.nodes[:, 0]))
    representative = np.arange(mesh.n_nodes)
    prev = order[0]
    for idx in order[1:]:
        if np.all(mesh.nodes[idx] == mesh.nodes[prev]):
            representative[idx] = representative[prev]
        else:
            prev = idx
    keep = np.flatnonzero(representative == np.arange(mesh.n_nodes))
    compact = -np.ones(mesh.n_nodes, dtype=np.int64)
    compact[keep] = np.arange(len(keep))
    remap = compact[representative]

    bulk = mesh.bulk_ids
    elem_nodes = mesh.elem_nodes[bulk].copy()
    mask = elem_nodes >= 0
    elem_nodes[mask] = remap[elem_nodes[mask]]
    node_sets = {
        name: np.unique(remap[ids]) for name, ids in mesh.node_sets.items()
    }
    return Mesh(
        mesh.nodes[keep],
        elem_nodes,
        mesh.elem_kind[bulk].copy(),
        mesh.elem_phase[bulk].copy(),
        node_sets,
    )


# ---------------------------------------------------------------------------
# Mesh text format (versioned, bit-exact round trip)
# ---------------------------------------------------------------------------

_MESH_HEADER = "# fracture2d mesh 1"


def write_mesh_text(mesh: Mesh) -> str:
    lines = [_MESH_HEADER, f"NODES {mesh.n_nodes}"]
    for i, (x, y) in enumerate(mesh.nodes):
        lines.append(f"{i} {float(x)!r} {float(y)!r}")
    lines.append(f"ELEMENTS {mesh.n_elements}")
    for e in range(mesh.n_elements):
        nn = mesh.element_nodes(e)
        kind = mesh.kind_name(mesh.elem_kind[e])
        phase = mesh.phase_name(mesh.elem_phase[e])
        lines.append(f"{e} {kind} {phase} " + " ".join(str(int(v)) for v in nn))
    lines.append(f"NODESETS {len(mesh.node_sets)}")
    for name in sorted(mesh.node_sets):
        ids = mesh.node_sets[name]
        lines.append(f"{name} {len(ids)} " + " ".join(str(int(v)) for v in ids))
    sets = mesh.element_sets()
    lines.append(f"ELEMSETS {len(sets)}")
    for name in sorted(sets):
        ids = sets[name]
        lines.append(f"{name} {len(ids)} " + " ".join(str(int(v)) for v in ids))
    return "\n".join(lines) + "\n"


def read_mesh_text(text: str) -> Mesh:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != _MESH_HEADER:
        raise MeshError("not a fracture2d mesh file (bad header)")
    pos = 1

    def expect(section):
        nonlocal pos
        tag, count = lines[pos].split()
        if tag != section:
            raise MeshError(f"expected {section} section, found {tag!r}")
        pos += 1
        return int(count)

    n = expect("NODES")
    nodes = np.zeros((n, 2))
    for _ in range(n):
        i, x, y = lines[pos].split()
        nodes[int(i)] = (float(x), float(y))
        pos += 1
    m = expect("ELEMENTS")
    elem_nodes = -np.ones((m, 4), dtype=np.int64)
    elem_kind = np.zeros(m, dtype=np.uint8)
    elem_phase = np.zeros(m, dtype=np.uint8)
    for _ in range(m):
        parts = lines[pos].split()
        e = int(parts[0])
        kind, phase = parts[1], parts[2]
        if kind not in _KIND_IDS:
            raise MeshError(f"unknown element kind {kind!r}")
        if phase not in _PHASE_IDS:
            raise MeshError(f"unknown phase {phase!r}")
        conn = [int(v) for v in parts[3:]]
        if len(conn) != _KIND_NNODES[kind]:
            raise MeshError(f"element {e}: {kind} needs {_KIND_NNODES[kind]} nodes, got {len(conn)}")
        elem_nodes[e, : len(conn)] = conn
        elem_kind[e] = _KIND_IDS[kind]
        elem_phase[e] = _PHASE_IDS[phase]
        pos += 1
    node_sets = {}
    for _ in range(expect("NODESETS")):
        parts = lines[pos].split()
        node_sets[parts[0]] = np.array([int(v) for v in parts[2:]], dtype=np.int64)
        if len(node_sets[parts[0]]) != int(parts[1]):
            raise MeshError(f"node set {parts[0]!r}: count mismatch")
        pos += 1
    for _ in range(expect("ELEMSETS")):
        pos += 1  # element sets are derived from phases; entries are informational
    return Mesh(nodes, elem_nodes, elem_kind, elem_phase, node_sets)


def write_mesh_file(mesh: Mesh, path) -> None:
    with open(path, "w") as fh:
        fh.write(write_mesh_text(mesh))


def read_mesh_file(path) -> Mesh:
    with open(path) as fh:
        return read_mesh_text(fh.read())
