"""Mesh generation, phase tagging, cohesive insertion, and the text format."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracture2d.mesh import (
    ALL_FACETS,
    INTERFACE_BOUNDARY_ONLY,
    QUAD4,
    TRI3,
    GeometrySpec,
    Inclusion,
    Mesh,
    MeshError,
    generate_structured_mesh,
    insert_cohesive_elements,
    merge_cohesive_nodes,
    read_mesh_text,
    tag_phases,
    validate_interface_resolution,
    write_mesh_text,
)


def benchmark_spec(edge=0.3, t=0.6):
    inc = Inclusion("circle", (10.0, 10.0), (4.0,), t)
    return GeometrySpec(width=20.0, height=20.0, edge_length=edge, inclusions=(inc,))


class TestStructuredGeneration:
    def test_unit_square_counts(self):
        spec = GeometrySpec(width=1.0, height=1.0, edge_length=0.25)
        mesh = generate_structured_mesh(spec, QUAD4)
        assert mesh.n_elements == 16
        assert mesh.n_nodes == 25
        small = generate_structured_mesh(GeometrySpec(2.0, 2.0, 0.5), QUAD4)
        # 4 x 4 grid of 0.5 mm cells
        assert small.n_elements == 16
        # the canonical tiny case: 1 mm x 1 mm at 0.5 mm edge
        tiny = generate_structured_mesh(GeometrySpec(1.0, 1.0, 0.25), QUAD4)
        assert tiny.n_elements == 16

    def test_two_by_two(self):
        mesh = generate_structured_mesh(GeometrySpec(1.0, 1.0, 0.5), QUAD4)
        assert mesh.n_elements == 4
        assert mesh.n_nodes == 9

    def test_large_grid_count(self):
        mesh = generate_structured_mesh(GeometrySpec(50.0, 50.0, 0.15), QUAD4)
        assert mesh.n_elements == 334**2 == 111_556

    def test_coarse_edge_rejected(self):
        with pytest.raises(MeshError):
            generate_structured_mesh(GeometrySpec(50.0, 50.0, 30.0), QUAD4)

    def test_edge_node_sets(self):
        mesh = generate_structured_mesh(GeometrySpec(2.0, 1.0, 0.25), QUAD4)
        assert np.allclose(mesh.nodes[mesh.node_sets["left_edge"], 0], 0.0)
        assert np.allclose(mesh.nodes[mesh.node_sets["right_edge"], 0], 2.0)
        corner = mesh.node_sets["bottom_left_corner"]
        assert len(corner) == 1 and np.allclose(mesh.nodes[corner[0]], [0.0, 0.0])

    def test_tri3_crossed_diagonals(self):
        mesh = generate_structured_mesh(GeometrySpec(1.0, 1.0, 0.25), TRI3)
        assert mesh.n_elements == 32  # two per cell
        # all elements counter-clockwise with positive area
        for e in range(mesh.n_elements):
            pts = mesh.nodes[mesh.element_nodes(e)]
            u, v = pts[1] - pts[0], pts[2] - pts[0]
            area = 0.5 * (u[0] * v[1] - u[1] * v[0])
            assert area > 0
        # adjacent cells use opposite diagonals: diagonal directions alternate
        def diagonal_dir(cell):
            e0 = mesh.element_nodes(2 * cell)
            pts = mesh.nodes[e0]
            v = pts[2] - pts[0]
            return np.sign(v[0] * v[1])

        assert diagonal_dir(0) != diagonal_dir(1)


class TestPhaseTagging:
    def test_examples(self):
        spec = benchmark_spec(edge=0.5)
        mesh = tag_phases(generate_structured_mesh(spec, QUAD4), spec)
        cents = mesh.centroids()
        phases = mesh.elem_phase

        center = np.argmin(np.linalg.norm(cents - [10.0, 10.0], axis=1))
        assert mesh.phase_name(phases[center]) == "inclusion"

        band_mid = np.argmin(np.linalg.norm(cents - [10.0 + 4.3, 10.0], axis=1))
        assert mesh.phase_name(phases[band_mid]) == "interface"

        corner = np.argmin(np.linalg.norm(cents - [0.25, 0.25], axis=1))
        assert mesh.phase_name(phases[corner]) == "matrix"

    def test_total_and_deterministic(self):
        spec = benchmark_spec(edge=0.4)
        mesh1 = tag_phases(generate_structured_mesh(spec, QUAD4), spec)
        mesh2 = tag_phases(generate_structured_mesh(spec, QUAD4), spec)
        assert np.array_equal(mesh1.elem_phase, mesh2.elem_phase)
        names = {mesh1.phase_name(p) for p in np.unique(mesh1.elem_phase)}
        assert names == {"matrix", "inclusion", "interface"}


class TestInterfaceResolution:
    def test_reference_spacing_passes(self):
        spec = benchmark_spec(edge=0.15)
        mesh = tag_phases(generate_structured_mesh(spec, QUAD4), spec)
        report = validate_interface_resolution(mesh, spec)
        assert report.passed
        assert min(report.min_counts) >= 4

    def test_coarse_spacing_fails(self):
        spec = benchmark_spec(edge=0.3)
        mesh = tag_phases(generate_structured_mesh(spec, QUAD4), spec)
        report = validate_interface_resolution(mesh, spec)
        assert not report.passed
        assert min(report.min_counts) <= 2

    def test_thin_band_fine_mesh_passes(self):
        spec = benchmark_spec(edge=0.1, t=0.5)
        mesh = tag_phases(generate_structured_mesh(spec, QUAD4), spec)
        report = validate_interface_resolution(mesh, spec)
        assert report.passed


def two_triangle_mesh():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    elem_nodes = np.array([[0, 1, 2, -1], [0, 2, 3, -1]], dtype=np.int64)
    kinds = np.array([Mesh.kind_id(TRI3)] * 2, dtype=np.uint8)
    phases = np.array([Mesh.phase_id("matrix")] * 2, dtype=np.uint8)
    return Mesh(nodes, elem_nodes, kinds, phases, {})


class TestCohesiveInsertion:
    def test_two_triangles(self):
        mesh = insert_cohesive_elements(two_triangle_mesh(), ALL_FACETS)
        assert len(mesh.cie_ids) == 1
        assert mesh.n_nodes == 6  # two duplicated nodes
        cie = mesh.element_nodes(mesh.cie_ids[0])
        assert np.allclose(mesh.nodes[cie[0]], mesh.nodes[cie[3]], atol=1e-12)
        assert np.allclose(mesh.nodes[cie[1]], mesh.nodes[cie[2]], atol=1e-12)

    def test_single_element_unchanged(self):
        nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        m = Mesh(
            nodes,
            np.array([[0, 1, 2, -1]], dtype=np.int64),
            np.array([Mesh.kind_id(TRI3)], dtype=np.uint8),
            np.array([Mesh.phase_id("matrix")], dtype=np.uint8),
            {},
        )
        out = insert_cohesive_elements(m, ALL_FACETS)
        assert out.n_nodes == 3
        assert len(out.cie_ids) == 0

    def test_benchmark_ratio(self):
        spec = benchmark_spec(edge=0.3)
        mesh = tag_phases(generate_structured_mesh(spec, TRI3), spec)
        out = insert_cohesive_elements(mesh, ALL_FACETS)
        n_solid = len(out.bulk_ids)
        n_cie = len(out.cie_ids)
        assert n_solid == mesh.n_elements
        assert abs(n_cie / n_solid - 1.5) < 0.1

    def test_pair_coincidence_and_length_conservation(self):
        spec = benchmark_spec(edge=0.5)
        mesh = tag_phases(generate_structured_mesh(spec, TRI3), spec)
        out = insert_cohesive_elements(mesh, ALL_FACETS)
        total_cie_length = 0.0
        for e in out.cie_ids:
            nn = out.element_nodes(e)
            assert np.linalg.norm(out.nodes[nn[0]] - out.nodes[nn[3]]) <= 1e-12
            assert np.linalg.norm(out.nodes[nn[1]] - out.nodes[nn[2]]) <= 1e-12
            mid_a = 0.5 * (out.nodes[nn[0]] + out.nodes[nn[3]])
            mid_b = 0.5 * (out.nodes[nn[1]] + out.nodes[nn[2]])
            total_cie_length += np.linalg.norm(mid_b - mid_a)
        # sum of interior facet lengths of the original mesh
        facet_length = 0.0
        seen = {}
        for e in mesh.bulk_ids:
            nn = mesh.element_nodes(e)
            for i in range(len(nn)):
                a, b = int(nn[i]), int(nn[(i + 1) % len(nn)])
                key = (min(a, b), max(a, b))
                seen[key] = seen.get(key, 0) + 1
        for (a, b), count in seen.items():
            if count == 2:
                facet_length += np.linalg.norm(mesh.nodes[a] - mesh.nodes[b])
        assert total_cie_length == pytest.approx(facet_length, rel=1e-12)

    def test_interface_boundary_mode_phases(self):
        spec = benchmark_spec(edge=0.4)
        mesh = tag_phases(generate_structured_mesh(spec, QUAD4), spec)
        out = insert_cohesive_elements(mesh, INTERFACE_BOUNDARY_ONLY)
        assert len(out.cie_ids) > 0
        phases = {out.phase_name(out.elem_phase[e]) for e in out.cie_ids}
        assert phases == {"cie_interface"}

    def test_all_facets_phase_classes(self):
        spec = benchmark_spec(edge=0.4)
        mesh = tag_phases(generate_structured_mesh(spec, TRI3), spec)
        out = insert_cohesive_elements(mesh, ALL_FACETS)
        phases = {out.phase_name(out.elem_phase[e]) for e in out.cie_ids}
        assert phases == {"cie_matrix", "cie_inclusion", "cie_interface"}

    def test_all_facets_requires_tri3(self):
        spec = benchmark_spec(edge=0.5)
        mesh = tag_phases(generate_structured_mesh(spec, QUAD4), spec)
        with pytest.raises(MeshError):
            insert_cohesive_elements(mesh, ALL_FACETS)

    def test_hanging_node_rejected(self):
        # triangle (0,1,2) next to two smaller ones sharing half-edges: node 4
        # hangs on the facet (1, 2)
        nodes = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [2.0, 0.0], [1.0, 0.5]])
        elem_nodes = np.array([[0, 1, 2, -1], [1, 3, 4, -1]], dtype=np.int64)
        m = Mesh(
            nodes,
            elem_nodes,
            np.array([Mesh.kind_id(TRI3)] * 2, dtype=np.uint8),
            np.array([Mesh.phase_id("matrix")] * 2, dtype=np.uint8),
            {},
        )
        with pytest.raises(MeshError, match="non-conforming"):
            insert_cohesive_elements(m, ALL_FACETS)

    def test_overshared_facet_rejected(self):
        nodes = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [2.0, 0.5]])
        elem_nodes = np.array(
            [[0, 1, 2, -1], [0, 2, 3, -1], [0, 4, 2, -1]], dtype=np.int64
        )
        m = Mesh(
            nodes,
            elem_nodes,
            np.array([Mesh.kind_id(TRI3)] * 3, dtype=np.uint8),
            np.array([Mesh.phase_id("matrix")] * 3, dtype=np.uint8),
            {},
        )
        with pytest.raises(MeshError, match="non-conforming"):
            insert_cohesive_elements(m, ALL_FACETS)

    def test_node_sets_follow_duplicates(self):
        spec = benchmark_spec(edge=0.5)
        mesh = tag_phases(generate_structured_mesh(spec, TRI3), spec)
        out = insert_cohesive_elements(mesh, ALL_FACETS)
        for name in ("left_edge", "right_edge"):
            xs = out.nodes[out.node_sets[name], 0]
            assert np.allclose(xs, xs[0])
            assert len(out.node_sets[name]) > len(mesh.node_sets[name])

    @settings(max_examples=12, deadline=None)
    @given(nx=st.integers(2, 5), ny=st.integers(2, 5))
    def test_merge_round_trip(self, nx, ny):
        spec = GeometrySpec(width=float(nx), height=float(ny), edge_length=0.25)
        mesh = tag_phases(generate_structured_mesh(spec, TRI3), spec)
        out = insert_cohesive_elements(mesh, ALL_FACETS)
        merged = merge_cohesive_nodes(out)
        assert merged.n_nodes == mesh.n_nodes
        assert merged.n_elements == mesh.n_elements

        def signature(m):
            sig = set()
            for e in range(m.n_elements):
                pts = m.nodes[m.element_nodes(e)]
                key = tuple(sorted(map(tuple, np.round(pts, 12))))
                sig.add((m.kind_name(m.elem_kind[e]), m.phase_name(m.elem_phase[e]), key))
            return sig

        assert signature(merged) == signature(mesh)


class TestMeshFileFormat:
    def test_round_trip_bit_exact(self):
        spec = benchmark_spec(edge=0.5)
        mesh = tag_phases(generate_structured_mesh(spec, TRI3), spec)
        mesh = insert_cohesive_elements(mesh, ALL_FACETS)
        text = write_mesh_text(mesh)
        back = read_mesh_text(text)
        assert np.array_equal(back.nodes, mesh.nodes)
        assert np.array_equal(back.elem_nodes, mesh.elem_nodes)
        assert np.array_equal(back.elem_kind, mesh.elem_kind)
        assert np.array_equal(back.elem_phase, mesh.elem_phase)
        assert set(back.node_sets) == set(mesh.node_sets)
        for name in mesh.node_sets:
            assert np.array_equal(np.sort(back.node_sets[name]), np.sort(mesh.node_sets[name]))
        assert write_mesh_text(back) == text

    def test_bad_header(self):
        with pytest.raises(MeshError):
            read_mesh_text("NODES 0\n")
