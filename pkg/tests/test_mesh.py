"""Tests for the canonical half-annulus mesh generator and the text format."""

import io
import math

import numpy as np
import pytest

from signflip.errors import MeshFormatError, MeshInvariantError
from signflip.mesh import (
    MINUS,
    PLUS,
    CanonicalMeshParams,
    TriMesh,
    build_canonical,
    build_unit_square,
    export,
    ingest,
    reflect_check,
    signed_areas,
    validate,
)

SQUARE_2TRI = """4 2
0 0
1 0
1 1
0 1
0 1 2 1
0 2 3 1
4
0 1 2 3
"""


def small_params(delta=0.3, nr=4, nm=2):
    return CanonicalMeshParams(delta=delta, n_radial=nr, n_angular_minus=nm)


class TestBuildCanonical:
    def test_counts_formula(self):
        mesh = build_canonical(CanonicalMeshParams(0.5, 2, 1))
        na = 4  # total angular cells
        assert mesh.n_nodes == (2 + 1) * (na + 1)
        assert mesh.n_triangles == 2 * 2 * na

    def test_interface_on_grid_line(self):
        mesh = build_canonical(small_params())
        iface_nodes = np.unique(mesh.interface_edges)
        ang = np.arctan2(mesh.nodes[iface_nodes, 1], mesh.nodes[iface_nodes, 0])
        assert np.max(np.abs(ang - math.pi / 4.0)) <= 1e-14

    def test_area_converges_to_sector_area(self):
        delta = 0.3
        exact = math.pi / 2.0 * (1.0 - delta * delta)
        errs = []
        for nm in (2, 4, 8, 16):
            mesh = build_canonical(CanonicalMeshParams(delta, 2 * nm, nm))
            errs.append(abs(signed_areas(mesh.nodes, mesh.triangles).sum() - exact))
        # polygonal boundary defect is O(1/n^2): one refinement divides it by ~4
        for a, b in zip(errs, errs[1:]):
            assert b <= 0.3 * a
        assert errs[-1] <= 1e-3 * exact

    def test_orientation_positive(self):
        mesh = build_canonical(small_params())
        assert np.all(signed_areas(mesh.nodes, mesh.triangles) > 0.0)

    def test_region_tags_by_angle(self):
        mesh = build_canonical(small_params())
        cen = mesh.nodes[mesh.triangles].mean(axis=1)
        ang = np.arctan2(cen[:, 1], cen[:, 0])
        assert np.all((ang < math.pi / 4.0) == (mesh.regions == MINUS))

    def test_validate_passes(self):
        validate(build_canonical(small_params()), canonical=True)

    def test_min_angle_bounded_on_ladder(self):
        for nm in (2, 4, 8, 16):
            mesh = build_canonical(CanonicalMeshParams(0.3, 2 * nm, nm))
            p = mesh.nodes[mesh.triangles]
            min_angle = math.inf
            for a, b, c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
                u = p[:, b] - p[:, a]
                v = p[:, c] - p[:, a]
                cosang = np.sum(u * v, axis=1) / (
                    np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
                min_angle = min(min_angle, float(np.degrees(np.arccos(np.clip(cosang, -1, 1))).min()))
            assert min_angle > 10.0

    def test_refinement_nesting(self):
        coarse = build_canonical(CanonicalMeshParams(0.37, 3, 3))
        fine = build_canonical(CanonicalMeshParams(0.37, 6, 6))
        fine_set = {(round(x, 12), round(y, 12)) for x, y in fine.nodes}
        for x, y in coarse.nodes:
            assert (round(x, 12), round(y, 12)) in fine_set

    def test_delta_domain_errors(self):
        for bad in (0.0, 1.0, -0.5, 1.5):
            with pytest.raises(ValueError):
                CanonicalMeshParams(bad, 4, 2)
        with pytest.raises(ValueError):
            CanonicalMeshParams(0.5, 0, 2)


class TestReflectCheck:
    def test_canonical_mesh_is_symmetric(self):
        assert reflect_check(build_canonical(small_params()))

    def test_perturbed_interface_node_breaks_symmetry(self):
        mesh = build_canonical(small_params())
        node = int(mesh.interface_edges[1, 0])
        mesh.nodes[node] = mesh.nodes[node] + np.array([1e-3, 0.0])
        assert not reflect_check(mesh)

    def test_mesh_without_interface_passes_vacuously(self):
        assert reflect_check(build_unit_square(3))


class TestUnitSquare:
    def test_structure(self):
        mesh = build_unit_square(4)
        assert mesh.n_nodes == 25
        assert mesh.n_triangles == 32
        assert mesh.boundary_nodes.size == 16
        assert np.all(mesh.regions == PLUS)
        validate(mesh)


class TestExportIngest:
    def test_round_trip_identity(self):
        mesh = build_canonical(small_params())
        buf = io.StringIO()
        export(mesh, buf)
        buf.seek(0)
        back = ingest(buf, canonical=True)
        assert np.array_equal(mesh.nodes, back.nodes)
        assert np.array_equal(mesh.triangles, back.triangles)
        assert np.array_equal(mesh.regions, back.regions)
        assert np.array_equal(mesh.boundary_nodes, back.boundary_nodes)
        assert np.array_equal(mesh.interface_edges, back.interface_edges)

    def test_round_trip_via_file(self, tmp_path):
        mesh = build_canonical(small_params(delta=0.41, nr=3, nm=2))
        path = tmp_path / "mesh.txt"
        export(mesh, str(path))
        back = ingest(str(path), canonical=True)
        assert np.array_equal(mesh.nodes, back.nodes)

    def test_two_triangle_square_fixture(self):
        mesh = ingest(SQUARE_2TRI)
        assert mesh.n_nodes == 4
        assert mesh.n_triangles == 2
        assert mesh.boundary_nodes.size == 4
        assert mesh.interface_edges.size == 0

    def test_nonexistent_node_index_names_line(self):
        bad = SQUARE_2TRI.replace("0 2 3 1", "0 2 9 1")
        with pytest.raises(MeshFormatError) as err:
            ingest(bad)
        assert err.value.lineno == 7  # the second triangle line

    def test_bad_region_tag(self):
        bad = SQUARE_2TRI.replace("0 2 3 1", "0 2 3 4")
        with pytest.raises(MeshFormatError):
            ingest(bad)

    def test_truncated_file(self):
        with pytest.raises(MeshFormatError):
            ingest("\n".join(SQUARE_2TRI.splitlines()[:4]) + "\n")

    def test_bad_header(self):
        with pytest.raises(MeshFormatError) as err:
            ingest("x y\n")
        assert err.value.lineno == 1

    def test_negative_area_triangle_is_reoriented(self):
        flipped = SQUARE_2TRI.replace("0 1 2 1", "0 2 1 1")
        mesh = ingest(flipped)
        assert np.all(signed_areas(mesh.nodes, mesh.triangles) > 0.0)

    def test_degenerate_triangle_rejected(self):
        text = """4 2
0 0
1 0
2 0
0 1
0 1 2 1
0 1 3 1
4
0 1 2 3
"""
        with pytest.raises(MeshInvariantError):
            ingest(text)

    def test_straddling_triangle_rejected_for_canonical(self):
        # one triangle spans both sides of theta = pi/4
        text = """4 2
1 0
1 1
0 1
0.5 0.1
0 1 3 0
1 2 3 1
4
0 1 2
"""
        # fix boundary to match actual once-edges: all 4 nodes are on the hull
        text = text.replace("4\n0 1 2\n", "4\n0 1 2 3\n")
        with pytest.raises(MeshInvariantError, match="straddle"):
            ingest(text, canonical=True)

    def test_boundary_mismatch_rejected(self):
        bad = SQUARE_2TRI.replace("4\n0 1 2 3", "3\n0 1 2")
        with pytest.raises(MeshInvariantError, match="Dirichlet"):
            ingest(bad)

    def test_region_tag_centroid_mismatch_warns(self):
        mesh = build_canonical(small_params())
        mesh.regions = mesh.regions.copy()
        mesh.regions[0] = 1 - mesh.regions[0]
        with pytest.warns(UserWarning):
            validate(mesh, canonical=True)


class TestConformity:
    def test_edge_multiplicities(self):
        mesh = build_canonical(small_params())
        counts = {}
        for tri in mesh.triangles:
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                key = (min(a, b), max(a, b))
                counts[key] = counts.get(key, 0) + 1
        assert set(counts.values()) <= {1, 2}
        once = {n for (a, b), c in counts.items() if c == 1 for n in (a, b)}
        assert once == set(int(i) for i in mesh.boundary_nodes)
