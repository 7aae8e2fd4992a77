import math

import numpy as np
import pytest
from scipy.integrate import quad

from cuspsteklov.errors import MeshError
from cuspsteklov.geometry import ARC, WALL_LEFT, WALL_RIGHT, CuspDomain, CuspProfile
from cuspsteklov.meshing import (SizeField, TriMesh, disk_mesh, generate,
                                 mesh_quality, read_mesh, refine_uniform,
                                 write_mesh)


def union_area(alpha):
    # independent oracle: integrate the width of slab-union-disk over height
    def width(y):
        c2 = 2.0 - (y - 2.0) ** 2
        c = math.sqrt(c2) if c2 > 0 else 0.0
        g = y**alpha if 0 < y <= 1 else 0.0
        return 2.0 * max(g, c)

    return quad(width, 0.0, 2.0 + math.sqrt(2.0), limit=200)[0]


def simple_mesh():
    v = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    t = np.array([[0, 1, 2]])
    be = np.array([[0, 1], [1, 2], [2, 0]])
    return TriMesh(v, t, be, ["line"] * 3, np.zeros((3, 2)))


class TestSizeField:
    def test_defaults_valid(self):
        s = SizeField()
        assert 0 < s.tip_grading < 1

    @pytest.mark.parametrize("kw", [dict(h_max=0.0), dict(h_max=-1.0),
                                    dict(tip_grading=0.0), dict(tip_grading=1.0),
                                    dict(min_angle_deg=15.0),
                                    dict(min_angle_deg=35.0)])
    def test_rejects_bad_parameters(self, kw):
        with pytest.raises(MeshError):
            SizeField(**kw)


class TestValidate:
    def test_simple_mesh_passes(self):
        simple_mesh().validate()

    def test_clockwise_triangle_rejected(self):
        m = simple_mesh()
        m.triangles = m.triangles[:, [0, 2, 1]]
        with pytest.raises(MeshError, match="clockwise"):
            m.validate()

    def test_orphan_vertex_rejected(self):
        m = simple_mesh()
        m.vertices = np.vstack([m.vertices, [5.0, 5.0]])
        with pytest.raises(MeshError, match="no triangle"):
            m.validate()

    def test_boundary_mismatch_rejected(self):
        m = simple_mesh()
        m.boundary_edges = m.boundary_edges[:2]
        m.boundary_tags = m.boundary_tags[:2]
        m.boundary_params = m.boundary_params[:2]
        with pytest.raises(MeshError, match="boundary"):
            m.validate()

    def test_two_components_rejected(self):
        v = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0],
                      [10.0, 10.0], [11.0, 10.0], [10.0, 11.0]])
        t = np.array([[0, 1, 2], [3, 4, 5]])
        be = np.array([[0, 1], [1, 2], [2, 0], [3, 4], [4, 5], [5, 3]])
        m = TriMesh(v, t, be, ["line"] * 6, np.zeros((6, 2)))
        with pytest.raises(MeshError, match="topological disk"):
            m.validate()

    def test_index_out_of_range_rejected(self):
        m = simple_mesh()
        m.triangles = np.array([[0, 1, 7]])
        with pytest.raises(MeshError, match="out of range"):
            m.validate()


class TestDiskMesh:
    def test_quality_and_area(self):
        m = disk_mesh(radius=1.0, h=0.2)
        q = mesh_quality(m)
        assert q["min_angle_deg"] >= 20.0
        assert q["max_edge"] <= 0.2 * 1.5 + 1e-12
        assert abs(q["total_area"] - math.pi) / math.pi < 0.02

    def test_refinement_converges_area(self):
        from cuspsteklov.geometry import DiskDomain
        dom = DiskDomain(1.0)
        m = disk_mesh(radius=1.0, h=0.3)
        err = [abs(mesh_quality(m)["total_area"] - math.pi)]
        for _ in range(2):
            m = refine_uniform(m, dom)
            err.append(abs(mesh_quality(m)["total_area"] - math.pi))
        # boundary snapping makes the chord-sliver deficit fall ~4x per level
        assert err[1] < err[0] / 3.0
        assert err[2] < err[1] / 3.0

    def test_boundary_vertices_on_circle(self):
        m = disk_mesh(radius=2.0, h=0.5)
        bidx = np.unique(m.boundary_edges)
        r = np.linalg.norm(m.vertices[bidx], axis=1)
        assert np.allclose(r, 2.0, atol=1e-12)


@pytest.fixture(params=[1.5, 2.0, 3.0], scope="module")
def cusp_mesh(request):
    alpha = request.param
    dom = CuspDomain(CuspProfile.power(alpha))
    return alpha, dom, generate(dom, SizeField(h_max=0.25))


class TestCuspMesh:
    def test_area_close_to_oracle(self, cusp_mesh):
        alpha, dom, m = cusp_mesh
        assert abs(mesh_quality(m)["total_area"] - union_area(alpha)) < 0.01 * union_area(alpha)

    def test_tip_is_a_vertex(self, cusp_mesh):
        alpha, dom, m = cusp_mesh
        hits = np.nonzero((m.vertices[:, 0] == 0.0) & (m.vertices[:, 1] == 0.0))[0]
        assert len(hits) == 1
        # the tip carries one wall edge per side, both reaching parameter 0
        tip_edges = [k for k, (a, b) in enumerate(m.boundary_edges)
                     if hits[0] in (a, b)]
        assert sorted(m.boundary_tags[k] for k in tip_edges) == [WALL_LEFT, WALL_RIGHT]
        assert all(0.0 in m.boundary_params[k] for k in tip_edges)

    def test_ladder_reaches_cutoff(self, cusp_mesh):
        alpha, dom, m = cusp_mesh
        tc = dom.tip_cutoff
        expect = 2.0 * tc**alpha
        assert mesh_quality(m)["min_edge"] == pytest.approx(expect, rel=1e-6)

    def test_boundary_vertices_on_true_curves(self, cusp_mesh):
        alpha, dom, m = cusp_mesh
        for (a, b), tag in zip(m.boundary_edges, m.boundary_tags):
            for v in (a, b):
                x, y = m.vertices[v]
                if tag in (WALL_LEFT, WALL_RIGHT):
                    assert abs(abs(x) - dom.gamma.value(y)) < 1e-12
                else:
                    assert tag == ARC
                    assert abs(np.hypot(x, y - 2.0) - math.sqrt(2.0)) < 1e-12

    def test_deterministic(self, cusp_mesh):
        alpha, dom, m = cusp_mesh
        m2 = generate(CuspDomain(CuspProfile.power(alpha)), SizeField(h_max=0.25))
        assert np.array_equal(m.vertices, m2.vertices)
        assert np.array_equal(m.triangles, m2.triangles)
        assert np.array_equal(m.boundary_edges, m2.boundary_edges)
        assert m.boundary_tags == m2.boundary_tags

    def test_uniform_refinement(self, cusp_mesh):
        alpha, dom, m = cusp_mesh
        m2 = refine_uniform(m, dom)
        assert m2.n_triangles == 4 * m.n_triangles
        area = union_area(alpha)
        e1 = abs(mesh_quality(m)["total_area"] - area)
        e2 = abs(mesh_quality(m2)["total_area"] - area)
        assert e2 < e1 / 3.0
        # tip ladder deepened one level: smallest positive wall param halved
        def min_param(mm):
            ps = [p for bp, t in zip(mm.boundary_params, mm.boundary_tags)
                  if t in (WALL_LEFT, WALL_RIGHT) for p in bp if p > 0]
            return min(ps)
        assert min_param(m2) == pytest.approx(0.5 * min_param(m), rel=1e-12)


class TestMeshIO:
    def test_round_trip_identical(self, tmp_path):
        m = disk_mesh(radius=1.0, h=0.4)
        p1, p2 = tmp_path / "a.mesh", tmp_path / "b.mesh"
        write_mesh(p1, m)
        m2 = read_mesh(p1)
        write_mesh(p2, m2)
        assert p1.read_bytes() == p2.read_bytes()
        assert np.array_equal(m.vertices, m2.vertices)

    def test_clockwise_triangles_reoriented_with_warning(self, tmp_path):
        p = tmp_path / "cw.mesh"
        p.write_text("trimesh 1\nvertices 3\n0 0\n1 0\n0 1\n"
                     "triangles 1\n0 2 1\n"
                     "boundary_edges 3\n0 1 line 0 1\n1 2 line 0 1\n2 0 line 0 1\n")
        with pytest.warns(UserWarning, match="reoriented 1"):
            m = read_mesh(p)
        assert m.triangle_areas()[0] > 0

    @pytest.mark.parametrize("body", [
        "trimesh 2\nvertices 0\ntriangles 0\nboundary_edges 0\n",
        "trimesh 1\nvertices 1\n0 0\ntriangles 0\nboundary_edges 0\n",
        "trimesh 1\nvertices 3\n0 0\n1 0\n0 1\ntriangles 1\n0 1 9\nboundary_edges 0\n",
        "trimesh 1\nvertices 3\n0 0\n1 0\nnope x\ntriangles 1\n0 1 2\nboundary_edges 0\n",
        "trimesh 1\nvertices 3\n0 0\n1 0\n0 1\ntriangles 1\n0 1 2\n",
    ])
    def test_bad_files_raise(self, tmp_path, body):
        p = tmp_path / "bad.mesh"
        p.write_text(body)
        with pytest.raises(MeshError):
            read_mesh(p)


def test_quality_of_equilateral():
    s = math.sqrt(3.0) / 2.0
    v = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, s]])
    m = TriMesh(v, np.array([[0, 1, 2]]),
                np.array([[0, 1], [1, 2], [2, 0]]), ["line"] * 3,
                np.zeros((3, 2)))
    q = mesh_quality(m)
    assert q["min_angle_deg"] == pytest.approx(60.0)
    assert q["max_aspect"] == pytest.approx(math.sqrt(3.0))
    assert q["total_area"] == pytest.approx(s / 2.0)
