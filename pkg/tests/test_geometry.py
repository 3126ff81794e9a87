import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact.errors import ConfigError
from artifact.geometry import (
    BoundaryFace,
    Box,
    DistState,
    SpatialDomain,
    VelocityGrid,
    build_domain,
    classify_face_velocity,
    reflect,
)

E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])


class TestReflect:
    def test_negates_normal_component(self):
        np.testing.assert_array_equal(reflect([1, 2, 3], E1), [-1, 2, 3])

    def test_origin_is_fixed(self):
        np.testing.assert_array_equal(reflect([0, 0, 0], E2), [0, 0, 0])

    @given(st.lists(st.floats(-50, 50), min_size=3, max_size=3), st.integers(0, 2), st.sampled_from([-1.0, 1.0]))
    def test_involution(self, v, axis, sign):
        n = np.zeros(3)
        n[axis] = sign
        np.testing.assert_array_equal(reflect(reflect(v, n), n), np.asarray(v, dtype=float))

    def test_rejects_oblique_normal(self):
        with pytest.raises(ValueError):
            reflect([1, 0, 0], [1, 1, 0])


class TestClassify:
    face = BoundaryFace(0, (0, 0, 0), 0, 1, (1.0, 0.5, 0.5), 1.0)

    @pytest.mark.parametrize("v, kind", [((-1, 0, 0), "incoming"), ((1, 0, 0), "outgoing"), ((0, 1, 0), "grazing")])
    def test_sign_of_normal_velocity(self, v, kind):
        assert classify_face_velocity(self.face, v) == kind


class TestVelocityGrid:
    def test_odd_count_rejected(self):
        with pytest.raises(ConfigError):
            VelocityGrid(23, 6.0)

    def test_nonpositive_vmax_rejected(self):
        with pytest.raises(ConfigError):
            VelocityGrid(8, 0.0)

    @pytest.mark.parametrize("n", [2, 4, 6, 8])
    def test_reflection_is_bijection_on_nodes(self, n):
        grid = VelocityGrid(n, 6.0)
        k = np.arange(n)
        mapped = grid.reflect_index(k)
        assert sorted(mapped) == list(k)
        np.testing.assert_array_equal(grid.points[mapped], -grid.points)
        np.testing.assert_array_equal(grid.reflect_index(mapped), k)

    def test_no_grazing_nodes(self):
        grid = VelocityGrid(16, 7.0)
        assert np.all(grid.points != 0)


class TestDomain:
    def test_unit_cube_counts(self):
        domain, _ = build_domain([Box((0, 0, 0), (1, 1, 1))], 1 / 8, 8, 6.0)
        assert domain.n_cells == 512
        assert len(domain.faces) == 6 * 64

    def test_shared_face_is_interior(self):
        boxes = [Box((0, 0, 0), (1, 1, 1)), Box((1, 0, 0), (2, 1, 1))]
        domain = SpatialDomain(boxes, 0.25)
        on_interface = [f for f in domain.faces if f.axis == 0 and abs(f.center[0] - 1.0) < 1e-12]
        assert on_interface == []
        assert domain.n_cells == 2 * 64

    def test_overlap_rejected(self):
        with pytest.raises(ConfigError, match="overlap"):
            SpatialDomain([Box((0, 0, 0), (1, 1, 1)), Box((0.5, 0, 0), (1.5, 1, 1))], 0.25)

    def test_off_lattice_rejected(self):
        with pytest.raises(ConfigError):
            SpatialDomain([Box((0, 0, 0), (1, 1, 1))], 0.3)

    def test_degenerate_box_rejected(self):
        with pytest.raises(ConfigError):
            Box((0, 0, 0), (1, 0, 1))

    def test_normals_and_tangents(self):
        domain = SpatialDomain([Box((0, 0, 0), (1, 1, 1)), Box((1, 0, 0), (2, 0.5, 1))], 0.25)
        for face in domain.faces:
            n = face.normal
            assert np.count_nonzero(n) == 1 and abs(n.sum()) == 1.0
            t1, t2 = face.tangents
            assert abs(t1 @ n) == 0 and abs(t2 @ n) == 0
            assert np.linalg.norm(np.cross(t1, t2)) == pytest.approx(1.0)

    @pytest.mark.parametrize("dims, hi", [(1, (2, 1, 1)), (2, (2, 0.5, 1)), (3, (2, 0.5, 0.5))])
    def test_closed_boundary_sums_to_zero(self, dims, hi):
        boxes = [Box((0, 0, 0), (1, 1, 1)), Box((1, 0, 0), hi)]
        domain = SpatialDomain(boxes, 0.25, active_dims=dims)
        total = sum(face.area * face.normal for face in domain.faces)
        np.testing.assert_allclose(total, 0.0, atol=1e-12)

    def test_every_wall_component_has_faces(self):
        domain = SpatialDomain([Box((0, 0, 0), (1, 1, 1))], 0.25)
        for axis in range(3):
            assert len(domain.faces_on(axis)) > 0

    def test_unresolved_axes_are_single_cells(self, line_domain):
        assert line_domain.shape == (8, 1, 1)
        assert line_domain.cell_volume == pytest.approx(0.125)

    def test_lattice_round_trip(self, rng):
        domain = SpatialDomain([Box((0, 0, 0), (1, 1, 1)), Box((1, 0, 0), (2, 0.5, 1))], 0.25)
        u = rng.standard_normal((2, domain.n_cells, 3))
        lat = domain.to_lattice(u, cell_axis=1)
        assert lat.shape == (2,) + domain.shape + (3,)
        np.testing.assert_array_equal(domain.from_lattice(lat, cell_axis=1), u)

    def test_mirror_cell_layers(self, line_domain):
        # wall at x = 1: ghost layer k mirrors the cell k - 1 steps inward
        assert line_domain.mirror_cell(7, 0, 1, 1) == 7
        assert line_domain.mirror_cell(7, 0, 1, 2) == 6
        assert line_domain.mirror_cell(0, 0, -1, 3) == 2


def test_zero_state_shape(line_domain):
    grid = VelocityGrid(4, 6.0)
    s = DistState.zeros(line_domain, grid)
    assert s.f.shape == (2, 8, 4, 4, 4)
    assert not np.any(s.f)
