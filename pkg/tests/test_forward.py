import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from dsrc.errors import ConfigError, GeometryError
from dsrc.forward import (LeadField, SensorArray, SourceSpace, build_sensor_array,
                          build_source_space, dipole_field, icosphere, lead_field,
                          load_sensor_array, load_source_space, save_geometry)

MU0_4PI = 1e-7


def sarvas_oracle(r, q, r0):
    """Full field vector of a dipole in a sphere, written out term by term."""
    a_vec = r - r0
    a = np.linalg.norm(a_vec)
    rn = np.linalg.norm(r)
    F = a * (rn * a + rn * rn - np.dot(r0, r))
    gradF = (a * a / rn + np.dot(a_vec, r) / a + 2 * a + 2 * rn) * r \
        - (a + 2 * rn + np.dot(a_vec, r) / a) * r0
    qxr0 = np.cross(q, r0)
    return MU0_4PI / F ** 2 * (F * qxr0 - np.dot(qxr0, r) * gradF)


def radial_infinite_medium(r, q, r0):
    """Biot-Savart radial component in an unbounded medium; equals the sphere result."""
    d = r - r0
    return MU0_4PI * np.dot(np.cross(q, d), r / np.linalg.norm(r)) / np.linalg.norm(d) ** 3


class TestIcosphere:
    @pytest.mark.parametrize("level", range(0, 5))
    def test_vertex_count(self, level):
        verts, faces = icosphere(level)
        assert verts.shape[0] == 10 * 4 ** level + 2
        assert faces.shape[0] == 20 * 4 ** level

    def test_level0_five_neighbours(self):
        space = build_source_space(0)
        assert space.n_sources == 12
        assert all(len(n) == 5 for n in space.neighbors)

    def test_level2_count(self):
        assert build_source_space(2).n_sources == 162

    def test_hemisphere_level3(self):
        verts, _ = icosphere(3)
        expected = int(np.sum(verts[:, 2] >= -1e-12))  # direct count on the raw mesh
        space = build_source_space(3, crop="hemisphere")
        assert space.n_sources == expected
        assert 322 <= space.n_sources <= 342
        assert np.all(space.vertices[:, 2] >= -1e-12)

    @pytest.mark.parametrize("crop", ["none", "hemisphere"])
    @pytest.mark.parametrize("level", [1, 3])
    def test_adjacency_symmetric(self, level, crop):
        space = build_source_space(level, crop=crop)
        adj = space.adjacency()
        np.testing.assert_array_equal(adj, adj.T)
        assert np.all(np.diag(adj) == 0)

    def test_radius_and_unit_normals(self):
        space = build_source_space(3, radius=0.07, fold_angle=40.0)
        np.testing.assert_allclose(np.linalg.norm(space.vertices, axis=1), 0.07, rtol=1e-14)
        assert np.max(np.abs(np.linalg.norm(space.normals, axis=1) - 1.0)) <= 1e-12

    def test_radial_normals_without_fold(self):
        space = build_source_space(2)
        np.testing.assert_allclose(space.normals, space.radial(), atol=1e-15)

    def test_fold_tilt_angle(self):
        space = build_source_space(2, fold_angle=30.0)
        cosines = np.sum(space.normals * space.radial(), axis=1)
        np.testing.assert_allclose(cosines, math.cos(math.radians(30.0)), atol=1e-12)

    @pytest.mark.parametrize("bad", [-1, 7, 2.5])
    def test_level_out_of_range(self, bad):
        with pytest.raises(ConfigError):
            build_source_space(bad)

    def test_json_roundtrip(self, tmp_path):
        space = build_source_space(2, crop="hemisphere", fold_angle=20.0)
        save_geometry(tmp_path / "s.json", space)
        back = load_source_space(tmp_path / "s.json")
        np.testing.assert_array_equal(back.vertices, space.vertices)
        np.testing.assert_array_equal(back.normals, space.normals)
        assert back.neighbors == space.neighbors


class TestSensors:
    def test_single_sensor_at_apex(self):
        arr = build_sensor_array(1, 0.1)
        np.testing.assert_allclose(arr.positions[0], [0.0, 0.0, 0.1], atol=1e-15)

    def test_64_distinct(self):
        arr = build_sensor_array(64, 0.1, 120.0)
        u = arr.positions / 0.1
        cos = np.clip(u @ u.T, -1, 1)
        np.fill_diagonal(cos, -1)
        assert np.degrees(np.arccos(cos.max())) > 0
        assert np.all(np.linalg.norm(arr.positions, axis=1) > 0.08)

    def test_within_cap(self):
        arr = build_sensor_array(50, 0.1, 90.0)
        assert np.all(arr.positions[:, 2] >= -1e-15)

    def test_radial_orientation(self):
        arr = build_sensor_array(20)
        np.testing.assert_allclose(arr.orientations,
                                   arr.positions / np.linalg.norm(arr.positions, axis=1)[:, None])

    def test_shell_inside_sources(self):
        with pytest.raises(ConfigError):
            build_sensor_array(10, shell_radius=0.05, source_radius=0.08)

    def test_json_roundtrip(self, tmp_path):
        arr = build_sensor_array(16)
        save_geometry(tmp_path / "a.json", arr)
        back = load_sensor_array(tmp_path / "a.json")
        np.testing.assert_array_equal(back.positions, arr.positions)


class TestDipoleField:
    def test_matches_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            r = rng.standard_normal(3)
            r *= 0.1 / np.linalg.norm(r)
            r0 = rng.standard_normal(3)
            r0 *= rng.uniform(0.01, 0.08) / np.linalg.norm(r0)
            q = rng.standard_normal(3)
            ori = r / np.linalg.norm(r)
            got = dipole_field(r[None], ori[None], r0[None], q[None])[0, 0]
            want = np.dot(sarvas_oracle(r, q, r0), ori)
            assert got == pytest.approx(want, rel=1e-10, abs=1e-30)
            assert got == pytest.approx(radial_infinite_medium(r, q, r0), rel=1e-9)

    def test_radial_dipole_silent(self):
        r0 = np.array([0.03, 0.02, 0.05])
        r = np.array([[0.0, 0.0, 0.1], [0.1, 0.0, 0.0]])
        b = dipole_field(r, r / 0.1, np.repeat(r0[None], 1, 0), (r0 / np.linalg.norm(r0))[None])
        assert np.max(np.abs(b)) <= 1e-30

    def test_center_dipole_silent(self):
        r = np.array([[0.0, 0.0, 0.1]])
        b = dipole_field(r, r / 0.1, np.zeros((1, 3)), np.array([[1.0, 0.0, 0.0]]))
        assert np.all(b == 0.0)

    def test_faster_than_inverse_square(self):
        r0 = np.array([0.0, 0.0, 0.02])
        q = np.array([[1.0, 0.0, 0.0]])
        direction = np.array([0.0, 0.6, 0.8])
        near = r0 + 0.03 * direction
        far = r0 + 0.06 * direction
        ori = np.array([near / np.linalg.norm(near), far / np.linalg.norm(far)])
        b_near = dipole_field(near[None], ori[:1], r0[None], q)[0, 0]
        b_far = dipole_field(far[None], ori[1:], r0[None], q)[0, 0]
        assert abs(b_near) >= 4.0 * abs(b_far)

    def test_coincident_rejected(self):
        p = np.array([[0.0, 0.0, 0.08]])
        with pytest.raises(GeometryError):
            dipole_field(p, p / 0.08, p, np.array([[1.0, 0.0, 0.0]]))

    @settings(max_examples=25, deadline=None)
    @given(alpha=st.floats(-5, 5).filter(lambda a: abs(a) > 1e-3), seed=st.integers(0, 10**6))
    def test_linear_in_moment(self, alpha, seed):
        rng = np.random.default_rng(seed)
        r = np.array([[0.0, 0.05, 0.086]])
        r0 = np.array([[0.01, -0.02, 0.06]])
        q = rng.standard_normal((1, 3))
        ori = r / np.linalg.norm(r)
        b1 = dipole_field(r, ori, r0, alpha * q)
        b2 = alpha * dipole_field(r, ori, r0, q)
        np.testing.assert_allclose(b1, b2, rtol=1e-12, atol=1e-30)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_rotation_equivariance(self, seed):
        rng = np.random.default_rng(seed)
        rot = Rotation.random(random_state=seed).as_matrix()
        sensors = rng.standard_normal((5, 3))
        sensors *= 0.1 / np.linalg.norm(sensors, axis=1, keepdims=True)
        src = rng.standard_normal((5, 3)) * 0.02
        q = rng.standard_normal((5, 3))
        ori = sensors / 0.1
        b = dipole_field(sensors, ori, src, q)
        b_rot = dipole_field(sensors @ rot.T, ori @ rot.T, src @ rot.T, q @ rot.T)
        scale = np.max(np.abs(b))
        assert np.max(np.abs(b - b_rot)) <= 1e-10 * scale


class TestLeadField:
    def test_shape_normal(self):
        space = build_source_space(2, fold_angle=45.0)
        H = lead_field(space, build_sensor_array(32))
        assert H.matrix.shape == (32, 162)
        assert np.all(np.isfinite(H.matrix))
        assert np.all(np.any(H.matrix != 0, axis=1))

    def test_radial_normals_give_silent_matrix(self):
        space = build_source_space(1)
        H = lead_field(space, build_sensor_array(8)).matrix
        assert np.max(np.abs(H)) <= 1e-12 * 1e-7

    @pytest.mark.parametrize("level", [1, 2, 3])
    def test_free_mode_radial_columns_silent(self, level):
        space = build_source_space(level)
        H = lead_field(space, build_sensor_array(32), mode="free").matrix
        cols = np.linalg.norm(H, axis=0).reshape(-1, 3)
        assert H.shape[1] == 3 * space.n_sources
        assert np.all(cols[:, 2] <= 1e-12 * cols[:, :2].mean())

    def test_columns_match_oracle(self):
        space = build_source_space(1, fold_angle=50.0)
        sensors = build_sensor_array(6)
        H = lead_field(space, sensors).matrix
        for p in (0, 7, 41):
            for s in range(6):
                want = np.dot(sarvas_oracle(sensors.positions[s], space.normals[p],
                                            space.vertices[p]), sensors.orientations[s])
                assert H[s, p] == pytest.approx(want, rel=1e-10, abs=1e-25)

    def test_save_load(self, tmp_path):
        H = lead_field(build_source_space(1, fold_angle=30.0), build_sensor_array(8), "free")
        H.save(tmp_path / "h.dsmx")
        back = LeadField.load(tmp_path / "h.dsmx")
        np.testing.assert_array_equal(back.matrix, H.matrix)
        assert back.mode == "free"
        meta = json.loads((tmp_path / "h.dsmx.json").read_text())
        assert meta["shape"] == [8, 126]

    def test_dataclass_types(self):
        assert isinstance(build_source_space(0), SourceSpace)
        assert isinstance(build_sensor_array(3), SensorArray)
