"""Synthetic source spaces, sensor arrays and spherical-conductor lead fields.

Source points sit on a subdivided icosahedron projected onto a sphere; the
magnetic field of a current dipole inside a spherically symmetric conductor
is evaluated in closed form (Sarvas, 1987). All quantities are SI: meters,
ampere-meters, tesla.
"""
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, GeometryError
from .matcore.io import read_matrix, write_matrix

MU0_OVER_4PI = 1e-7
SOURCE_RADIUS = 0.08
SHELL_RADIUS = 0.10
MAX_LEVEL = 6

# tangential fold direction is axis x r_hat; this axis avoids every icosphere
# vertex direction up to level 6
_FOLD_AXIS = np.array([0.26726124191242440, 0.53452248382484879, 0.80178372573727319])


@dataclass(frozen=True, eq=False)
class SourceSpace:
    """Dipole locations on a (possibly cropped) icosphere.

    ``normals`` are radial unless the space was built with a non-zero fold
    angle, in which case each normal is tilted towards a smooth tangential
    field to emulate cortical folding.
    """

    vertices: np.ndarray
    normals: np.ndarray
    neighbors: tuple
    radius: float
    level: int
    crop: str = "none"
    fold_angle: float = 0.0
    region_labels: np.ndarray = None

    @property
    def n_sources(self):
        return self.vertices.shape[0]

    def radial(self):
        return self.vertices / np.linalg.norm(self.vertices, axis=1, keepdims=True)

    def adjacency(self):
        """Dense 0/1 adjacency matrix."""
        p = self.n_sources
        adj = np.zeros((p, p))
        for i, nbrs in enumerate(self.neighbors):
            adj[i, list(nbrs)] = 1.0
        return adj

    def to_json(self):
        return {
            "kind": "SourceSpace",
            "radius": self.radius,
            "level": self.level,
            "crop": self.crop,
            "fold_angle": self.fold_angle,
            "vertices": self.vertices.tolist(),
            "normals": self.normals.tolist(),
            "neighbors": [list(n) for n in self.neighbors],
            "region_labels": None if self.region_labels is None else self.region_labels.tolist(),
        }

    @classmethod
    def from_json(cls, doc):
        labels = doc.get("region_labels")
        return cls(
            vertices=np.asarray(doc["vertices"], dtype=float).reshape(-1, 3),
            normals=np.asarray(doc["normals"], dtype=float).reshape(-1, 3),
            neighbors=tuple(tuple(int(i) for i in n) for n in doc["neighbors"]),
            radius=float(doc["radius"]),
            level=int(doc["level"]),
            crop=doc.get("crop", "none"),
            fold_angle=float(doc.get("fold_angle", 0.0)),
            region_labels=None if labels is None else np.asarray(labels, dtype=int),
        )


@dataclass(frozen=True, eq=False)
class SensorArray:
    """Radial magnetometers on a spherical cap around +z."""

    positions: np.ndarray
    orientations: np.ndarray
    shell_radius: float
    cap_half_angle: float

    @property
    def n_sensors(self):
        return self.positions.shape[0]

    def to_json(self):
        return {
            "kind": "SensorArray",
            "shell_radius": self.shell_radius,
            "cap_half_angle": self.cap_half_angle,
            "positions": self.positions.tolist(),
            "orientations": self.orientations.tolist(),
        }

    @classmethod
    def from_json(cls, doc):
        return cls(
            positions=np.asarray(doc["positions"], dtype=float).reshape(-1, 3),
            orientations=np.asarray(doc["orientations"], dtype=float).reshape(-1, 3),
            shell_radius=float(doc["shell_radius"]),
            cap_half_angle=float(doc["cap_half_angle"]),
        )


@dataclass(frozen=True, eq=False)
class LeadField:
    """Gain matrix from source amplitudes (A*m) to sensor fields (T).

    In ``normal`` mode there is one column per source (moment along the
    source normal). In ``free`` mode there are three per source, ordered as
    two tangential directions then the radial direction.
    """

    matrix: np.ndarray
    mode: str = "normal"
    orientations: np.ndarray = field(default=None, repr=False)

    @property
    def n_sensors(self):
        return self.matrix.shape[0]

    @property
    def n_columns(self):
        return self.matrix.shape[1]

    def save(self, path):
        """Write ``<path>`` (DSMX) and ``<path>.json``; returns the DSMX digest."""
        path = Path(path)
        digest = write_matrix(path, self.matrix)
        meta = {"kind": "LeadField", "mode": self.mode, "shape": list(self.matrix.shape),
                "sha256": digest}
        if self.orientations is not None:
            meta["orientations"] = self.orientations.tolist()
        path.with_name(path.name + ".json").write_text(json.dumps(meta, indent=1))
        return digest

    @classmethod
    def load(cls, path):
        path = Path(path)
        meta = json.loads(path.with_name(path.name + ".json").read_text())
        matrix = read_matrix(path, sha256=meta.get("sha256"))
        orient = meta.get("orientations")
        return cls(matrix=matrix, mode=meta["mode"],
                   orientations=None if orient is None else np.asarray(orient).reshape(-1, 3))


def _icosahedron():
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    return verts, faces


def icosphere(level):
    """Unit icosphere after ``level`` midpoint subdivisions.

    Returns ``(vertices, faces)``; vertex count is ``10 * 4**level + 2``.
    """
    verts, faces = _icosahedron()
    for _ in range(level):
        cache = {}

        def midpoint(i, j):
            key = (i, j) if i < j else (j, i)
            idx = cache.get(key)
            if idx is None:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                idx = cache[key] = len(verts) - 1
            return idx

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return np.array(verts), np.array(faces, dtype=np.int64)


def _tangent_frame(radial):
    """Two unit tangents per row of ``radial``, orthogonal to it and each other."""
    t1 = np.cross(_FOLD_AXIS, radial)
    t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
    t2 = np.cross(radial, t1)
    t2 /= np.linalg.norm(t2, axis=1, keepdims=True)
    return t1, t2


def build_source_space(subdivision_level, radius=SOURCE_RADIUS, crop="none", fold_angle=0.0):
    """Icosphere source space.

    Parameters
    ----------
    subdivision_level : int
        Number of icosahedron subdivisions, 0 to 6.
    radius : float
        Sphere radius in meters.
    crop : {"none", "hemisphere"}
        ``hemisphere`` keeps vertices with ``z >= 0``.
    fold_angle : float
        Tilt of each normal away from radial, in degrees. Radial dipoles are
        silent in a spherical conductor, so a non-zero fold is needed for a
        normal-mode lead field that sees anything.
    """
    if not isinstance(subdivision_level, (int, np.integer)) or not 0 <= subdivision_level <= MAX_LEVEL:
        raise ConfigError(f"subdivision level must be an integer in [0, {MAX_LEVEL}], "
                          f"got {subdivision_level!r}", field="subdivision_level")
    if crop not in ("none", "hemisphere"):
        raise ConfigError(f"crop must be 'none' or 'hemisphere', got {crop!r}", field="crop")
    if not radius > 0:
        raise ConfigError(f"radius must be positive, got {radius}", field="radius")
    if not 0.0 <= fold_angle <= 90.0:
        raise ConfigError(f"fold angle must be in [0, 90] degrees, got {fold_angle}",
                          field="fold_angle")

    unit, faces = icosphere(int(subdivision_level))
    n = unit.shape[0]
    nbr_sets = [set() for _ in range(n)]
    for a, b, c in faces:
        nbr_sets[a].update((b, c))
        nbr_sets[b].update((a, c))
        nbr_sets[c].update((a, b))

    keep = np.arange(n)
    if crop == "hemisphere":
        keep = np.flatnonzero(unit[:, 2] >= -1e-12)
    remap = -np.ones(n, dtype=np.int64)
    remap[keep] = np.arange(keep.size)
    neighbors = tuple(
        tuple(sorted(int(remap[j]) for j in nbr_sets[i] if remap[j] >= 0)) for i in keep
    )
    unit = unit[keep]

    normals = unit.copy()
    if fold_angle:
        alpha = math.radians(fold_angle)
        t1, _ = _tangent_frame(unit)
        normals = math.cos(alpha) * unit + math.sin(alpha) * t1
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return SourceSpace(vertices=radius * unit, normals=normals, neighbors=neighbors,
                       radius=float(radius), level=int(subdivision_level), crop=crop,
                       fold_angle=float(fold_angle))


def build_sensor_array(count, shell_radius=SHELL_RADIUS, cap_half_angle=120.0,
                       source_radius=SOURCE_RADIUS):
    """Golden-angle spiral of ``count`` radial magnetometers on a cap around +z.

    Sensor 0 sits at the apex; the last sensor lies on the cap rim. Points
    are spaced uniformly in ``cos(theta)`` so they cover the cap area evenly.
    """
    if not isinstance(count, (int, np.integer)) or count < 1:
        raise ConfigError(f"sensor count must be a positive integer, got {count!r}",
                          field="n_sensors")
    if not shell_radius > source_radius:
        raise ConfigError(f"sensor shell radius {shell_radius} must exceed source "
                          f"radius {source_radius}", field="shell_radius")
    if not 0.0 < cap_half_angle <= 180.0:
        raise ConfigError(f"cap half angle must be in (0, 180], got {cap_half_angle}",
                          field="cap_half_angle")
    z_min = math.cos(math.radians(cap_half_angle))
    idx = np.arange(count, dtype=float)
    frac = idx / (count - 1) if count > 1 else idx
    z = 1.0 - (1.0 - z_min) * frac
    rho = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    golden = math.pi * (3.0 - math.sqrt(5.0))
    phi = golden * idx
    unit = np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
    unit /= np.linalg.norm(unit, axis=1, keepdims=True)
    return SensorArray(positions=shell_radius * unit, orientations=unit.copy(),
                       shell_radius=float(shell_radius), cap_half_angle=float(cap_half_angle))


def dipole_field(sensor_pos, sensor_ori, dipole_pos, moments):
    """Field component along ``sensor_ori`` from dipoles in a spherical conductor.

    Parameters
    ----------
    sensor_pos, sensor_ori : (S, 3) arrays
        Sensor locations (m) and unit measurement axes.
    dipole_pos : (P, 3) array
        Dipole locations (m) relative to the conductor center.
    moments : (P, 3) array
        Dipole moments (A*m).

    Returns
    -------
    (S, P) array
        Field in tesla.
    """
    r = np.asarray(sensor_pos, dtype=float)[:, None, :]
    o = np.asarray(sensor_ori, dtype=float)[:, None, :]
    r0 = np.asarray(dipole_pos, dtype=float)[None, :, :]
    q = np.asarray(moments, dtype=float)[None, :, :]

    a_vec = r - r0
    a = np.linalg.norm(a_vec, axis=2)
    rn = np.linalg.norm(r, axis=2)
    scale = max(float(np.max(rn)), 1e-300)
    if np.any(a <= 1e-9 * scale):
        s, p = np.unravel_index(np.argmin(a), a.shape)
        raise GeometryError(f"sensor {s} coincides with source {p}")

    a_dot_r = np.sum(a_vec * r, axis=2)
    big_f = a * (rn * a + rn * rn - np.sum(r0 * r, axis=2))
    grad_r = a * a / rn + a_dot_r / a + 2.0 * a + 2.0 * rn
    grad_r0 = a + 2.0 * rn + a_dot_r / a
    qxr0 = np.cross(q, r0)
    qxr0_r = np.sum(qxr0 * r, axis=2)
    grad_f_o = grad_r * np.sum(r * o, axis=2) - grad_r0 * np.sum(r0 * o, axis=2)
    b = (big_f * np.sum(qxr0 * o, axis=2) - qxr0_r * grad_f_o) / (big_f * big_f)
    return MU0_OVER_4PI * b


def lead_field(space, sensors, mode="normal"):
    """Lead-field matrix for ``space`` seen by ``sensors``.

    ``normal`` mode uses each vertex normal as the dipole moment. ``free``
    mode emits, per vertex, columns for two tangents and the radial
    direction; the radial column is silent up to round-off.
    """
    if mode not in ("normal", "free"):
        raise ConfigError(f"lead field mode must be 'normal' or 'free', got {mode!r}",
                          field="mode")
    if space.n_sources == 0 or sensors.n_sensors == 0:
        raise ContractError("lead field needs at least one source and one sensor")
    pos = space.vertices
    if mode == "normal":
        orient = space.normals
        matrix = dipole_field(sensors.positions, sensors.orientations, pos, orient)
    else:
        radial = space.radial()
        t1, t2 = _tangent_frame(radial)
        orient = np.stack([t1, t2, radial], axis=1).reshape(-1, 3)
        matrix = dipole_field(sensors.positions, sensors.orientations,
                              np.repeat(pos, 3, axis=0), orient)
    return LeadField(matrix=np.ascontiguousarray(matrix), mode=mode, orientations=orient)


def save_geometry(path, obj):
    Path(path).write_text(json.dumps(obj.to_json()))


def load_source_space(path):
    return SourceSpace.from_json(json.loads(Path(path).read_text()))


def load_sensor_array(path):
    return SensorArray.from_json(json.loads(Path(path).read_text()))
