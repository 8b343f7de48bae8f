"""Procedural test meshes: icosphere, torus, grid, tetrahedron.

These generators are deterministic; the same arguments always produce the
same vertex order, which keeps edge numbering stable across runs.
"""

from __future__ import annotations

import math

import numpy as np

from .mesh import Mesh


def tetrahedron() -> Mesh:
    v = np.array(
        [
            [1.0, 1.0, 1.0],
            [1.0, -1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, 1.0],
        ]
    )
    f = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return Mesh(v, f)


def _icosahedron_pole_aligned():
    """Icosahedron with vertices on the +z and -z axis."""
    top = [(0.0, 0.0, 1.0)]
    upper = []
    lower = []
    zu = 1.0 / math.sqrt(5.0)
    ru = 2.0 / math.sqrt(5.0)
    for k in range(5):
        a = 2.0 * math.pi * k / 5.0
        upper.append((ru * math.cos(a), ru * math.sin(a), zu))
        b = a + math.pi / 5.0
        lower.append((ru * math.cos(b), ru * math.sin(b), -zu))
    bottom = [(0.0, 0.0, -1.0)]
    verts = np.array(top + upper + lower + bottom)
    faces = []
    for k in range(5):
        kn = (k + 1) % 5
        faces.append((0, 1 + k, 1 + kn))
        faces.append((1 + k, 6 + k, 1 + kn))
        faces.append((1 + kn, 6 + k, 6 + kn))
        faces.append((6 + k, 11, 6 + kn))
    return verts, np.array(faces, dtype=np.int64)


def icosphere(subdivisions: int = 2, radius: float = 1.0) -> Mesh:
    """Geodesic sphere from repeated 4-way subdivision of an icosahedron."""
    verts, faces = _icosahedron_pole_aligned()
    verts = list(map(np.asarray, verts))
    for _ in range(subdivisions):
        cache = {}
        new_faces = []

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                m = m / np.linalg.norm(m)
                cache[key] = len(verts)
                verts.append(m)
            return cache[key]

        for a, b, c in faces:
            ab = midpoint(a, b)
            bc = midpoint(b, c)
            ca = midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = np.array(new_faces, dtype=np.int64)
    pts = np.array([v / np.linalg.norm(v) for v in verts]) * radius
    return Mesh(pts, faces)


def torus(
    major_radius: float = 2.0,
    minor_radius: float = 1.0,
    n_ring: int = 48,
    n_tube: int = 24,
) -> Mesh:
    """Torus of revolution about the z axis.

    ``n_ring`` samples the angle around the axis, ``n_tube`` the angle
    around the tube.  Face count is ``2 * n_ring * n_tube``.
    """
    verts = np.empty((n_ring * n_tube, 3))
    for i in range(n_ring):
        v = 2.0 * math.pi * i / n_ring
        cv, sv = math.cos(v), math.sin(v)
        for j in range(n_tube):
            u = 2.0 * math.pi * j / n_tube
            cu, su = math.cos(u), math.sin(u)
            rad = major_radius + minor_radius * cu
            verts[i * n_tube + j] = (rad * cv, rad * sv, minor_radius * su)
    faces = []
    for i in range(n_ring):
        ni = (i + 1) % n_ring
        for j in range(n_tube):
            nj = (j + 1) % n_tube
            a = i * n_tube + j
            b = ni * n_tube + j
            c = ni * n_tube + nj
            d = i * n_tube + nj
            faces.append((a, b, c))
            faces.append((a, c, d))
    return Mesh(verts, np.array(faces, dtype=np.int64))


def torus_tube_angle(mesh_points, major_radius: float, minor_radius: float):
    """Tube angle u of points on (or near) a torus surface, in radians."""
    p = np.atleast_2d(np.asarray(mesh_points, dtype=np.float64))
    rho = np.hypot(p[:, 0], p[:, 1])
    return np.arctan2(p[:, 2] / minor_radius, (rho - major_radius) / minor_radius)


def grid(nx: int = 8, ny: int = 8, heights=None) -> Mesh:
    """Open rectangular grid in the z=0 plane, optionally displaced in z."""
    verts = np.zeros((nx * ny, 3))
    for i in range(nx):
        for j in range(ny):
            verts[i * ny + j, 0] = i / max(nx - 1, 1)
            verts[i * ny + j, 1] = j / max(ny - 1, 1)
    if heights is not None:
        verts[:, 2] = np.asarray(heights, dtype=np.float64).reshape(-1)
    faces = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            a = i * ny + j
            b = (i + 1) * ny + j
            c = (i + 1) * ny + j + 1
            d = i * ny + j + 1
            faces.append((a, b, c))
            faces.append((a, c, d))
    return Mesh(verts, np.array(faces, dtype=np.int64))


def bumpy_sphere(subdivisions: int = 2, amplitude: float = 0.15, seed: int = 7) -> Mesh:
    """Icosphere with a deterministic low-frequency radial perturbation."""
    base = icosphere(subdivisions)
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(6, 3))
    centers /= np.linalg.norm(centers, axis=1)[:, None]
    weights = rng.uniform(0.5, 1.0, size=6)
    r = np.ones(base.n_vertices)
    for c, w in zip(centers, weights):
        r += amplitude * w * np.exp(-4.0 * (1.0 - base.vertices @ c))
    return Mesh(base.vertices * r[:, None], base.faces)


def rotated(mesh: Mesh, axis, angle: float) -> Mesh:
    """Rigidly rotate a mesh about an axis through the origin."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    c, s = math.cos(angle), math.sin(angle)
    x, y, z = axis
    rot = np.array(
        [
            [c + x * x * (1 - c), x * y * (1 - c) - z * s, x * z * (1 - c) + y * s],
            [y * x * (1 - c) + z * s, c + y * y * (1 - c), y * z * (1 - c) - x * s],
            [z * x * (1 - c) - y * s, z * y * (1 - c) + x * s, c + z * z * (1 - c)],
        ]
    )
    return mesh.with_vertices(mesh.vertices @ rot.T)


def write_obj(mesh: Mesh, path):
    """Write a mesh as OBJ (v and f records only)."""
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")
