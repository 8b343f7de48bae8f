"""Independent reference computations for the test suite.

Everything here derives expected values from first principles: vertex
positions, raw face lists, and analytic surface formulas.  Nothing in
this module imports the package under test, so an implementation bug
cannot hide inside its own oracle.
"""

import numpy as np


# -- adjacency from raw face lists ----------------------------------------


def vertex_neighbors(faces, n_vertices):
    """Neighbor sets per vertex, derived only from the face array."""
    nbrs = [set() for _ in range(n_vertices)]
    for a, b, c in np.asarray(faces):
        nbrs[a].update((int(b), int(c)))
        nbrs[b].update((int(a), int(c)))
        nbrs[c].update((int(a), int(b)))
    return nbrs


def undirected_edges(faces):
    """Sorted unique (lo, hi) vertex pairs from the face array."""
    faces = np.asarray(faces)
    pairs = np.concatenate(
        [faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]], axis=0
    )
    pairs = np.sort(pairs, axis=1)
    return np.unique(pairs, axis=0)


def strict_local_extrema(faces, values, n_vertices):
    """Vertices strictly above (maxima) or below (minima) every neighbor."""
    nbrs = vertex_neighbors(faces, n_vertices)
    maxima = []
    minima = []
    for v in range(n_vertices):
        if not nbrs[v]:
            continue
        vs = [values[u] for u in nbrs[v]]
        if all(values[v] > x for x in vs):
            maxima.append(v)
        elif all(values[v] < x for x in vs):
            minima.append(v)
    return maxima, minima


# -- per-edge sign-crossing contour extraction ----------------------------


def sign_crossing_points(vertices, faces, values):
    """Linear zero crossings on edges whose endpoint values change sign.

    Returns a dict (lo, hi) -> 3-D crossing point with the parameter
    t* = f_a / (f_a - f_b) measured from the lower-index endpoint.
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    out = {}
    for a, b in undirected_edges(faces):
        fa = values[a]
        fb = values[b]
        if fa == 0.0 and fb == 0.0:
            continue
        if fa * fb < 0.0:
            t = fa / (fa - fb)
            out[(int(a), int(b))] = (1.0 - t) * vertices[a] + t * vertices[b]
        elif fa == 0.0:
            out[(int(a), int(b))] = vertices[a].copy()
        elif fb == 0.0:
            out[(int(a), int(b))] = vertices[b].copy()
    return out


def sign_crossing_segments(vertices, faces, values):
    """Marching-triangles zero-set segments.

    Each face whose three edges contain exactly two crossings contributes
    one segment.  Returns (points, segments) where points is (n, 3) and
    segments is (m, 2, 3).
    """
    crossings = sign_crossing_points(vertices, faces, values)
    segs = []
    for a, b, c in np.asarray(faces):
        ends = []
        for u, v in ((a, b), (b, c), (c, a)):
            key = (int(min(u, v)), int(max(u, v)))
            if key in crossings:
                ends.append(crossings[key])
        if len(ends) == 2:
            segs.append(ends)
    pts = np.array(list(crossings.values())).reshape(-1, 3)
    return pts, np.array(segs).reshape(-1, 2, 3)


# -- distances between sampled curves -------------------------------------


def min_dist_to_segments(points, segments):
    """Per-point distance to the nearest segment of a (m, 2, 3) array."""
    p = np.atleast_2d(np.asarray(points, dtype=np.float64))
    a = segments[:, 0]
    d = segments[:, 1] - a
    len2 = np.einsum("ij,ij->i", d, d)
    len2 = np.where(len2 > 0.0, len2, 1.0)
    rel = p[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum("pmk,mk->pm", rel, d) / len2[None, :], 0.0, 1.0)
    foot = a[None, :, :] + t[:, :, None] * d[None, :, :]
    dist = np.linalg.norm(p[:, None, :] - foot, axis=2)
    return dist.min(axis=1)


def closed_segments(points):
    """Consecutive-pair segments of a closed polyline, (n, 2, 3)."""
    pts = np.asarray(points, dtype=np.float64)
    nxt = np.roll(pts, -1, axis=0)
    return np.stack([pts, nxt], axis=1)


def hausdorff_curves(points_a, segments_a, points_b, segments_b):
    """Symmetric Hausdorff distance between two sampled curves."""
    d_ab = min_dist_to_segments(points_a, segments_b).max()
    d_ba = min_dist_to_segments(points_b, segments_a).max()
    return float(max(d_ab, d_ba))


# -- planar containment ----------------------------------------------------


def even_odd_inside(point, polygon):
    """Scalar even-odd ray crossing, written independently."""
    x, y = float(point[0]), float(point[1])
    poly = np.asarray(polygon, dtype=np.float64)
    inside = False
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if (y1 <= y) != (y2 <= y):
            xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if xint > x:
                inside = not inside
    return inside


# -- analytic surface references ------------------------------------------


def torus_parabolic_distance(points, major_radius, minor_radius):
    """Distance to the nearer of the two circles at tube angle +-pi/2.

    Those circles are where the Gaussian curvature of a torus of
    revolution vanishes: radius R in the planes z = +-r.
    """
    p = np.atleast_2d(np.asarray(points, dtype=np.float64))
    rho = np.hypot(p[:, 0], p[:, 1])
    d_top = np.sqrt((rho - major_radius) ** 2 + (p[:, 2] - minor_radius) ** 2)
    d_bot = np.sqrt((rho - major_radius) ** 2 + (p[:, 2] + minor_radius) ** 2)
    return np.minimum(d_top, d_bot)


def sphere_visual_values(vertices, view_dir):
    """N dot V for a unit sphere sampled at its own vertices."""
    v = np.asarray(view_dir, dtype=np.float64)
    v = v / np.linalg.norm(v)
    p = np.asarray(vertices, dtype=np.float64)
    n = p / np.linalg.norm(p, axis=1, keepdims=True)
    return n @ v


def slerp_reference(na, nb, t):
    """Textbook spherical interpolation used to cross-check the package."""
    na = np.asarray(na, dtype=np.float64)
    nb = np.asarray(nb, dtype=np.float64)
    theta = np.arccos(np.clip(na @ nb, -1.0, 1.0))
    if theta < 1e-12:
        return na.copy()
    return (np.sin((1.0 - t) * theta) * na + np.sin(t * theta) * nb) / np.sin(theta)
