"""Procedural symmetric head rig and an OBJ morph-target importer.

The synthetic model is an octahedron-subdivision sphere deformed into a
head-ish shape, with rigid eyeball sub-meshes, localized identity and
blendshape displacement fields, 78 embedded landmarks, and an exact mirror
symmetry map.  It exists so every stage of the toolkit can run and be tested
without any external face asset.
"""

import json
import os

import numpy as np
from scipy.spatial import cKDTree

from .facemodel import (
    BLENDSHAPE_COUNT,
    DEFAULT_BLENDSHAPE_NAMES,
    IDENTITY_COUNT,
    EyeballSpec,
    FaceModel,
    closest_point_barycentric,
)

HEAD_SCALE = np.array([0.85, 1.0, 0.95])
EYE_DIR = np.array([0.38, 0.20, 0.85])
EYE_RADIUS = 0.16


# ---------------------------------------------------------------------------
# Octahedron-subdivision sphere (exactly mirror symmetric in x)


def octasphere(level):
    verts = [
        (1.0, 0.0, 0.0), (-1.0, 0.0, 0.0),
        (0.0, 1.0, 0.0), (0.0, -1.0, 0.0),
        (0.0, 0.0, 1.0), (0.0, 0.0, -1.0),
    ]
    tris = [
        (0, 2, 4), (2, 1, 4), (1, 3, 4), (3, 0, 4),
        (2, 0, 5), (1, 2, 5), (3, 1, 5), (0, 3, 5),
    ]
    verts = [np.array(v) for v in verts]
    for _ in range(level):
        cache = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[key[0]] + verts[key[1]]
                m = m / np.linalg.norm(m)
                cache[key] = len(verts)
                verts.append(m)
            return cache[key]

        new_tris = []
        for a, b, c in tris:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_tris += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        tris = new_tris
    return np.array(verts), np.array(tris, dtype=np.int64)


def build_symmetry_map(vertices, decimals=9):
    """Involutive pairing v <-> mirror(v) across the x=0 plane.

    Vertices must mirror exactly (up to `decimals` rounding); raises if any
    vertex has no partner.
    """
    def key(p):
        q = np.round(p, decimals) + 0.0   # +0.0 folds -0.0 into +0.0
        return (q[0], q[1], q[2])

    lookup = {}
    for i, p in enumerate(vertices):
        lookup.setdefault(key(p), []).append(i)
    sym = np.full(len(vertices), -1, dtype=np.int64)
    for i, p in enumerate(vertices):
        mirrored = key(p * np.array([-1.0, 1.0, 1.0]))
        candidates = lookup.get(mirrored, [])
        if not candidates:
            raise ValueError("vertex %d has no mirror partner" % i)
        sym[i] = candidates[0] if candidates[0] != i or len(candidates) == 1 else candidates[1]
    if not np.array_equal(sym[sym], np.arange(len(vertices))):
        raise ValueError("mirror pairing is not an involution")
    return sym


def _mirror_field(field, sym):
    """Symmetrize a per-vertex displacement field across the x=0 plane."""
    mirrored = field[sym] * np.array([-1.0, 1.0, 1.0])
    return 0.5 * (field + mirrored)


def _bump(points, center_dir, radius, direction, amplitude):
    """Gaussian displacement bump on the unit-direction sphere."""
    dirs = points / np.linalg.norm(points, axis=1, keepdims=True)
    c = np.asarray(center_dir, dtype=np.float64)
    c = c / np.linalg.norm(c)
    ang = np.arccos(np.clip(dirs @ c, -1.0, 1.0))
    w = np.exp(-0.5 * (ang / radius) ** 2)
    w[ang > 2.5 * radius] = 0.0
    return amplitude * w[:, None] * np.asarray(direction, dtype=np.float64)


def _radial_bump(points, center_dir, radius, amplitude):
    dirs = points / np.linalg.norm(points, axis=1, keepdims=True)
    c = np.asarray(center_dir, dtype=np.float64)
    c = c / np.linalg.norm(c)
    ang = np.arccos(np.clip(dirs @ c, -1.0, 1.0))
    w = np.exp(-0.5 * (ang / radius) ** 2)
    w[ang > 2.5 * radius] = 0.0
    return amplitude * w[:, None] * dirs


# ---------------------------------------------------------------------------
# Feature layout (directions on the unit head sphere; x>0 is the LEFT side)


def _dir(az_deg, el_deg):
    az, el = np.deg2rad(az_deg), np.deg2rad(el_deg)
    return np.array([np.cos(el) * np.sin(az), np.sin(el), np.cos(el) * np.cos(az)])


MOUTH_DIR = _dir(0, -32)
CHIN_DIR = _dir(0, -52)
NOSE_DIR = _dir(0, -8)
BROW_EL = 24.0
EYE_EL = 12.0
EYE_AZ = 24.0


def _face_landmark_dirs():
    """Unit directions for the 68 standard face landmarks (right side x<0)."""
    dirs = []
    for i in range(17):                          # jaw: ear to ear through chin
        t = (i - 8) / 8.0
        az = 72.0 * t
        el = -12.0 - 40.0 * np.cos(np.pi / 2 * t) ** 0.8 if abs(t) < 1 else -12.0
        dirs.append(_dir(az, el))
    for i in range(5):                           # right brow (x<0)
        dirs.append(_dir(-38.0 + 7.0 * i, BROW_EL + 2.0 * np.sin(np.pi * i / 4)))
    for i in range(5):                           # left brow
        dirs.append(_dir(10.0 + 7.0 * i, BROW_EL + 2.0 * np.sin(np.pi * (4 - i) / 4)))
    for i in range(4):                           # nose bridge
        dirs.append(_dir(0.0, 16.0 - 8.0 * i))
    for i in range(5):                           # nostril base
        dirs.append(_dir(-10.0 + 5.0 * i, -14.0))
    for corner_az, start in ((-EYE_AZ, 36), (EYE_AZ, 42)):   # eyes, 6 pts each
        for i in range(6):
            ang = np.pi * i / 3.0
            dirs.append(_dir(corner_az + 8.0 * np.cos(ang), EYE_EL + 4.0 * np.sin(ang)))
    for i in range(12):                          # outer lips
        ang = 2 * np.pi * i / 12.0
        dirs.append(_dir(14.0 * np.cos(ang), -32.0 + 7.0 * np.sin(ang)))
    for i in range(8):                           # inner lips
        ang = 2 * np.pi * i / 8.0
        dirs.append(_dir(8.0 * np.cos(ang), -32.0 + 3.5 * np.sin(ang)))
    return np.array(dirs)


def _select_ring(vertices, center_dir, radius_deg, width_deg=4.0):
    """Ordered loop of vertex ids at a given angular distance from a center."""
    dirs = vertices / np.linalg.norm(vertices, axis=1, keepdims=True)
    c = np.asarray(center_dir, dtype=np.float64)
    c = c / np.linalg.norm(c)
    ang = np.rad2deg(np.arccos(np.clip(dirs @ c, -1.0, 1.0)))
    picked = np.where(np.abs(ang - radius_deg) < width_deg)[0]
    if len(picked) < 3:
        raise ValueError("ring selection too sparse")
    # order by azimuth in the plane orthogonal to the center direction
    ref = np.array([0.0, 1.0, 0.0])
    u = ref - np.dot(ref, c) * c
    u /= np.linalg.norm(u)
    v = np.cross(c, u)
    az = np.arctan2(dirs[picked] @ v, dirs[picked] @ u)
    return picked[np.argsort(az)]


def _select_arc(vertices, dirs_through):
    """Vertex polyline visiting the nearest vertex to each sample direction."""
    dirs = vertices / np.linalg.norm(vertices, axis=1, keepdims=True)
    out = []
    for d in dirs_through:
        d = d / np.linalg.norm(d)
        i = int(np.argmax(dirs @ d))
        if not out or out[-1] != i:
            out.append(i)
    return np.array(out, dtype=np.int64)


# ---------------------------------------------------------------------------
# Blendshape and identity field construction


def _blendshape_field(name, points, rng):
    """Localized displacement field for one named FACS blendshape."""
    side = -1.0 if name.endswith("_R") else 1.0   # x<0 is the character's right
    base = name[:-2] if name.endswith(("_L", "_R")) else name

    def at(az, el):
        return _dir(side * az, el)

    if base.startswith("brow"):
        up = 1.0 if "Up" in base else -1.0
        az = {"browDown": 24.0, "browInnerUp": 12.0, "browOuterUp": 34.0}.get(base, 24.0)
        return _bump(points, at(az, BROW_EL), 0.18, (0, up, 0), 0.06)
    if base == "eyeBlink":
        return _bump(points, at(EYE_AZ, EYE_EL + 5), 0.14, (0, -1, 0), 0.05)
    if base == "eyeSquint":
        return _bump(points, at(EYE_AZ, EYE_EL - 5), 0.12, (0, 1, 0), 0.03)
    if base == "eyeWide":
        return _bump(points, at(EYE_AZ, EYE_EL + 5), 0.12, (0, 1, 0), 0.03)
    if base.startswith("eyeLook"):
        shift = {"eyeLookUp": (0, 1, 0), "eyeLookDown": (0, -1, 0),
                 "eyeLookIn": (-side, 0, 0), "eyeLookOut": (side, 0, 0)}[base]
        return _bump(points, at(EYE_AZ, EYE_EL), 0.10, np.array(shift) * 0.5, 0.02)
    if base == "jawForward":
        return _bump(points, CHIN_DIR, 0.30, (0, 0, 1), 0.06)
    if base in ("jawLeft", "jawRight"):
        s = 1.0 if base == "jawLeft" else -1.0
        return _bump(points, CHIN_DIR, 0.30, (s, 0, 0), 0.06)
    if base == "jawOpen":
        return _bump(points, CHIN_DIR, 0.32, (0, -1.0, -0.1), 0.16)
    if base == "mouthClose":
        return _bump(points, CHIN_DIR, 0.28, (0, 1.0, 0.05), 0.08)
    if base in ("cheekPuff", "cheekSquint", "cheekSuck"):
        amp = {"cheekPuff": 0.05, "cheekSquint": 0.03, "cheekSuck": -0.04}[base]
        return _radial_bump(points, at(26.0, -16.0), 0.14, amp)
    if base == "noseSneer":
        return _bump(points, at(9.0, -12.0), 0.10, (0, 1, 0), 0.03)

    # mouth group: bumps anchored at lip corners / lips
    corner = at(15.0, -32.0)
    lips = MOUTH_DIR
    table = {
        "mouthSmile": (corner, 0.13, (0.45 * side, 0.8, 0.0), 0.06),
        "mouthFrown": (corner, 0.13, (0.3 * side, -0.85, 0.0), 0.05),
        "mouthDimple": (corner, 0.10, (0.9 * side, 0.0, -0.3), 0.04),
        "mouthStretch": (corner, 0.14, (0.95 * side, -0.2, 0.0), 0.05),
        "mouthPress": (corner, 0.12, (0.0, -0.4, -0.6), 0.04),
        "mouthUpperUp": (at(7.0, -28.0), 0.10, (0, 1, 0), 0.05),
        "mouthLowerDown": (at(7.0, -37.0), 0.10, (0, -1, 0), 0.05),
        "mouthLeft": (lips, 0.16, (1, 0, 0), 0.05),
        "mouthRight": (lips, 0.16, (-1, 0, 0), 0.05),
        "mouthFunnel": (lips, 0.14, (0, 0, 1), 0.06),
        "mouthPucker": (lips, 0.12, (0, 0, 1.2), 0.05),
        "mouthRollLower": (at(0.0, -36.0), 0.09, (0, 0.4, -0.8), 0.04),
        "mouthRollUpper": (at(0.0, -28.0), 0.09, (0, -0.4, -0.8), 0.04),
        "mouthShrugLower": (at(0.0, -38.0), 0.11, (0, 1, 0.2), 0.04),
        "mouthShrugUpper": (at(0.0, -26.0), 0.11, (0, 1, 0.2), 0.04),
    }
    center, radius, direction, amp = table[base]
    return _bump(points, center, radius, direction, amp)


def _identity_fields(points, sym, rng):
    fields = np.zeros((IDENTITY_COUNT, len(points), 3))
    for k in range(IDENTITY_COUNT):
        f = np.zeros((len(points), 3))
        for _ in range(3):
            center = rng.normal(size=3)
            center /= np.linalg.norm(center)
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            f += _bump(points, center, rng.uniform(0.35, 0.8), direction,
                       rng.uniform(0.015, 0.05))
        fields[k] = _mirror_field(f, sym)
    return fields


# ---------------------------------------------------------------------------
# Full model assembly


def make_synthetic_model(seed=0, level=4, eye_level=2):
    """Build the synthetic head rig.

    Returns (FaceModel, contours) where contours is a dict of named vertex
    polylines usable by the sketch renderer and the lip-sync mouth mask.
    """
    rng = np.random.default_rng(seed)

    sphere_v, sphere_t = octasphere(level)
    # drop the back of the head (symmetric criterion: centroid z)
    centroid_z = sphere_v[sphere_t].mean(axis=1)[:, 2]
    keep_t = sphere_t[centroid_z > -0.25]
    used = np.unique(keep_t)
    remap = np.full(len(sphere_v), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    face_v = sphere_v[used]
    face_t = remap[keep_t]

    # head-ish deformation: anisotropic scale + features, all x-symmetric
    shaped = face_v * HEAD_SCALE
    shaped += _bump(face_v, NOSE_DIR, 0.12, (0, 0, 1), 0.10)          # nose
    shaped += _bump(face_v, CHIN_DIR, 0.22, (0, -0.2, 0.35), 0.05)    # chin
    shaped += _bump(face_v, MOUTH_DIR, 0.10, (0, 0, 1), 0.02)         # lips
    for s in (-1.0, 1.0):
        eye_c = EYE_DIR * np.array([s, 1.0, 1.0])
        shaped += _radial_bump(face_v, eye_c, 0.17, -0.07)            # sockets
        shaped += _bump(face_v, _dir(s * 26.0, BROW_EL), 0.10, (0, 0, 1), 0.025)

    face_sym = build_symmetry_map(face_v)
    mirror = shaped[face_sym] * np.array([-1.0, 1.0, 1.0])
    shaped = 0.5 * (shaped + mirror)            # exact mirror symmetry

    # eyeballs: right eye on x<0 (character's right), mirrored to the left
    eye_v, eye_t = octasphere(eye_level)
    t_surf = 1.0 / np.linalg.norm(EYE_DIR / HEAD_SCALE / np.linalg.norm(EYE_DIR))
    center_l = EYE_DIR / np.linalg.norm(EYE_DIR) * (t_surf * 0.96 - EYE_RADIUS * 0.55)
    center_r = center_l * np.array([-1.0, 1.0, 1.0])
    eye_r_v = eye_v * EYE_RADIUS + center_r
    eye_l_v = eye_v * EYE_RADIUS + center_l
    eye_l_t = eye_t[:, [0, 2, 1]]               # mirrored winding

    nf, ne = len(shaped), len(eye_v)
    verts = np.concatenate([shaped, eye_r_v, eye_l_v])
    tris = np.concatenate([face_t, eye_t + nf, eye_l_t + nf + ne])
    sym = np.concatenate([face_sym,
                          np.arange(ne) + nf + ne,     # right <-> left eye
                          np.arange(ne) + nf])

    # displacement bases live on the unit sphere directions of the face part
    blend = np.zeros((BLENDSHAPE_COUNT, len(verts), 3))
    for j, name in enumerate(DEFAULT_BLENDSHAPE_NAMES):
        field = _blendshape_field(name, face_v, rng)
        if not name.endswith(("_L", "_R")):
            field = _mirror_field(field, face_sym)
        blend[j, :nf] = field
    ident = np.zeros((IDENTITY_COUNT, len(verts), 3))
    ident[:, :nf] = _identity_fields(face_v, face_sym, rng)

    eye_right = EyeballSpec(nf, nf + ne, pivot=center_r.copy())
    eye_left = EyeballSpec(nf + ne, nf + 2 * ne, pivot=center_l.copy())

    # iris rings around each eyeball's front (+z) pole
    ring_local = _select_ring(eye_v, np.array([0.0, 0.0, 1.0]), 28.0, 8.0)
    iris_right = ring_local + nf
    iris_left = ring_local + nf + ne

    # landmarks: 68 on the face, 5 iris points per eye (right first)
    lm_dirs = _face_landmark_dirs()
    lm_points = _project_to_surface(lm_dirs, shaped, face_t)
    face_tri_idx, face_bary = closest_point_barycentric(lm_points, verts, tris[: len(face_t)])
    iris_tri, iris_bary = [], []
    for eye_first, center, s in ((True, center_r, -1.0), (False, center_l, 1.0)):
        pts = [center + EYE_RADIUS * np.array([0.0, 0.0, 1.0])]
        for ang in (0.0, 0.5 * np.pi, np.pi, 1.5 * np.pi):
            offs = np.array([np.cos(ang), np.sin(ang), 0.0]) * np.sin(np.deg2rad(28))
            offs[2] = np.cos(np.deg2rad(28))
            pts.append(center + EYE_RADIUS * offs / np.linalg.norm(offs))
        lo = len(face_t) if eye_first else len(face_t) + len(eye_t)
        hi = lo + len(eye_t)
        ti, ba = closest_point_barycentric(np.array(pts), verts, tris[lo:hi])
        iris_tri.append(ti + lo)
        iris_bary.append(ba)

    landmark_tri = np.concatenate([face_tri_idx, iris_tri[0], iris_tri[1]])
    landmark_bary = np.concatenate([face_bary, iris_bary[0], iris_bary[1]])

    model = FaceModel(
        vertices_mean=verts.astype(np.float32),
        triangles=tris.astype(np.uint32),
        identity_basis=ident.astype(np.float32),
        blendshape_basis=blend.astype(np.float32),
        blendshape_names=DEFAULT_BLENDSHAPE_NAMES,
        eyeball_right=eye_right,
        eyeball_left=eye_left,
        iris_ring_right=iris_right.astype(np.int64),
        iris_ring_left=iris_left.astype(np.int64),
        symmetry_map=sym,
        landmark_triangles=landmark_tri.astype(np.int64),
        landmark_bary=landmark_bary.astype(np.float32),
    ).validate()

    contours = _build_contours(face_v, face_sym)
    return model, contours


def _project_to_surface(dirs, shaped, face_t):
    """Approximate surface points along given unit directions."""
    # scale each direction until it sits near the deformed surface: use the
    # nearest shaped vertex radius as the estimate, then let the barycentric
    # embedding snap it onto the mesh.
    unit = shaped / np.linalg.norm(shaped, axis=1, keepdims=True)
    out = []
    for d in dirs:
        d = d / np.linalg.norm(d)
        i = int(np.argmax(unit @ d))
        out.append(d * np.linalg.norm(shaped[i]))
    return np.array(out)


def _build_contours(face_v, face_sym):
    """Named vertex polylines on the face part (indices into the face range)."""
    jaw_dirs = _face_landmark_dirs()[:17]
    outer_lips = _select_ring(face_v, MOUTH_DIR, 13.0, 4.5)
    inner_lips = _select_ring(face_v, MOUTH_DIR, 7.0, 3.5)
    silhouette = _select_ring(face_v, np.array([0.0, 0.0, 1.0]), 62.0, 3.0)
    contours = {
        "silhouette": {"vertices": silhouette.tolist(), "closed": True},
        "jawline": {"vertices": _select_arc(face_v, jaw_dirs).tolist(), "closed": False},
        "brow_right": {"vertices": _select_arc(
            face_v, [_dir(-38 + 7 * i, BROW_EL) for i in range(5)]).tolist(), "closed": False},
        "brow_left": {"vertices": _select_arc(
            face_v, [_dir(10 + 7 * i, BROW_EL) for i in range(5)]).tolist(), "closed": False},
        "eye_right": {"vertices": _select_ring(
            face_v, _dir(-EYE_AZ, EYE_EL), 8.0, 3.0).tolist(), "closed": True},
        "eye_left": {"vertices": _select_ring(
            face_v, _dir(EYE_AZ, EYE_EL), 8.0, 3.0).tolist(), "closed": True},
        "nose": {"vertices": _select_arc(
            face_v, [_dir(0, 16 - 8 * i) for i in range(4)]).tolist(), "closed": False},
        "lips": {"vertices": outer_lips.tolist(), "closed": True},
        "inner_lips": {"vertices": inner_lips.tolist(), "closed": True},
    }
    return contours


# ---------------------------------------------------------------------------
# OBJ morph-target importer


def _load_obj(path):
    verts, faces = [], []
    with open(path) as fh:
        for line in fh:
            if line.startswith("v "):
                verts.append([float(x) for x in line.split()[1:4]])
            elif line.startswith("f "):
                idx = [int(tok.split("/")[0]) - 1 for tok in line.split()[1:]]
                for k in range(1, len(idx) - 1):     # fan-triangulate n-gons
                    faces.append([idx[0], idx[k], idx[k + 1]])
    return np.array(verts, dtype=np.float64), np.array(faces, dtype=np.int64)


def save_obj(path, vertices, triangles):
    with open(path, "w") as fh:
        for v in np.asarray(vertices):
            fh.write("v %.8f %.8f %.8f\n" % (v[0], v[1], v[2]))
        for t in np.asarray(triangles):
            fh.write("f %d %d %d\n" % (t[0] + 1, t[1] + 1, t[2] + 1))


def import_manifest(manifest_path):
    """Convert an external morph-target OBJ set into a FaceModel.

    The manifest is JSON with paths relative to its directory:
      mean_obj, identity_objs (list, up to 50), blendshape_objs (name->path,
      covering the 55 FACS names), eyeball_right/left ([start, stop)),
      iris_ring_right/left (vertex lists), landmarks_xyz (78 x 3), and an
      optional symmetry_tolerance.
    """
    with open(manifest_path) as fh:
        spec = json.load(fh)
    base = os.path.dirname(os.path.abspath(manifest_path))

    def p(rel):
        return os.path.join(base, rel)

    mean, tris = _load_obj(p(spec["mean_obj"]))
    nv = len(mean)

    ident = np.zeros((IDENTITY_COUNT, nv, 3))
    for k, rel in enumerate(spec.get("identity_objs", [])[:IDENTITY_COUNT]):
        morph, _ = _load_obj(p(rel))
        if len(morph) != nv:
            raise ValueError("identity morph %s has wrong vertex count" % rel)
        ident[k] = morph - mean

    names = tuple(spec.get("blendshape_names", DEFAULT_BLENDSHAPE_NAMES))
    blend = np.zeros((BLENDSHAPE_COUNT, nv, 3))
    for j, name in enumerate(names):
        rel = spec["blendshape_objs"].get(name)
        if rel is None:
            continue
        morph, _ = _load_obj(p(rel))
        if len(morph) != nv:
            raise ValueError("blendshape morph %s has wrong vertex count" % rel)
        blend[j] = morph - mean

    tol = spec.get("symmetry_tolerance", 1e-4)
    sym = _match_symmetry(mean, tol)

    def eye(key):
        start, stop = spec[key]
        pivot = mean[start:stop].mean(axis=0) if stop > start else np.zeros(3)
        return EyeballSpec(int(start), int(stop), pivot=pivot)

    lm_xyz = np.asarray(spec["landmarks_xyz"], dtype=np.float64)
    lm_tri, lm_bary = closest_point_barycentric(lm_xyz, mean, tris)

    return FaceModel(
        vertices_mean=mean.astype(np.float32),
        triangles=tris.astype(np.uint32),
        identity_basis=ident.astype(np.float32),
        blendshape_basis=blend.astype(np.float32),
        blendshape_names=names,
        eyeball_right=eye("eyeball_right"),
        eyeball_left=eye("eyeball_left"),
        iris_ring_right=np.asarray(spec["iris_ring_right"], dtype=np.int64),
        iris_ring_left=np.asarray(spec["iris_ring_left"], dtype=np.int64),
        symmetry_map=sym,
        landmark_triangles=lm_tri.astype(np.int64),
        landmark_bary=lm_bary.astype(np.float32),
    ).validate()


def _match_symmetry(vertices, tol):
    """Pair vertices with their mirror images via nearest-neighbor search."""
    mirrored = vertices * np.array([-1.0, 1.0, 1.0])
    tree = cKDTree(vertices)
    dist, idx = tree.query(mirrored)
    if np.any(dist > tol):
        bad = int(np.argmax(dist))
        raise ValueError("vertex %d has no mirror partner within %.2g" % (bad, tol))
    sym = idx.astype(np.int64)
    if not np.array_equal(sym[sym], np.arange(len(vertices))):
        raise ValueError("mirror pairing is not an involution; raise tolerance?")
    return sym
