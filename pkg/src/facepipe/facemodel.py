"""FACS-blendshape face model with eyeballs.

The model is a linear morphable mesh: mean shape plus 50 identity and 55
named blendshape displacement fields.  Eyeballs are rigid sub-meshes rotated
about stored pivots; gaze blendshape coupling follows the convention that an
identity eye rotation looks straight down the +z axis.

A FaceModel is immutable after construction; every operation here is a pure
function.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .rotation import IDENTITY_6D, DegenerateRotationError, rot6d_to_matrix

IDENTITY_COUNT = 50
BLENDSHAPE_COUNT = 55
LANDMARK_COUNT = 78          # 68 face + 10 iris
FACE_LANDMARK_COUNT = 68

# FACS-style blendshape names; mouth-region shapes carry jaw/mouth/cheek/nose
# prefixes so the default mouth subset can be selected by prefix.
DEFAULT_BLENDSHAPE_NAMES = (
    "browDown_L", "browDown_R", "browInnerUp_L", "browInnerUp_R",
    "browOuterUp_L", "browOuterUp_R",
    "cheekPuff_L", "cheekPuff_R", "cheekSquint_L", "cheekSquint_R",
    "cheekSuck_L", "cheekSuck_R",
    "eyeBlink_L", "eyeBlink_R",
    "eyeLookDown_L", "eyeLookDown_R", "eyeLookIn_L", "eyeLookIn_R",
    "eyeLookOut_L", "eyeLookOut_R", "eyeLookUp_L", "eyeLookUp_R",
    "eyeSquint_L", "eyeSquint_R", "eyeWide_L", "eyeWide_R",
    "jawForward", "jawLeft", "jawOpen", "jawRight",
    "mouthClose", "mouthDimple_L", "mouthDimple_R",
    "mouthFrown_L", "mouthFrown_R", "mouthFunnel", "mouthLeft",
    "mouthLowerDown_L", "mouthLowerDown_R", "mouthPress_L", "mouthPress_R",
    "mouthPucker", "mouthRight", "mouthRollLower", "mouthRollUpper",
    "mouthShrugLower", "mouthShrugUpper", "mouthSmile_L", "mouthSmile_R",
    "mouthStretch_L", "mouthStretch_R", "mouthUpperUp_L", "mouthUpperUp_R",
    "noseSneer_L", "noseSneer_R",
)

MOUTH_PREFIXES = ("jaw", "mouth", "cheek", "nose")
MOUTH_BLENDSHAPE_COUNT = 35


@dataclass(frozen=True)
class EyeballSpec:
    """Contiguous vertex range [start, stop) of one eyeball, plus its pivot."""
    start: int
    stop: int
    pivot: np.ndarray

    @property
    def indices(self):
        return np.arange(self.start, self.stop)


@dataclass(frozen=True)
class FaceModel:
    vertices_mean: np.ndarray        # (V, 3) float32
    triangles: np.ndarray            # (T, 3) uint32
    identity_basis: np.ndarray       # (50, V, 3) float32
    blendshape_basis: np.ndarray     # (55, V, 3) float32
    blendshape_names: tuple
    eyeball_right: EyeballSpec
    eyeball_left: EyeballSpec
    iris_ring_right: np.ndarray      # ordered vertex loop
    iris_ring_left: np.ndarray
    symmetry_map: np.ndarray         # (V,) involutive pairing across x=0
    landmark_triangles: np.ndarray   # (78,)
    landmark_bary: np.ndarray        # (78, 3) weights summing to 1

    @property
    def vertex_count(self):
        return self.vertices_mean.shape[0]

    @property
    def triangle_count(self):
        return self.triangles.shape[0]

    def blendshape_index(self, name):
        return self.blendshape_names.index(name)

    def validate(self):
        v = self.vertex_count
        if self.triangles.size and int(self.triangles.max()) >= v:
            raise ValueError("triangle index out of range")
        if self.identity_basis.shape != (IDENTITY_COUNT, v, 3):
            raise ValueError("identity basis must hold one field per vertex")
        if self.blendshape_basis.shape != (BLENDSHAPE_COUNT, v, 3):
            raise ValueError("blendshape basis must hold one field per vertex")
        if len(self.blendshape_names) != BLENDSHAPE_COUNT:
            raise ValueError("expected %d blendshape names" % BLENDSHAPE_COUNT)
        sym = self.symmetry_map
        if sym.shape != (v,) or not np.array_equal(sym[sym], np.arange(v)):
            raise ValueError("symmetry map must be an involution on vertices")
        if self.landmark_triangles.shape != (LANDMARK_COUNT,):
            raise ValueError("expected %d landmark embeddings" % LANDMARK_COUNT)
        if np.any(np.abs(self.landmark_bary.sum(axis=1) - 1.0) > 1e-6):
            raise ValueError("landmark barycentric weights must sum to 1")
        for eye in (self.eyeball_right, self.eyeball_left):
            if not (0 <= eye.start <= eye.stop <= v):
                raise ValueError("eyeball vertex range out of bounds")
        return self


def mouth_blendshape_indices(names=DEFAULT_BLENDSHAPE_NAMES, override=None):
    """Indices of the mouth-region blendshapes.

    Defaults to the jaw/mouth/cheek/nose prefix groups; pass an explicit name
    list to override the heuristic.
    """
    names = list(names)
    if override is not None:
        return np.array([names.index(n) for n in override], dtype=np.int64)
    picked = [i for i, n in enumerate(names) if n.startswith(MOUTH_PREFIXES)]
    return np.array(picked, dtype=np.int64)


@dataclass(frozen=True)
class FaceParams:
    """Per-frame face state: identity, blendshapes, head and eye pose."""
    alpha: np.ndarray                # (50,)
    beta: np.ndarray                 # (55,), nominally in [0, 1]
    rot_head: np.ndarray             # 6D rotation
    trans_head: np.ndarray           # (3,)
    rot_eye_right: np.ndarray        # 6D rotation
    rot_eye_left: np.ndarray         # 6D rotation
    camera: object = None            # optional ProjectiveCamera

    @staticmethod
    def neutral(camera=None):
        return FaceParams(
            alpha=np.zeros(IDENTITY_COUNT),
            beta=np.zeros(BLENDSHAPE_COUNT),
            rot_head=IDENTITY_6D.copy(),
            trans_head=np.zeros(3),
            rot_eye_right=IDENTITY_6D.copy(),
            rot_eye_left=IDENTITY_6D.copy(),
            camera=camera,
        )

    def validate(self):
        if not np.all(np.isfinite(self.beta)):
            raise ValueError("beta must be finite")
        for r in (self.rot_head, self.rot_eye_right, self.rot_eye_left):
            m = rot6d_to_matrix(r)
            if np.max(np.abs(m.T @ m - np.eye(3))) > 1e-5:
                raise ValueError("decoded rotation is not orthonormal")
        return self

    def to_dict(self):
        d = {
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "rot_head": self.rot_head.tolist(),
            "trans_head": self.trans_head.tolist(),
            "rot_eye_right": self.rot_eye_right.tolist(),
            "rot_eye_left": self.rot_eye_left.tolist(),
        }
        return d

    @staticmethod
    def from_dict(d, camera=None):
        return FaceParams(
            alpha=np.asarray(d["alpha"], dtype=np.float64),
            beta=np.asarray(d["beta"], dtype=np.float64),
            rot_head=np.asarray(d["rot_head"], dtype=np.float64),
            trans_head=np.asarray(d["trans_head"], dtype=np.float64),
            rot_eye_right=np.asarray(d["rot_eye_right"], dtype=np.float64),
            rot_eye_left=np.asarray(d["rot_eye_left"], dtype=np.float64),
            camera=camera,
        )


def evaluate_mesh(model, params):
    """Posed mesh vertices (V, 3) for one parameter set.

    mean + identity/blendshape displacements, then eyeball rotations about
    their pivots, then the rigid head transform.
    """
    if params.alpha.shape != (IDENTITY_COUNT,):
        raise ValueError("alpha must have %d entries" % IDENTITY_COUNT)
    if params.beta.shape != (BLENDSHAPE_COUNT,):
        raise ValueError("beta must have %d entries" % BLENDSHAPE_COUNT)

    verts = model.vertices_mean.astype(np.float64).copy()
    verts += np.einsum("k,kvc->vc", params.alpha, model.identity_basis)
    verts += np.einsum("k,kvc->vc", params.beta, model.blendshape_basis)

    for eye, r6 in (
        (model.eyeball_right, params.rot_eye_right),
        (model.eyeball_left, params.rot_eye_left),
    ):
        if eye.stop > eye.start:
            rot = rot6d_to_matrix(r6)
            sl = slice(eye.start, eye.stop)
            verts[sl] = (verts[sl] - eye.pivot) @ rot.T + eye.pivot

    rot_head = rot6d_to_matrix(params.rot_head)
    return verts @ rot_head.T + params.trans_head


def evaluate_landmarks(model, params):
    """Embedded landmark positions (78, 3) on the posed mesh."""
    verts = evaluate_mesh(model, params)
    corners = verts[model.triangles[model.landmark_triangles].astype(np.int64)]
    return np.einsum("kc,kcd->kd", model.landmark_bary, corners)


# ---------------------------------------------------------------------------
# Gaze coupling


@dataclass(frozen=True)
class GazeAngles:
    """Horizontal/vertical gaze angles and their soft range limits (radians)."""
    theta_h: float
    theta_v: float
    th_max: float = np.deg2rad(30.0)
    tv_max: float = np.deg2rad(30.0)

    def __post_init__(self):
        if self.th_max <= 0 or self.tv_max <= 0:
            raise ValueError("gaze maxima must be positive")


def _check_rotation(rot):
    rot = np.asarray(rot, dtype=np.float64)
    if rot.shape != (3, 3):
        raise ValueError("expected a 3x3 rotation matrix")
    if np.max(np.abs(rot.T @ rot - np.eye(3))) > 1e-4 or np.linalg.det(rot) < 0:
        raise DegenerateRotationError("rotation is not orthonormal")
    return rot


def gaze_to_blendshapes(gaze, side="right", th_max=None, tv_max=None):
    """(lookIn, lookOut, lookUp, lookDown) activations for one eye.

    `gaze` is either a GazeAngles or an eye rotation matrix whose third
    column is the gaze direction.  Angles are normalized by the maxima and
    clamped to [0, 1]; an identity rotation (gaze along +z) gives all zeros.
    The left eye mirrors the horizontal sign so `lookIn` always means
    "toward the nose".
    """
    if isinstance(gaze, GazeAngles):
        th, tv = gaze.theta_h, gaze.theta_v
        th_max = gaze.th_max if th_max is None else th_max
        tv_max = gaze.tv_max if tv_max is None else tv_max
    else:
        rot = _check_rotation(gaze)
        d = rot[:, 2]
        th = np.arctan2(d[0], d[2])
        tv = np.arctan2(d[1], d[2])
    th_max = np.deg2rad(30.0) if th_max is None else th_max
    tv_max = np.deg2rad(30.0) if tv_max is None else tv_max
    if side not in ("right", "left"):
        raise ValueError("side must be 'right' or 'left'")
    if side == "left":
        th = -th

    norm_h = th / th_max
    norm_v = tv / tv_max
    look_in = np.clip(norm_h, 0.0, 1.0)
    look_out = -np.clip(norm_h, -1.0, 0.0)
    look_up = np.clip(norm_v, 0.0, 1.0)
    look_down = -np.clip(norm_v, -1.0, 0.0)
    return np.array([look_in, look_out, look_up, look_down])


def blendshapes_to_gaze(values, side="right", th_max=None, tv_max=None):
    """Inverse of gaze_to_blendshapes for in-range activations.

    Rejects inputs where both members of an opposing pair are active, since
    no gaze direction produces that.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (4,):
        raise ValueError("expected (lookIn, lookOut, lookUp, lookDown)")
    look_in, look_out, look_up, look_down = values
    if look_in > 0 and look_out > 0:
        raise ValueError("lookIn and lookOut cannot both be active")
    if look_up > 0 and look_down > 0:
        raise ValueError("lookUp and lookDown cannot both be active")
    th_max = np.deg2rad(30.0) if th_max is None else th_max
    tv_max = np.deg2rad(30.0) if tv_max is None else tv_max

    th = (look_in - look_out) * th_max
    if side == "left":
        th = -th
    tv = (look_up - look_down) * tv_max
    return GazeAngles(theta_h=th, theta_v=tv, th_max=th_max, tv_max=tv_max)


def gaze_to_rotation(gaze):
    """A proper rotation whose third column realizes the gaze direction."""
    d = np.array([np.tan(gaze.theta_h), np.tan(gaze.theta_v), 1.0])
    d /= np.linalg.norm(d)
    seed = np.array([0.0, 1.0, 0.0]) if abs(d[0]) > 0.9 else np.array([1.0, 0.0, 0.0])
    b1 = seed - np.dot(seed, d) * d
    b1 /= np.linalg.norm(b1)
    b2 = np.cross(d, b1)
    return np.stack([b1, b2, d], axis=-1)


# ---------------------------------------------------------------------------
# Mouth fusion and blendshape range penalty


def fuse_mouth(target, mouth_values, mouth_indices):
    """Replace the mouth subset of target.beta with `mouth_values`.

    `mouth_indices` must list exactly 35 distinct blendshape indices; every
    other field of the parameters is returned untouched.
    """
    idx = np.asarray(mouth_indices, dtype=np.int64)
    if idx.shape != (MOUTH_BLENDSHAPE_COUNT,):
        raise ValueError("mouth index set must have exactly %d entries"
                         % MOUTH_BLENDSHAPE_COUNT)
    if len(np.unique(idx)) != MOUTH_BLENDSHAPE_COUNT:
        raise ValueError("mouth index set contains duplicates")
    if idx.min() < 0 or idx.max() >= BLENDSHAPE_COUNT:
        raise ValueError("mouth index out of range")
    values = np.asarray(mouth_values, dtype=np.float64)
    if values.shape != (MOUTH_BLENDSHAPE_COUNT,):
        raise ValueError("expected %d mouth values" % MOUTH_BLENDSHAPE_COUNT)

    beta = target.beta.astype(np.float64).copy()
    beta[idx] = values
    return replace(target, beta=beta)


def constraint_violation(beta):
    """mean(max(abs(beta - 0.5), 0.5) - 0.5): zero iff all entries in [0, 1]."""
    beta = np.asarray(beta, dtype=np.float64)
    return float(np.mean(np.maximum(np.abs(beta - 0.5), 0.5) - 0.5))


# ---------------------------------------------------------------------------
# Surface embedding (used for landmark tables and re-embedding after edits)


def closest_point_barycentric(points, vertices, triangles):
    """For each point, the closest mesh triangle and barycentric coordinates.

    Returns (tri_idx (K,), bary (K, 3)).  Brute force over triangles per
    point; fine for landmark-table sizes.
    """
    points = np.asarray(points, dtype=np.float64)
    verts = np.asarray(vertices, dtype=np.float64)
    tris = np.asarray(triangles, dtype=np.int64)
    a, b, c = verts[tris[:, 0]], verts[tris[:, 1]], verts[tris[:, 2]]

    tri_idx = np.zeros(len(points), dtype=np.int64)
    bary = np.zeros((len(points), 3))
    for k, p in enumerate(points):
        v, w = _closest_point_vw(p, a, b, c)
        q = a + v[:, None] * (b - a) + w[:, None] * (c - a)
        best = int(np.argmin(np.sum((q - p) ** 2, axis=1)))
        tri_idx[k] = best
        bary[k] = (1.0 - v[best] - w[best], v[best], w[best])
    return tri_idx, bary


def _closest_point_vw(p, a, b, c):
    """Closest point to p on each triangle (a, b, c), as (v, w) coordinates."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.sum(ab * ap, axis=1)
    d2 = np.sum(ac * ap, axis=1)
    bp = p - b
    d3 = np.sum(ab * bp, axis=1)
    d4 = np.sum(ac * bp, axis=1)
    cp = p - c
    d5 = np.sum(ab * cp, axis=1)
    d6 = np.sum(ac * cp, axis=1)

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v_face = np.where(denom != 0, vb / denom, 0.0)
        w_face = np.where(denom != 0, vc / denom, 0.0)
        v_ab = np.where(d1 - d3 != 0, d1 / (d1 - d3), 0.0)
        w_ac = np.where(d2 - d6 != 0, d2 / (d2 - d6), 0.0)
        e1 = d4 - d3
        e2 = d5 - d6
        w_bc = np.where(e1 + e2 != 0, e1 / (e1 + e2), 0.0)

    # Apply region cases in reverse of the usual early-return order, so the
    # highest-priority condition lands last.
    v = v_face.copy()
    w = w_face.copy()

    on_bc = (va <= 0) & (e1 >= 0) & (e2 >= 0)
    v = np.where(on_bc, 1.0 - w_bc, v)
    w = np.where(on_bc, w_bc, w)
    on_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    v = np.where(on_ac, 0.0, v)
    w = np.where(on_ac, w_ac, w)
    at_c = (d6 >= 0) & (d5 <= d6)
    v = np.where(at_c, 0.0, v)
    w = np.where(at_c, 1.0, w)
    on_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    v = np.where(on_ab, v_ab, v)
    w = np.where(on_ab, 0.0, w)
    at_b = (d3 >= 0) & (d4 <= d3)
    v = np.where(at_b, 1.0, v)
    w = np.where(at_b, 0.0, w)
    at_a = (d1 <= 0) & (d2 <= 0)
    v = np.where(at_a, 0.0, v)
    w = np.where(at_a, 0.0, w)
    return v, w
