"""Binary and JSON container formats.

All binary containers share one layout: a 4-byte magic tag, a little-endian
uint32 header length, a UTF-8 JSON header, then raw little-endian array
blocks in the order the header declares.
"""

import json
import struct

import numpy as np

from .camera import ProjectiveCamera
from .facemodel import EyeballSpec, FaceModel, FaceParams

FKT_MAGIC = b"FKT1"
FMAP_MAGIC = b"FMAP"
BSC_MAGIC = b"BSC1"


class ContainerFormatError(ValueError):
    """Raised when a container file is malformed or has the wrong magic."""


def _write_container(path, magic, header, arrays):
    payload = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", len(payload)))
        fh.write(payload)
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr).tobytes())


def _read_container(path, magic):
    with open(path, "rb") as fh:
        got = fh.read(4)
        if got != magic:
            raise ContainerFormatError(
                "bad magic in %s: expected %r, found %r" % (path, magic, got))
        (hlen,) = struct.unpack("<I", fh.read(4))
        try:
            header = json.loads(fh.read(hlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ContainerFormatError("corrupt header in %s: %s" % (path, exc))
        data = fh.read()
    arrays = []
    offset = 0
    for block in header["blocks"]:
        dtype = np.dtype(block["dtype"])
        shape = tuple(block["shape"])
        nbytes = dtype.itemsize * int(np.prod(shape))
        if offset + nbytes > len(data):
            raise ContainerFormatError("truncated block %r in %s" % (block["name"], path))
        arrays.append(np.frombuffer(data, dtype, count=int(np.prod(shape)),
                                    offset=offset).reshape(shape).copy())
        offset += nbytes
    return header, arrays


# ---------------------------------------------------------------------------
# FKT1: face model


def save_model(path, model):
    header = {
        "version": 1,
        "counts": {
            "vertices": int(model.vertex_count),
            "triangles": int(model.triangle_count),
            "identity": int(model.identity_basis.shape[0]),
            "blendshapes": int(model.blendshape_basis.shape[0]),
            "landmarks": int(model.landmark_triangles.shape[0]),
        },
        "blendshape_names": list(model.blendshape_names),
        "eyeball_right": _eye_dict(model.eyeball_right),
        "eyeball_left": _eye_dict(model.eyeball_left),
        "iris_ring_right": model.iris_ring_right.tolist(),
        "iris_ring_left": model.iris_ring_left.tolist(),
        "blocks": [
            {"name": "vertices_mean", "dtype": "<f4",
             "shape": [model.vertex_count, 3]},
            {"name": "identity_basis", "dtype": "<f4",
             "shape": list(model.identity_basis.shape)},
            {"name": "blendshape_basis", "dtype": "<f4",
             "shape": list(model.blendshape_basis.shape)},
            {"name": "triangles", "dtype": "<u4",
             "shape": [model.triangle_count, 3]},
            {"name": "symmetry_map", "dtype": "<u4",
             "shape": [model.vertex_count]},
            {"name": "landmark_triangles", "dtype": "<u4",
             "shape": [len(model.landmark_triangles)]},
            {"name": "landmark_bary", "dtype": "<f4",
             "shape": list(model.landmark_bary.shape)},
        ],
    }
    arrays = [
        model.vertices_mean.astype("<f4"),
        model.identity_basis.astype("<f4"),
        model.blendshape_basis.astype("<f4"),
        model.triangles.astype("<u4"),
        model.symmetry_map.astype("<u4"),
        model.landmark_triangles.astype("<u4"),
        model.landmark_bary.astype("<f4"),
    ]
    _write_container(path, FKT_MAGIC, header, arrays)


def load_model(path):
    header, arrays = _read_container(path, FKT_MAGIC)
    by_name = {b["name"]: a for b, a in zip(header["blocks"], arrays)}
    model = FaceModel(
        vertices_mean=by_name["vertices_mean"].astype(np.float32),
        triangles=by_name["triangles"].astype(np.uint32),
        identity_basis=by_name["identity_basis"].astype(np.float32),
        blendshape_basis=by_name["blendshape_basis"].astype(np.float32),
        blendshape_names=tuple(header["blendshape_names"]),
        eyeball_right=_eye_from_dict(header["eyeball_right"]),
        eyeball_left=_eye_from_dict(header["eyeball_left"]),
        iris_ring_right=np.asarray(header["iris_ring_right"], dtype=np.int64),
        iris_ring_left=np.asarray(header["iris_ring_left"], dtype=np.int64),
        symmetry_map=by_name["symmetry_map"].astype(np.int64),
        landmark_triangles=by_name["landmark_triangles"].astype(np.int64),
        landmark_bary=by_name["landmark_bary"].astype(np.float32),
    )
    return model.validate()


def _eye_dict(eye):
    return {"start": int(eye.start), "stop": int(eye.stop),
            "pivot": [float(x) for x in eye.pivot]}


def _eye_from_dict(d):
    return EyeballSpec(int(d["start"]), int(d["stop"]),
                       pivot=np.asarray(d["pivot"], dtype=np.float64))


# ---------------------------------------------------------------------------
# FMAP: rendered conditioning maps


def save_map(path, array, semantic):
    array = np.asarray(array)
    if array.ndim != 3:
        raise ValueError("maps are stored as (channels, H, W)")
    header = {
        "semantic": semantic,
        "channels": int(array.shape[0]),
        "height": int(array.shape[1]),
        "width": int(array.shape[2]),
        "blocks": [{"name": "data", "dtype": "<f4", "shape": list(array.shape)}],
    }
    _write_container(path, FMAP_MAGIC, header, [array.astype("<f4")])


def load_map(path):
    header, arrays = _read_container(path, FMAP_MAGIC)
    return arrays[0].astype(np.float32), header


# ---------------------------------------------------------------------------
# BSC1: blendshape clips


def save_clip(path, values, fps=25, context_frames=5, names=None):
    values = np.asarray(values)
    header = {
        "fps": int(fps),
        "context_frames": int(context_frames),
        "frames": int(values.shape[0]),
        "values": int(values.shape[1]),
        "blocks": [{"name": "data", "dtype": "<f4", "shape": list(values.shape)}],
    }
    if names is not None:
        header["names"] = list(names)
    _write_container(path, BSC_MAGIC, header, [values.astype("<f4")])


def load_clip(path):
    header, arrays = _read_container(path, BSC_MAGIC)
    return arrays[0].astype(np.float32), header


# ---------------------------------------------------------------------------
# Fitted parameter sequences (JSON)


def save_params(path, frames, camera=None, shared_alpha=True, diagnostics=None):
    doc = {
        "camera": camera.to_dict() if camera is not None else None,
        "shared_alpha": bool(shared_alpha),
        "frames": [p.to_dict() for p in frames],
        "diagnostics": diagnostics or {},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_params(path):
    with open(path) as fh:
        doc = json.load(fh)
    camera = ProjectiveCamera.from_dict(doc["camera"]) if doc.get("camera") else None
    frames = [FaceParams.from_dict(d, camera=camera) for d in doc["frames"]]
    return frames, camera, doc.get("diagnostics", {})


# ---------------------------------------------------------------------------
# Landmark tracks (JSON lines, one record per frame)


def save_landmarks(path, points, visible=None):
    points = np.asarray(points, dtype=np.float64)
    if visible is None:
        visible = np.ones(points.shape[:2], dtype=bool)
    with open(path, "w") as fh:
        for f in range(points.shape[0]):
            rec = {
                "frame": f,
                "points": points[f].tolist(),
                "visible": [bool(v) for v in visible[f]],
            }
            fh.write(json.dumps(rec) + "\n")


def load_landmarks(path):
    points, visible = [], []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            points.append(rec["points"])
            visible.append(rec["visible"])
    return np.asarray(points, dtype=np.float64), np.asarray(visible, dtype=bool)
