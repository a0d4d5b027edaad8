"""Synthetic talking-head scene: textured renders, landmarks, audio, boxes.

Builds everything the lip-sync pipeline consumes, from the procedural head
rig alone, so end-to-end runs are possible without any external footage.
"""

import json
import os

import numpy as np

from . import containers
from .audio import SAMPLE_RATE, save_wav
from .camera import ProjectiveCamera, project
from .facemodel import (
    FaceParams,
    GazeAngles,
    evaluate_landmarks,
    evaluate_mesh,
    gaze_to_rotation,
)
from .maps import interpolate_attribute
from .pipeline import FaceBox, save_boxes, save_image
from .raster import rasterize
from .rotation import matrix_to_rot6d, rotation_about_axis
from .synthetic import make_synthetic_model

LIGHT_DIR = np.array([0.3, 0.5, 0.85])


def vertex_colors(model, seed=0):
    """Procedural skin-ish texture with enough detail to reveal warps."""
    rng = np.random.default_rng(seed)
    p = model.vertices_mean.astype(np.float64)
    base = np.array([0.78, 0.62, 0.52])
    colors = np.tile(base, (len(p), 1))
    for _ in range(6):
        freq = rng.uniform(4.0, 14.0, size=3)
        phase = rng.uniform(0, 2 * np.pi, size=3)
        chan = rng.integers(0, 3)
        colors[:, chan] += 0.08 * np.sin(p @ freq + phase[0])
    colors[model.eyeball_right.start:model.eyeball_right.stop] = (0.92, 0.92, 0.95)
    colors[model.eyeball_left.start:model.eyeball_left.stop] = (0.92, 0.92, 0.95)
    for ring in (model.iris_ring_right, model.iris_ring_left):
        colors[ring] = (0.25, 0.35, 0.55)
    return np.clip(colors, 0.0, 1.0)


def vertex_normals(verts, tris):
    normals = np.zeros_like(verts)
    a, b, c = verts[tris[:, 0]], verts[tris[:, 1]], verts[tris[:, 2]]
    face_n = np.cross(b - a, c - a)
    for col in range(3):
        np.add.at(normals, tris[:, col], face_n)
    norm = np.linalg.norm(normals, axis=1, keepdims=True)
    return normals / np.maximum(norm, 1e-12)


def shaded_render(model, params, camera, colors, background=None):
    """Lambert-shaded render of the posed mesh as a (3, H, W) float image."""
    verts = evaluate_mesh(model, params)
    tris = model.triangles.astype(np.int64)
    normals = vertex_normals(verts, tris)
    light = LIGHT_DIR / np.linalg.norm(LIGHT_DIR)
    shade = 0.55 + 0.45 * np.clip(normals @ light, 0.0, 1.0)
    lit = colors * shade[:, None]

    fragments = rasterize(verts, tris, camera)
    image = interpolate_attribute(fragments, lit)
    if background is None:
        background = scene_background(camera.image_size)
    fg = fragments.foreground
    return np.where(fg[None], image, background), fragments


def scene_background(image_size):
    h, w = image_size
    yy = np.linspace(0.25, 0.55, h)[None, :, None]
    xx = np.linspace(0.0, 0.12, w)[None, None, :]
    bg = np.zeros((3, h, w))
    bg[0] = 0.30 + yy[0] * 0.3 + xx[0]
    bg[1] = 0.35 + yy[0] * 0.35
    bg[2] = 0.45 + yy[0] * 0.4 - xx[0]
    return bg


def scene_camera(frame_size=320, distance=12.0):
    focal = 1015.0 * frame_size / 224.0
    return ProjectiveCamera(
        focal=focal,
        principal=(frame_size / 2.0, frame_size / 2.0),
        image_size=(frame_size, frame_size),
        rotation=np.diag([1.0, -1.0, -1.0]),
        translation=np.array([0.0, 0.0, distance]),
    )


def scene_params(model, n_frames=50, seed=0):
    """Smooth talking-head parameter sequence; mouth motion stays on the lip
    and jaw shapes so non-mouth regions keep still under mouth swaps."""
    rng = np.random.default_rng(seed)
    alpha = rng.uniform(-0.25, 0.25, size=50)
    t = np.arange(n_frames) / 25.0
    names = list(model.blendshape_names)

    def idx(name):
        return names.index(name)

    frames = []
    for f in range(n_frames):
        beta = np.zeros(55)
        beta[idx("jawOpen")] = 0.25 + 0.22 * np.sin(2 * np.pi * t[f] / 0.45) \
            + 0.1 * np.sin(2 * np.pi * t[f] / 1.3 + 1.0)
        beta[idx("mouthUpperUp_L")] = beta[idx("mouthUpperUp_R")] = \
            0.15 + 0.12 * np.sin(2 * np.pi * t[f] / 0.6 + 0.5)
        beta[idx("mouthLowerDown_L")] = beta[idx("mouthLowerDown_R")] = \
            0.15 + 0.12 * np.sin(2 * np.pi * t[f] / 0.5 + 2.0)
        beta[idx("mouthSmile_L")] = beta[idx("mouthSmile_R")] = \
            0.1 + 0.08 * np.sin(2 * np.pi * t[f] / 1.9)
        beta[idx("browInnerUp_L")] = beta[idx("browInnerUp_R")] = \
            0.2 + 0.15 * np.sin(2 * np.pi * t[f] / 1.6 + 0.3)
        beta = np.clip(beta, 0.0, 1.0)

        yaw = np.deg2rad(6.0) * np.sin(2 * np.pi * t[f] / 2.4)
        pitch = np.deg2rad(4.0) * np.sin(2 * np.pi * t[f] / 1.7 + 1.0)
        roll = np.deg2rad(2.0) * np.sin(2 * np.pi * t[f] / 3.1 + 0.7)
        rot = (rotation_about_axis([0, 1, 0], yaw)
               @ rotation_about_axis([1, 0, 0], pitch)
               @ rotation_about_axis([0, 0, 1], roll))
        trans = np.array([
            0.06 * np.sin(2 * np.pi * t[f] / 2.1),
            0.05 * np.sin(2 * np.pi * t[f] / 2.7 + 0.4),
            0.1 * np.sin(2 * np.pi * t[f] / 3.3),
        ])

        gaze = GazeAngles(
            theta_h=np.deg2rad(10.0) * np.sin(2 * np.pi * t[f] / 2.9),
            theta_v=np.deg2rad(7.0) * np.sin(2 * np.pi * t[f] / 2.2 + 0.9),
        )
        eye_rot = matrix_to_rot6d(gaze_to_rotation(gaze))

        frames.append(FaceParams(
            alpha=alpha.copy(),
            beta=beta,
            rot_head=matrix_to_rot6d(rot),
            trans_head=trans,
            rot_eye_right=eye_rot.copy(),
            rot_eye_left=eye_rot.copy(),
        ))
    return frames


def scene_audio(n_frames=50, seed=0):
    rng = np.random.default_rng(seed)
    n = int(n_frames / 25.0 * SAMPLE_RATE)
    t = np.arange(n) / SAMPLE_RATE
    audio = 0.4 * np.sin(2 * np.pi * (180 + 60 * np.sin(2 * np.pi * t / 0.7)) * t)
    audio += 0.2 * np.sin(2 * np.pi * 1000 * t) * (0.5 + 0.5 * np.sin(2 * np.pi * t / 0.31))
    audio += 0.02 * rng.standard_normal(n)
    envelope = 0.55 + 0.45 * np.sin(2 * np.pi * t / 0.45)
    return np.clip(audio * envelope, -1.0, 1.0)


def make_demo_scene(out_dir, n_frames=50, frame_size=320, seed=0, model_seed=0):
    """Write a complete synthetic scene; returns the path map and truth."""
    os.makedirs(os.path.join(out_dir, "frames"), exist_ok=True)
    model, contours = make_synthetic_model(seed=model_seed)
    camera = scene_camera(frame_size)
    params = scene_params(model, n_frames=n_frames, seed=seed)
    colors = vertex_colors(model, seed=model_seed)

    all_points = []
    box_lo = np.array([np.inf, np.inf])
    box_hi = np.array([-np.inf, -np.inf])
    for f, p in enumerate(params):
        image, fragments = shaded_render(model, p, camera, colors)
        save_image(os.path.join(out_dir, "frames", "%05d.png" % f), image)
        lm = evaluate_landmarks(model, p)
        screen, _ = project(lm, camera)
        all_points.append(screen[:, :2])
        fg = np.argwhere(fragments.foreground)
        if len(fg):
            box_lo = np.minimum(box_lo, fg.min(axis=0))
            box_hi = np.maximum(box_hi, fg.max(axis=0))

    points = np.stack(all_points)
    margin = 10.0
    y1 = max(0.0, box_lo[0] - margin)
    x1 = max(0.0, box_lo[1] - margin)
    y2 = min(float(frame_size), box_hi[0] + margin)
    x2 = min(float(frame_size), box_hi[1] + margin)
    side = max(y2 - y1, x2 - x1)
    cy, cx = (y1 + y2) / 2.0, (x1 + x2) / 2.0
    half = min(side / 2.0, frame_size / 2.0)
    box = FaceBox(y1=max(0.0, cy - half), y2=min(float(frame_size), cy + half),
                  x1=max(0.0, cx - half), x2=min(float(frame_size), cx + half))

    paths = {
        "frames_dir": os.path.join(out_dir, "frames"),
        "boxes_path": os.path.join(out_dir, "boxes.json"),
        "landmarks_path": os.path.join(out_dir, "landmarks.jsonl"),
        "audio_path": os.path.join(out_dir, "audio.wav"),
        "model_path": os.path.join(out_dir, "model.fkt"),
        "contours_path": os.path.join(out_dir, "contours.json"),
        "style_clip_path": os.path.join(out_dir, "style.bsc"),
    }
    save_boxes(paths["boxes_path"], [box])
    containers.save_landmarks(paths["landmarks_path"], points)
    save_wav(paths["audio_path"], scene_audio(n_frames=n_frames, seed=seed))
    containers.save_model(paths["model_path"], model)
    with open(paths["contours_path"], "w") as fh:
        json.dump(contours, fh)
    style = np.stack([p.beta for p in params[:50]]) if n_frames >= 50 else None
    if style is None:
        style = np.stack([params[min(i, n_frames - 1)].beta for i in range(50)])
    from .facemodel import mouth_blendshape_indices
    mouth_idx = mouth_blendshape_indices(model.blendshape_names)
    containers.save_clip(paths["style_clip_path"], style[:, mouth_idx])

    return paths, {"params": params, "model": model, "contours": contours,
                   "camera": camera, "box": box, "points": points}
