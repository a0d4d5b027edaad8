"""Double-reenactment lip-sync pipeline.

For every frame the cropped face is reenacted twice with the mouth-fused
parameters: once from a fixed reference (the first crop) and once from the
current crop.  The current-frame result supplies the adjusted chin contour
and surroundings; the fixed-reference mouth is then composited into it
through a geometry-derived mouth mask, and the blend is pasted back into the
full frame.  The generator is pluggable; the built-in mock warps the
reference crop by the model flow map.
"""

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from PIL import Image
from scipy import ndimage

from . import containers
from .audio import CLIP_SAMPLES, SAMPLE_RATE, load_wav, mel_chunk
from .camera import ProjectiveCamera, default_camera, project
from .diffusion import (
    CLIP_FRAMES,
    CONTEXT_FRAMES,
    GUIDANCE_SCALE,
    FixedClipDenoiser,
    WaveDenoiser,
    build_schedule,
    sample,
)
from .facemodel import (DEFAULT_BLENDSHAPE_NAMES, evaluate_mesh, fuse_mouth,
                        mouth_blendshape_indices)
from .fitting import FitConfig, LandmarkTrack, fit_sequence
from .maps import render_maps
from .warp import composite_blend, locality_metric, warp_stable

FRAME_SAMPLES = SAMPLE_RATE // 25            # audio samples per video frame
WAVE_COLUMNS = ("jawOpen", "mouthUpperUp_L", "mouthUpperUp_R",
                "mouthLowerDown_L", "mouthLowerDown_R")
WAVE_AMPLITUDES = (0.5, 0.22, 0.22, 0.3, 0.3)


# ---------------------------------------------------------------------------
# Boxes and the chin-line metric


@dataclass(frozen=True)
class FaceBox:
    y1: float
    y2: float
    x1: float
    x2: float

    def __post_init__(self):
        if not (self.y2 > self.y1 and self.x2 > self.x1):
            raise ValueError("degenerate face box")

    @property
    def height(self):
        return self.y2 - self.y1

    @property
    def width(self):
        return self.x2 - self.x1


def delta_cl(orig_boxes, lipsync_boxes):
    """Chin-line displacement per frame: |y2_o - y2_l| / (y2_o - y1_o)."""
    if len(orig_boxes) != len(lipsync_boxes):
        raise ValueError("box tracks must have equal length")
    values = []
    for o, l in zip(orig_boxes, lipsync_boxes):
        if o.y2 == o.y1:
            raise ValueError("degenerate original box")
        values.append(abs(o.y2 - l.y2) / (o.y2 - o.y1))
    values = np.asarray(values, dtype=np.float64)
    return values, float(values.mean())


# ---------------------------------------------------------------------------
# Image helpers (float images are (C, H, W) in [0, 1])


def load_image(path):
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0
    return np.transpose(arr, (2, 0, 1))


def save_image(path, image):
    arr = np.clip(np.asarray(image), 0.0, 1.0)
    arr = (np.transpose(arr, (1, 2, 0)) * 255.0).round().astype(np.uint8)
    Image.fromarray(arr).save(path)


def resize_image(image, size):
    """Bilinear resize of (C, H, W) float data to (size, size)."""
    out = np.empty((image.shape[0], size, size))
    for c in range(image.shape[0]):
        im = Image.fromarray(np.asarray(image[c], dtype=np.float32))
        out[c] = np.asarray(im.resize((size, size), Image.BILINEAR))
    return out


# ---------------------------------------------------------------------------
# Geometry-derived masks


def fill_polygon(shape, polygon):
    """Binary fill of a 2D polygon (crossing-number rule) on pixel centers."""
    h, w = shape
    poly = np.asarray(polygon, dtype=np.float64)
    ys = np.arange(h) + 0.5
    xs = np.arange(w) + 0.5
    inside = np.zeros((h, w), dtype=bool)
    x0s, y0s = poly[:, 0], poly[:, 1]
    x1s, y1s = np.roll(x0s, -1), np.roll(y0s, -1)
    for x0, y0, x1, y1 in zip(x0s, y0s, x1s, y1s):
        if y0 == y1:
            continue
        crosses = (ys[:, None] >= min(y0, y1)) & (ys[:, None] < max(y0, y1))
        t = (ys - y0) / (y1 - y0)
        cross_x = x0 + t * (x1 - x0)
        inside ^= crosses & (xs[None, :] < cross_x[:, None])
    return inside


def disk(radius):
    r = int(np.ceil(radius))
    yy, xx = np.ogrid[-r:r + 1, -r:r + 1]
    return (xx * xx + yy * yy) <= radius * radius


def dilate(mask, radius):
    if radius <= 0:
        return mask.copy()
    return ndimage.binary_dilation(mask, structure=disk(radius))


def boundary_ring(mask, radius):
    """Band of +-radius pixels around the boundary of a binary mask."""
    grown = ndimage.binary_dilation(mask, structure=disk(radius))
    shrunk = ndimage.binary_erosion(mask, structure=disk(radius))
    return grown & ~shrunk


def polyline_band(shape, points, radius, closed=False):
    """Pixels within `radius` of a 2D polyline."""
    h, w = shape
    pts = np.asarray(points, dtype=np.float64)
    mask = np.zeros((h, w), dtype=bool)
    seg_a = pts[:-1]
    seg_b = pts[1:]
    if closed and len(pts) > 2:
        seg_a = np.vstack([seg_a, pts[-1]])
        seg_b = np.vstack([seg_b, pts[0]])
    for a, b in zip(seg_a, seg_b):
        lo_x = max(0, int(np.floor(min(a[0], b[0]) - radius - 1)))
        hi_x = min(w - 1, int(np.ceil(max(a[0], b[0]) + radius + 1)))
        lo_y = max(0, int(np.floor(min(a[1], b[1]) - radius - 1)))
        hi_y = min(h - 1, int(np.ceil(max(a[1], b[1]) + radius + 1)))
        if lo_x > hi_x or lo_y > hi_y:
            continue
        px = np.arange(lo_x, hi_x + 1) + 0.5
        py = (np.arange(lo_y, hi_y + 1) + 0.5)[:, None]
        d = b - a
        denom = d[0] * d[0] + d[1] * d[1]
        t = 0.0 if denom < 1e-18 else np.clip(
            ((px - a[0]) * d[0] + (py - a[1]) * d[1]) / denom, 0.0, 1.0)
        dist = np.hypot(px - (a[0] + t * d[0]), py - (a[1] + t * d[1]))
        mask[lo_y:hi_y + 1, lo_x:hi_x + 1] |= dist <= radius
    return mask


def mouth_mask(model, params, camera, contours, dilate_radius):
    """Filled inner-lip polygon of the posed mesh, dilated."""
    verts = evaluate_mesh(model, params)
    screen, _ = project(verts, camera)
    ring = np.asarray(contours["inner_lips"]["vertices"], dtype=np.int64)
    mask = fill_polygon(camera.image_size, screen[ring, :2])
    return dilate(mask, dilate_radius)


def jawline_band(model, params, camera, contours, radius):
    verts = evaluate_mesh(model, params)
    screen, _ = project(verts, camera)
    line = np.asarray(contours["jawline"]["vertices"], dtype=np.int64)
    return polyline_band(camera.image_size, screen[line, :2], radius)


# ---------------------------------------------------------------------------
# Generators


def mock_generator(reference_image, maps):
    """Reenact by warping the reference crop with the model flow map.

    The flow map stores reference-minus-driving displacement on the driving
    pixel grid, which is exactly the backward-sampling flow that pulls
    reference pixels to driving positions; masking with the foreground leaves
    the background untouched.
    """
    reference_image = np.asarray(reference_image, dtype=np.float64)
    if reference_image.shape[1:] != maps.F_3dmm.shape[1:]:
        raise ValueError("reference resolution %s does not match maps %s"
                         % (reference_image.shape[1:], maps.F_3dmm.shape[1:]))
    return warp_stable(reference_image, maps.F_3dmm, maps.foreground)


GENERATORS = {"mock": mock_generator}


def make_denoiser(name, model=None, fitted_mouth=None):
    """Built-in denoiser plugins: echo, wave, or file:<clip.bsc>."""
    if name == "echo":
        if fitted_mouth is None:
            raise ValueError("echo denoiser needs a recorded clip")
        return FixedClipDenoiser(fitted_mouth)
    if name == "wave":
        names = model.blendshape_names if model is not None \
            else DEFAULT_BLENDSHAPE_NAMES
        mouth_idx = mouth_blendshape_indices(names)
        mouth_names = [names[i] for i in mouth_idx]
        cols = [mouth_names.index(n) for n in WAVE_COLUMNS if n in mouth_names]
        amps = [a for n, a in zip(WAVE_COLUMNS, WAVE_AMPLITUDES)
                if n in mouth_names]
        return WaveDenoiser(cols, amps)
    if name.startswith("file:"):
        values, _ = containers.load_clip(name[5:])
        return FixedClipDenoiser(values)
    raise ValueError("unknown denoiser %r" % name)


# ---------------------------------------------------------------------------
# Job description


@dataclass
class LipsyncJob:
    frames_dir: str
    boxes_path: str
    landmarks_path: str
    audio_path: str
    model_path: str
    contours_path: str
    out_dir: str
    style_clip_path: str = None
    generator: str = "mock"
    denoiser: str = "echo"
    seed: int = 0
    fit_resolution: int = 224
    gen_resolution: int = 256
    fit_iterations: int = 2500
    mouth_dilate_radius: float = 24.0
    chin_band_radius: float = 8.0
    guidance_scale: float = GUIDANCE_SCALE
    sample_steps: int = 50
    threads: int = 1

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @staticmethod
    def from_json(path):
        with open(path) as fh:
            doc = json.load(fh)
        base = os.path.dirname(os.path.abspath(path))
        for key in ("frames_dir", "boxes_path", "landmarks_path", "audio_path",
                    "model_path", "contours_path", "out_dir", "style_clip_path"):
            if doc.get(key) and not os.path.isabs(doc[key]):
                doc[key] = os.path.join(base, doc[key])
        return LipsyncJob(**doc)


def load_boxes(path):
    with open(path) as fh:
        doc = json.load(fh)
    return [FaceBox(y1=b["y1"], y2=b["y2"], x1=b["x1"], x2=b["x2"]) for b in doc]


def save_boxes(path, boxes):
    with open(path, "w") as fh:
        json.dump([{"y1": b.y1, "y2": b.y2, "x1": b.x1, "x2": b.x2}
                   for b in boxes], fh)


# ---------------------------------------------------------------------------
# The pipeline


def crop_frame(frame, box, size):
    crop = frame[:, int(box.y1):int(box.y2), int(box.x1):int(box.x2)]
    return resize_image(crop, size)


def frame_landmarks_to_crop(points, box, size):
    scale_x = size / box.width
    scale_y = size / box.height
    out = points.copy()
    out[..., 0] = (points[..., 0] - box.x1) * scale_x
    out[..., 1] = (points[..., 1] - box.y1) * scale_y
    return out


def sample_mouth_track(model, audio, fitted_mouth, style, denoiser_name,
                       n_frames, seed, guidance_scale, steps):
    """Windowed clip sampling over the whole sequence (5-frame overlap)."""
    schedule = build_schedule()
    mouth = np.zeros((n_frames, fitted_mouth.shape[1]))
    new_per_window = CLIP_FRAMES - CONTEXT_FRAMES
    start = 0
    window = 0
    while start < n_frames:
        seg0 = start - CONTEXT_FRAMES
        a0 = max(0, seg0) * FRAME_SAMPLES
        segment = audio[a0:a0 + CLIP_SAMPLES]
        if len(segment) < CLIP_SAMPLES:
            segment = np.pad(segment, (0, CLIP_SAMPLES - len(segment)))
        chunks = mel_chunk(segment)

        if start == 0:
            context = fitted_mouth[:CONTEXT_FRAMES]
            first_new = CONTEXT_FRAMES
            mouth[:CONTEXT_FRAMES] = context
        else:
            context = mouth[start - CONTEXT_FRAMES:start]
            first_new = start

        denoiser = make_denoiser(denoiser_name, model,
                                 _window_recorded(fitted_mouth, seg0, n_frames))
        clip = sample(denoiser, context, chunks.chunks, style, schedule,
                      steps=steps, seed=seed + window,
                      guidance_scale=guidance_scale)
        take = min(new_per_window, n_frames - first_new)
        mouth[first_new:first_new + take] = \
            clip.values[CONTEXT_FRAMES:CONTEXT_FRAMES + take]
        start = first_new + take
        window += 1
    return mouth


def _window_recorded(fitted_mouth, seg0, n_frames):
    lo = max(0, seg0)
    rows = [fitted_mouth[min(lo + i, n_frames - 1)] for i in range(CLIP_FRAMES)]
    return np.asarray(rows)


def lipsync_run(job):
    """Run the full pipeline; returns the report dict (also written to disk)."""
    os.makedirs(job.out_dir, exist_ok=True)

    model = containers.load_model(job.model_path)
    with open(job.contours_path) as fh:
        contours = json.load(fh)
    frame_files = sorted(
        f for f in os.listdir(job.frames_dir) if f.endswith(".png"))
    frames = [load_image(os.path.join(job.frames_dir, f)) for f in frame_files]
    n_frames = len(frames)
    boxes = load_boxes(job.boxes_path)
    if len(boxes) == 1:
        boxes = boxes * n_frames
    if len(boxes) != n_frames:
        raise ValueError("have %d boxes for %d frames" % (len(boxes), n_frames))

    audio, rate = load_wav(job.audio_path)
    expected = n_frames * FRAME_SAMPLES
    if abs(len(audio) - expected) > FRAME_SAMPLES:
        raise ValueError("audio length %d does not match %d frames"
                         % (len(audio), n_frames))

    points, visible = containers.load_landmarks(job.landmarks_path)
    if len(points) != n_frames:
        raise ValueError("landmark track length mismatch")

    # 1+2: crop-space fitting
    fit_cam = default_camera(job.fit_resolution)
    crop_pts = np.stack([
        frame_landmarks_to_crop(points[f], boxes[f], job.fit_resolution)
        for f in range(n_frames)])
    track = LandmarkTrack(points=crop_pts, visible=visible)
    fit = fit_sequence(track, model, camera=fit_cam,
                       config=FitConfig(iterations=job.fit_iterations))
    fitted = fit.frames

    # 3: audio to mouth blendshapes
    mouth_idx = mouth_blendshape_indices(model.blendshape_names)
    fitted_mouth = np.stack([p.beta[mouth_idx] for p in fitted])
    style = _load_style(job.style_clip_path, fitted_mouth)
    mouth_track = sample_mouth_track(
        model, audio, fitted_mouth, style, job.denoiser, n_frames,
        job.seed, job.guidance_scale, job.sample_steps)

    # 4: fuse
    fused = [fuse_mouth(fitted[f], mouth_track[f], mouth_idx)
             for f in range(n_frames)]

    # 5..8: reenact twice, mask, blend, paste
    gen_cam = _scaled_camera(fit_cam, job.gen_resolution / job.fit_resolution)
    generator = GENERATORS[job.generator]
    crops = [crop_frame(frames[f], boxes[f], job.gen_resolution)
             for f in range(n_frames)]

    def process(f):
        maps_ff = render_maps(model, fitted[0], fused[f], gen_cam, contours)
        maps_cf = render_maps(model, fitted[f], fused[f], gen_cam, contours)
        i_ff = generator(crops[0], maps_ff)
        i_cf = generator(crops[f], maps_cf)
        k_mouth = mouth_mask(model, fused[f], gen_cam, contours,
                             job.mouth_dilate_radius).astype(np.float64)
        blended = composite_blend(i_cf, i_ff, k_mouth)

        band = jawline_band(model, fitted[f], gen_cam, contours,
                            job.chin_band_radius)
        band |= jawline_band(model, fused[f], gen_cam, contours,
                             job.chin_band_radius)
        fg_union = (maps_cf.foreground[0] > 0) | _foreground(model, fitted[f], gen_cam)
        ring = boundary_ring(fg_union, 2.0)
        exclusion = (k_mouth > 0) | band | ring

        loc = locality_metric(i_cf, crops[f], ((k_mouth > 0) | band).astype(np.float64))
        outside = locality_metric(blended, crops[f], exclusion.astype(np.float64))

        out_frame = frames[f].copy()
        box = boxes[f]
        y1, y2 = int(box.y1), int(box.y2)
        x1, x2 = int(box.x1), int(box.x2)
        patch = _resize_to(blended, (y2 - y1, x2 - x1))
        out_frame[:, y1:y2, x1:x2] = patch

        orig_bbox = _mesh_box(model, fitted[f], gen_cam)
        sync_bbox = _mesh_box(model, fused[f], gen_cam)
        return (f, out_frame, loc, outside, orig_bbox, sync_bbox)

    if job.threads > 1:
        with ThreadPoolExecutor(max_workers=job.threads) as pool:
            results = list(pool.map(process, range(n_frames)))
    else:
        results = [process(f) for f in range(n_frames)]

    locality = np.zeros(n_frames)
    outside_change = np.zeros(n_frames)
    orig_boxes, sync_boxes = [], []
    for f, out_frame, loc, outside, ob, sb in results:
        save_image(os.path.join(job.out_dir, frame_files[f]), out_frame)
        locality[f] = loc
        outside_change[f] = outside
        orig_boxes.append(ob)
        sync_boxes.append(sb)

    cl_values, cl_mean = delta_cl(orig_boxes, sync_boxes)
    report = {
        "config": job.to_dict(),
        "frames": n_frames,
        "fit": {
            "landmark_rmse": fit.landmark_rmse.tolist(),
            "converged": bool(fit.converged),
            "iterations": int(fit.iterations),
        },
        "locality_outside_mouth_chin": locality.tolist(),
        "locality_mean": float(locality.mean()),
        "outside_change": outside_change.tolist(),
        "outside_change_mean": float(outside_change.mean()),
        "delta_cl": cl_values.tolist(),
        "delta_cl_mean": cl_mean,
    }
    with open(os.path.join(job.out_dir, "report.json"), "w") as fh:
        json.dump(report, fh, indent=1)
    containers.save_params(os.path.join(job.out_dir, "fitted_params.json"),
                           fitted, camera=fit_cam,
                           diagnostics=fit.diagnostics)
    containers.save_clip(os.path.join(job.out_dir, "mouth_track.bsc"),
                         mouth_track[:CLIP_FRAMES]
                         if n_frames >= CLIP_FRAMES else np.pad(
                             mouth_track,
                             ((0, CLIP_FRAMES - n_frames), (0, 0))))
    return report


def _load_style(path, fitted_mouth):
    if path:
        values, _ = containers.load_clip(path)
        return values
    rows = [fitted_mouth[min(i, len(fitted_mouth) - 1)]
            for i in range(CLIP_FRAMES)]
    return np.asarray(rows)


def _scaled_camera(camera, scale):
    return ProjectiveCamera(
        focal=camera.focal * scale,
        principal=(camera.principal[0] * scale, camera.principal[1] * scale),
        image_size=(int(round(camera.image_size[0] * scale)),
                    int(round(camera.image_size[1] * scale))),
        rotation=camera.rotation,
        translation=camera.translation,
    )


def _foreground(model, params, camera):
    from .raster import rasterize
    verts = evaluate_mesh(model, params)
    return rasterize(verts, model.triangles, camera).foreground


def _resize_to(image, hw):
    h, w = hw
    out = np.empty((image.shape[0], h, w))
    for c in range(image.shape[0]):
        im = Image.fromarray(np.asarray(image[c], dtype=np.float32))
        out[c] = np.asarray(im.resize((w, h), Image.BILINEAR))
    return out


def _mesh_box(model, params, camera):
    verts = evaluate_mesh(model, params)
    screen, ok = project(verts, camera)
    pts = screen[ok]
    return FaceBox(y1=float(pts[:, 1].min()), y2=float(pts[:, 1].max()),
                   x1=float(pts[:, 0].min()), x2=float(pts[:, 0].max()))
