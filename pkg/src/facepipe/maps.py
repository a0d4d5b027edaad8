"""Conditioning maps rendered from the face model.

Three maps condition downstream generators: P stores the mean-shape (pose and
expression independent) surface coordinates of each visible point, S is a
two-channel sketch (face contours, iris rings), and the flow map stores the
reference-minus-driving screen displacement of the surface visible at each
driving pixel.  P and the flow map are identically zero off the foreground.
"""

from dataclasses import dataclass

import numpy as np

from .camera import project
from .facemodel import evaluate_mesh
from .raster import rasterize

SKETCH_SIGMA = 0.5          # px, gaussian stroke falloff
SKETCH_REACH = 1.0          # px, strokes vanish beyond this distance
DEPTH_TOLERANCE = 0.05      # model units, hidden-line bias


@dataclass
class RenderMaps:
    P: np.ndarray            # (3, H, W) mean-face coordinates
    S: np.ndarray            # (2, H, W) sketch in [0, 1]
    F_3dmm: np.ndarray       # (2, H, W) reference-minus-driving flow, px
    foreground: np.ndarray   # (1, H, W) binary


def interpolate_attribute(fragments, values):
    """Barycentric interpolation of per-vertex values over covered pixels.

    Returns (C, H, W), zero outside the foreground.
    """
    values = np.asarray(values, dtype=np.float64)
    h, w = fragments.pix_to_face.shape
    out = np.zeros((values.shape[1], h, w))
    mask = fragments.foreground
    if not mask.any():
        return out
    corners = fragments.triangles[fragments.pix_to_face[mask]]
    vals = values[corners]                       # (K, 3, C)
    mixed = np.einsum("kc,kcd->kd", fragments.bary[mask], vals)
    out[:, mask] = mixed.T
    return out


def render_P(fragments, facial_coord_vertices):
    """Mean-face coordinate map (3, H, W) from driving-mesh fragments."""
    return interpolate_attribute(fragments, facial_coord_vertices)


def flow_from_fragments(fragments, screen_ref):
    """Flow map (2, H, W): reference minus driving screen positions."""
    disp = np.asarray(screen_ref)[:, :2] - fragments.screen[:, :2]
    return interpolate_attribute(fragments, disp)


def flow_3dmm(model, params_ref, params_dri, camera):
    """Rasterize the driving mesh and emit (flow (2, H, W), foreground)."""
    verts_dri = evaluate_mesh(model, params_dri)
    verts_ref = evaluate_mesh(model, params_ref)
    fragments = rasterize(verts_dri, model.triangles, camera)
    screen_ref, _ = project(verts_ref, camera)
    flow = flow_from_fragments(fragments, screen_ref)
    return flow, fragments.foreground.copy()


def draw_polylines(channel, polylines, screen, depth, closed_flags,
                   sigma=SKETCH_SIGMA, reach=SKETCH_REACH,
                   depth_tolerance=DEPTH_TOLERANCE):
    """Depth-tested anti-aliased strokes, max-composited into `channel`.

    Each polyline is a list of screen-space points (x, y, z); a stroke pixel
    survives when the interpolated segment depth does not exceed the z-buffer
    at that pixel by more than the tolerance.
    """
    h, w = channel.shape
    for line, closed in zip(polylines, closed_flags):
        pts = np.asarray(line, dtype=np.float64)
        if len(pts) < 2:
            continue
        pairs = np.arange(len(pts))
        seg_a = pts[pairs[:-1]]
        seg_b = pts[pairs[1:]]
        if closed:
            seg_a = np.vstack([seg_a, pts[-1]])
            seg_b = np.vstack([seg_b, pts[0]])
        for a, b in zip(seg_a, seg_b):
            if a[2] <= 1e-9 or b[2] <= 1e-9:
                continue
            _draw_segment(channel, depth, a, b, sigma, reach, depth_tolerance)
    return channel


def _draw_segment(channel, depth, a, b, sigma, reach, depth_tolerance):
    h, w = channel.shape
    lo_x = max(0, int(np.floor(min(a[0], b[0]) - reach - 0.5)))
    hi_x = min(w - 1, int(np.ceil(max(a[0], b[0]) + reach - 0.5)))
    lo_y = max(0, int(np.floor(min(a[1], b[1]) - reach - 0.5)))
    hi_y = min(h - 1, int(np.ceil(max(a[1], b[1]) + reach - 0.5)))
    if lo_x > hi_x or lo_y > hi_y:
        return

    px = np.arange(lo_x, hi_x + 1) + 0.5
    py = (np.arange(lo_y, hi_y + 1) + 0.5)[:, None]
    dx, dy = b[0] - a[0], b[1] - a[1]
    denom = dx * dx + dy * dy
    if denom < 1e-18:
        t = np.zeros((hi_y - lo_y + 1, hi_x - lo_x + 1))
    else:
        t = np.clip(((px - a[0]) * dx + (py - a[1]) * dy) / denom, 0.0, 1.0)
    cx = a[0] + t * dx
    cy = a[1] + t * dy
    dist = np.hypot(px - cx, py - cy)
    z_line = a[2] + t * (b[2] - a[2])

    sl = (slice(lo_y, hi_y + 1), slice(lo_x, hi_x + 1))
    visible = z_line <= depth[sl] + depth_tolerance
    value = np.where((dist <= reach) & visible,
                     np.exp(-0.5 * (dist / sigma) ** 2), 0.0)
    channel[sl] = np.maximum(channel[sl], value)


def render_sketch(model, params, camera, contours, fragments=None,
                  depth_tolerance=DEPTH_TOLERANCE):
    """Two-channel sketch: face contour strokes and iris-ring strokes."""
    if fragments is None:
        fragments = rasterize(evaluate_mesh(model, params), model.triangles, camera)
    screen = fragments.screen
    h, w = fragments.pix_to_face.shape
    sketch = np.zeros((2, h, w))

    face_lines, face_closed = [], []
    for name, entry in contours.items():
        face_lines.append(screen[np.asarray(entry["vertices"], dtype=np.int64)])
        face_closed.append(bool(entry.get("closed", False)))
    draw_polylines(sketch[0], face_lines, screen, fragments.depth, face_closed,
                   depth_tolerance=depth_tolerance)

    iris_lines = [screen[model.iris_ring_right], screen[model.iris_ring_left]]
    draw_polylines(sketch[1], iris_lines, screen, fragments.depth, [True, True],
                   depth_tolerance=depth_tolerance)
    return sketch


def render_maps(model, params_ref, params_dri, camera, contours,
                depth_tolerance=DEPTH_TOLERANCE):
    """All conditioning maps for one (reference, driving) parameter pair.

    The driving mesh is rasterized once and shared between P, S and the flow
    map; the reference parameters only contribute projected positions.
    """
    verts_dri = evaluate_mesh(model, params_dri)
    fragments = rasterize(verts_dri, model.triangles, camera)
    p_map = render_P(fragments, model.vertices_mean)
    sketch = render_sketch(model, params_dri, camera, contours,
                           fragments=fragments, depth_tolerance=depth_tolerance)
    verts_ref = evaluate_mesh(model, params_ref)
    screen_ref, _ = project(verts_ref, camera)
    flow = flow_from_fragments(fragments, screen_ref)
    fg = fragments.foreground
    return RenderMaps(
        P=p_map,
        S=sketch,
        F_3dmm=flow,
        foreground=fg[None].astype(np.float64),
    )
