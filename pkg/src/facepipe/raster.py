"""Z-buffered triangle rasterizer.

Coverage semantics (shared with the test oracle): a pixel is covered iff its
center (px + 0.5, py + 0.5) lies inside the projected triangle, with the
top-left rule breaking exact-boundary ties.  With edge functions normalized
so the interior is positive,

    w = sign * ((bx - ax) * (py - ay) - (by - ay) * (px - ax))

a boundary pixel (w == 0) belongs to the triangle iff the normalized edge
direction d = sign * (b - a) points up (d.y < 0) or is horizontal pointing
right (d.y == 0, d.x > 0).  Barycentrics are screen-space (w / area); the
depth test uses perspective-correct depth 1 / sum(bary_i / z_i).  Triangles
with any vertex at camera depth <= 1e-9 are skipped (no clipping).
"""

from dataclasses import dataclass

import numpy as np

from .camera import project


@dataclass
class Fragments:
    pix_to_face: np.ndarray      # (H, W) int32, -1 for background
    bary: np.ndarray             # (H, W, 3)
    depth: np.ndarray            # (H, W), +inf on background
    triangles: np.ndarray        # (T, 3) the rasterized index buffer
    screen: np.ndarray           # (V, 3) projected vertices (x, y, z)

    @property
    def foreground(self):
        return self.pix_to_face >= 0


def rasterize(vertices, triangles, camera):
    """Rasterize a world-space mesh through a camera into Fragments."""
    screen, in_front = project(vertices, camera)
    return rasterize_screen(screen, triangles, camera.image_size,
                            valid=in_front)


def rasterize_screen(screen, triangles, image_size, valid=None):
    h, w = int(image_size[0]), int(image_size[1])
    screen = np.asarray(screen, dtype=np.float64)
    tris = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    if valid is None:
        valid = screen[:, 2] > 1e-9

    pix_to_face = np.full((h, w), -1, dtype=np.int32)
    bary = np.zeros((h, w, 3))
    depth = np.full((h, w), np.inf)

    for t, (i0, i1, i2) in enumerate(tris):
        if not (valid[i0] and valid[i1] and valid[i2]):
            continue
        p0, p1, p2 = screen[i0], screen[i1], screen[i2]
        area2 = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0])
        if area2 == 0.0:
            continue
        sign = 1.0 if area2 > 0 else -1.0

        xs = (p0[0], p1[0], p2[0])
        ys = (p0[1], p1[1], p2[1])
        px_lo = max(0, int(np.ceil(min(xs) - 0.5)))
        px_hi = min(w - 1, int(np.floor(max(xs) - 0.5)))
        py_lo = max(0, int(np.ceil(min(ys) - 0.5)))
        py_hi = min(h - 1, int(np.floor(max(ys) - 0.5)))
        if px_lo > px_hi or py_lo > py_hi:
            continue

        px = np.arange(px_lo, px_hi + 1) + 0.5
        py = (np.arange(py_lo, py_hi + 1) + 0.5)[:, None]

        w0, keep0 = _edge(sign, p1, p2, px, py)
        w1, keep1 = _edge(sign, p2, p0, px, py)
        w2, keep2 = _edge(sign, p0, p1, px, py)
        covered = keep0 & keep1 & keep2
        if not covered.any():
            continue

        area = sign * area2
        b0, b1, b2 = w0 / area, w1 / area, w2 / area
        z = 1.0 / (b0 / p0[2] + b1 / p1[2] + b2 / p2[2])

        sl = (slice(py_lo, py_hi + 1), slice(px_lo, px_hi + 1))
        win = covered & (z < depth[sl])
        depth[sl] = np.where(win, z, depth[sl])
        pix_to_face[sl] = np.where(win, t, pix_to_face[sl])
        for c, b in enumerate((b0, b1, b2)):
            bary[sl + (c,)] = np.where(win, b, bary[sl + (c,)])

    return Fragments(pix_to_face=pix_to_face, bary=bary, depth=depth,
                     triangles=tris, screen=screen)


def _edge(sign, a, b, px, py):
    """Edge function values plus the covered predicate for one edge."""
    w = sign * ((b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0]))
    dx = sign * (b[0] - a[0])
    dy = sign * (b[1] - a[1])
    top_left = (dy < 0) or (dy == 0 and dx > 0)
    return w, (w > 0) | ((w == 0) & top_left)
