"""Flow-field warping operators and mask compositing.

Sampling convention: output(p) = input(p + flow(p)), bilinear, with
out-of-bounds sample positions clamped to the border.  Two mask couplings are
provided: the `unstable` form scales the flow by the mask before warping,
while the `stable` form warps with the raw flow and lerps the result against
the input.  They agree only at mask values 0 and 1.
"""

import numpy as np


def bilinear_sample(image, x, y):
    """Sample (C, H, W) at float positions; border-clamped."""
    c, h, w = image.shape
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    top = image[:, y0, x0] * (1.0 - fx) + image[:, y0, x1] * fx
    bot = image[:, y1, x0] * (1.0 - fx) + image[:, y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def bilinear_warp(image, flow):
    """Backward-warp (C, H, W) by a (2, H, W) displacement field in pixels."""
    image = np.asarray(image, dtype=np.float64)
    flow = np.asarray(flow, dtype=np.float64)
    _, h, w = image.shape
    gx, gy = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    return bilinear_sample(image, gx + flow[0], gy + flow[1])


def _as_mask(mask, h, w):
    mask = np.asarray(mask, dtype=np.float64)
    if mask.ndim == 3:
        mask = mask[0]
    if mask.shape != (h, w):
        raise ValueError("mask shape does not match image")
    return mask


def warp_unstable(image, flow_raw, mask):
    """Warp by the masked flow: output(p) = input(p + K(p) * F(p))."""
    image = np.asarray(image, dtype=np.float64)
    mask = _as_mask(mask, *image.shape[1:])
    return bilinear_warp(image, np.asarray(flow_raw, dtype=np.float64) * mask)


def warp_stable(image, flow_raw, mask):
    """Mask-lerped warp: K * warp(input, F) + (1 - K) * input."""
    image = np.asarray(image, dtype=np.float64)
    mask = _as_mask(mask, *image.shape[1:])
    return mask * bilinear_warp(image, flow_raw) + (1.0 - mask) * image


def warp_detached(image, flow_raw, mask):
    """Numerically the unstable warp; flags the mask as gradient-detached.

    Returns (warped, metadata); the metadata is advisory for differentiable
    consumers, which must treat the mask as a constant.
    """
    warped = warp_unstable(image, flow_raw, mask)
    return warped, {"mask_gradient_detached": True}


def composite_blend(image_orig, image_pred, mask):
    """Per-pixel lerp: orig * (1 - K) + pred * K."""
    image_orig = np.asarray(image_orig, dtype=np.float64)
    image_pred = np.asarray(image_pred, dtype=np.float64)
    mask = _as_mask(mask, *image_orig.shape[1:])
    return image_orig * (1.0 - mask) + image_pred * mask


def locality_metric(image_pred, image_ref, mask):
    """Mean absolute difference outside the mask (per pixel and channel)."""
    image_pred = np.asarray(image_pred, dtype=np.float64)
    image_ref = np.asarray(image_ref, dtype=np.float64)
    mask = _as_mask(mask, *image_pred.shape[1:])
    return float(np.mean((1.0 - mask) * np.abs(image_pred - image_ref)))
