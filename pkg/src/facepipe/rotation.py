"""Continuous 6D rotation representation.

A rotation is encoded by the first two columns of its matrix, flattened to
(a, b) in R^6.  Decoding Gram-Schmidts a and b and completes the frame with a
cross product, so any non-degenerate 6-vector maps to a proper rotation.
"""

import numpy as np

IDENTITY_6D = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])


class DegenerateRotationError(ValueError):
    pass


def rot6d_to_matrix(r):
    """Decode a 6D rotation vector (..., 6) into matrices (..., 3, 3).

    Raises DegenerateRotationError when the two input triples are parallel
    (or zero) beyond working precision.
    """
    r = np.asarray(r, dtype=np.float64)
    a, b = r[..., :3], r[..., 3:]

    n1 = np.linalg.norm(a, axis=-1, keepdims=True)
    if np.any(n1 < 1e-12):
        raise DegenerateRotationError("first triple has near-zero norm")
    b1 = a / n1

    u2 = b - np.sum(b1 * b, axis=-1, keepdims=True) * b1
    n2 = np.linalg.norm(u2, axis=-1, keepdims=True)
    if np.any(n2 < 1e-8):
        raise DegenerateRotationError("input triples are near parallel")
    b2 = u2 / n2

    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=-1)


def matrix_to_rot6d(m):
    """First two columns of (..., 3, 3), flattened to (..., 6)."""
    m = np.asarray(m, dtype=np.float64)
    return np.concatenate([m[..., :, 0], m[..., :, 1]], axis=-1)


def rot6d_jacobian(r):
    """d(matrix)/d(r) for the decode, shape (..., 3, 3, 6).

    Entry [i, k, m] is the derivative of matrix element (i, k) w.r.t. r[m].
    """
    r = np.asarray(r, dtype=np.float64)
    a, b = r[..., :3], r[..., 3:]

    n1 = np.linalg.norm(a, axis=-1)[..., None, None]
    b1 = a / np.linalg.norm(a, axis=-1, keepdims=True)
    eye = np.broadcast_to(np.eye(3), b1.shape[:-1] + (3, 3))
    M1 = (eye - b1[..., :, None] * b1[..., None, :]) / n1

    s = np.sum(b1 * b, axis=-1, keepdims=True)
    u2 = b - s * b1
    n2 = np.linalg.norm(u2, axis=-1)[..., None, None]
    b2 = u2 / np.linalg.norm(u2, axis=-1, keepdims=True)
    M2 = (eye - b2[..., :, None] * b2[..., None, :]) / n2

    # du2/da = -(b1 b^T + s I) @ M1, du2/db = I - b1 b1^T
    du2_da = -(b1[..., :, None] * b[..., None, :] + s[..., None] * np.eye(3)) @ M1
    du2_db = eye - b1[..., :, None] * b1[..., None, :]

    db2_da = M2 @ du2_da
    db2_db = M2 @ du2_db

    cb1 = _cross_matrix(b1)
    cb2 = _cross_matrix(b2)
    db3_da = -cb2 @ M1 + cb1 @ db2_da
    db3_db = cb1 @ db2_db

    jac = np.zeros(r.shape[:-1] + (3, 3, 6))
    jac[..., :, 0, :3] = M1
    jac[..., :, 1, :3] = db2_da
    jac[..., :, 1, 3:] = db2_db
    jac[..., :, 2, :3] = db3_da
    jac[..., :, 2, 3:] = db3_db
    return jac


def _cross_matrix(v):
    """Skew matrix [v]x with [v]x @ w == cross(v, w), batched over (..., 3)."""
    zeros = np.zeros_like(v[..., 0])
    return np.stack(
        [
            np.stack([zeros, -v[..., 2], v[..., 1]], axis=-1),
            np.stack([v[..., 2], zeros, -v[..., 0]], axis=-1),
            np.stack([-v[..., 1], v[..., 0], zeros], axis=-1),
        ],
        axis=-2,
    )


def rotation_about_axis(axis, angle):
    """Rodrigues rotation matrix for a unit-ish axis and angle in radians."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    k = _cross_matrix(axis)
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)
