"""Landmark-based parameter fitting.

Fits per-frame face parameters (plus one identity vector shared across the
sequence) to a 2D landmark track by first-order minimization of

    w_lm * L_landmark + w_reg * L_reg + w_constraint * L_constraint
                      + w_smooth * L_smooth.

Landmarks are evaluated through the smooth barycentric embedding, never the
rasterizer, so every gradient is analytic: chain rule through the linear
blendshape model, the eyeball/head 6D rotation decodes, and the pinhole
projection.  The identity-consistency term is exposed as an operation but is
identically zero under the shared-identity parametrization (recorded in the
fit diagnostics).

The optimizer is Adam with step halving on loss increase, so the accepted
loss sequence is non-increasing and the whole fit is deterministic.
"""

from dataclasses import dataclass, field

import numpy as np

from .camera import default_camera
from .facemodel import (
    BLENDSHAPE_COUNT,
    IDENTITY_COUNT,
    LANDMARK_COUNT,
    FaceParams,
)
from .rotation import IDENTITY_6D, rot6d_jacobian, rot6d_to_matrix

PARAMS_PER_FRAME = BLENDSHAPE_COUNT + 6 + 3 + 6 + 6


class FitDivergedError(RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class LandmarkTrack:
    points: np.ndarray            # (F, 78, 2) pixel coordinates
    visible: np.ndarray = None    # (F, 78) bool
    fps: int = 25

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 3 or self.points.shape[1:] != (LANDMARK_COUNT, 2):
            raise ValueError("track must be (frames, %d, 2)" % LANDMARK_COUNT)
        if self.visible is None:
            self.visible = np.ones(self.points.shape[:2], dtype=bool)
        self.visible = np.asarray(self.visible, dtype=bool)
        if not self.visible.any(axis=1).all():
            raise ValueError("every frame needs at least one visible landmark")

    @property
    def frame_count(self):
        return self.points.shape[0]


@dataclass
class FitConfig:
    weight_landmark: float = 80.0
    weight_reg: float = 0.025
    weight_id: float = 0.025          # exposed; zero under shared identity
    weight_constraint: float = 0.2
    weight_smooth: float = 0.025
    iterations: int = 2500
    step_size: float = 0.03
    tolerance: float = 1e-11          # relative loss-change convergence
    patience: int = 80

    def __post_init__(self):
        for w in (self.weight_landmark, self.weight_reg, self.weight_id,
                  self.weight_constraint, self.weight_smooth):
            if w < 0:
                raise ValueError("loss weights must be non-negative")


@dataclass
class FitResult:
    frames: list
    alpha: np.ndarray
    converged: bool
    iterations: int
    final_loss: float
    loss_history: np.ndarray
    landmark_rmse: np.ndarray         # per frame, px
    terms: dict
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Reduced landmark evaluation


class LandmarkEvaluator:
    """Per-landmark reduced bases: position = m + A alpha + B beta, with the
    iris rows additionally rotated about their eyeball pivots."""

    def __init__(self, model, camera):
        corners = model.triangles[model.landmark_triangles].astype(np.int64)
        bary = model.landmark_bary.astype(np.float64)
        mean = model.vertices_mean.astype(np.float64)
        self.base = np.einsum("kc,kcd->kd", bary, mean[corners])
        self.ident = np.einsum("kc,nkcd->kdn", bary,
                               model.identity_basis.astype(np.float64)[:, corners])
        self.blend = np.einsum("kc,nkcd->kdn", bary,
                               model.blendshape_basis.astype(np.float64)[:, corners])

        def eye_rows(eye):
            inside = (corners >= eye.start) & (corners < eye.stop)
            return np.where(inside.all(axis=1))[0]

        self.rows_right = eye_rows(model.eyeball_right)
        self.rows_left = eye_rows(model.eyeball_left)
        self.pivot_right = model.eyeball_right.pivot.astype(np.float64)
        self.pivot_left = model.eyeball_left.pivot.astype(np.float64)
        self.camera = camera

    def positions(self, alpha, beta, rot_head, trans, rot_er, rot_el):
        """World landmark positions for stacked frames.

        beta (F, 55); rot_* are decoded matrices (F, 3, 3); trans (F, 3).
        Returns (world (F, 78, 3), pre_head (F, 78, 3), pre_eye (F, 78, 3)).
        """
        p = self.base[None] + np.einsum("kdn,n->kd", self.ident, alpha)[None]
        p = p + np.einsum("kdn,fn->fkd", self.blend, beta)
        q = p.copy()
        for rows, rot, pivot in ((self.rows_right, rot_er, self.pivot_right),
                                 (self.rows_left, rot_el, self.pivot_left)):
            if len(rows):
                local = p[:, rows] - pivot
                q[:, rows] = np.einsum("fij,fkj->fki", rot, local) + pivot
        world = np.einsum("fij,fkj->fki", rot_head, q) + trans[:, None, :]
        return world, q, p

    def screen(self, world):
        cam = np.einsum("ij,fkj->fki", self.camera.rotation, world)
        cam = cam + self.camera.translation
        z = cam[..., 2]
        f = self.camera.focal
        u = f * cam[..., 0] / z + self.camera.principal[0]
        v = f * cam[..., 1] / z + self.camera.principal[1]
        return np.stack([u, v], axis=-1), cam


# ---------------------------------------------------------------------------
# Parameter packing


def pack(alpha, beta, rot_head, trans, rot_er, rot_el):
    per_frame = np.concatenate([beta, rot_head, trans, rot_er, rot_el], axis=1)
    return np.concatenate([alpha, per_frame.ravel()])


def unpack(theta, n_frames):
    alpha = theta[:IDENTITY_COUNT]
    rest = theta[IDENTITY_COUNT:].reshape(n_frames, PARAMS_PER_FRAME)
    beta = rest[:, :BLENDSHAPE_COUNT]
    o = BLENDSHAPE_COUNT
    rot_head = rest[:, o:o + 6]
    trans = rest[:, o + 6:o + 9]
    rot_er = rest[:, o + 9:o + 15]
    rot_el = rest[:, o + 15:o + 21]
    return alpha, beta, rot_head, trans, rot_er, rot_el


def params_to_theta(frames):
    alpha = frames[0].alpha.astype(np.float64)
    beta = np.stack([p.beta for p in frames]).astype(np.float64)
    rot_head = np.stack([p.rot_head for p in frames]).astype(np.float64)
    trans = np.stack([p.trans_head for p in frames]).astype(np.float64)
    rot_er = np.stack([p.rot_eye_right for p in frames]).astype(np.float64)
    rot_el = np.stack([p.rot_eye_left for p in frames]).astype(np.float64)
    return pack(alpha, beta, rot_head, trans, rot_er, rot_el)


def theta_to_params(theta, n_frames, camera=None):
    alpha, beta, rot_head, trans, rot_er, rot_el = unpack(theta, n_frames)
    return [
        FaceParams(alpha=alpha.copy(), beta=beta[f].copy(),
                   rot_head=rot_head[f].copy(), trans_head=trans[f].copy(),
                   rot_eye_right=rot_er[f].copy(), rot_eye_left=rot_el[f].copy(),
                   camera=camera)
        for f in range(n_frames)
    ]


# ---------------------------------------------------------------------------
# Loss terms as standalone operations


def landmark_loss(model, params, points, visible=None, camera=None):
    """Mean squared pixel distance over visible landmarks, one frame."""
    camera = camera or params.camera or default_camera()
    ev = LandmarkEvaluator(model, camera)
    vis = _as_visible(visible, 1)
    if not vis.any():
        raise ValueError("all landmarks are invisible")
    return float(_landmark_term(ev, params_to_theta([params]), 1,
                                np.asarray(points, dtype=np.float64)[None],
                                vis)[0])


def regularizer(params):
    """L2 magnitude penalty on identity and blendshape coefficients."""
    return float(np.sum(params.alpha ** 2) + np.sum(params.beta ** 2))


def identity_consistency(alpha_1, alpha_2):
    """Squared distance between two identity estimates."""
    d = np.asarray(alpha_1, dtype=np.float64) - np.asarray(alpha_2, dtype=np.float64)
    return float(np.sum(d ** 2))


def param_smoothness(frames):
    """Sum over consecutive frames of squared parameter changes.

    Blendshapes and head translations difference directly; rotations
    difference as decoded matrices (Frobenius), for all of head and eyes.
    """
    if len(frames) < 2:
        return 0.0
    total = 0.0
    for a, b in zip(frames[:-1], frames[1:]):
        total += np.sum((b.beta - a.beta) ** 2)
        total += np.sum((b.trans_head - a.trans_head) ** 2)
        for attr in ("rot_head", "rot_eye_right", "rot_eye_left"):
            ra = rot6d_to_matrix(getattr(a, attr))
            rb = rot6d_to_matrix(getattr(b, attr))
            total += np.sum((rb - ra) ** 2)
    return float(total)


def _as_visible(visible, n_frames):
    if visible is None:
        return np.ones((n_frames, LANDMARK_COUNT), dtype=bool)
    v = np.asarray(visible, dtype=bool)
    return v[None] if v.ndim == 1 else v


# ---------------------------------------------------------------------------
# Vectorized objective


class SequenceObjective:
    """Loss and analytic gradient over a packed parameter vector."""

    def __init__(self, model, track, camera, config):
        self.ev = LandmarkEvaluator(model, camera)
        self.track = track
        self.cfg = config
        self.n_frames = track.frame_count

    def loss(self, theta):
        return self._evaluate(theta, want_grad=False)[0]

    def loss_and_grad(self, theta):
        return self._evaluate(theta, want_grad=True)

    def term_values(self, theta):
        lm = _landmark_term(self.ev, theta, self.n_frames,
                            self.track.points, self.track.visible)
        alpha, beta, rot_head, trans, rot_er, rot_el = unpack(theta, self.n_frames)
        reg = np.sum(alpha ** 2) + np.mean(np.sum(beta ** 2, axis=1))
        con = np.mean(np.maximum(np.abs(beta - 0.5), 0.5) - 0.5)
        sm = _smooth_value(beta, trans, rot_head, rot_er, rot_el)
        return {
            "landmark": float(np.mean(lm)),
            "landmark_per_frame": lm.tolist(),
            "reg": float(reg),
            "constraint": float(con),
            "smooth": float(sm),
            "identity_consistency": 0.0,
        }

    def _evaluate(self, theta, want_grad):
        cfg = self.cfg
        F = self.n_frames
        ev = self.ev
        alpha, beta, r_h6, trans, r_er6, r_el6 = unpack(theta, F)
        R_h = rot6d_to_matrix(r_h6)
        R_er = rot6d_to_matrix(r_er6)
        R_el = rot6d_to_matrix(r_el6)

        world, pre_head, pre_eye = ev.positions(alpha, beta, R_h, trans, R_er, R_el)
        uv, cam = ev.screen(world)

        vis = self.track.visible
        nvis = vis.sum(axis=1).astype(np.float64)
        resid = np.where(vis[..., None], uv - self.track.points, 0.0)
        lm_per_frame = np.sum(resid ** 2, axis=(1, 2)) / nvis
        l_lm = float(np.mean(lm_per_frame))

        l_reg = float(np.sum(alpha ** 2) + np.mean(np.sum(beta ** 2, axis=1)))
        over = np.maximum(np.abs(beta - 0.5), 0.5) - 0.5
        l_con = float(np.mean(over))
        l_sm = _smooth_value(beta, trans, R_h, R_er, R_el)

        total = (cfg.weight_landmark * l_lm + cfg.weight_reg * l_reg
                 + cfg.weight_constraint * l_con + cfg.weight_smooth * l_sm)
        if not want_grad:
            return total, None

        # --- landmark chain ---------------------------------------------
        scale = cfg.weight_landmark * 2.0 / (F * nvis)
        g_uv = resid * scale[:, None, None]

        f = ev.camera.focal
        z = cam[..., 2]
        g_cam = np.empty_like(cam)
        g_cam[..., 0] = g_uv[..., 0] * f / z
        g_cam[..., 1] = g_uv[..., 1] * f / z
        g_cam[..., 2] = -f * (g_uv[..., 0] * cam[..., 0]
                              + g_uv[..., 1] * cam[..., 1]) / z ** 2
        g_world = np.einsum("fki,ij->fkj", g_cam, ev.camera.rotation)

        g_trans = g_world.sum(axis=1)
        G_Rh = np.einsum("fki,fkj->fij", g_world, pre_head)
        g_q = np.einsum("fki,fij->fkj", g_world, R_h)

        g_p = g_q.copy()
        G_Rer = np.zeros((F, 3, 3))
        G_Rel = np.zeros((F, 3, 3))
        for rows, rot, pivot, G in ((ev.rows_right, R_er, ev.pivot_right, G_Rer),
                                    (ev.rows_left, R_el, ev.pivot_left, G_Rel)):
            if len(rows):
                local = pre_eye[:, rows] - pivot
                G += np.einsum("fki,fkj->fij", g_q[:, rows], local)
                g_p[:, rows] = np.einsum("fki,fij->fkj", g_q[:, rows], rot)

        g_alpha = np.einsum("fkd,kdn->n", g_p, ev.ident)
        g_beta = np.einsum("fkd,kdn->fn", g_p, ev.blend)

        # --- regularizer / constraint ------------------------------------
        g_alpha += cfg.weight_reg * 2.0 * alpha
        g_beta += cfg.weight_reg * 2.0 * beta / F
        outside = np.abs(beta - 0.5) > 0.5
        g_beta += (cfg.weight_constraint / (beta.size)) \
            * np.where(outside, np.sign(beta - 0.5), 0.0)

        # --- smoothness ---------------------------------------------------
        if F > 1:
            w = cfg.weight_smooth
            g_beta += w * _pairwise_grad(beta)
            g_trans += w * _pairwise_grad(trans)
            G_Rh += w * _pairwise_grad(R_h)
            G_Rer += w * _pairwise_grad(R_er)
            G_Rel += w * _pairwise_grad(R_el)

        g_rh = np.einsum("fij,fijm->fm", G_Rh, rot6d_jacobian(r_h6))
        g_rer = np.einsum("fij,fijm->fm", G_Rer, rot6d_jacobian(r_er6))
        g_rel = np.einsum("fij,fijm->fm", G_Rel, rot6d_jacobian(r_el6))

        grad = pack(g_alpha, g_beta, g_rh, g_trans, g_rer, g_rel)
        return total, grad


def _smooth_value(beta, trans, R_h, R_er, R_el):
    if len(beta) < 2:
        return 0.0
    total = np.sum(np.diff(beta, axis=0) ** 2)
    total += np.sum(np.diff(trans, axis=0) ** 2)
    for R in (R_h, R_er, R_el):
        total += np.sum(np.diff(R, axis=0) ** 2)
    return float(total)


def _pairwise_grad(x):
    """Gradient of sum_f ||x_f - x_{f-1}||^2 w.r.t. x."""
    g = np.zeros_like(x)
    d = np.diff(x, axis=0)
    g[1:] += 2.0 * d
    g[:-1] -= 2.0 * d
    return g


def _landmark_term(ev, theta, n_frames, points, visible):
    alpha, beta, r_h6, trans, r_er6, r_el6 = unpack(theta, n_frames)
    world, _, _ = ev.positions(alpha, beta, rot6d_to_matrix(r_h6), trans,
                               rot6d_to_matrix(r_er6), rot6d_to_matrix(r_el6))
    uv, _ = ev.screen(world)
    resid = np.where(visible[..., None], uv - points, 0.0)
    return np.sum(resid ** 2, axis=(1, 2)) / visible.sum(axis=1)


# ---------------------------------------------------------------------------
# Optimizer


def fit_sequence(track, model, camera=None, init=None, config=None):
    """Fit a parameter sequence to a landmark track.

    A single identity vector is shared across all frames (which makes the
    pairwise identity-consistency loss identically zero; noted in the
    diagnostics).  Returns a FitResult whose frames carry the shared alpha.
    """
    config = config or FitConfig()
    camera = camera or default_camera()
    if init is None:
        init = FaceParams.neutral(camera=camera)
    F = track.frame_count
    theta = params_to_theta([init] * F)

    objective = SequenceObjective(model, track, camera, config)
    loss, grad = objective.loss_and_grad(theta)
    if not np.isfinite(loss):
        raise FitDivergedError("initial loss is not finite",
                               {"loss": loss})

    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    b1, b2, eps = 0.9, 0.999, 1e-8
    lr_scale = 1.0
    history = [loss]
    stalled = 0
    it = 0
    converged = False

    for it in range(1, config.iterations + 1):
        if not np.all(np.isfinite(grad)):
            raise FitDivergedError("gradient is not finite at iteration %d" % it,
                                   {"loss": loss, "iteration": it})
        m = b1 * m + (1.0 - b1) * grad
        v = b2 * v + (1.0 - b2) * grad ** 2
        mhat = m / (1.0 - b1 ** it)
        vhat = v / (1.0 - b2 ** it)
        direction = mhat / (np.sqrt(vhat) + eps)

        accepted = False
        while lr_scale >= 1e-9:
            trial = theta - config.step_size * lr_scale * direction
            trial_loss = objective.loss(trial)
            if np.isfinite(trial_loss) and trial_loss <= loss:
                accepted = True
                break
            lr_scale *= 0.5
        if not accepted:
            converged = True
            break

        drop = loss - trial_loss
        theta = trial
        loss = trial_loss
        history.append(loss)
        lr_scale = min(1.0, lr_scale * 1.3)
        _, grad = objective.loss_and_grad(theta)

        if drop < config.tolerance * max(1.0, abs(loss)):
            stalled += 1
            if stalled >= config.patience:
                converged = True
                break
        else:
            stalled = 0

    frames = theta_to_params(theta, F, camera=camera)
    terms = objective.term_values(theta)
    rmse = np.sqrt(np.asarray(terms["landmark_per_frame"]))
    return FitResult(
        frames=frames,
        alpha=frames[0].alpha,
        converged=converged,
        iterations=it,
        final_loss=float(loss),
        loss_history=np.asarray(history),
        landmark_rmse=rmse,
        terms=terms,
        diagnostics={
            "shared_alpha": True,
            "identity_consistency": 0.0,
            "weights": {
                "landmark": config.weight_landmark,
                "reg": config.weight_reg,
                "id": config.weight_id,
                "constraint": config.weight_constraint,
                "smooth": config.weight_smooth,
            },
            "camera_focal": float(camera.focal),
        },
    )


# ---------------------------------------------------------------------------
# Finite-difference gradient validation


def gradient_check(loss_name, model, frames, track=None, camera=None,
                   epsilon=1e-4):
    """Max relative error between analytic and central-difference gradients.

    loss_name is one of landmark / reg / constraint / smooth / total.
    """
    camera = camera or default_camera()
    n_frames = len(frames)
    theta = params_to_theta(frames)
    if track is None:
        track = LandmarkTrack(points=np.zeros((n_frames, LANDMARK_COUNT, 2)))

    zero = {"weight_landmark": 0.0, "weight_reg": 0.0,
            "weight_constraint": 0.0, "weight_smooth": 0.0}
    if loss_name == "total":
        config = FitConfig()
    else:
        key = {"landmark": "weight_landmark", "reg": "weight_reg",
               "constraint": "weight_constraint",
               "smooth": "weight_smooth"}[loss_name]
        config = FitConfig(**{**zero, key: 1.0})

    objective = SequenceObjective(model, track, camera, config)
    _, analytic = objective.loss_and_grad(theta)

    fd = np.zeros_like(theta)
    for i in range(len(theta)):
        lo = theta.copy()
        hi = theta.copy()
        lo[i] -= epsilon
        hi[i] += epsilon
        fd[i] = (objective.loss(hi) - objective.loss(lo)) / (2.0 * epsilon)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), 1e-6)
    return float(np.max(np.abs(analytic - fd) / denom))
