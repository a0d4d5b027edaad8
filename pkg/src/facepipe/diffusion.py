"""Blendshape diffusion: schedule, x0-prediction ancestral sampler, losses.

The denoiser is pluggable.  It must be a callable

    denoiser(context, noisy, audio, style, step, drop_audio=..., drop_style=...)

returning the predicted clean 50x35 clip; `context` holds the first five
clean frames, `noisy` the remaining 45 at the current noise level, and the
drop flags request unconditional predictions for classifier-free guidance.
Mock denoisers used for testing and simulation live at the bottom.
"""

from dataclasses import dataclass

import numpy as np

CLIP_FRAMES = 50
MOUTH_DIM = 35
CONTEXT_FRAMES = 5
CLIP_FPS = 25
DEFAULT_STEPS = 1000
INFERENCE_STEPS = 50
GUIDANCE_SCALE = 1.2
X0_CLIP_RANGE = (-0.25, 1.25)


@dataclass(frozen=True)
class NoiseSchedule:
    betas: np.ndarray        # (T,), betas[i] is the step i+1 noise rate
    alpha_bar: np.ndarray    # (T,), cumulative products of (1 - beta)
    inference_steps: int = INFERENCE_STEPS

    @property
    def total_steps(self):
        return len(self.betas)

    def alpha_bar_at(self, n):
        """Cumulative alpha at noise level n in 0..T (level 0 is clean)."""
        return 1.0 if n == 0 else float(self.alpha_bar[n - 1])

    def validate(self):
        b = self.betas
        if not np.all((b > 0) & (b < 1)):
            raise ValueError("betas must lie in (0, 1)")
        if not np.all(np.diff(b) >= 0):
            raise ValueError("betas must be non-decreasing")
        if not np.all(np.diff(self.alpha_bar) < 0):
            raise ValueError("alpha_bar must be strictly decreasing")
        return self


def build_schedule(total_steps=DEFAULT_STEPS, beta_start=1e-4, beta_end=0.02,
                   inference_steps=INFERENCE_STEPS):
    """Linear beta schedule with cumulative alpha table."""
    betas = np.linspace(beta_start, beta_end, total_steps)
    alpha_bar = np.cumprod(1.0 - betas)
    return NoiseSchedule(betas=betas, alpha_bar=alpha_bar,
                         inference_steps=inference_steps).validate()


def add_noise(clean, n, noise, schedule):
    """Forward process draw at table index n: sqrt(ab) x0 + sqrt(1-ab) eps."""
    ab = schedule.alpha_bar[n]
    return np.sqrt(ab) * np.asarray(clean) + np.sqrt(1.0 - ab) * np.asarray(noise)


def cfg_combine(cond, uncond, scale=GUIDANCE_SCALE):
    """Classifier-free guidance: uncond + scale * (cond - uncond)."""
    cond = np.asarray(cond, dtype=np.float64)
    uncond = np.asarray(uncond, dtype=np.float64)
    return uncond + scale * (cond - uncond)


def sampling_levels(schedule, steps):
    """Noise levels visited by the sampler, from T down in uniform strides."""
    total = schedule.total_steps
    if steps < 1 or total % steps != 0:
        raise ValueError("steps must divide the schedule length")
    stride = total // steps
    return list(range(total, 0, -stride))


def ddpm_step(x, x0_hat, level, next_level, schedule, rng):
    """One x0-parametrized ancestral step from `level` down to `next_level`."""
    ab_n = schedule.alpha_bar_at(level)
    ab_m = schedule.alpha_bar_at(next_level)
    eff_beta = 1.0 - ab_n / ab_m
    coef_x0 = np.sqrt(ab_m) * eff_beta / (1.0 - ab_n)
    coef_xn = np.sqrt(ab_n / ab_m) * (1.0 - ab_m) / (1.0 - ab_n)
    mean = coef_x0 * x0_hat + coef_xn * x
    if next_level == 0:
        return mean
    var = eff_beta * (1.0 - ab_m) / (1.0 - ab_n)
    return mean + np.sqrt(var) * rng.standard_normal(x.shape)


def sample_x0_chain(denoise_fn, shape, schedule, steps, rng,
                    clip_range=X0_CLIP_RANGE):
    """Generic x0-prediction ancestral sampler.

    `denoise_fn(x, level)` returns the predicted clean signal; the prediction
    is clipped to `clip_range` (a soft range guard) before each posterior
    step.  Pass clip_range=None to disable.
    """
    levels = sampling_levels(schedule, steps)
    x = rng.standard_normal(shape)
    for i, level in enumerate(levels):
        next_level = levels[i + 1] if i + 1 < len(levels) else 0
        x0_hat = np.asarray(denoise_fn(x, level), dtype=np.float64)
        if clip_range is not None:
            x0_hat = np.clip(x0_hat, clip_range[0], clip_range[1])
        x = ddpm_step(x, x0_hat, level, next_level, schedule, rng)
    return x


@dataclass
class BlendshapeClip:
    """2 s of mouth blendshapes at 25 fps; the first frames are context."""
    values: np.ndarray               # (50, 35)
    fps: int = CLIP_FPS
    context_frames: int = CONTEXT_FRAMES

    def validate(self):
        if self.values.shape != (CLIP_FRAMES, MOUTH_DIM):
            raise ValueError("expected a %dx%d clip" % (CLIP_FRAMES, MOUTH_DIM))
        return self


def guided_prediction(denoiser, context, noisy, audio, style, level,
                      guidance_scale):
    """Denoiser call with independent audio/style classifier-free guidance."""
    if guidance_scale is None or guidance_scale == 1.0:
        return np.asarray(denoiser(context, noisy, audio, style, level),
                          dtype=np.float64)
    uncond = np.asarray(denoiser(context, noisy, audio, style, level,
                                 drop_audio=True, drop_style=True))
    cond_audio = np.asarray(denoiser(context, noisy, audio, style, level,
                                     drop_style=True))
    cond_style = np.asarray(denoiser(context, noisy, audio, style, level,
                                     drop_audio=True))
    return (uncond + guidance_scale * (cond_audio - uncond)
            + guidance_scale * (cond_style - uncond))


def sample(denoiser, context, audio, style, schedule, steps=INFERENCE_STEPS,
           seed=0, guidance_scale=None, clip_range=X0_CLIP_RANGE):
    """Sample a BlendshapeClip conditioned on context, audio and style.

    Only frames 5..49 are sampled; the five context frames pass through
    bit-identically.  Deterministic for a fixed seed.
    """
    context = np.asarray(context, dtype=np.float64)
    if context.shape != (CONTEXT_FRAMES, MOUTH_DIM):
        raise ValueError("context must be (%d, %d)" % (CONTEXT_FRAMES, MOUTH_DIM))
    rng = np.random.default_rng(seed)
    free = CLIP_FRAMES - CONTEXT_FRAMES

    def denoise_fn(x, level):
        pred = guided_prediction(denoiser, context, x, audio, style, level,
                                 guidance_scale)
        if pred.shape != (CLIP_FRAMES, MOUTH_DIM):
            raise ValueError("denoiser returned %s, expected (%d, %d)"
                             % (pred.shape, CLIP_FRAMES, MOUTH_DIM))
        return pred[CONTEXT_FRAMES:]

    tail = sample_x0_chain(denoise_fn, (free, MOUTH_DIM), schedule, steps,
                           rng, clip_range)
    values = np.concatenate([context, tail])
    return BlendshapeClip(values=values).validate()


# ---------------------------------------------------------------------------
# Training-loss formulas (exposed for plugged-in denoisers; no training here)


def loss_simple(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    return float(np.sum((pred - target) ** 2))


def loss_velocity(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    dv = (target[1:] - target[:-1]) - (pred[1:] - pred[:-1])
    return float(np.sum(dv ** 2))


def loss_smooth(pred):
    pred = np.asarray(pred, dtype=np.float64)
    return float(np.sum((pred[2:] - 2.0 * pred[1:-1] + pred[:-2]) ** 2))


def cosine_similarity_matrix(u, v, temperature=0.07):
    """phi(u_i, v_j) = cos(u_i, v_j) / temperature, as an (N, N) matrix."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    un = u / np.linalg.norm(u, axis=1, keepdims=True)
    vn = v / np.linalg.norm(v, axis=1, keepdims=True)
    return (un @ vn.T) / temperature


def sync_loss(v, a, similarity=None, temperature=0.07):
    """Symmetric InfoNCE between blendshape and audio embeddings.

    For each anchor i the denominator sums over all j except the temporal
    neighbors i-1 and i+1 (j = i stays in, as the formula is written), and
    the two directions v->a and a->v are averaged over 2N terms.
    `similarity(x, y)` must return the (N, N) matrix of phi values; defaults
    to temperature-scaled cosine.
    """
    v = np.asarray(v, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    if v.shape != a.shape:
        raise ValueError("embedding shapes differ: %s vs %s" % (v.shape, a.shape))
    if similarity is None:
        def similarity(x, y):
            return cosine_similarity_matrix(x, y, temperature)
    n = v.shape[0]
    return (_info_nce(similarity(v, a), n) + _info_nce(similarity(a, v), n)) / (2.0 * n)


def _info_nce(m, n):
    allowed = np.ones((n, n), dtype=bool)
    idx = np.arange(n)
    allowed[idx[:-1], idx[:-1] + 1] = False
    allowed[idx[1:], idx[1:] - 1] = False
    shifted = np.where(allowed, m, -np.inf)
    peak = shifted.max(axis=1)
    lse = peak + np.log(np.sum(np.exp(shifted - peak[:, None]), axis=1))
    return float(np.sum(lse - np.diag(m)))


# ---------------------------------------------------------------------------
# Mock denoisers (stand-ins for a trained network)


class FixedClipDenoiser:
    """Always predicts one stored clip; ignores noise and conditions."""

    def __init__(self, clip_values):
        self.values = np.asarray(clip_values, dtype=np.float64)

    def __call__(self, context, noisy, audio, style, level,
                 drop_audio=False, drop_style=False):
        return self.values


class WaveDenoiser:
    """Procedural talking pattern over a fixed set of active columns.

    Predicts a deterministic sinusoidal open/close motion regardless of the
    noise input, blended to start from the supplied context frame.
    """

    def __init__(self, active_columns, amplitudes, period_frames=10.0):
        self.columns = np.asarray(active_columns, dtype=np.int64)
        self.amplitudes = np.asarray(amplitudes, dtype=np.float64)
        self.period = float(period_frames)

    def __call__(self, context, noisy, audio, style, level,
                 drop_audio=False, drop_style=False):
        t = np.arange(CLIP_FRAMES, dtype=np.float64)
        wave = 0.5 - 0.5 * np.cos(2.0 * np.pi * (t - CONTEXT_FRAMES) / self.period)
        values = np.zeros((CLIP_FRAMES, MOUTH_DIM))
        values[:, self.columns] = wave[:, None] * self.amplitudes
        ramp = np.clip((t - CONTEXT_FRAMES) / self.period, 0.0, 1.0)[:, None]
        anchored = (1.0 - ramp) * context[-1][None, :] + ramp * values
        anchored[:CONTEXT_FRAMES] = context
        return anchored
