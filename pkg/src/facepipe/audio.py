"""Mel-spectrogram chunking of dubbing audio.

Two seconds of 16 kHz mono audio become 160 STFT frames (n_fft 800, Hann
window, hop 200, center padded), an 80-band log-mel spectrogram over
0..8 kHz, and 50 equally spaced overlapping chunks of 16 frames each; chunk
i starts at round(i * (160 - 16) / 49) for bit-reproducible spacing.
"""

from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

SAMPLE_RATE = 16000
CLIP_SAMPLES = 32000         # 2 s
N_FFT = 800
HOP = 200
N_MELS = 80
CHUNK_COUNT = 50
CHUNK_FRAMES = 16
LOG_FLOOR = 1e-5


@dataclass
class MelChunks:
    chunks: np.ndarray       # (50, 16, 80)
    starts: np.ndarray       # (50,) frame offsets into the spectrogram


def load_wav(path):
    """Read a 16-bit PCM mono WAV as float samples in [-1, 1]."""
    rate, data = wavfile.read(path)
    if data.ndim != 1:
        raise ValueError("expected mono audio")
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0, rate
    if data.dtype == np.float32 or data.dtype == np.float64:
        return data.astype(np.float64), rate
    raise ValueError("unsupported WAV sample format %s" % data.dtype)


def save_wav(path, samples, rate=SAMPLE_RATE):
    clipped = np.clip(np.asarray(samples), -1.0, 1.0)
    wavfile.write(path, rate, (clipped * 32767.0).astype(np.int16))


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filter_bank(n_mels=N_MELS, n_fft=N_FFT, rate=SAMPLE_RATE,
                    fmin=0.0, fmax=None):
    """Triangular mel filters, (n_mels, n_fft // 2 + 1)."""
    if fmax is None:
        fmax = rate / 2.0
    fft_freqs = np.arange(n_fft // 2 + 1) * rate / n_fft
    mel_pts = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    lower = hz_pts[:-2][:, None]
    center = hz_pts[1:-1][:, None]
    upper = hz_pts[2:][:, None]
    up = (fft_freqs - lower) / (center - lower)
    down = (upper - fft_freqs) / (upper - center)
    return np.maximum(0.0, np.minimum(up, down))


def mel_center_frequencies(n_mels=N_MELS, rate=SAMPLE_RATE, fmin=0.0, fmax=None):
    if fmax is None:
        fmax = rate / 2.0
    return mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))[1:-1]


def stft_frames(audio):
    """Power spectrogram (frames, n_fft // 2 + 1), center padded."""
    audio = np.asarray(audio, dtype=np.float64)
    pad = N_FFT // 2
    padded = np.pad(audio, pad)
    n_frames = len(audio) // HOP
    window = 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(N_FFT) / N_FFT))
    idx = np.arange(N_FFT) + HOP * np.arange(n_frames)[:, None]
    spec = np.fft.rfft(padded[idx] * window, axis=1)
    return np.abs(spec) ** 2


def log_mel_spectrogram(audio):
    power = stft_frames(audio)
    mel = power @ mel_filter_bank().T
    return np.log(mel + LOG_FLOOR)


def mel_chunk(audio, rate=SAMPLE_RATE):
    """Split 2 s of 16 kHz audio into 50 overlapping 16x80 log-mel chunks."""
    audio = np.asarray(audio, dtype=np.float64)
    if rate != SAMPLE_RATE:
        raise ValueError("expected %d Hz audio, got %d" % (SAMPLE_RATE, rate))
    if audio.shape != (CLIP_SAMPLES,):
        raise ValueError("expected exactly %d samples (2 s), got %s"
                         % (CLIP_SAMPLES, audio.shape))
    spec = log_mel_spectrogram(audio)
    n_frames = spec.shape[0]
    starts = np.array([
        int(round(i * (n_frames - CHUNK_FRAMES) / (CHUNK_COUNT - 1)))
        for i in range(CHUNK_COUNT)
    ])
    chunks = np.stack([spec[s:s + CHUNK_FRAMES] for s in starts])
    return MelChunks(chunks=chunks, starts=starts)
