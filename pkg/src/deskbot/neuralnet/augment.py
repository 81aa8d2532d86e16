"""Training-time image and label augmentation.

Photometric jitter (hue, saturation, contrast, brightness, in that order)
plus a 50% horizontal flip. Flipping mirrors the scene, so the wheel labels
swap sides and a left command becomes a right command. All randomness comes
from the generator passed in, drawn in a fixed order, so augmented batches
replay exactly for a given seed.
"""

from __future__ import annotations

import numpy as np

try:  # pragma: no cover - exercised indirectly
    import numba
except ImportError:  # pragma: no cover
    numba = None

HUE_SHIFT = 0.05  # cycles
SAT_RANGE = (0.8, 1.2)
CONTRAST_RANGE = (0.8, 1.2)
BRIGHTNESS_SHIFT = 0.1
FLIP_PROB = 0.5


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Vectorized; rgb in [0, 1], any leading shape with a trailing 3-axis."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    v = maxc
    span = maxc - minc
    s = np.where(maxc > 0, span / np.maximum(maxc, 1e-12), 0.0)
    safe = np.maximum(span, 1e-12)
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    h = np.where(maxc == r, bc - gc, np.where(maxc == g, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(span == 0.0, 0.0, (h / 6.0) % 1.0)
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]

    def channel(n: float) -> np.ndarray:
        k = (n + h * 6.0) % 6.0
        return v - v * s * np.clip(np.minimum(k, 4.0 - k), 0.0, 1.0)

    return np.stack([channel(5.0), channel(3.0), channel(1.0)], axis=-1)


def _photometric_reference(
    images: np.ndarray,
    dh: np.ndarray,
    fs: np.ndarray,
    fc: np.ndarray,
    db: np.ndarray,
) -> np.ndarray:
    hsv = rgb_to_hsv(images)
    hsv[..., 0] = (hsv[..., 0] + dh[:, None, None]) % 1.0
    hsv[..., 1] = np.clip(hsv[..., 1] * fs[:, None, None], 0.0, 1.0)
    out = hsv_to_rgb(hsv).astype(np.float32)
    out = (out - 0.5) * fc[:, None, None, None] + 0.5
    out = out + db[:, None, None, None]
    np.clip(out, 0.0, 1.0, out=out)
    return out


def _build_photometric_kernel():
    if numba is None:  # pragma: no cover
        return None

    @numba.njit(cache=True)
    def kernel(images, dh, fs, fc, db, out):  # pragma: no cover - jit body
        n, height, width, _ = images.shape
        for i in range(n):
            hue_shift = np.float64(dh[i])
            sat_gain = np.float64(fs[i])
            con_gain = np.float64(fc[i])
            bri_shift = np.float64(db[i])
            for y in range(height):
                for x in range(width):
                    r = np.float64(images[i, y, x, 0])
                    g = np.float64(images[i, y, x, 1])
                    b = np.float64(images[i, y, x, 2])
                    maxc = max(r, g, b)
                    minc = min(r, g, b)
                    v = maxc
                    span = maxc - minc
                    s = span / max(maxc, 1e-12) if maxc > 0 else 0.0
                    if span == 0.0:
                        h = 0.0
                    else:
                        safe = max(span, 1e-12)
                        rc = (maxc - r) / safe
                        gc = (maxc - g) / safe
                        bc = (maxc - b) / safe
                        if maxc == r:
                            h = bc - gc
                        elif maxc == g:
                            h = 2.0 + rc - bc
                        else:
                            h = 4.0 + gc - rc
                        h = (h / 6.0) % 1.0
                    h = (h + hue_shift) % 1.0
                    s = min(max(s * sat_gain, 0.0), 1.0)
                    for ch in range(3):
                        phase = 5.0 if ch == 0 else (3.0 if ch == 1 else 1.0)
                        k = (phase + h * 6.0) % 6.0
                        val = v - v * s * min(max(min(k, 4.0 - k), 0.0), 1.0)
                        val = (val - 0.5) * con_gain + 0.5 + bri_shift
                        out[i, y, x, ch] = min(max(val, 0.0), 1.0)

    return kernel


_photometric_jit = _build_photometric_kernel()


def adjust_photometrics(
    images: np.ndarray,
    dh: np.ndarray,
    fs: np.ndarray,
    fc: np.ndarray,
    db: np.ndarray,
    *,
    use_jit: bool | None = None,
) -> np.ndarray:
    """Hue shift, saturation/contrast gain, brightness shift; clipped to [0, 1]."""
    if use_jit is None:
        use_jit = _photometric_jit is not None
    if use_jit and _photometric_jit is not None and images.dtype == np.float32:
        out = np.empty_like(images)
        _photometric_jit(
            images,
            dh.astype(np.float32),
            fs.astype(np.float32),
            fc.astype(np.float32),
            db.astype(np.float32),
            out,
        )
        return out
    return _photometric_reference(images, dh, fs, fc, db)


def flip_labels(actions: np.ndarray, commands: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mirror wheel actions and the (left, straight, right) command."""
    return actions[:, ::-1].copy(), commands[:, ::-1].copy()


def augment_batch(
    images: np.ndarray,
    actions: np.ndarray,
    commands: np.ndarray,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """images float32 (N, H, W, 3) in [0, 1]; returns new arrays."""
    n = images.shape[0]
    flip = rng.random(n) < FLIP_PROB
    dh = rng.uniform(-HUE_SHIFT, HUE_SHIFT, n).astype(np.float32)
    fs = rng.uniform(*SAT_RANGE, n).astype(np.float32)
    fc = rng.uniform(*CONTRAST_RANGE, n).astype(np.float32)
    db = rng.uniform(-BRIGHTNESS_SHIFT, BRIGHTNESS_SHIFT, n).astype(np.float32)

    out = adjust_photometrics(images, dh, fs, fc, db)

    out[flip] = out[flip, :, ::-1, :]
    actions = actions.copy()
    commands = commands.copy()
    flipped_a, flipped_c = flip_labels(actions[flip], commands[flip])
    actions[flip] = flipped_a
    commands[flip] = flipped_c
    return out, actions, commands


def augment_sample(
    image: np.ndarray, action: np.ndarray, command: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    imgs, acts, cmds = augment_batch(image[None], action[None], command[None], rng)
    return imgs[0], acts[0], cmds[0]
