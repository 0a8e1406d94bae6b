"""Test images: spectral fBm surfaces and a fixed set of natural images."""

import numpy as np
import pytest

NATURAL = ("camera", "moon", "coins", "astronaut", "page", "text", "clock", "brick", "grass", "gravel")


def fbm_surface(H, shape, seed, peak=255.0):
    """Isotropic fBm-like surface with power spectrum ``|f|**-(2H+2)``, scaled to [0, peak]."""
    h, w = shape
    rng = np.random.default_rng(seed)
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.rfftfreq(w)[None, :]
    f = np.hypot(fy, fx)
    f[0, 0] = np.inf
    spec = f ** -(H + 1.0) * (rng.standard_normal(f.shape) + 1j * rng.standard_normal(f.shape))
    field = np.fft.irfft2(spec, s=(h, w))
    field -= field.min()
    return peak * field / field.max()


def natural_image(name, size=None):
    """Gray 0..255 float image from scikit-image, optionally resized to ``size`` x ``size``."""
    data = pytest.importorskip("skimage.data")
    transform = pytest.importorskip("skimage.transform")
    im = getattr(data, name)()
    if im.ndim == 3:
        im = im[..., :3] @ np.array([0.2125, 0.7154, 0.0721])
    im = np.asarray(im, dtype=float)
    if size is not None:
        im = transform.resize(im, (size, size), anti_aliasing=True, preserve_range=True)
    return im
