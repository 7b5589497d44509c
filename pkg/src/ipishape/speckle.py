"""Synthetic interferometric speckle forward model.

A particle mask is converted into an ensemble of point-emitter asperities
(randomly selected in-contour cells with i.i.d. uniform phases). The
out-of-focus interferogram is the squared modulus of the 2D DFT of that
complex emitter field, so the inverse DFT of the image is exactly the
circular autocorrelation of the field. Physical set-up parameters (sensor
size, pixel pitch, objective focal length) are carried as metadata only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .errors import EmptyMaskError
from .shapes import bounding_box


@dataclass(frozen=True)
class OpticsConfig:
    """Geometry of the synthetic imaging chain.

    image_n must be at least twice the object support side so the circular
    autocorrelation of the emitter field is alias-free. The sensor fields are
    documentary and recorded in dataset manifests.
    """

    image_n: int = 256
    object_n: int = 128
    sensor_px: tuple[int, int] = (1545, 1164)
    pixel_pitch_um: float = 6.45
    objective_focal_mm: float = 80.0

    def __post_init__(self):
        if self.image_n < 4 or self.image_n & (self.image_n - 1) != 0:
            raise ValueError(f"image_n must be a power of two >= 4, got {self.image_n}")
        if self.object_n > self.image_n:
            raise ValueError("object grid larger than image frame")


@dataclass(frozen=True)
class NoiseConfig:
    """Optional detector-style noise; all-zero config is the identity."""

    gaussian_sigma_rel: float = 0.0
    shot_scale: float = 0.0
    quantize_bits: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.gaussian_sigma_rel < 0 or self.shot_scale < 0:
            raise ValueError("noise levels must be nonnegative")
        if self.quantize_bits not in (0, 8, 16):
            raise ValueError(f"quantize_bits must be 0, 8 or 16, got {self.quantize_bits}")

    @property
    def enabled(self) -> bool:
        return self.gaussian_sigma_rel > 0 or self.shot_scale > 0 or self.quantize_bits > 0


@dataclass(frozen=True)
class AsperitySet:
    """Point emitters on the object grid: integer cells, phases, amplitudes."""

    cells: np.ndarray  # (k, 2) int
    phases: np.ndarray  # (k,) float, in [0, 2pi)
    amplitudes: np.ndarray  # (k,) float
    object_n: int

    def __post_init__(self):
        if len(self.cells) < 1:
            raise ValueError("an asperity set needs at least one emitter")
        if not (len(self.cells) == len(self.phases) == len(self.amplitudes)):
            raise ValueError("cells, phases and amplitudes must have equal length")

    @property
    def count(self) -> int:
        return len(self.cells)

    def support_side(self) -> int:
        """Side of the bounding box of the emitter cells."""
        lo0, hi0 = self.cells[:, 0].min(), self.cells[:, 0].max()
        lo1, hi1 = self.cells[:, 1].min(), self.cells[:, 1].max()
        return int(max(hi0 - lo0, hi1 - lo1) + 1)


@dataclass
class ACMap:
    """Inverse DFT of a speckle image, fftshifted so zero lag is centered.

    The complex data is Hermitian-symmetrized (an exact identity for real
    images, restored here to the last floating-point bit), so the magnitude
    is exactly centrosymmetric about the center pixel.
    """

    data: np.ndarray  # complex, (n, n), zero lag at (n//2, n//2)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def center(self) -> tuple[int, int]:
        return self.n // 2, self.n // 2

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.data)

    @property
    def center_value(self) -> complex:
        return complex(self.data[self.center])


def sample_asperities(mask: np.ndarray, density: float, seed: int) -> AsperitySet:
    """Select in-contour cells as point emitters with random phases.

    Each nonzero mask cell is kept independently with probability `density`;
    selected cells get i.i.d. phases uniform in [0, 2pi) and unit amplitude.
    An empty draw is resampled with an incremented seed, so at least one
    asperity is guaranteed.
    """
    if not 0 < density <= 1:
        raise ValueError(f"density must be in (0, 1], got {density}")
    cells = np.argwhere(mask != 0)
    if len(cells) == 0:
        raise EmptyMaskError("cannot place asperities on an empty mask")
    s = seed
    while True:
        rng = np.random.default_rng(s)
        keep = rng.random(len(cells)) < density
        if keep.any():
            chosen = cells[keep]
            phases = rng.uniform(0.0, 2.0 * np.pi, size=len(chosen))
            return AsperitySet(
                cells=chosen,
                phases=phases,
                amplitudes=np.ones(len(chosen)),
                object_n=mask.shape[0],
            )
        s += 1


def emitter_field(asp: AsperitySet, image_n: int) -> np.ndarray:
    """Complex emitter field embedded centered in an image_n x image_n frame."""
    offset = (image_n - asp.object_n) // 2
    g = np.zeros((image_n, image_n), dtype=np.complex128)
    g[asp.cells[:, 0] + offset, asp.cells[:, 1] + offset] = asp.amplitudes * np.exp(1j * asp.phases)
    return g


def embed_mask(mask: np.ndarray, image_n: int) -> np.ndarray:
    """Embed an object-grid mask centered in an image_n x image_n frame."""
    n = mask.shape[0]
    if n > image_n:
        raise ValueError(f"mask side {n} larger than frame side {image_n}")
    offset = (image_n - n) // 2
    out = np.zeros((image_n, image_n), dtype=mask.dtype)
    out[offset : offset + n, offset : offset + n] = mask
    return out


def synthesize_speckle(asp: AsperitySet, optics: OpticsConfig) -> np.ndarray:
    """Speckle image: squared modulus of the plain forward DFT of the field.

    Raises if the emitter support violates the anti-aliasing margin
    (support side must be at most image_n / 2).
    """
    side = asp.support_side()
    if 2 * side > optics.image_n:
        need = 1 << (2 * side - 1).bit_length()
        raise ValueError(
            f"object support side {side} needs image_n >= {need} "
            f"to avoid autocorrelation aliasing (got {optics.image_n})"
        )
    g = emitter_field(asp, optics.image_n)
    spectrum = sfft.fft2(g)
    return (spectrum.real**2 + spectrum.imag**2).astype(np.float64)


def add_noise(img: np.ndarray, noise: NoiseConfig) -> np.ndarray:
    """Shot noise, additive Gaussian noise, zero clamp, then quantization.

    Shot: Poisson at shot_scale photons for the brightest pixel, rescaled
    back. Gaussian: sigma = gaussian_sigma_rel * mean(img). Quantization is
    midtread over [0, max]. Deterministic per noise.seed; an all-zero config
    returns the input unchanged.
    """
    if not noise.enabled:
        return img
    rng = np.random.default_rng(noise.seed)
    out = img.astype(np.float64, copy=True)
    peak = float(out.max())
    if noise.shot_scale > 0 and peak > 0:
        lam = out * (noise.shot_scale / peak)
        out = rng.poisson(lam).astype(np.float64) * (peak / noise.shot_scale)
    if noise.gaussian_sigma_rel > 0:
        sigma = noise.gaussian_sigma_rel * float(img.mean())
        out = out + rng.normal(0.0, sigma, size=out.shape)
    np.clip(out, 0.0, None, out=out)
    if noise.quantize_bits > 0:
        peak = float(out.max())
        if peak > 0:
            step = peak / (2**noise.quantize_bits - 1)
            out = np.rint(out / step) * step
    return out


def autocorrelation_map(img: np.ndarray) -> ACMap:
    """Inverse DFT of the image, centered: the field autocorrelation estimate.

    Uses the 1/n^2 inverse normalization, so for a noise-free unit-amplitude
    speckle the center value equals the asperity count. The output is
    Hermitian-symmetrized, an identity that floating-point FFTs break at the
    1e-16 level.
    """
    if img.ndim != 2 or img.shape[0] != img.shape[1]:
        raise ValueError(f"expected a square image, got shape {img.shape}")
    ac = sfft.ifft2(img.astype(np.float64))
    reflected = np.roll(ac[::-1, ::-1], 1, axis=(0, 1))
    ac = 0.5 * (ac + np.conj(reflected))
    return ACMap(data=sfft.fftshift(ac))
