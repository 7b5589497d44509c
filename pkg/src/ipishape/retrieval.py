"""Shape reconstruction from speckle by error-reduction phase retrieval.

The pipeline goes speckle image -> autocorrelation map -> cleaned magnitude
-> (support estimate, Fourier modulus) -> alternating projections between the
Fourier-modulus constraint and the object-domain constraints (support,
realness, nonnegativity). Works well for centrosymmetric particles and
degrades for non-centrosymmetric ones, whose point reflection is
indistinguishable from the autocorrelation data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .errors import EmptyMaskError, EmptySupportError
from .speckle import ACMap, autocorrelation_map

_STAGNATION_WINDOW = 20
_STAGNATION_TOL = 1e-8


@dataclass(frozen=True)
class ERConfig:
    iterations: int = 500
    support_threshold_rel: float = 0.04
    init_seed: int = 0
    binarize_method: str = "fixed"  # "fixed" (0.5 * max) or "otsu"

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0 < self.support_threshold_rel < 1:
            raise ValueError("support_threshold_rel must be in (0, 1)")
        if self.binarize_method not in ("fixed", "otsu"):
            raise ValueError(f"unknown binarize method {self.binarize_method!r}")


@dataclass(frozen=True)
class ModulusMap:
    """Target Fourier modulus |DFT(shape)| in unshifted DFT order."""

    values: np.ndarray
    clamp_count: int = 0


@dataclass
class ERResult:
    reconstruction: np.ndarray  # (n, n) nonnegative reals, zero outside support
    error_trace: np.ndarray  # per-iteration Fourier-domain residuals
    support: np.ndarray  # the support mask used
    iterations_run: int


def clean_autocorrelation(ac: ACMap) -> np.ndarray:
    """Magnitude of the AC map with the central self-correlation spike removed.

    The zero-lag value (the emitter count, a self term carrying no shape
    information) is replaced by the maximum of its 8-neighborhood.
    """
    mag = ac.magnitude
    ci, cj = ac.center
    neigh = mag[ci - 1 : ci + 2, cj - 1 : cj + 2].copy()
    neigh[1, 1] = -np.inf
    out = mag.copy()
    out[ci, cj] = max(float(neigh.max()), 0.0)
    return out


def estimate_support(ac_clean: np.ndarray, threshold_rel: float = 0.04) -> np.ndarray:
    """Centered box support mask derived from the AC support.

    The autocorrelation support is twice the object support minus one, so the
    object fits in a centered box of half the AC bounding-box dimensions; one
    margin cell is added per side.
    """
    if (ac_clean < 0).any():
        raise ValueError("cleaned autocorrelation must be nonnegative")
    peak = float(ac_clean.max())
    if peak <= 0:
        raise EmptySupportError("autocorrelation is all zero; no support to estimate")
    above = ac_clean >= threshold_rel * peak
    rows = np.flatnonzero(above.any(axis=1))
    cols = np.flatnonzero(above.any(axis=0))
    h_ac = int(rows[-1] - rows[0] + 1)
    w_ac = int(cols[-1] - cols[0] + 1)
    n = ac_clean.shape[0]
    h = min(-(-h_ac // 2) + 2, n)
    w = min(-(-w_ac // 2) + 2, n)
    support = np.zeros((n, n), dtype=np.uint8)
    r0 = (n - h) // 2
    c0 = (n - w) // 2
    support[r0 : r0 + h, c0 : c0 + w] = 1
    return support


def fourier_modulus(ac_clean: np.ndarray) -> ModulusMap:
    """Fourier modulus estimate: sqrt of the DFT of the cleaned AC.

    Negative real excursions (noise artifacts; absent on exact
    autocorrelations) are clamped to zero and counted. Values materially
    below zero (beyond 1e-12 of the peak) are what the clamp count reports.
    """
    spectrum = sfft.fft2(sfft.ifftshift(ac_clean))
    re = spectrum.real
    peak = float(np.abs(re).max())
    clamp_count = int((re < -1e-12 * peak).sum()) if peak > 0 else 0
    return ModulusMap(values=np.sqrt(np.clip(re, 0.0, None)), clamp_count=clamp_count)


def _half_spectrum_weights(n: int) -> np.ndarray:
    """Column weights turning half-spectrum sums into full-grid sums."""
    w = np.full(n // 2 + 1, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    return w


def error_reduction(modulus: ModulusMap | np.ndarray, support: np.ndarray, config: ERConfig) -> ERResult:
    """Alternating-projection phase retrieval against a Fourier modulus.

    Starts from a seeded uniform-random nonnegative image inside the support
    and iterates: impose the target modulus in the Fourier domain, then
    realness/nonnegativity/support in the object domain. Records the
    Fourier-domain residual E_F(k) = ||  |G_k| - M ||_2 / ||M||_2 per
    iteration (nonincreasing for this scheme) and stops at the configured
    iteration count or when E_F stalls below 1e-8 over a 20-iteration window.

    The iterate is real, so the loop runs on the real-to-complex half
    spectrum; the modulus target is symmetrized to match.
    """
    M = modulus.values if isinstance(modulus, ModulusMap) else np.asarray(modulus, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"modulus must be square, got shape {M.shape}")
    if support.shape != M.shape:
        raise ValueError(f"support shape {support.shape} != modulus shape {M.shape}")
    sup = support != 0
    if not sup.any():
        raise ValueError("support is empty")
    n = M.shape[0]
    # exact centrosymmetric target (true moduli of real objects already are)
    M = 0.5 * (M + np.roll(M[::-1, ::-1], 1, axis=(0, 1)))
    mh = M[:, : n // 2 + 1]
    w = _half_spectrum_weights(n)[None, :]
    m_norm = float(np.sqrt((w * mh**2).sum()))
    if m_norm == 0:
        raise ValueError("modulus is identically zero")

    rng = np.random.default_rng(config.init_seed)
    g = np.zeros((n, n), dtype=np.float64)
    g[sup] = rng.random(int(sup.sum()))

    trace: list[float] = []
    positive = mh > 0
    for _ in range(config.iterations):
        G = sfft.rfft2(g)
        absG = np.abs(G)
        trace.append(float(np.sqrt((w * (absG - mh) ** 2).sum()) / m_norm))
        if (
            len(trace) > _STAGNATION_WINDOW
            and trace[-1 - _STAGNATION_WINDOW] - trace[-1] < _STAGNATION_TOL
        ):
            break
        phase = np.where(absG > 0, G / np.where(absG > 0, absG, 1.0), 1.0)
        G = np.where(positive, mh * phase, 0.0)
        g_new = sfft.irfft2(G, s=(n, n))
        g = np.where(sup & (g_new > 0), g_new, 0.0)
    return ERResult(
        reconstruction=g,
        error_trace=np.array(trace),
        support=support.astype(np.uint8),
        iterations_run=len(trace),
    )


def _otsu_threshold(values: np.ndarray, bins: int = 256) -> float:
    """Between-class variance maximization over a histogram of `values`."""
    hist, edges = np.histogram(values, bins=bins)
    centers = 0.5 * (edges[:-1] + edges[1:])
    weight = hist.astype(np.float64)
    total = weight.sum()
    w0 = np.cumsum(weight)
    w1 = total - w0
    m = np.cumsum(weight * centers)
    mu0 = np.divide(m, w0, out=np.zeros_like(m), where=w0 > 0)
    mu1 = np.divide(m[-1] - m, w1, out=np.zeros_like(m), where=w1 > 0)
    between = w0 * w1 * (mu0 - mu1) ** 2
    return float(centers[int(np.argmax(between))])


def binarize(recon: np.ndarray, method: str = "fixed") -> np.ndarray:
    """Threshold a nonnegative reconstruction into a {0,1} mask."""
    if (recon < 0).any():
        raise ValueError("reconstruction must be nonnegative")
    peak = float(recon.max())
    if peak <= 0:
        raise EmptyMaskError("cannot binarize an all-zero reconstruction")
    if method == "fixed":
        return (recon >= 0.5 * peak).astype(np.uint8)
    if method == "otsu":
        t = _otsu_threshold(recon[recon > 0])
        return (recon > t).astype(np.uint8)
    raise ValueError(f"unknown binarize method {method!r}")


@dataclass
class RetrievalOutput:
    mask: np.ndarray
    result: ERResult
    modulus: ModulusMap
    ac_clean: np.ndarray


def reconstruct_from_speckle(img: np.ndarray, config: ERConfig = ERConfig()) -> RetrievalOutput:
    """Full pipeline from a speckle image to a binary shape mask."""
    ac = autocorrelation_map(img)
    ac_clean = clean_autocorrelation(ac)
    support = estimate_support(ac_clean, config.support_threshold_rel)
    modulus = fourier_modulus(ac_clean)
    result = error_reduction(modulus, support, config)
    mask = binarize(result.reconstruction, config.binarize_method)
    return RetrievalOutput(mask=mask, result=result, modulus=modulus, ac_clean=ac_clean)


def reconstruct_from_autocorrelation(ac_mag: np.ndarray, config: ERConfig = ERConfig()) -> RetrievalOutput:
    """Pipeline entry for an exact (already clean) autocorrelation magnitude."""
    support = estimate_support(ac_mag, config.support_threshold_rel)
    modulus = fourier_modulus(ac_mag)
    result = error_reduction(modulus, support, config)
    mask = binarize(result.reconstruction, config.binarize_method)
    return RetrievalOutput(mask=mask, result=result, modulus=modulus, ac_clean=ac_mag)
