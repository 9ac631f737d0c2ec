"""Helmholtz kernel, ball integrals and FFT convolution on regular lattices."""

import os

import numpy as np
import scipy.fft


def ball_volume(a):
    return 4.0 * np.pi * np.asarray(a, dtype=float) ** 3 / 3.0


def green(k, r):
    """Outgoing free-space kernel ``exp(i k r) / (4 pi r)``."""
    r = np.asarray(r, dtype=float)
    return np.exp(1j * k * r) / (4.0 * np.pi * r)


def ball_newtonian_potential(x, center, a):
    """``int_{|y - center| < a} dy / |x - y|`` in closed form.

    Outside the ball this is ``V(a) / |x - center|``; inside it is
    ``2 pi (a**2 - |x - center|**2 / 3)``. Broadcasts over leading axes.
    """
    a = np.asarray(a, dtype=float)
    r = np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(center, dtype=float), axis=-1)
    outside = r >= a
    safe_r = np.where(outside, r, 1.0)
    return np.where(outside, ball_volume(a) / safe_r, 2.0 * np.pi * (a**2 - r**2 / 3.0))


def fft_workers():
    """Thread count for FFTs, from ``EFFMED_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("EFFMED_THREADS", "1")))
    except ValueError:
        return 1


class LatticeConvolution:
    """Apply ``y_j = sum_m K(x_j - x_m) v_m`` on a regular lattice by FFT.

    ``K(offset) = green(k, |offset|) * scale`` for non-zero offsets and
    ``K(0) = self_value``. The lattice has ``shape`` sites with ``spacing``
    along each axis. Products are exact up to FFT round-off; the result does
    not depend on the thread count.
    """

    def __init__(self, shape, spacing, k, scale=1.0, self_value=0.0):
        self.shape = tuple(int(n) for n in shape)
        self.spacing = np.asarray(spacing, dtype=float)
        self.k = float(k)
        self.padded = tuple(2 * n for n in self.shape)
        offsets = []
        for n, h in zip(self.shape, self.spacing):
            idx = np.arange(2 * n)
            # circular layout: 0..n-1 positive offsets, n+1..2n-1 negative, n unused
            off = np.where(idx < n, idx, idx - 2 * n).astype(float)
            offsets.append(off * h)
        ox, oy, oz = np.meshgrid(*offsets, indexing="ij", sparse=True)
        r = np.sqrt(ox**2 + oy**2 + oz**2)
        with np.errstate(divide="ignore", invalid="ignore"):
            kern = green(self.k, r) * scale
        kern[0, 0, 0] = self_value
        for axis, n in enumerate(self.shape):
            sl = [slice(None)] * 3
            sl[axis] = n
            kern[tuple(sl)] = 0.0
        self._kernel_hat = scipy.fft.fftn(kern, workers=fft_workers())

    def __call__(self, v):
        v = np.asarray(v, dtype=complex).reshape(self.shape)
        w = fft_workers()
        vh = scipy.fft.fftn(v, s=self.padded, workers=w)
        out = scipy.fft.ifftn(vh * self._kernel_hat, workers=w)
        return out[: self.shape[0], : self.shape[1], : self.shape[2]]


def pairwise_kernel_matrix(k, targets, sources, scale=1.0):
    """Dense matrix ``green(k, |t_j - s_m|) * scale``; zero where the points coincide."""
    targets = np.asarray(targets, dtype=float)
    sources = np.asarray(sources, dtype=float)
    d = np.linalg.norm(targets[:, None, :] - sources[None, :, :], axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(d > 0, green(k, d), 0.0)
    return g * scale


def pairwise_apply(k, targets, sources, v, chunk=512):
    """``sum_m green(k, |t_j - s_m|) v_m`` without storing the matrix.

    Coincident points contribute nothing. Rows are processed in fixed-size
    blocks, so the summation order per row is fixed.
    """
    targets = np.asarray(targets, dtype=float)
    out = np.empty(len(targets), dtype=complex)
    for start in range(0, len(targets), chunk):
        block = pairwise_kernel_matrix(k, targets[start:start + chunk], sources)
        out[start:start + chunk] = block @ v
    return out
