"""Radix-2 Cooley-Tukey FFT kernel and two-axis real Fourier token mixing.

The mixing operation takes a real n x d matrix, zero-pads both axes to the
next power of two, applies an unnormalized DFT first along the hidden axis
and then along the sequence axis, keeps the real part, and crops back to
n x d. The padded semantics are the contract. Because the DFT matrix is
symmetric, the adjoint of the whole (real-linear) map is the map itself,
which is what the tape uses as the backward rule.
"""

import numpy as np

from .instrument import COUNTER


class LengthError(ValueError):
    """Raised when a buffer length is not a power of two."""


def is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def next_pow2(n: int) -> int:
    m = 1
    while m < n:
        m <<= 1
    return m


class ComplexBuffer:
    """Power-of-two length complex signal stored as separate re/im arrays."""

    def __init__(self, re, im=None):
        self.re = np.asarray(re, dtype=np.float64).copy()
        if im is None:
            self.im = np.zeros_like(self.re)
        else:
            self.im = np.asarray(im, dtype=np.float64).copy()
        if self.re.ndim != 1 or self.im.shape != self.re.shape:
            raise LengthError("re and im must be 1-D arrays of equal length")
        if not is_pow2(len(self.re)):
            raise LengthError(f"buffer length {len(self.re)} is not a power of two")

    def __len__(self):
        return len(self.re)


_BITREV_CACHE: dict[int, np.ndarray] = {}


def _bitrev(n: int) -> np.ndarray:
    perm = _BITREV_CACHE.get(n)
    if perm is None:
        bits = n.bit_length() - 1
        perm = np.zeros(n, dtype=np.intp)
        for i in range(n):
            r = 0
            x = i
            for _ in range(bits):
                r = (r << 1) | (x & 1)
                x >>= 1
            perm[i] = r
        _BITREV_CACHE[n] = perm
    return perm


def _fft_batched(re, im, inverse: bool):
    """Iterative radix-2 transform along axis 0 of (n, batch) arrays.

    Forward is the unnormalized DFT; inverse conjugates the twiddles and
    scales by 1/n. Returns fresh arrays.
    """
    n, batch = re.shape
    if not is_pow2(n):
        raise LengthError(f"transform length {n} is not a power of two")
    if n == 1:
        out_re, out_im = re.copy(), im.copy()
        if inverse:
            pass  # 1/n scaling is a no-op at n == 1
        return out_re, out_im

    perm = _bitrev(n)
    re = np.ascontiguousarray(re[perm])
    im = np.ascontiguousarray(im[perm])

    sign = 1.0 if inverse else -1.0
    size = 2
    while size <= n:
        half = size // 2
        ang = sign * 2.0 * np.pi * np.arange(half) / size
        wr = np.cos(ang).reshape(1, half, 1)
        wi = np.sin(ang).reshape(1, half, 1)

        vr = re.reshape(n // size, size, batch)
        vi = im.reshape(n // size, size, batch)
        top_r, bot_r = vr[:, :half], vr[:, half:]
        top_i, bot_i = vi[:, :half], vi[:, half:]

        tr = wr * bot_r - wi * bot_i
        ti = wr * bot_i + wi * bot_r
        COUNTER.add(4 * (n // 2) * batch)

        bot_r[...] = top_r - tr
        bot_i[...] = top_i - ti
        top_r[...] += tr
        top_i[...] += ti
        size <<= 1

    if inverse:
        re = re / n
        im = im / n
    return re, im


def fft_pow2(buf: ComplexBuffer, inverse: bool = False) -> ComplexBuffer:
    """Transform a ComplexBuffer; forward unnormalized, inverse scaled by 1/len."""
    re, im = _fft_batched(buf.re.reshape(-1, 1), buf.im.reshape(-1, 1), inverse)
    return ComplexBuffer(re.ravel(), im.ravel())


def mix_real2d(x: np.ndarray) -> np.ndarray:
    """Real part of the hidden-then-sequence DFT of x, zero-padded to powers
    of two along each axis and cropped back to the input shape."""
    n, d = x.shape
    np_, dp = next_pow2(n), next_pow2(d)
    re = np.zeros((np_, dp))
    re[:n, :d] = x
    im = np.zeros_like(re)

    # hidden axis first: each row is a length-dp signal, batched over rows
    hr, hi = _fft_batched(np.ascontiguousarray(re.T), np.ascontiguousarray(im.T), False)
    # then the sequence axis, batched over hidden dims
    sr, _ = _fft_batched(np.ascontiguousarray(hr.T), np.ascontiguousarray(hi.T), False)
    return np.ascontiguousarray(sr[:n, :d])
