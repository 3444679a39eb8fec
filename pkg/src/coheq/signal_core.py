"""Core numeric types, FFT conventions, and deterministic random streams.

Everything downstream (transmitter, fiber solver, receiver, equalizers)
builds on three contracts fixed here:

* dual-polarization waveforms are complex128 arrays on a uniform time grid
  whose length is a power of two;
* the DFT convention is fixed once: forward transform sums with
  ``exp(-j*2*pi*k*n/N)`` and carries no scale factor, the inverse carries
  the ``1/N``; bin ``k`` holds frequency ``k/N*fs`` for ``k < N/2`` with
  negative frequencies in the upper half;
* random numbers come from :class:`RngStream`, addressed purely by
  ``(seed, stream_id)`` so that any draw sequence is reproducible across
  runs and across parallel schedules.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.random import PCG64, Generator, SeedSequence

__all__ = [
    "DualPolWaveform",
    "RngStream",
    "angular_freq_grid",
    "fft_forward",
    "fft_inverse",
    "is_power_of_two",
]

_U64 = (1 << 64) - 1


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def _check_fft_length(n: int) -> None:
    if not is_power_of_two(n):
        raise ValueError(f"FFT length must be a power of two, got {n}")


def fft_forward(v: np.ndarray) -> np.ndarray:
    """Forward DFT, sum with exp(-j*2*pi*k*n/N), no scale factor.

    Raises ValueError if the length is not a power of two.
    """
    v = np.asarray(v)
    _check_fft_length(v.shape[-1])
    return np.fft.fft(v, axis=-1)


def fft_inverse(v: np.ndarray) -> np.ndarray:
    """Inverse DFT carrying the 1/N factor; exact inverse of fft_forward."""
    v = np.asarray(v)
    _check_fft_length(v.shape[-1])
    return np.fft.ifft(v, axis=-1)


def angular_freq_grid(n: int, sample_rate: float) -> np.ndarray:
    """Angular frequencies (rad/s) for each DFT bin in standard layout.

    Bin k holds k/N*fs for k < N/2; the upper half holds the negative
    frequencies. All frequency-domain filters in this package are written
    against this grid.
    """
    _check_fft_length(n)
    return 2.0 * np.pi * np.fft.fftfreq(n, d=1.0 / sample_rate)


@dataclass
class DualPolWaveform:
    """Sampled complex baseband field for the X and Y polarizations.

    Both lanes share a uniform time grid of power-of-two length. Values are
    held in double precision; a waveform is only valid while every sample
    is finite.
    """

    x: np.ndarray
    y: np.ndarray
    sample_rate: float
    center_freq_offset: float = 0.0

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=np.complex128)
        self.y = np.asarray(self.y, dtype=np.complex128)
        if self.x.ndim != 1 or self.y.ndim != 1:
            raise ValueError("waveform lanes must be one-dimensional")
        if len(self.x) != len(self.y):
            raise ValueError(
                f"polarization lanes differ in length: {len(self.x)} vs {len(self.y)}"
            )
        if not is_power_of_two(len(self.x)):
            raise ValueError(f"waveform length must be a power of two, got {len(self.x)}")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not (np.all(np.isfinite(self.x.view(np.float64)))
                and np.all(np.isfinite(self.y.view(np.float64)))):
            raise ValueError("waveform contains NaN or Inf samples")

    def __len__(self) -> int:
        return len(self.x)

    @property
    def duration(self) -> float:
        return len(self.x) / self.sample_rate

    def time_grid(self) -> np.ndarray:
        return np.arange(len(self.x)) / self.sample_rate

    def power(self) -> float:
        """Mean optical power, both polarizations combined (W, by convention)."""
        return float(np.mean(np.abs(self.x) ** 2 + np.abs(self.y) ** 2))

    def scaled(self, factor: complex) -> "DualPolWaveform":
        return DualPolWaveform(self.x * factor, self.y * factor,
                               self.sample_rate, self.center_freq_offset)

    def copy(self) -> "DualPolWaveform":
        return DualPolWaveform(self.x.copy(), self.y.copy(),
                               self.sample_rate, self.center_freq_offset)


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _U64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _U64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _U64
    return (z ^ (z >> 31)) & _U64


@dataclass
class RngStream:
    """Deterministic random stream addressed by (seed, stream_id).

    The same pair always produces the same sample sequence, independent of
    platform and of how work is scheduled. Gaussian variates are produced by
    Box-Muller applied to the uniform doubles of a PCG64 generator seeded
    with SeedSequence([seed, stream_id]); the transform is pinned here so the
    sequences stay stable.

    Streams are stateful and must not be shared between concurrent tasks;
    each task derives its own child with :meth:`derive`.
    """

    seed: int
    stream_id: int = 0
    _gen: Generator | None = field(default=None, repr=False, compare=False)

    def _generator(self) -> Generator:
        if self._gen is None:
            self._gen = Generator(PCG64(SeedSequence([self.seed & _U64,
                                                      self.stream_id & _U64])))
        return self._gen

    def derive(self, *keys: int) -> "RngStream":
        """Independent child stream; the id mixing is a fixed splitmix64 fold."""
        sid = self.stream_id & _U64
        for k in keys:
            sid = _splitmix64(sid ^ _splitmix64(k & _U64))
        return RngStream(self.seed, sid)

    def gaussian_pair(self) -> tuple[float, float]:
        """Two independent standard normal variates via Box-Muller."""
        g = self._generator()
        u1 = 1.0 - g.random()  # in (0, 1], keeps the log finite
        u2 = g.random()
        r = np.sqrt(-2.0 * np.log(u1))
        return float(r * np.cos(2.0 * np.pi * u2)), float(r * np.sin(2.0 * np.pi * u2))

    def normals(self, n: int) -> np.ndarray:
        """n standard normal variates; Box-Muller pairs in draw order.

        Generates ceil(n/2) pairs and truncates, so consuming n then m
        variates differs from consuming n+m at once unless n is even.
        """
        if n < 0:
            raise ValueError("n must be nonnegative")
        if n == 0:
            return np.empty(0)
        g = self._generator()
        npairs = (n + 1) // 2
        u = g.random(2 * npairs)  # same draw order as repeated gaussian_pair
        u1 = 1.0 - u[0::2]
        u2 = u[1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        out = np.empty(2 * npairs)
        out[0::2] = r * np.cos(2.0 * np.pi * u2)
        out[1::2] = r * np.sin(2.0 * np.pi * u2)
        return out[:n]

    def complex_normals(self, n: int) -> np.ndarray:
        """n circular complex normals, unit total variance (1/2 per quadrature)."""
        z = self.normals(2 * n)
        return (z[0::2] + 1j * z[1::2]) / np.sqrt(2.0)

    def uniforms(self, n: int) -> np.ndarray:
        return self._generator().random(n)

    def bits(self, n: int) -> np.ndarray:
        """n i.i.d. uniform bits as uint8: bit = (uniform double < 0.5)."""
        if n <= 0:
            raise ValueError("bit count must be positive")
        return (self._generator().random(n) < 0.5).astype(np.uint8)

    def permutation(self, n: int) -> np.ndarray:
        return self._generator().permutation(n)
