"""Third-order Volterra equalizer with triangular kernels, trained by LMS.

The equalized output is a polynomial in the received complex symbols:

    y(n) =   sum_{i1}            w[i1]          x(n+i1)
           + sum_{i1<=i2}        w[i1,i2]       x(n+i1) x(n+i2)
           + sum_{i1<=i2<=i3}    w[i1,i2,i3]    x(n+i1) x(n+i2) x(n+i3)

with index windows i_j in [-(L_j-1)/2, +(L_j-1)/2] per order. Products are
plain (no conjugated terms). Each polarization lane carries its own weight
vector and is equalized independently.

Training is normalized LMS, data-aided against the transmitted symbols:
w <- w + mu * e * conj(u) / (eps + ||u||^2) per sample, one pass over the
training range per epoch. The per-sample loop is JIT-compiled (numba);
plain-python semantics are pinned by a brute-force oracle in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np
from numba import njit

from .complexity import BerValue, compute_ber
from .container import load_arrays, save_arrays
from .rxchain import SymbolFrame
from .txchain import Constellation, qam_demodulate

__all__ = ["VolterraEqualizer", "volterra_apply", "volterra_ber", "volterra_train"]

_MAGIC = b"COHEQVW1"


def _term_indices(lengths: tuple[int, int, int]) -> tuple[np.ndarray, ...]:
    """Flattened triangular index table: arrays a, b, c plus segment bounds."""
    for L in lengths:
        if L < 1 or L % 2 == 0:
            raise ValueError("memory lengths must be positive odd integers")
    a, b, c = [], [], []
    k = [(L - 1) // 2 for L in lengths]
    for (i1,) in combinations_with_replacement(range(-k[0], k[0] + 1), 1):
        a.append(i1), b.append(0), c.append(0)
    t1 = len(a)
    for i1, i2 in combinations_with_replacement(range(-k[1], k[1] + 1), 2):
        a.append(i1), b.append(i2), c.append(0)
    t2 = len(a)
    for i1, i2, i3 in combinations_with_replacement(range(-k[2], k[2] + 1), 3):
        a.append(i1), b.append(i2), c.append(i3)
    return (np.array(a, np.int64), np.array(b, np.int64), np.array(c, np.int64),
            t1, t2)


@dataclass
class VolterraEqualizer:
    lengths: tuple[int, int, int] = (151, 51, 11)
    mu: float = 0.05
    eps: float = 1e-6
    weights: dict = field(default_factory=dict)  # pol -> complex vector
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.lengths = tuple(int(v) for v in self.lengths)
        a, b, c, t1, t2 = _term_indices(self.lengths)
        self._idx = (a, b, c)
        self._bounds = (t1, t2)

    @property
    def n_terms(self) -> int:
        return len(self._idx[0])

    @property
    def support_margin(self) -> int:
        return max((L - 1) // 2 for L in self.lengths)

    def term_counts(self) -> tuple[int, int, int]:
        t1, t2 = self._bounds
        return t1, t2 - t1, self.n_terms - t2

    def lane_weights(self, pol: str) -> np.ndarray:
        if pol not in self.weights:
            self.weights[pol] = np.zeros(self.n_terms, dtype=np.complex128)
        return self.weights[pol]

    # ------------------------------------------------------------- storage

    def save(self, path: str) -> None:
        header = {
            "model_type": "volterra",
            "lengths": list(self.lengths),
            "mu": self.mu,
            "eps": self.eps,
            "pols": sorted(self.weights),
            "meta": self.meta,
        }
        save_arrays(path, _MAGIC, header,
                    [(f"w.{pol}", self.weights[pol]) for pol in sorted(self.weights)])

    @classmethod
    def load(cls, path: str) -> "VolterraEqualizer":
        header, arrays = load_arrays(path, _MAGIC)
        if header.get("model_type") != "volterra":
            raise ValueError(f"{path}: not a Volterra weight file")
        model = cls(lengths=tuple(header["lengths"]), mu=header["mu"],
                    eps=header["eps"], meta=header["meta"])
        for pol in header["pols"]:
            model.weights[pol] = arrays[f"w.{pol}"]
        return model


def volterra_apply(model: VolterraEqualizer, x: np.ndarray,
                   pol: str = "x") -> np.ndarray:
    """Equalize one lane; output covers indices [margin, len(x) - margin).

    Edge samples without full kernel support are skipped, so the result is
    shorter than the input by twice the support margin.
    """
    x = np.asarray(x, dtype=np.complex128)
    m = model.support_margin
    if len(x) <= 2 * m:
        raise ValueError(
            f"sequence of {len(x)} symbols is shorter than the kernel support "
            f"({2 * m + 1})")
    w = model.lane_weights(pol)
    a, b, c = model._idx
    t1, t2 = model._bounds
    n_out = len(x) - 2 * m
    base = np.arange(m, m + n_out)
    y = np.zeros(n_out, dtype=np.complex128)
    for t in range(t1):
        y += w[t] * x[base + a[t]]
    for t in range(t1, t2):
        y += w[t] * x[base + a[t]] * x[base + b[t]]
    for t in range(t2, len(w)):
        y += w[t] * x[base + a[t]] * x[base + b[t]] * x[base + c[t]]
    return y


@njit(cache=True)
def _nlms_pass(x, d, w, a, b, c, t1, t2, mu, eps, start, stop):  # pragma: no cover
    n_terms = len(w)
    u = np.empty(n_terms, np.complex128)
    mse = 0.0
    for n in range(start, stop):
        for m in range(t1):
            u[m] = x[n + a[m]]
        for m in range(t1, t2):
            u[m] = x[n + a[m]] * x[n + b[m]]
        for m in range(t2, n_terms):
            u[m] = x[n + a[m]] * x[n + b[m]] * x[n + c[m]]
        y = 0.0 + 0.0j
        norm = eps
        for m in range(n_terms):
            y += w[m] * u[m]
            norm += u[m].real * u[m].real + u[m].imag * u[m].imag
        e = d[n] - y
        g = mu * e / norm
        for m in range(n_terms):
            w[m] += g * np.conj(u[m])
        mse += e.real * e.real + e.imag * e.imag
    return mse / (stop - start)


def volterra_train(model: VolterraEqualizer, frame: SymbolFrame,
                   epochs: int = 300, train_count: int | None = None,
                   pols: tuple[str, ...] = ("x", "y")) -> list[dict]:
    """Normalized-LMS adaptation against the transmitted reference symbols.

    One epoch is one pass over the training range. Raises if the mean square
    error grows beyond 1e3 times its initial value (suggesting a smaller mu).
    """
    if epochs < 1:
        raise ValueError("need at least one epoch")
    a, b, c = model._idx
    t1, t2 = model._bounds
    m = model.support_margin
    n_train = len(frame) if train_count is None else int(train_count)
    if n_train > len(frame):
        raise ValueError(f"train_count {n_train} exceeds frame length {len(frame)}")
    if n_train <= 2 * m:
        raise ValueError("training range shorter than the kernel support")
    history = []
    for pol in pols:
        x = frame.rx_complex(pol)[:n_train]
        d = frame.tx_for(pol)[:n_train]
        w = model.lane_weights(pol)
        first_mse = None
        for epoch in range(epochs):
            mse = _nlms_pass(x, d, w, a, b, c, t1, t2, model.mu, model.eps,
                             m, n_train - m)
            if first_mse is None:
                first_mse = mse
            if not np.isfinite(mse) or mse > 1e3 * max(first_mse, 1e-300):
                raise RuntimeError(
                    f"LMS diverged on lane {pol} at epoch {epoch} "
                    f"(mse {mse:.3g}); try a smaller mu")
            history.append({"pol": pol, "epoch": epoch, "mse": mse})
    model.meta.update({"epochs": epochs, "train_count": n_train,
                       "pols": list(pols)})
    return history


def volterra_ber(model: VolterraEqualizer, frame: SymbolFrame,
                 constellation: Constellation,
                 segment: tuple[int, int] | None = None,
                 pols: tuple[str, ...] = ("x", "y")) -> BerValue:
    """Equalize each lane independently, hard-decide, count bit errors."""
    lo, hi = segment if segment is not None else (0, len(frame))
    m = model.support_margin
    errors = 0
    total = 0
    for pol in pols:
        x = frame.rx_complex(pol)[lo:hi]
        y = volterra_apply(model, x, pol)
        got = qam_demodulate(y, constellation)
        ref = frame.labels_for(pol)[lo + m:hi - m].reshape(-1)
        ber = compute_ber(got, ref)
        errors += ber.errors
        total += ber.total
    return BerValue(errors, total)
