"""Bidirectional recurrent equalizer model: weights, forward pass, storage.

The model owns one forward-direction and one backward-direction cell of the
same kind, plus a dense sigmoid head mapping each selected window position's
concatenated 2H-vector to b bit probabilities. ``many-to-one`` decodes only
the central window position; ``many-to-many`` decodes the S central
positions at once (S odd, same parity as the window length, so the selection
is symmetric).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..container import load_arrays, save_arrays
from ..signal_core import RngStream
from .cells import GATE_NAMES, _sigmoid, scan, scan_backward

__all__ = ["RnnEqualizer", "gate_count"]

_MAGIC = b"COHEQWT1"

MODES = ("many-to-one", "many-to-many")


def gate_count(kind: str) -> int:
    return len(GATE_NAMES[kind])


@dataclass
class RnnEqualizer:
    kind: str
    hidden: int
    window: int
    bits: int
    features: int = 4
    mode: str = "many-to-one"
    span: int = 1
    params: dict = field(default_factory=dict)
    param_names: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in GATE_NAMES:
            raise ValueError(f"unknown cell kind {self.kind!r}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError("window length must be odd")
        if self.mode == "many-to-one" and self.span != 1:
            raise ValueError("many-to-one decodes exactly one symbol")
        if not 1 <= self.span <= self.window:
            raise ValueError("output span must lie in [1, window]")
        if (self.window - self.span) % 2 != 0:
            raise ValueError("span and window must have the same parity")

    # ------------------------------------------------------------- weights

    @classmethod
    def create(cls, kind: str, hidden: int, window: int, bits: int,
               rng: RngStream, features: int = 4, mode: str = "many-to-one",
               span: int = 1) -> "RnnEqualizer":
        """Fresh model: Glorot-uniform input/dense kernels, orthogonal
        recurrent kernels, zero biases. Weight draw order is fixed by the
        parameter list so initialization is reproducible."""
        model = cls(kind=kind, hidden=hidden, window=window, bits=bits,
                    features=features, mode=mode, span=span)
        h, f, b = hidden, features, bits
        for direction in ("fw", "bw"):
            for gate in GATE_NAMES[kind]:
                key = f"{direction}.{gate}"
                model._add(f"{key}.w_in", _glorot(rng, (h, f)))
                model._add(f"{key}.w_rec", _orthogonal(rng, h))
                model._add(f"{key}.bias", np.zeros(h))
        model._add("head.weight", _glorot(rng, (b, 2 * h)))
        model._add("head.bias", np.zeros(b))
        return model

    def _add(self, name: str, value: np.ndarray) -> None:
        self.params[name] = value
        self.param_names.append(name)

    def param_count(self) -> int:
        """Exhaustive enumeration over every weight tensor."""
        return int(sum(v.size for v in self.params.values()))

    def zero_grads(self) -> dict:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def copy_params(self) -> dict:
        return {k: v.copy() for k, v in self.params.items()}

    # ------------------------------------------------------------- forward

    @property
    def head_start(self) -> int:
        return (self.window - self.span) // 2

    def bidir_forward(self, windows: np.ndarray) -> tuple[np.ndarray, dict]:
        """Per-position 2H representations for a batch of (N, L, F) windows.

        Both directions start from zero state; position t concatenates the
        forward state after consuming x_1..x_t with the backward state after
        consuming x_L..x_t.
        """
        windows = np.asarray(windows, dtype=np.float64)
        if windows.ndim == 2:
            windows = windows[None]
        if windows.shape[1] != self.window or windows.shape[2] != self.features:
            raise ValueError(
                f"expected windows of shape (N, {self.window}, {self.features}), "
                f"got {windows.shape}")
        h_fw, cache_fw = scan(self.kind, self.params, "fw.", windows)
        h_bw_rev, cache_bw = scan(self.kind, self.params, "bw.", windows[:, ::-1])
        reps = np.concatenate([h_fw, h_bw_rev[:, ::-1]], axis=2)
        return reps, {"fw": cache_fw, "bw": cache_bw, "reps": reps}

    def head_forward(self, reps: np.ndarray) -> np.ndarray:
        """Bit probabilities for the selected S central positions: (N, S, b)."""
        sel = reps[:, self.head_start:self.head_start + self.span]
        logits = sel @ self.params["head.weight"].T + self.params["head.bias"]
        return _sigmoid(logits)

    def forward(self, windows: np.ndarray) -> tuple[np.ndarray, dict]:
        reps, cache = self.bidir_forward(windows)
        probs = self.head_forward(reps)
        cache["probs"] = probs
        return probs, cache

    # ------------------------------------------------------------ backward

    def backward(self, cache: dict, d_logits: np.ndarray) -> dict:
        """Gradients of every weight given d(loss)/d(head logits)."""
        reps = cache["reps"]
        h = self.hidden
        sel = slice(self.head_start, self.head_start + self.span)
        grads = self.zero_grads()
        grads["head.weight"] += np.einsum("nsb,nsh->bh", d_logits, reps[:, sel])
        grads["head.bias"] += d_logits.sum(axis=(0, 1))
        d_reps = np.zeros_like(reps)
        d_reps[:, sel] = d_logits @ self.params["head.weight"]
        scan_backward(self.kind, self.params, "fw.", cache["fw"],
                      d_reps[:, :, :h], grads)
        scan_backward(self.kind, self.params, "bw.", cache["bw"],
                      d_reps[:, ::-1, h:], grads)
        return grads

    # ------------------------------------------------------------- storage

    def save(self, path: str) -> None:
        header = {
            "model_type": "rnn",
            "kind": self.kind,
            "hidden": self.hidden,
            "window": self.window,
            "bits": self.bits,
            "features": self.features,
            "mode": self.mode,
            "span": self.span,
            "param_names": self.param_names,
            "meta": self.meta,
        }
        save_arrays(path, _MAGIC, header,
                    [(k, self.params[k]) for k in self.param_names])

    @classmethod
    def load(cls, path: str) -> "RnnEqualizer":
        header, arrays = load_arrays(path, _MAGIC)
        if header.get("model_type") != "rnn":
            raise ValueError(f"{path}: not a recurrent-equalizer weight file")
        model = cls(kind=header["kind"], hidden=header["hidden"],
                    window=header["window"], bits=header["bits"],
                    features=header["features"], mode=header["mode"],
                    span=header["span"], meta=header["meta"])
        for name in header["param_names"]:
            model._add(name, arrays[name])
        return model


def _glorot(rng: RngStream, shape: tuple[int, int]) -> np.ndarray:
    fan_out, fan_in = shape
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return (2.0 * rng.uniforms(fan_in * fan_out) - 1.0).reshape(shape) * limit


def _orthogonal(rng: RngStream, n: int) -> np.ndarray:
    a = rng.normals(n * n).reshape(n, n)
    q, r = np.linalg.qr(a)
    return q * np.sign(np.diag(r))
