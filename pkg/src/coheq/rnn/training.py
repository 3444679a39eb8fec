"""Training and inference for the recurrent equalizer.

Windows slide over the symbol frame: by one symbol in many-to-one mode so
every symbol is decoded from its own centered window, and by the output
span S in many-to-many mode so each covered symbol is decoded exactly once.
Training minimizes bit-wise binary cross-entropy with Adam over shuffled
mini-batches; early stopping restores the best-validation-loss weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..complexity import BerValue, compute_ber
from ..rxchain import SymbolFrame, normalize_features
from ..signal_core import RngStream
from .model import RnnEqualizer

__all__ = [
    "AdamState",
    "TrainConfig",
    "adam_step",
    "bce_loss",
    "infer_ber",
    "train",
    "window_offsets",
]

_CLIP = 1e-12

# substream keys for weight init and epoch shuffling
STREAM_INIT = 0x91
STREAM_SHUFFLE = 0x5F


def bce_loss(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy; probabilities clipped at 1e-12 both ends."""
    p = np.clip(probs, _CLIP, 1.0 - _CLIP)
    y = labels
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log1p(-p))))


def bce_logit_grad(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """d(mean BCE)/d(logits) for a sigmoid head: (p - y) / count.

    Exact where no clipping is active; in the clipped regime (|logit| > 27)
    the true gradient is within 1e-12 of this value.
    """
    return (probs - labels) / labels.size


@dataclass
class AdamState:
    """First/second moment estimates per weight plus the step counter."""

    m: dict
    v: dict
    step: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_model(cls, model: RnnEqualizer, learning_rate: float = 1e-3) -> "AdamState":
        return cls(m={k: np.zeros_like(v) for k, v in model.params.items()},
                   v={k: np.zeros_like(v) for k, v in model.params.items()},
                   learning_rate=learning_rate)


def adam_step(params: dict, grads: dict, state: AdamState,
              order: list[str]) -> None:
    """Standard bias-corrected Adam update, applied in a fixed weight order."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name in order:
        g = grads[name]
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = state.m[name] / c1
        v_hat = state.v[name] / c2
        params[name] -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)


@dataclass
class TrainConfig:
    batch_size: int = 512
    max_epochs: int = 300
    early_stop_patience: int = 20
    split: tuple[int, int, int] = (40000, 20000, 60000)
    learning_rate: float = 1e-3
    seed: int = 0


def window_offsets(n_symbols: int, window: int, span: int, mode: str) -> np.ndarray:
    """Window start offsets within a segment of n_symbols symbols.

    many-to-one slides by 1; many-to-many slides by the span so predicted
    indices tile the covered range exactly once. A tail shorter than one
    stride is dropped.
    """
    if n_symbols < window:
        return np.empty(0, dtype=np.int64)
    stride = 1 if mode == "many-to-one" else span
    return np.arange(0, n_symbols - window + 1, stride, dtype=np.int64)


def predicted_indices(offsets: np.ndarray, window: int, span: int) -> np.ndarray:
    """Symbol indices decoded by each window: (n_windows, span)."""
    start = (window - span) // 2
    return offsets[:, None] + start + np.arange(span)[None, :]


def _window_view(arr: np.ndarray, length: int) -> np.ndarray:
    """(n - length + 1, length, width) sliding view, no copy."""
    v = np.lib.stride_tricks.sliding_window_view(arr, length, axis=0)
    return np.swapaxes(v, 1, 2)


class _SegmentData:
    """Windows plus aligned labels for one contiguous split segment."""

    def __init__(self, feats: np.ndarray, labels: np.ndarray,
                 model: RnnEqualizer):
        self.offsets = window_offsets(len(feats), model.window, model.span,
                                      model.mode)
        if len(self.offsets) == 0:
            raise ValueError(
                f"segment of {len(feats)} symbols too short for window "
                f"{model.window}")
        self.x_view = _window_view(feats, model.window)
        self.y_view = _window_view(labels, model.span)
        self.label_start = (model.window - model.span) // 2
        self.indices = predicted_indices(self.offsets, model.window, model.span)

    def batch(self, offs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.x_view[offs], self.y_view[offs + self.label_start]

    def __len__(self) -> int:
        return len(self.offsets)


def _forward_loss(model: RnnEqualizer, seg: _SegmentData,
                  chunk: int = 1024) -> float:
    total = 0.0
    count = 0
    for lo in range(0, len(seg), chunk):
        x, y = seg.batch(seg.offsets[lo:lo + chunk])
        probs, _ = model.forward(x)
        total += bce_loss(probs, y) * y.size
        count += y.size
    return total / count


def _split_frame(frame: SymbolFrame, cfg: TrainConfig, pol: str,
                 model: RnnEqualizer):
    n_tr, n_va, n_te = cfg.split
    if n_tr + n_va + n_te > len(frame):
        raise ValueError(
            f"split {cfg.split} needs {n_tr + n_va + n_te} symbols, frame has "
            f"{len(frame)}")
    if "feature_mean" not in frame.meta:
        frame = normalize_features(frame, train_count=n_tr)
    feats = frame.features
    labels = frame.labels_for(pol).astype(np.float64)
    bounds = (0, n_tr, n_tr + n_va, n_tr + n_va + n_te)
    segs = [
        _SegmentData(feats[bounds[i]:bounds[i + 1]],
                     labels[bounds[i]:bounds[i + 1]], model)
        for i in range(3)
    ]
    return frame, segs


def train(model: RnnEqualizer, frame: SymbolFrame, cfg: TrainConfig,
          pol: str = "x") -> list[dict]:
    """Train in place; returns the per-epoch history.

    The frame is standardized with training-split statistics (reused if it
    already carries them); the statistics are copied into the model metadata
    so inference can be run on raw frames later.
    """
    if frame.bits_per_pol != model.bits:
        raise ValueError(
            f"frame carries {frame.bits_per_pol} bits per symbol, model "
            f"expects {model.bits}")
    frame, (seg_tr, seg_va, _) = _split_frame(frame, cfg, pol, model)
    model.meta.update({
        "feature_mean": frame.meta["feature_mean"],
        "feature_std": frame.meta["feature_std"],
        "pol": pol,
        "train_split": list(cfg.split),
        "seed": cfg.seed,
    })
    shuffle_rng = RngStream(cfg.seed, 0).derive(STREAM_SHUFFLE)
    adam = AdamState.for_model(model, cfg.learning_rate)

    history: list[dict] = []
    best_loss = np.inf
    best_epoch = -1
    best_params = model.copy_params()
    for epoch in range(cfg.max_epochs):
        perm = shuffle_rng.permutation(len(seg_tr))
        loss_sum = 0.0
        elem_count = 0
        for lo in range(0, len(perm), cfg.batch_size):
            offs = seg_tr.offsets[perm[lo:lo + cfg.batch_size]]
            x, y = seg_tr.batch(offs)
            probs, cache = model.forward(x)
            loss_sum += bce_loss(probs, y) * y.size
            elem_count += y.size
            grads = model.backward(cache, bce_logit_grad(probs, y))
            adam_step(model.params, grads, adam, model.param_names)
        val_loss = _forward_loss(model, seg_va)
        history.append({"epoch": epoch, "train_loss": loss_sum / elem_count,
                        "val_loss": val_loss})
        if val_loss < best_loss:
            best_loss = val_loss
            best_epoch = epoch
            best_params = model.copy_params()
        elif epoch - best_epoch >= cfg.early_stop_patience:
            break
    model.params.update(best_params)
    model.meta.update({
        "epochs_run": len(history),
        "best_epoch": best_epoch,
        "best_val_loss": best_loss,
    })
    return history


def _apply_model_normalization(model: RnnEqualizer, frame: SymbolFrame
                               ) -> SymbolFrame:
    if "feature_mean" in frame.meta:
        return frame
    if "feature_mean" not in model.meta:
        raise ValueError("model carries no normalization statistics; train first")
    staged = SymbolFrame(frame.features, frame.labels, frame.tx_symbols,
                         meta={**frame.meta,
                               "feature_mean": model.meta["feature_mean"],
                               "feature_std": model.meta["feature_std"]})
    return normalize_features(staged)


def infer_ber(model: RnnEqualizer, frame: SymbolFrame,
              segment: tuple[int, int] | None = None, pol: str | None = None,
              chunk: int = 1024) -> tuple[BerValue, np.ndarray, dict]:
    """Decode a frame segment and count bit errors.

    Probabilities threshold at 0.5 with ties mapping to bit 1. Returns the
    overall BER, the per-window-position BER vector (length = output span),
    and an info dict with the covered symbol index range.
    """
    pol = pol or model.meta.get("pol", "x")
    frame = _apply_model_normalization(model, frame)
    lo, hi = segment if segment is not None else (0, len(frame))
    feats = frame.features[lo:hi]
    labels = frame.labels_for(pol)[lo:hi]
    seg = _SegmentData(feats, labels.astype(np.float64), model)
    err_by_pos = np.zeros(model.span, dtype=np.int64)
    cnt_by_pos = np.zeros(model.span, dtype=np.int64)
    errors = 0
    total = 0
    covered = []
    for start in range(0, len(seg), chunk):
        offs = seg.offsets[start:start + chunk]
        x, y = seg.batch(offs)
        probs, _ = model.forward(x)
        bits = (probs >= 0.5).astype(np.uint8)
        wrong = bits != y.astype(np.uint8)
        errors += int(wrong.sum())
        total += wrong.size
        err_by_pos += wrong.sum(axis=(0, 2))
        cnt_by_pos += wrong.shape[0] * wrong.shape[2]
        covered.append(seg.indices[start:start + chunk])
    per_position = err_by_pos / np.maximum(cnt_by_pos, 1)
    info = {
        "covered_indices": np.concatenate(covered).reshape(-1) + lo,
        "position_errors": err_by_pos,
        "position_counts": cnt_by_pos,
    }
    return BerValue(errors, total), per_position, info
