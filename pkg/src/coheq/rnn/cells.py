"""Recurrent cell kernels: batched forward scans and exact backward passes.

Three cell kinds share one interface:

* ``vanilla``: h_t = tanh(W x_t + U h_{t-1} + b)
* ``gru``:     z/r gates, candidate h~ = tanh(W x + U (r*h) + b),
               h_t = (1-z)*h_{t-1} + z*h~
* ``lstm``:    i/f/o gates and candidate g, c_t = f*c_{t-1} + i*g,
               h_t = o*tanh(c_t)

Scans run over a whole batch of windows at once; the input-kernel products
for every timestep are hoisted into single matmuls, only the recurrent part
is sequential. Backward passes are hand-derived reverse-mode and return
gradients for every weight; they are verified against central finite
differences in the test suite.

Weight dictionaries use the key layout of :mod:`coheq.rnn.model`:
``w_in`` (H, F), ``w_rec`` (H, H), ``bias`` (H,) per gate.
"""

from __future__ import annotations

import numpy as np

__all__ = ["scan", "scan_backward", "GATE_NAMES"]

GATE_NAMES = {
    "vanilla": ("cell",),
    "gru": ("update", "reset", "cand"),
    "lstm": ("in", "forget", "out", "cand"),
}


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _in_proj(p: dict, prefix: str, gate: str, x: np.ndarray) -> np.ndarray:
    # (N, L, F) @ (F, H) + (H,) -> (N, L, H)
    return x @ p[f"{prefix}{gate}.w_in"].T + p[f"{prefix}{gate}.bias"]


def scan(kind: str, p: dict, prefix: str, x: np.ndarray) -> tuple[np.ndarray, dict]:
    """Run one direction over x of shape (N, L, F) from a zero initial state.

    Returns the hidden states (N, L, H) and the cache for scan_backward.
    """
    n, L, _ = x.shape
    if kind == "vanilla":
        return _scan_vanilla(p, prefix, x)
    if kind == "gru":
        return _scan_gru(p, prefix, x)
    if kind == "lstm":
        return _scan_lstm(p, prefix, x)
    raise ValueError(f"unknown cell kind {kind!r}")


def scan_backward(kind: str, p: dict, prefix: str, cache: dict,
                  d_h: np.ndarray, grads: dict) -> None:
    """Accumulate weight gradients for one direction given d(loss)/d(hidden)."""
    if kind == "vanilla":
        _backward_vanilla(p, prefix, cache, d_h, grads)
    elif kind == "gru":
        _backward_gru(p, prefix, cache, d_h, grads)
    elif kind == "lstm":
        _backward_lstm(p, prefix, cache, d_h, grads)
    else:
        raise ValueError(f"unknown cell kind {kind!r}")


def _stack_prev(hs: np.ndarray) -> np.ndarray:
    """h_{t-1} for every t, with the zero initial state at t=0."""
    prev = np.zeros_like(hs)
    prev[:, 1:] = hs[:, :-1]
    return prev


# ----------------------------------------------------------------- vanilla


def _scan_vanilla(p, prefix, x):
    n, L, _ = x.shape
    h_dim = p[f"{prefix}cell.w_rec"].shape[0]
    pre = _in_proj(p, prefix, "cell", x)
    w_rec = p[f"{prefix}cell.w_rec"]
    hs = np.empty((n, L, h_dim))
    h = np.zeros((n, h_dim))
    for t in range(L):
        h = np.tanh(pre[:, t] + h @ w_rec.T)
        hs[:, t] = h
    return hs, {"x": x, "hs": hs}


def _backward_vanilla(p, prefix, cache, d_h, grads):
    x, hs = cache["x"], cache["hs"]
    n, L, h_dim = hs.shape
    w_rec = p[f"{prefix}cell.w_rec"]
    d_pre = np.empty_like(hs)
    carry = np.zeros((n, h_dim))
    for t in range(L - 1, -1, -1):
        dh = d_h[:, t] + carry
        da = dh * (1.0 - hs[:, t] ** 2)
        d_pre[:, t] = da
        carry = da @ w_rec
    prev = _stack_prev(hs)
    grads[f"{prefix}cell.w_in"] += np.einsum("nlh,nlf->hf", d_pre, x)
    grads[f"{prefix}cell.w_rec"] += np.einsum("nlh,nlg->hg", d_pre, prev)
    grads[f"{prefix}cell.bias"] += d_pre.sum(axis=(0, 1))


# --------------------------------------------------------------------- gru


def _scan_gru(p, prefix, x):
    n, L, _ = x.shape
    h_dim = p[f"{prefix}update.w_rec"].shape[0]
    pre_z = _in_proj(p, prefix, "update", x)
    pre_r = _in_proj(p, prefix, "reset", x)
    pre_c = _in_proj(p, prefix, "cand", x)
    u_z = p[f"{prefix}update.w_rec"]
    u_r = p[f"{prefix}reset.w_rec"]
    u_c = p[f"{prefix}cand.w_rec"]
    hs = np.empty((n, L, h_dim))
    zs = np.empty_like(hs)
    rs = np.empty_like(hs)
    cands = np.empty_like(hs)
    rhs = np.empty_like(hs)
    h = np.zeros((n, h_dim))
    for t in range(L):
        z = _sigmoid(pre_z[:, t] + h @ u_z.T)
        r = _sigmoid(pre_r[:, t] + h @ u_r.T)
        rh = r * h
        cand = np.tanh(pre_c[:, t] + rh @ u_c.T)
        h = (1.0 - z) * h + z * cand
        zs[:, t], rs[:, t], cands[:, t], rhs[:, t], hs[:, t] = z, r, cand, rh, h
    return hs, {"x": x, "hs": hs, "z": zs, "r": rs, "cand": cands, "rh": rhs}


def _backward_gru(p, prefix, cache, d_h, grads):
    x, hs = cache["x"], cache["hs"]
    zs, rs, cands, rhs = cache["z"], cache["r"], cache["cand"], cache["rh"]
    n, L, h_dim = hs.shape
    u_z = p[f"{prefix}update.w_rec"]
    u_r = p[f"{prefix}reset.w_rec"]
    u_c = p[f"{prefix}cand.w_rec"]
    prev = _stack_prev(hs)
    d_az = np.empty_like(hs)
    d_ar = np.empty_like(hs)
    d_ac = np.empty_like(hs)
    carry = np.zeros((n, h_dim))
    for t in range(L - 1, -1, -1):
        dh = d_h[:, t] + carry
        z, r, cand, h_prev = zs[:, t], rs[:, t], cands[:, t], prev[:, t]
        dz = dh * (cand - h_prev)
        dcand = dh * z
        dh_prev = dh * (1.0 - z)
        dac = dcand * (1.0 - cand ** 2)
        drh = dac @ u_c
        dr = drh * h_prev
        dh_prev = dh_prev + drh * r
        daz = dz * z * (1.0 - z)
        dar = dr * r * (1.0 - r)
        dh_prev = dh_prev + daz @ u_z + dar @ u_r
        d_az[:, t], d_ar[:, t], d_ac[:, t] = daz, dar, dac
        carry = dh_prev
    grads[f"{prefix}update.w_in"] += np.einsum("nlh,nlf->hf", d_az, x)
    grads[f"{prefix}update.w_rec"] += np.einsum("nlh,nlg->hg", d_az, prev)
    grads[f"{prefix}update.bias"] += d_az.sum(axis=(0, 1))
    grads[f"{prefix}reset.w_in"] += np.einsum("nlh,nlf->hf", d_ar, x)
    grads[f"{prefix}reset.w_rec"] += np.einsum("nlh,nlg->hg", d_ar, prev)
    grads[f"{prefix}reset.bias"] += d_ar.sum(axis=(0, 1))
    grads[f"{prefix}cand.w_in"] += np.einsum("nlh,nlf->hf", d_ac, x)
    grads[f"{prefix}cand.w_rec"] += np.einsum("nlh,nlg->hg", d_ac, rhs)
    grads[f"{prefix}cand.bias"] += d_ac.sum(axis=(0, 1))


# -------------------------------------------------------------------- lstm


def _scan_lstm(p, prefix, x):
    n, L, _ = x.shape
    h_dim = p[f"{prefix}in.w_rec"].shape[0]
    pre = {g: _in_proj(p, prefix, g, x) for g in ("in", "forget", "out", "cand")}
    u = {g: p[f"{prefix}{g}.w_rec"] for g in ("in", "forget", "out", "cand")}
    hs = np.empty((n, L, h_dim))
    sav = {k: np.empty_like(hs) for k in ("i", "f", "o", "g", "c_prev", "tc")}
    h = np.zeros((n, h_dim))
    c = np.zeros((n, h_dim))
    for t in range(L):
        gi = _sigmoid(pre["in"][:, t] + h @ u["in"].T)
        gf = _sigmoid(pre["forget"][:, t] + h @ u["forget"].T)
        go = _sigmoid(pre["out"][:, t] + h @ u["out"].T)
        gg = np.tanh(pre["cand"][:, t] + h @ u["cand"].T)
        sav["c_prev"][:, t] = c
        c = gf * c + gi * gg
        tc = np.tanh(c)
        h = go * tc
        sav["i"][:, t], sav["f"][:, t], sav["o"][:, t] = gi, gf, go
        sav["g"][:, t], sav["tc"][:, t] = gg, tc
        hs[:, t] = h
    return hs, {"x": x, "hs": hs, **sav}


def _backward_lstm(p, prefix, cache, d_h, grads):
    x, hs = cache["x"], cache["hs"]
    n, L, h_dim = hs.shape
    u = {g: p[f"{prefix}{g}.w_rec"] for g in ("in", "forget", "out", "cand")}
    prev = _stack_prev(hs)
    d_a = {g: np.empty_like(hs) for g in ("in", "forget", "out", "cand")}
    carry_h = np.zeros((n, h_dim))
    carry_c = np.zeros((n, h_dim))
    for t in range(L - 1, -1, -1):
        gi, gf, go = cache["i"][:, t], cache["f"][:, t], cache["o"][:, t]
        gg, tc, c_prev = cache["g"][:, t], cache["tc"][:, t], cache["c_prev"][:, t]
        dh = d_h[:, t] + carry_h
        do = dh * tc
        dc = carry_c + dh * go * (1.0 - tc ** 2)
        df = dc * c_prev
        di = dc * gg
        dg = dc * gi
        carry_c = dc * gf
        dai = di * gi * (1.0 - gi)
        daf = df * gf * (1.0 - gf)
        dao = do * go * (1.0 - go)
        dag = dg * (1.0 - gg ** 2)
        d_a["in"][:, t], d_a["forget"][:, t] = dai, daf
        d_a["out"][:, t], d_a["cand"][:, t] = dao, dag
        carry_h = dai @ u["in"] + daf @ u["forget"] + dao @ u["out"] + dag @ u["cand"]
    for g in ("in", "forget", "out", "cand"):
        grads[f"{prefix}{g}.w_in"] += np.einsum("nlh,nlf->hf", d_a[g], x)
        grads[f"{prefix}{g}.w_rec"] += np.einsum("nlh,nlg->hg", d_a[g], prev)
        grads[f"{prefix}{g}.bias"] += d_a[g].sum(axis=(0, 1))
