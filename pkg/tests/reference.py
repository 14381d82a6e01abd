"""Straight-line float64 evaluation of the Transformer, one position and head at a time.

Shares nothing with ``catmt.model`` except the parameter naming, so it can serve
as an oracle for the autograd forward pass.
"""

import math

import numpy as np


def softmax(v):
    e = np.exp(v - max(v))
    return e / e.sum()


def norm(x, p, prefix):
    mu = x.mean()
    var = ((x - mu) ** 2).mean()
    return (x - mu) / math.sqrt(var + 1e-5) * p[prefix + ".gain"] + p[prefix + ".bias"]


def pos_enc(pos, d):
    out = np.zeros(d)
    for i in range(d):
        angle = pos / 10000 ** ((2 * (i // 2)) / d)
        out[i] = math.sin(angle) if i % 2 == 0 else math.cos(angle)
    return out


def attention_rows(xq, xkv, allowed, p, prefix, h):
    """xq, xkv: lists of vectors; allowed(i, j) says whether query i sees key j."""
    wq, wk, wv, wo = (p[f"{prefix}.{n}"] for n in ("wq", "wk", "wv", "wo"))
    d_k = wq.shape[1] // h
    d_v = wv.shape[1] // h
    out = []
    for i, q_in in enumerate(xq):
        heads = []
        for head in range(h):
            q = q_in @ wq[:, head * d_k : (head + 1) * d_k]
            scores, values = [], []
            for j, kv in enumerate(xkv):
                if allowed(i, j):
                    k = kv @ wk[:, head * d_k : (head + 1) * d_k]
                    scores.append(q @ k / math.sqrt(d_k))
                    values.append(kv @ wv[:, head * d_v : (head + 1) * d_v])
            w = softmax(np.array(scores))
            heads.append(sum(wi * vi for wi, vi in zip(w, values)))
        out.append(np.concatenate(heads) @ wo)
    return out


def ffn(x, p, prefix):
    return np.maximum(x @ p[prefix + ".w1"] + p[prefix + ".b1"], 0) @ p[prefix + ".w2"] + p[prefix + ".b2"]


def encoder(p, cfg, ids):
    p = {k: v.astype(np.float64) for k, v in p.items()}
    xs = [p["src_embed"][t] * math.sqrt(cfg.d_model) + pos_enc(i, cfg.d_model) for i, t in enumerate(ids)]
    real = [t != 0 for t in ids]
    for layer in range(cfg.n_enc_layers):
        ys = [norm(x, p, f"enc{layer}.ln1") for x in xs]
        att = attention_rows(ys, ys, lambda i, j: real[j], p, f"enc{layer}.self", cfg.h)
        xs = [x + a for x, a in zip(xs, att)]
        xs = [x + ffn(norm(x, p, f"enc{layer}.ln2"), p, f"enc{layer}.ffn") for x in xs]
    return [norm(x, p, "enc.ln_final") for x in xs], real


def decoder_logits(p, cfg, prefix, memory, mem_real):
    p = {k: v.astype(np.float64) for k, v in p.items()}
    xs = [p["tgt_embed"][t] * math.sqrt(cfg.d_model) + pos_enc(i, cfg.d_model) for i, t in enumerate(prefix)]
    for layer in range(cfg.n_dec_layers):
        ys = [norm(x, p, f"dec{layer}.ln1") for x in xs]
        att = attention_rows(ys, ys, lambda i, j: j <= i, p, f"dec{layer}.self", cfg.h)
        xs = [x + a for x, a in zip(xs, att)]
        ys = [norm(x, p, f"dec{layer}.ln2") for x in xs]
        att = attention_rows(ys, memory, lambda i, j: mem_real[j], p, f"dec{layer}.cross", cfg.h)
        xs = [x + a for x, a in zip(xs, att)]
        xs = [x + ffn(norm(x, p, f"dec{layer}.ln3"), p, f"dec{layer}.ffn") for x in xs]
    return np.array([norm(x, p, "dec.ln_final") @ p["out.w"] + p["out.b"] for x in xs])
