"""Regenerates golden_forward.json: reference outputs of the attention scorer computed
in float64 numpy, independently of the Rust implementation.

Run from this directory: python3 golden_forward.py
"""

import json

import numpy as np


def linear(x, w, b):
    return x @ w + b


def forward(cfg, t, state, moves):
    offsets = cfg["vocab_offsets"]
    tok = lambda var, val: offsets[var] + val
    emb = t["embed"]
    s = np.stack([emb[tok(v, x)] for v, x in enumerate(state)])
    raw = np.stack([emb[tok(v, x)] for v, x in moves])
    d, nh = cfg["d_model"], cfg["n_heads"]
    dh = d // nh
    cur = raw
    for l in range(cfg["n_attn_layers"]):
        p = lambda n: t[f"attn.{l}.{n}"]
        q = linear(cur, p("wq"), p("bq"))
        k = linear(s, p("wk"), p("bk"))
        v = linear(s, p("wv"), p("bv"))
        ctx = np.zeros_like(q)
        for h in range(nh):
            c = slice(h * dh, (h + 1) * dh)
            a = q[:, c] @ k[:, c].T / np.sqrt(dh)
            a = np.exp(a - a.max(axis=1, keepdims=True))
            a /= a.sum(axis=1, keepdims=True)
            ctx[:, c] = a @ v[:, c]
        cur = linear(ctx, p("wo"), p("bo"))
    h = np.maximum(linear(np.concatenate([cur, raw], axis=1), t["enc.in.w"], t["enc.in.b"]), 0)
    for k in range(cfg["n_ffn_blocks"]):
        inner = np.maximum(linear(h, t[f"enc.{k}.w1"], t[f"enc.{k}.b1"]), 0)
        h = np.maximum(h + linear(inner, t[f"enc.{k}.w2"], t[f"enc.{k}.b2"]), 0)
    z = linear(h, t["head.w"], t["head.b"])[:, 0]
    return 1 / (1 + np.exp(-z))


def shapes(cfg):
    d, f, vs = cfg["d_model"], cfg["ffn_dim"], cfg["vocab_size"]
    out = {"embed": (vs, d)}
    for l in range(cfg["n_attn_layers"]):
        for p in "qkvo":
            out[f"attn.{l}.w{p}"] = (d, d)
            out[f"attn.{l}.b{p}"] = (d,)
    out["enc.in.w"] = (2 * d, f)
    out["enc.in.b"] = (f,)
    for k in range(cfg["n_ffn_blocks"]):
        out[f"enc.{k}.w1"] = (f, f)
        out[f"enc.{k}.b1"] = (f,)
        out[f"enc.{k}.w2"] = (f, f)
        out[f"enc.{k}.b2"] = (f,)
    out["head.w"] = (f, 1)
    out["head.b"] = (1,)
    return out


def case(name, cfg, tensors, cards, states):
    tensors = {k: np.asarray(v, dtype=np.float32).astype(np.float64) for k, v in tensors.items()}
    for k, shp in shapes(cfg).items():
        assert tensors[k].shape == shp, (k, tensors[k].shape, shp)
    runs = []
    for st in states:
        moves = [(v, x) for v in range(len(cards)) for x in range(cards[v]) if x != st[v]]
        runs.append({"state": st, "moves": moves, "expected": forward(cfg, tensors, st, moves).tolist()})
    return {
        "name": name,
        "config": cfg,
        "cardinalities": cards,
        "tensors": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in tensors.items()},
        "runs": runs,
    }


def hand_case():
    # two binary variables, tokens: x0=0, x0=1, x1=0, x1=1
    cfg = dict(d_model=2, n_heads=1, n_attn_layers=1, n_ffn_blocks=1, ffn_dim=2,
               vocab_offsets=[0, 2], vocab_size=4)
    t = {
        "embed": [[1.0, 0.0], [0.0, 1.0], [0.5, -0.5], [-1.0, 0.25]],
        "attn.0.wq": [[1.0, 0.5], [-0.5, 1.0]],
        "attn.0.bq": [0.1, -0.1],
        "attn.0.wk": [[0.5, 0.0], [0.25, 1.0]],
        "attn.0.bk": [0.0, 0.2],
        "attn.0.wv": [[1.0, -1.0], [0.5, 0.5]],
        "attn.0.bv": [0.05, 0.0],
        "attn.0.wo": [[0.75, 0.25], [-0.25, 1.0]],
        "attn.0.bo": [0.0, -0.05],
        "enc.in.w": [[1.0, -0.5], [0.5, 0.25], [-0.75, 1.0], [0.25, 0.5]],
        "enc.in.b": [0.1, 0.2],
        "enc.0.w1": [[0.5, -1.0], [1.0, 0.5]],
        "enc.0.b1": [0.0, 0.1],
        "enc.0.w2": [[-0.5, 0.25], [0.75, -0.25]],
        "enc.0.b2": [0.05, -0.05],
        "head.w": [[1.5], [-1.0]],
        "head.b": [0.25],
    }
    return case("hand_d2", cfg, t, [2, 2], [[0, 0], [0, 1], [1, 0], [1, 1]])


def random_case():
    rng = np.random.default_rng(20240601)
    cards = [2, 3, 4, 2, 3]
    offsets = np.concatenate([[0], np.cumsum(cards)[:-1]]).tolist()
    cfg = dict(d_model=8, n_heads=2, n_attn_layers=2, n_ffn_blocks=2, ffn_dim=6,
               vocab_offsets=offsets, vocab_size=int(sum(cards)))
    t = {k: rng.normal(0, 0.3, size=shp) for k, shp in shapes(cfg).items()}
    states = [[0, 0, 0, 0, 0], [1, 2, 3, 1, 2], [0, 1, 2, 1, 0]]
    return case("random_d8_h2", cfg, t, cards, states)


if __name__ == "__main__":
    with open("golden_forward.json", "w") as f:
        json.dump({"cases": [hand_case(), random_case()]}, f, indent=1)
