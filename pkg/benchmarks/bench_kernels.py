"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Times each kernel in isolation, then one full training step and one
metric evaluation, under both backends. Outputs are checked for agreement
before timing.
"""

from __future__ import annotations

import argparse
import json
import sys
import timeit

import numpy as np

from catmt import kernels
from catmt.metrics import EvalPair, rouge_l
from catmt.model import ModelConfig, Transformer
from catmt.tokenizer import BOS, EOS, PAD


def cases(rng: np.random.Generator) -> dict:
    x = rng.normal(size=(4 * 4 * 18, 18)).astype(np.float32)  # batch 4, 4 heads, 18 positions
    keep = np.tril(np.ones((18, 18), dtype=bool))[None].repeat(16, 0).reshape(-1, 18)
    ln_x = rng.normal(size=(4 * 18, 128)).astype(np.float32)
    gain, bias = np.ones(128, np.float32), np.zeros(128, np.float32)
    y, xhat, rstd = kernels.layer_norm_forward(ln_x, gain, bias, 1e-6)
    g = rng.normal(size=ln_x.shape).astype(np.float32)
    a = rng.integers(0, 50, size=200).tolist()
    b = rng.integers(0, 50, size=200).tolist()
    sm = kernels.masked_softmax(x, keep)

    cfg = ModelConfig(500, 500)  # the desk preset
    model = Transformer(cfg, seed=0)
    src = np.full((4, 18), PAD)
    tgt_in = np.full((4, 17), PAD)
    tgt_out = np.full((4, 17), PAD)
    for i in range(4):
        n = 6 + 2 * i
        src[i, : n + 2] = [BOS, *rng.integers(4, 500, size=n), EOS]
        t = rng.integers(4, 500, size=n + 1)
        tgt_in[i, : n + 2] = [BOS, *t]
        tgt_out[i, : n + 2] = [*t, EOS]
    words = [f"w{i}" for i in range(300)]
    pairs = [
        EvalPair.from_text(" ".join(rng.choice(words, 12)), " ".join(rng.choice(words, 12))) for _ in range(500)
    ]
    return {
        "masked_softmax (288x18)": lambda: kernels.masked_softmax(x, keep),
        "softmax_backward (288x18)": lambda: kernels.softmax_backward(sm, x),
        "layer_norm_forward (72x128)": lambda: kernels.layer_norm_forward(ln_x, gain, bias, 1e-6),
        "layer_norm_backward (72x128)": lambda: kernels.layer_norm_backward(g, xhat, rstd, gain),
        "lcs_length (200x200)": lambda: kernels.lcs_length(a, b),
        "train step (desk, batch 4)": lambda: model.loss_and_grads(src, tgt_in, tgt_out),
        "ROUGE-L (500 pairs)": lambda: rouge_l(pairs),
    }


def agree(rng: np.random.Generator) -> None:
    """Both backends must produce the same numbers before timing means anything."""
    x = rng.normal(size=(40, 9)).astype(np.float32)
    keep = rng.random((40, 9)) < 0.6
    keep[:, 0] = True
    outs = {}
    for name in kernels.available_backends():
        kernels.use_backend(name)
        outs[name] = (
            kernels.masked_softmax(x, keep),
            kernels.layer_norm_forward(x, np.ones(9, np.float32), np.zeros(9, np.float32), 1e-6)[0],
            kernels.lcs_length([1, 2, 3, 4, 5, 6], [2, 9, 4, 6]),
        )
    if len(outs) == 2:
        c, p = outs["compiled"], outs["python"]
        np.testing.assert_allclose(c[0], p[0], rtol=1e-6, atol=1e-7)
        np.testing.assert_allclose(c[1], p[1], rtol=1e-5, atol=1e-6)
        assert c[2] == p[2] == 3


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json")
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    agree(rng)
    backends = kernels.available_backends()
    if backends == ["python"]:
        print("compiled kernels are not built; timing the fallback only", file=sys.stderr)
    results: dict[str, dict[str, float]] = {}
    for name in backends:
        kernels.use_backend(name)
        for label, fn in cases(np.random.default_rng(1)).items():
            timer = timeit.Timer(fn)
            number, _ = timer.autorange()
            best = min(timer.repeat(repeat=args.repeat, number=number)) / number
            results.setdefault(label, {})[name] = best

    print(f"{'case':32s} " + " ".join(f"{b:>12s}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    for label, row in results.items():
        line = f"{label:32s} " + " ".join(f"{row[b] * 1e6:10.1f}us" for b in backends)
        if len(backends) == 2:
            line += f"  {row['python'] / row['compiled']:9.2f}x"
        print(line)
    if args.json:
        with open(args.json, "w") as f:
            json.dump(results, f, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
