"""Independent oracles used to pin expected values.

Everything here is deliberately written on a different code path from the
package: plain Python loops, scalar math, and exhaustive enumeration.
"""

from __future__ import annotations

import math


def ref_average_precision(scores, labels):
    """Rank-threshold sweep evaluated term by term."""
    n = len(scores)
    order = sorted(range(n), key=lambda i: (-scores[i], i))
    n_pos = sum(labels)
    ap = 0.0
    r_prev = 0.0
    for rank in range(1, n + 1):
        top = order[:rank]
        tp = sum(1 for i in top if labels[i])
        precision = tp / rank
        recall = tp / n_pos
        ap += (recall - r_prev) * precision
        r_prev = recall
    return ap


def ref_block_flow(a, b, block_size=8, radius=4):
    """Exhaustive single-level block matching with the shared tie-break."""
    height, width = len(a), len(a[0])
    channels = len(a[0][0])
    out = [[(0.0, 0.0)] * width for _ in range(height)]
    for r0 in range(0, height, block_size):
        h = min(block_size, height - r0)
        for c0 in range(0, width, block_size):
            w = min(block_size, width - c0)
            best = None
            for dy in range(-radius, radius + 1):
                for dx in range(-radius, radius + 1):
                    rr, cc = r0 + dy, c0 + dx
                    if rr < 0 or cc < 0 or rr + h > height or cc + w > width:
                        continue
                    sad = 0.0
                    for i in range(h):
                        for j in range(w):
                            for ch in range(channels):
                                sad += abs(a[r0 + i][c0 + j][ch] - b[rr + i][cc + j][ch])
                    key = (sad, dx * dx + dy * dy, dx, dy)
                    if best is None or key < best:
                        best = key
            for i in range(h):
                for j in range(w):
                    out[r0 + i][c0 + j] = (float(best[2]), float(best[3]))
    return out


# --- scalar transformer-block oracle (single head) ---


def _ref_layernorm(x, gamma, beta, eps=1e-5):
    n = len(x)
    mu = sum(x) / n
    var = sum((v - mu) ** 2 for v in x) / n
    inv = 1.0 / math.sqrt(var + eps)
    return [gamma[i] * ((x[i] - mu) * inv) + beta[i] for i in range(n)]


def _ref_linear(x, w, b):
    n_out = len(b)
    return [sum(x[i] * w[i][j] for i in range(len(x))) + b[j] for j in range(n_out)]


def _ref_gelu(v):
    return 0.5 * v * (1.0 + math.erf(v / math.sqrt(2.0)))


def _ref_attention(tokens, p, prefix):
    """Single-head self-attention over a list of D-vectors."""
    d = len(tokens[0])
    q = [_ref_linear(t, p[f"{prefix}.wq"], p[f"{prefix}.bq"]) for t in tokens]
    k = [_ref_linear(t, p[f"{prefix}.wk"], p[f"{prefix}.bk"]) for t in tokens]
    v = [_ref_linear(t, p[f"{prefix}.wv"], p[f"{prefix}.bv"]) for t in tokens]
    scale = 1.0 / math.sqrt(d)
    out = []
    for qi in q:
        logits = [sum(qi[a] * kj[a] for a in range(d)) * scale for kj in k]
        m = max(logits)
        exps = [math.exp(l - m) for l in logits]
        z = sum(exps)
        probs = [e / z for e in exps]
        ctx = [sum(probs[s] * v[s][a] for s in range(len(tokens))) for a in range(d)]
        out.append(_ref_linear(ctx, p[f"{prefix}.wo"], p[f"{prefix}.bo"]))
    return out


def ref_block(tokens, p, prefix):
    """Pre-norm residual block on a list of D-vectors, scalar math only."""
    d = len(tokens[0])
    h1 = [_ref_layernorm(t, p[f"{prefix}.ln1.g"], p[f"{prefix}.ln1.b"]) for t in tokens]
    attn = _ref_attention(h1, p, f"{prefix}.attn")
    x1 = [[tokens[t][i] + attn[t][i] for i in range(d)] for t in range(len(tokens))]
    out = []
    for t in range(len(tokens)):
        h2 = _ref_layernorm(x1[t], p[f"{prefix}.ln2.g"], p[f"{prefix}.ln2.b"])
        m1 = _ref_linear(h2, p[f"{prefix}.mlp.w1"], p[f"{prefix}.mlp.b1"])
        g1 = [_ref_gelu(v) for v in m1]
        m2 = _ref_linear(g1, p[f"{prefix}.mlp.w2"], p[f"{prefix}.mlp.b2"])
        out.append([x1[t][i] + m2[i] for i in range(d)])
    return out


def ref_encode_frame(tokens, p, n_layers, prefix="frame"):
    """Blocks then layer-normalized slot-0 readout, matching the frame tower."""
    x = [list(t) for t in tokens]
    for layer in range(n_layers):
        x = ref_block(x, p, f"{prefix}.{layer}")
    return _ref_layernorm(x[0], p[f"{prefix}.out.g"], p[f"{prefix}.out.b"])


def params_to_lists(params, names):
    """Convert selected numpy parameter groups to nested Python lists."""
    return {name: params[name].tolist() for name in names}
