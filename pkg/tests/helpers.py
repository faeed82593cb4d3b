"""Shared oracles for the test suite.

Everything here is written deliberately as plain loops or a second,
independent derivation (finite differences, Monte Carlo, brute-force
counting) so library results are checked against code that shares no
logic with the implementation.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from loggate import autodiff as ad
from loggate.autodiff import Tensor


def rel_err(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(1e-4, abs(analytic) + abs(numeric))


def check_gradients(params: dict[str, Tensor], build_loss, eps: float = 1e-6,
                    max_coords: int | None = None,
                    rng: np.random.Generator | None = None) -> float:
    """Max relative error between backward() and central differences.

    `build_loss` must rebuild the scalar loss from the live parameter
    tensors so in-place perturbation is observed. When `max_coords` is
    set, that many coordinates per tensor are sampled with `rng`.
    """
    for t in params.values():
        t.zero_grad()
    build_loss().backward()
    grads = {name: (t.grad.copy() if t.grad is not None
                    else np.zeros_like(t.values))
             for name, t in params.items()}
    worst = 0.0
    for name, t in params.items():
        flat = t.values.reshape(-1)
        if max_coords is not None and flat.size > max_coords:
            coords = sorted(rng.choice(flat.size, size=max_coords, replace=False))
        else:
            coords = range(flat.size)
        flat_grad = grads[name].reshape(-1)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            plus = float(build_loss().values)
            flat[i] = orig - eps
            minus = float(build_loss().values)
            flat[i] = orig
            worst = max(worst, rel_err(flat_grad[i], (plus - minus) / (2 * eps)))
    return worst


def _away_from_kink(rng, shape, low=0.2, high=1.5):
    """Values with |x| in [low, high]: safe for relu/band finite differences."""
    signs = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return signs * rng.uniform(low, high, size=shape)


def op_cases(rng: np.random.Generator):
    """(name, params, build_loss) triples covering every differentiable op."""
    cases = []

    def scaled(expr_fn, *tensors, shape):
        const = Tensor(rng.standard_normal(shape))
        return lambda: ad.total(ad.mul(expr_fn(), const))

    a = ad.parameter(rng.standard_normal((3, 4)))
    b = ad.parameter(rng.standard_normal(4))
    cases.append(("add-broadcast", {"a": a, "b": b},
                  scaled(lambda: ad.add(a, b), shape=(3, 4))))

    c = ad.parameter(rng.standard_normal((3, 4)))
    d = ad.parameter(rng.standard_normal((3, 1)))
    cases.append(("mul-broadcast", {"c": c, "d": d},
                  scaled(lambda: ad.mul(c, d), shape=(3, 4))))

    e = ad.parameter(rng.standard_normal((3, 4)))
    f = ad.parameter(rng.standard_normal((4, 2)))
    cases.append(("matmul", {"e": e, "f": f},
                  scaled(lambda: ad.matmul(e, f), shape=(3, 2))))

    g = ad.parameter(rng.standard_normal((2, 5)))
    cases.append(("transpose", {"g": g},
                  scaled(lambda: ad.transpose(g), shape=(5, 2))))

    h = ad.parameter(_away_from_kink(rng, (4, 3)))
    cases.append(("relu", {"h": h}, scaled(lambda: ad.relu(h), shape=(4, 3))))

    i = ad.parameter(rng.standard_normal((4, 3)))
    cases.append(("sigmoid", {"i": i}, scaled(lambda: ad.sigmoid(i), shape=(4, 3))))

    j = ad.parameter(rng.uniform(-1.0, 1.0, (3, 3)))
    cases.append(("exp", {"j": j}, scaled(lambda: ad.exp(j), shape=(3, 3))))

    k = ad.parameter(rng.uniform(-0.8, 2.0, (3, 3)))
    cases.append(("log1p", {"k": k}, scaled(lambda: ad.log1p(k), shape=(3, 3))))

    l = ad.parameter(rng.standard_normal((3, 3)))
    cases.append(("square", {"l": l}, scaled(lambda: ad.square(l), shape=(3, 3))))

    m = ad.parameter(rng.standard_normal((2, 3)))
    cases.append(("total", {"m": m}, lambda: ad.total(ad.square(m))))

    n1 = ad.parameter(rng.standard_normal((2, 3)))
    n2 = ad.parameter(rng.standard_normal((1, 3)))
    n3 = ad.parameter(rng.standard_normal((3, 3)))
    cases.append(("concat-rows", {"n1": n1, "n2": n2, "n3": n3},
                  scaled(lambda: ad.concat_rows([n1, n2, n3]), shape=(6, 3))))

    table = ad.parameter(rng.standard_normal((7, 4)))
    ids = rng.integers(0, 7, size=6)
    ids[1] = ids[0]  # force a repeated row: backward must scatter-add
    cases.append(("embedding", {"table": table},
                  scaled(lambda: ad.embedding(table, ids), shape=(6, 4))))

    o = ad.parameter(rng.standard_normal((3, 5)))
    valid = np.ones(5, dtype=bool)
    valid[rng.integers(0, 5)] = False
    cases.append(("softmax-masked", {"o": o},
                  scaled(lambda: ad.softmax_rows(o, valid=valid), shape=(3, 5))))

    p = ad.parameter(rng.standard_normal((3, 5)))
    cases.append(("softmax", {"p": p},
                  scaled(lambda: ad.softmax_rows(p), shape=(3, 5))))

    q = ad.parameter(rng.standard_normal((5, 3)))
    labels = rng.integers(0, 3, size=5)
    cases.append(("cross-entropy", {"q": q},
                  lambda: ad.cross_entropy(q, labels)))

    r = ad.parameter(rng.standard_normal((2, 4)))
    s = ad.parameter(rng.standard_normal((4, 4)))
    cases.append(("sigmoid-of-matmul", {"r": r, "s": s},
                  lambda: ad.total(ad.square(ad.sigmoid(ad.matmul(r, s)) - 0.3))))

    return cases


def monte_carlo_kl(mu: np.ndarray, log_var: np.ndarray, n_samples: int,
                   rng: np.random.Generator) -> float:
    """Sampled KL(q || standard normal) for a diagonal Gaussian q."""
    std = np.exp(0.5 * log_var)
    z = mu + std * rng.standard_normal((n_samples, mu.size))
    log_q = -0.5 * (((z - mu) / std) ** 2 + log_var + np.log(2 * np.pi)).sum(axis=1)
    log_p = -0.5 * (z ** 2 + np.log(2 * np.pi)).sum(axis=1)
    return float(np.mean(log_q - log_p))


def fused_attention_oracle(info_map, confidence, stat_embedding, weight, bias,
                           feats, mask, epsilon) -> np.ndarray:
    """Scalar-loop reference for projection, gating and attention."""
    m, d = info_map.shape
    dz = stat_embedding.shape[0]
    stat_info = [sum(stat_embedding[i] * weight[i][j] for i in range(dz)) + bias[j]
                 for j in range(d)]
    fused = [[(info_map[p][j] if info_map[p][j] > 0.0 else 0.0)
              + (confidence[p][j] if abs(confidence[p][j] - 0.5) <= epsilon else 0.0)
              * stat_info[j]
              for j in range(d)]
             for p in range(m)]
    out = np.zeros((m, d))
    for p in range(m):
        scores = [sum(fused[p][j] * feats[q][j] for j in range(d)) for q in range(m)]
        highest = max(scores[q] for q in range(m) if mask[q])
        weights = [math.exp(scores[q] - highest) if mask[q] else 0.0
                   for q in range(m)]
        norm = sum(weights)
        for j in range(d):
            out[p][j] = sum(weights[q] / norm * feats[q][j] for q in range(m))
    return out


def brute_force_metrics(true_ids, pred_ids, n_labels: int):
    """Loop-based P/R/F1: returns (precision, recall, f1, macro, micro)."""
    precision, recall, f1 = [], [], []
    for label in range(n_labels):
        tp = sum(1 for t, p in zip(true_ids, pred_ids) if t == label and p == label)
        fp = sum(1 for t, p in zip(true_ids, pred_ids) if t != label and p == label)
        fn = sum(1 for t, p in zip(true_ids, pred_ids) if t == label and p != label)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        precision.append(prec)
        recall.append(rec)
        f1.append(2 * prec * rec / (prec + rec) if prec + rec else 0.0)
    correct = sum(1 for t, p in zip(true_ids, pred_ids) if t == p)
    micro = correct / len(true_ids) if len(true_ids) else 0.0
    return precision, recall, f1, sum(f1) / n_labels, micro


def brute_force_profile(path) -> dict:
    """Independent whitespace word counting for the profiler oracle."""
    path = Path(path)
    counts: dict[str, int] = {}
    total_lines = 0
    for line in path.read_text(encoding="utf-8").splitlines():
        total_lines += 1
        for word in line.split():
            counts[word] = counts.get(word, 0) + 1
    values = list(counts.values())
    return {
        "dataset_size_bytes": path.stat().st_size,
        "total_lines": total_lines,
        "distinct_words": len(counts),
        "count_appearing_once": sum(1 for v in values if v == 1),
        "count_below_5": sum(1 for v in values if v < 5),
        "count_below_10": sum(1 for v in values if v < 10),
        "count_below_20": sum(1 for v in values if v < 20),
        "count_at_least_once_per_10000_lines":
            sum(1 for v in values if v >= total_lines / 10000.0),
        "count_at_least_once_per_1000_lines":
            sum(1 for v in values if v >= total_lines / 1000.0),
    }


def brute_force_stat_counts(records, n_labels: int) -> dict[str, list[int]]:
    """Independent per-label token counting for the dictionary oracle."""
    counts: dict[str, list[int]] = {}
    for record in records:
        for token in record.tokens:
            counts.setdefault(token, [0] * n_labels)[record.label_id] += 1
    return counts
