"""Independent reference implementations used by the tests."""

import itertools
import math

import numpy as np


def ks_brute(values, mu=None, sigma=None):
    """Two-sided sup of |F_n - F| at both sides of every sample point, by explicit counting."""
    x = np.log(np.asarray(values, dtype=float))
    mu = x.mean() if mu is None else mu
    sigma = x.std(ddof=1) if sigma is None else sigma
    n = x.size
    best = 0.0
    for xi in x:
        f = 0.5 * math.erfc(-(xi - mu) / (sigma * math.sqrt(2.0)))
        right = np.count_nonzero(x <= xi) / n
        left = np.count_nonzero(x < xi) / n
        best = max(best, abs(right - f), abs(left - f))
    return best


def dominates(a, b):
    return all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b))


def fronts_brute(objs):
    """Peel non-dominated layers by pairwise comparison."""
    left = list(range(len(objs)))
    out = []
    while left:
        front = [i for i in left if not any(dominates(objs[j], objs[i]) for j in left if j != i)]
        out.append(sorted(front))
        left = [i for i in left if i not in front]
    return out


def hausdorff(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
    return max(d.min(axis=1).max(), d.min(axis=0).max())


def simple_paths(adj, s, t):
    """Every simple path from s to t in an undirected adjacency dict."""
    stack = [(s, [s])]
    while stack:
        node, path = stack.pop()
        if node == t:
            yield path
            continue
        for nb in adj[node]:
            if nb not in path:
                stack.append((nb, path + [nb]))


def pearson(a, b):
    a = np.asarray(a, float) - np.mean(a)
    b = np.asarray(b, float) - np.mean(b)
    return float((a * b).sum() / math.sqrt((a * a).sum() * (b * b).sum()))


def lhs_strata_ok(u, n):
    return all(sorted(np.floor(u[:, k] * n).astype(int)) == list(range(n)) for k in range(u.shape[1]))


def all_ternary(length):
    return ["".join(c) for c in itertools.product("+0-", repeat=length)]
