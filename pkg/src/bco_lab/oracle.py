"""Brute-force reference computations over a finite prior.

Deliberately written with plain loops and dictionaries, sharing no code with
the vectorised posterior machinery, so the two can be checked against each
other.  Inputs are a raw loss cube ``cube[m, t, i]`` (0-based round index),
prior weights and the observed history ``[(arm, loss), ...]``.
"""

from __future__ import annotations

import math
from collections import defaultdict

import numpy as np


def hindsight_argmin(cube) -> list:
    out = []
    for m in range(len(cube)):
        totals = [sum(cube[m][t][i] for t in range(len(cube[m]))) for i in range(len(cube[m][0]))]
        best = 0
        for i in range(1, len(totals)):
            if totals[i] < totals[best]:
                best = i
        out.append(best)
    return out


def posterior(cube, weights, history, match: float = 1e-9) -> list:
    w = []
    for m in range(len(cube)):
        ok = all(abs(cube[m][s][arm] - loss) <= match for s, (arm, loss) in enumerate(history))
        w.append(weights[m] if ok else 0.0)
    total = sum(w)
    if total <= 0:
        raise ValueError("history has zero probability")
    return [x / total for x in w]


def quantities(cube, weights, history) -> dict:
    """alpha, f, f_j, r, v, I at round len(history) + 1."""
    cube = np.asarray(cube, dtype=float).tolist()
    M, K = len(cube), len(cube[0][0])
    t = len(history)
    p = posterior(cube, list(weights), history)
    xs = hindsight_argmin(cube)

    alpha = [0.0] * K
    for m in range(M):
        alpha[xs[m]] += p[m]
    f = [sum(p[m] * cube[m][t][i] for m in range(M)) for i in range(K)]
    cond = []
    for j in range(K):
        if alpha[j] > 0:
            cond.append([sum(p[m] * cube[m][t][i] for m in range(M) if xs[m] == j) / alpha[j]
                         for i in range(K)])
        else:
            cond.append(list(f))
    opt = sum(alpha[j] * cond[j][j] for j in range(K))
    r = [f[i] - opt for i in range(K)]
    v = [sum(alpha[j] * (cond[j][i] - f[i]) ** 2 for j in range(K)) for i in range(K)]

    I = []
    for i in range(K):
        joint = defaultdict(float)
        marg = defaultdict(float)
        for m in range(M):
            if p[m] > 0:
                key = cube[m][t][i]
                joint[(key, xs[m])] += p[m]
                marg[key] += p[m]
        total = 0.0
        for (key, j), pj in joint.items():
            total += pj * math.log(pj / (marg[key] * alpha[j]))
        I.append(max(total, 0.0))
    return {"alpha": alpha, "f": f, "cond": cond, "r": r, "v": v, "I": I}
