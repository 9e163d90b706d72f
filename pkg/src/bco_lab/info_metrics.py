"""Per-arm regret, explained variance and mutual information diagnostics.

All entropies are in nats.  ``0 log 0 = 0`` throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .prior import ETA_MATCH, Posterior, RoundStats, round_stats


def entropy(p) -> float:
    p = np.asarray(p, dtype=float)
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def regret_from_stats(st: RoundStats) -> np.ndarray:
    # sum_j alpha_j f_j(x_j) is the posterior mean of F_t(X*)
    opt = float(st.p @ st.losses[np.arange(st.p.size), st.xs])
    return st.mean - opt


def variance_from_stats(st: RoundStats) -> np.ndarray:
    if st.groups.size == 1:
        return np.zeros_like(st.mean)
    d = st.cond - st.mean[None, :]
    return st.group_mass @ (d * d)


def _atom_labels(values: np.ndarray, eta: float) -> np.ndarray:
    """Per-column atom ids: sorted values closer than ``eta`` chain into one atom."""
    order = np.argsort(values, axis=0, kind="stable")
    sv = np.take_along_axis(values, order, axis=0)
    new = np.zeros(sv.shape, dtype=np.int64)
    new[1:] = np.diff(sv, axis=0) > eta
    lab_sorted = np.cumsum(new, axis=0)
    labels = np.empty_like(lab_sorted)
    np.put_along_axis(labels, order, lab_sorted, axis=0)
    return labels


def _column_entropy(labels: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Entropy of each column's label distribution under row weights ``p``."""
    m, K = labels.shape
    order = np.argsort(labels, axis=0, kind="stable")
    sl = np.take_along_axis(labels, order, axis=0).T.ravel()
    sw = p[order].T.ravel()
    col = np.repeat(np.arange(K), m)
    start = np.ones(sl.size, dtype=bool)
    start[1:] = (sl[1:] != sl[:-1]) | (col[1:] != col[:-1])
    idx = np.flatnonzero(start)
    mass = np.add.reduceat(sw, idx)
    contrib = np.where(mass > 0, -mass * np.log(np.where(mass > 0, mass, 1.0)), 0.0)
    return np.bincount(col[idx], weights=contrib, minlength=K)


def mutual_info_from_stats(st: RoundStats, eta: float = ETA_MATCH) -> np.ndarray:
    """I(F_t(x); X*) per arm via H(F) + H(X*) - H(F, X*)."""
    K = st.mean.size
    if st.groups.size == 1:
        return np.zeros(K)
    atoms = _atom_labels(st.losses, eta)
    joint = atoms * st.groups.size + st.group_of[:, None]
    h_f = _column_entropy(atoms, st.p)
    h_joint = _column_entropy(joint, st.p)
    h_x = entropy(st.group_mass)
    return np.maximum(h_f + h_x - h_joint, 0.0)


def mutual_info_paper_order(st: RoundStats, eta: float = ETA_MATCH) -> np.ndarray:
    """sum_y alpha_y KL(Q_x || Q_{x|y}), the reversed-argument variant.

    Infinite whenever some conditional law misses an atom of the marginal.
    """
    K = st.mean.size
    atoms = _atom_labels(st.losses, eta)
    out = np.zeros(K)
    for k in range(K):
        a = atoms[:, k]
        n_atoms = a.max() + 1
        q = np.bincount(a, weights=st.p, minlength=n_atoms)
        total = 0.0
        for g, mass in enumerate(st.group_mass):
            sel = st.group_of == g
            qy = np.bincount(a[sel], weights=st.p[sel], minlength=n_atoms) / mass
            pos = q > 0
            if np.any(qy[pos] == 0):
                total = math.inf
                break
            total += mass * float((q[pos] * np.log(q[pos] / qy[pos])).sum())
        out[k] = total
    return out


def regret_per_arm(post: Posterior, round: int) -> np.ndarray:
    """r_t(x_i) = f_t(x_i) - E_t[F_t(X*)]."""
    return regret_from_stats(round_stats(post, round))


def variance_per_arm(post: Posterior, round: int) -> np.ndarray:
    """v_t(x) = sum_j alpha_j (f_{j,t}(x) - f_t(x))^2."""
    return variance_from_stats(round_stats(post, round))


def mutual_info_per_arm(post: Posterior, round: int, order: str = "standard") -> np.ndarray:
    st = round_stats(post, round)
    if order == "standard":
        return mutual_info_from_stats(st)
    if order == "paper":
        return mutual_info_paper_order(st)
    raise ValueError(f"order must be 'standard' or 'paper', not {order!r}")


@dataclass(frozen=True)
class InfoSnapshot:
    t: int
    r: np.ndarray
    v: np.ndarray
    I: np.ndarray
    E_r: float
    E_v: float
    E_I: float
    H: float


def snapshot(st: RoundStats, pi: np.ndarray) -> InfoSnapshot:
    r = regret_from_stats(st)
    v = variance_from_stats(st)
    I = mutual_info_from_stats(st)
    return InfoSnapshot(
        st.t, r, v, I,
        float(pi @ r), float(pi @ v), float(pi @ I),
        entropy(st.alpha),
    )


def check_pinsker(snap: InfoSnapshot, tol: float = 1e-9) -> bool:
    return bool(np.all(snap.v <= 0.5 * snap.I + tol))


def russo_bound(T: int, K: int) -> float:
    return math.sqrt(0.5 * T * math.log(K))


def cumulative_info_bound(episodes, K: int):
    """Average over episodes of sum_t sqrt(E_t[v_t(X_t)]) against sqrt(T log K / 2).

    ``episodes`` is a list of per-episode trace lists (objects with ``E_v``
    and ``H`` attributes).  Also returns whether, averaged over episodes,
    the summed entropy drop stays below the initial entropy.
    """
    if not episodes:
        raise ValueError("need at least one episode")
    T = max(len(ep) for ep in episodes)
    sums = [sum(math.sqrt(max(tr.E_v, 0.0)) for tr in ep) for ep in episodes]
    lhs = float(np.mean(sums))
    drops, h1 = [], []
    for ep in episodes:
        hs = [tr.H for tr in ep]
        drops.append(sum(a - b for a, b in zip(hs[:-1], hs[1:])))
        h1.append(hs[0])
    telescoping_ok = float(np.mean(drops)) <= float(np.mean(h1)) + 1e-9
    return lhs, russo_bound(T, K), telescoping_ok
