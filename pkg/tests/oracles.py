"""Independent brute-force oracles used by the tests.

Nothing here imports solver internals: every candidate decision vector is
enumerated and the constraint is evaluated from first principles.
"""
import itertools

import numpy as np


def all_vectors(n: int) -> np.ndarray:
    return np.array(list(itertools.product((0, 1), repeat=n)), dtype=float)


def _spread(vals: np.ndarray) -> np.ndarray:
    """Row-wise max - min over groups; NaN marks an undefined rate.

    All undefined is vacuously fair (0); a partial definition is infeasible."""
    undefined = np.isnan(vals)
    full = np.nanmax(np.where(undefined, -np.inf, vals), axis=1) - np.nanmin(np.where(undefined, np.inf, vals), axis=1)
    out = np.where(undefined.any(axis=1), np.inf, full)
    return np.where(undefined.all(axis=1), 0.0, out)


def group_stat(D: np.ndarray, p, y, mask, kind: str, labels: str) -> np.ndarray:
    """Constrained statistic of one group for every row of D (NaN if undefined)."""
    Dg, pg = D[:, mask], p[mask]
    lab = pg if labels == "expected" else y[mask].astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        if kind == "sp":
            return Dg.mean(axis=1)
        if kind in ("tpr", "fpr"):
            w = lab if kind == "tpr" else 1 - lab
            if w.sum() == 0:
                return np.full(D.shape[0], np.nan)
            return Dg @ w / w.sum()
        sel = Dg.sum(axis=1)
        if kind == "ppv":
            return np.where(sel > 0, Dg @ pg / np.maximum(sel, 1), np.nan)
        if kind == "for":
            rej = mask.sum() - sel
            return np.where(rej > 0, (1 - Dg) @ pg / np.maximum(rej, 1), np.nan)
    raise ValueError(kind)


def best_feasible(p, group, y, gain, kind: str, eps: float, labels: str = "expected"):
    """Best utility over all 2^n decision vectors meeting the constraint, or -inf."""
    p = np.asarray(p, dtype=float)
    group = np.asarray(group)
    D = all_vectors(p.size)
    masks = [group == g for g in np.unique(group)]
    kinds = ("ppv", "for") if kind == "suff" else (kind,)
    ok = np.ones(D.shape[0], dtype=bool)
    for k in kinds:
        vals = np.column_stack([group_stat(D, p, y, m, k, labels) for m in masks])
        ok &= _spread(vals) <= eps
    if not ok.any():
        return -np.inf
    return float((D[ok] @ np.asarray(gain, dtype=float)).max())
