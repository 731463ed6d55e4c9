"""Shapley-value attribution baselines and ranking-comparison metrics.

Both explainers use a single reference point (the background mean): a
coalition's value is the model output with absent features replaced by the
background. ``exact_shapley`` enumerates all coalitions; ``kernel_shap``
solves the weighted least-squares formulation and switches to full
enumeration with exact kernel weights whenever the budget covers it, at which
point the two agree to solver precision.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .autodiff import NumericError
from .scores import Ranking, ranking_from_values

EXACT_MAX_FEATURES = 15


@dataclass
class ShapResult:
    phi: np.ndarray  # (n_samples, d) per-instance attributions
    base_value: float
    method: str  # "exact" | "kernel"
    n_coalitions: int
    elapsed_ms: float = 0.0

    @property
    def n_samples(self) -> int:
        return self.phi.shape[0]

    def global_importance(self) -> np.ndarray:
        """Mean absolute attribution per feature across explained instances."""
        return np.mean(np.abs(self.phi), axis=0)

    def to_dict(self) -> dict:
        return {
            "phi": [[float(v) for v in row] for row in self.phi],
            "global_importance": [float(v) for v in self.global_importance()],
            "base_value": self.base_value,
            "method": self.method,
            "n_samples": self.n_samples,
            "n_coalitions": self.n_coalitions,
            "elapsed_ms": self.elapsed_ms,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ShapResult":
        return cls(phi=np.asarray(d["phi"], dtype=np.float64), base_value=d["base_value"],
                   method=d["method"], n_coalitions=int(d["n_coalitions"]),
                   elapsed_ms=float(d.get("elapsed_ms", 0.0)))


def mean_background(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("background data must be a non-empty 2-D array")
    return X.mean(axis=0)


def _coalition_masks(d: int) -> np.ndarray:
    """All 2^d membership masks; row index read as a bitmask, bit i = feature i."""
    return ((np.arange(2 ** d)[:, None] >> np.arange(d)) & 1).astype(bool)


def _shapley_order_weights(d: int) -> np.ndarray:
    """w[k] = k! (d-1-k)! / d!, the weight of a size-k coalition in the sum."""
    fact_d = math.factorial(d)
    return np.array([math.factorial(k) * math.factorial(d - 1 - k) / fact_d for k in range(d)])


def exact_shapley(predict_fn, X: np.ndarray, background: np.ndarray) -> ShapResult:
    """Exact Shapley values by full coalition enumeration (feasible for small d)."""
    t0 = time.perf_counter()
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n, d = X.shape
    if d > EXACT_MAX_FEATURES:
        raise ValueError(f"exact enumeration is capped at {EXACT_MAX_FEATURES} features, got {d}")
    bg = np.asarray(background, dtype=np.float64).reshape(-1)
    if bg.shape[0] != d:
        raise ValueError("background length must match feature count")

    masks = _coalition_masks(d)
    sizes = masks.sum(axis=1)
    w = _shapley_order_weights(d)
    base_value = float(predict_fn(bg.reshape(1, -1))[0])

    phi = np.zeros((n, d))
    for r in range(n):
        Z = np.where(masks, X[r][None, :], bg[None, :])
        vals = np.asarray(predict_fn(Z), dtype=np.float64).reshape(-1)
        for i in range(d):
            absent = ~masks[:, i]
            m = np.flatnonzero(absent)
            phi[r, i] = np.sum(w[sizes[m]] * (vals[m + (1 << i)] - vals[m]))
    return ShapResult(phi=phi, base_value=base_value, method="exact", n_coalitions=2 ** d,
                      elapsed_ms=(time.perf_counter() - t0) * 1000.0)


def shapley_kernel_weight(d: int, k: int) -> float:
    """Kernel weight of a coalition of size k among d features (0 < k < d)."""
    if not 0 < k < d:
        raise ValueError("kernel weight is defined for non-trivial coalitions only")
    return (d - 1) / (math.comb(d, k) * k * (d - k))


def _sample_masks(d: int, n_coalitions: int, rng: np.random.Generator) -> np.ndarray:
    """Draw coalition masks with size distributed as the Shapley kernel."""
    sizes = np.arange(1, d)
    p = (d - 1) / (sizes * (d - sizes))
    p = p / p.sum()
    masks = np.zeros((n_coalitions, d), dtype=bool)
    draws = rng.choice(sizes, size=n_coalitions, p=p)
    for j, k in enumerate(draws):
        masks[j, rng.choice(d, size=int(k), replace=False)] = True
    return masks


def _full_masks(d: int) -> tuple[np.ndarray, np.ndarray]:
    masks = _coalition_masks(d)
    sizes = masks.sum(axis=1)
    keep = (sizes > 0) & (sizes < d)
    masks = masks[keep]
    weights = np.array([shapley_kernel_weight(d, int(k)) for k in sizes[keep]])
    return masks, weights


def kernel_shap(predict_fn, X: np.ndarray, background: np.ndarray, n_coalitions: int = 2048,
                seed: int = 0) -> ShapResult:
    """Kernel-regression Shapley estimates.

    ``n_coalitions`` is the total coalition budget; the empty and full
    coalitions are always evaluated (they anchor the efficiency constraint)
    and the remainder is sampled from the Shapley kernel. The efficiency
    property is enforced exactly by eliminating the last feature from the
    regression and recovering it from the total output difference. When the
    budget covers every non-trivial coalition, sampling is replaced by full
    enumeration under exact kernel weights, which reproduces exact Shapley
    values.
    """
    t0 = time.perf_counter()
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n, d = X.shape
    bg = np.asarray(background, dtype=np.float64).reshape(-1)
    if bg.shape[0] != d:
        raise ValueError("background length must match feature count")
    if n_coalitions < d + 2:
        raise ValueError(f"need at least {d + 2} coalitions for {d} features")
    base_value = float(predict_fn(bg.reshape(1, -1))[0])

    if d == 1:
        phi = (np.asarray(predict_fn(X), dtype=np.float64) - base_value).reshape(n, 1)
        return ShapResult(phi=phi, base_value=base_value, method="kernel", n_coalitions=2,
                          elapsed_ms=(time.perf_counter() - t0) * 1000.0)

    budget = n_coalitions - 2  # empty + full are evaluated outside the regression
    if budget >= 2 ** d - 2:
        masks, weights = _full_masks(d)
    else:
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        masks = _sample_masks(d, budget, rng)
        weights = np.ones(masks.shape[0])

    z = masks.astype(np.float64)
    # eliminate the last feature so the efficiency constraint holds exactly
    A = z[:, :-1] - z[:, -1:]
    sw = np.sqrt(weights)
    Aw = A * sw[:, None]

    phi = np.zeros((n, d))
    for r in range(n):
        Z = np.where(masks, X[r][None, :], bg[None, :])
        vals = np.asarray(predict_fn(Z), dtype=np.float64).reshape(-1)
        delta = float(predict_fn(X[r].reshape(1, -1))[0]) - base_value
        target = vals - base_value - z[:, -1] * delta
        sol, _, rank, _ = np.linalg.lstsq(Aw, target * sw, rcond=None)
        if rank < d - 1:
            raise NumericError(
                f"kernel regression design is singular (rank {rank} < {d - 1}); "
                "increase n_coalitions")
        phi[r, :-1] = sol
        phi[r, -1] = delta - sol.sum()
    return ShapResult(phi=phi, base_value=base_value, method="kernel",
                      n_coalitions=masks.shape[0] + 2,
                      elapsed_ms=(time.perf_counter() - t0) * 1000.0)


# -- ranking comparison ------------------------------------------------------


def global_importance(result: ShapResult) -> Ranking:
    """Global ranking by descending mean |phi|, ties toward the lower index."""
    return ranking_from_values(result.global_importance(), source="shap")


def fractional_ranks(values) -> np.ndarray:
    """Ascending ranks starting at 1, ties sharing their average rank."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.shape[0])
    i = 0
    while i < v.shape[0]:
        j = i
        while j + 1 < v.shape[0] and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman_rho(a, b) -> float:
    """Spearman rank correlation (fractional ranks, so ties are handled)."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape[0] != b.shape[0]:
        raise ValueError("length mismatch")
    if a.shape[0] < 2:
        raise ValueError("need at least two items to correlate")
    ra, rb = fractional_ranks(a), fractional_ranks(b)
    ra -= ra.mean()
    rb -= rb.mean()
    denom = np.sqrt((ra ** 2).sum() * (rb ** 2).sum())
    if denom == 0.0:
        raise ValueError("constant ranks have no defined correlation")
    return float((ra * rb).sum() / denom)


def spearman(a: Ranking, b: Ranking) -> float:
    """Spearman rho between two rankings over the same features.

    If either side is a ground-truth ranking, the comparison is restricted to
    the features that ground truth actually ranks (importance > 0) — the
    irrelevant tail carries no defined order.
    """
    if len(a.values) != len(b.values):
        raise ValueError("rankings cover different feature counts")
    keep = np.ones(len(a.values), dtype=bool)
    for r in (a, b):
        if r.source == "ground-truth":
            keep &= np.asarray(r.values) > 0
    if keep.sum() < 2:
        raise ValueError("fewer than two mutually ranked features")
    return spearman_rho(np.asarray(a.values)[keep], np.asarray(b.values)[keep])


def relevant_order(r: Ranking, gt: Ranking) -> list[int]:
    """``r``'s ordering restricted to the features ground truth ranks."""
    relevant = {i for i, v in enumerate(gt.values) if v > 0}
    return [i for i in r.order if i in relevant]


def rank_match_table(ours: Ranking, shap: Ranking, gt: Ranking, top_k: int) -> list[dict]:
    """Per-position agreement with ground truth for the two methods.

    Row ``p`` names the feature ground truth puts at rank ``p`` and the
    features each method put there, with match flags.
    """
    d = len(gt.values)
    if not 0 < top_k <= d:
        raise ValueError("top_k must be between 1 and the feature count")
    table = []
    for p in range(top_k):
        row = {"position": p + 1, "ground_truth": gt.order[p]}
        for label, r in (("ours", ours), ("shap", shap)):
            row[label] = r.order[p]
            row[f"{label}_match"] = r.order[p] == gt.order[p]
        table.append(row)
    return table


def rank_stability(rankings: list[Ranking]) -> np.ndarray:
    """Per-feature population variance of assigned rank across repeated runs."""
    if len(rankings) < 2:
        raise ValueError("need at least two rankings")
    d = len(rankings[0].values)
    if any(len(r.values) != d for r in rankings):
        raise ValueError("rankings cover different feature counts")
    ranks = np.array([[r.rank_of(i) for i in range(d)] for r in rankings], dtype=np.float64)
    return ranks.var(axis=0)


def stability(rankings: list[Ranking]) -> float:
    """Mean per-feature rank variance; 0 means perfectly stable rankings."""
    return float(rank_stability(rankings).mean())
