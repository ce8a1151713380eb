"""Optional numba-compiled per-datum sweep for the online learners.

The kernel fuses one full shuffled sweep of {responsibility refresh,
count update, exact-statistics M-step, entropy cache update} over the
dataset, mirroring the formulas of the per-operation numpy path
step for step (same update order, same jitter ladder). It exists purely
for speed: desk-scale experiments run tens of thousands of per-datum
updates, and numpy dispatch overhead dominates them.

Falls back transparently when numba is unavailable; the fit loops then
drive the per-operation path. A dedicated test pins both engines to
each other.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap

LOG_2PI = float(np.log(2.0 * np.pi))

OK = 0
DEGENERATE_COUNT = 1
SINGULAR_COVARIANCE = 2

JITTER_FACTORS = (0.0, 1e-9, 1e-6, 1e-3)


@njit(cache=True)
def _cholesky_ladder(cov, chol, dim):
    """Jittered in-place Cholesky; returns log|Sigma| or NaN on failure.

    Mirrors repair_covariance: the smallest jitter from the ladder that
    factorizes wins, and the jitter is folded back into ``cov``.
    """
    trace = 0.0
    for i in range(dim):
        trace += cov[i, i]
    scale = trace / dim
    for factor in JITTER_FACTORS:
        lam = factor * scale
        ok = True
        log_det = 0.0
        for i in range(dim):
            for j in range(i + 1):
                acc = cov[i, j]
                if i == j:
                    acc += lam
                for k in range(j):
                    acc -= chol[i, k] * chol[j, k]
                if i == j:
                    if acc <= 0.0 or not np.isfinite(acc):
                        ok = False
                        break
                    chol[i, i] = np.sqrt(acc)
                    log_det += 2.0 * np.log(chol[i, i])
                else:
                    chol[i, j] = acc / chol[j, j]
            if not ok:
                break
        if ok:
            if lam != 0.0:
                for i in range(dim):
                    cov[i, i] += lam
            for i in range(dim):
                for j in range(i + 1, dim):
                    chol[i, j] = 0.0
            return log_det
    return np.nan


@njit(cache=True)
def sweep_exact_stats(
    points,
    order,
    weights,
    means,
    covs,
    chols,
    log_dets,
    counts,
    gamma,
    s0,
    s1,
    s2,
    entropies,
    n_total,
    floor,
    shrink_dof,
    track_entropy,
):
    """One fused per-datum sweep in exact-statistics mode.

    Mutates every array argument in place. Returns
    (status, order_position, clamp_count): status is OK, or the failure
    kind at the datum ``order[order_position]``.
    """
    n_comp, dim = means.shape
    logits = np.empty(n_comp)
    probs = np.empty(n_comp)
    z = np.empty(dim)
    clamp_count = 0

    for pos in range(order.shape[0]):
        idx = order[pos]
        x = points[idx]

        # Responsibility refresh at the current parameters.
        for c in range(n_comp):
            quad = 0.0
            for i in range(dim):
                acc = x[i] - means[c, i]
                for k in range(i):
                    acc -= chols[c, i, k] * z[k]
                z[i] = acc / chols[c, i, i]
                quad += z[i] * z[i]
            logit = -0.5 * (dim * LOG_2PI + log_dets[c] + quad) + np.log(weights[c])
            logit += -shrink_dof / (2.0 * counts[c])
            logits[c] = logit
        top = logits[0]
        for c in range(1, n_comp):
            if logits[c] > top:
                top = logits[c]
        total = 0.0
        for c in range(n_comp):
            probs[c] = np.exp(logits[c] - top)
            total += probs[c]
        for c in range(n_comp):
            probs[c] /= total

        # Count update with floor clamping, then exact statistics.
        for c in range(n_comp):
            delta = probs[c] - gamma[idx, c]
            gamma[idx, c] = probs[c]
            counts[c] += delta
            if counts[c] < floor:
                counts[c] = floor
                clamp_count += 1
            s0[c] += delta
            if s0[c] < floor:
                return DEGENERATE_COUNT, pos, clamp_count
            for i in range(dim):
                s1[c, i] += delta * x[i]
                for j in range(dim):
                    s2[c, i, j] += delta * x[i] * x[j]

        # Parameters implied by the statistics.
        for c in range(n_comp):
            weights[c] = s0[c] / n_total
            for i in range(dim):
                means[c, i] = s1[c, i] / s0[c]
            for i in range(dim):
                for j in range(dim):
                    covs[c, i, j] = s2[c, i, j] / s0[c] - means[c, i] * means[c, j]
            log_det = _cholesky_ladder(covs[c], chols[c], dim)
            if np.isnan(log_det):
                return SINGULAR_COVARIANCE, pos, clamp_count
            log_dets[c] = log_det

        if track_entropy:
            entropy = 0.0
            for c in range(n_comp):
                if probs[c] > 0.0:
                    entropy -= probs[c] * np.log(probs[c])
            entropies[idx] = entropy

    return OK, -1, clamp_count
