"""Weighted random selection structures.

Three single-coordinate samplers (inverse-CDF reference, O(1)-draw alias
table, log-time-update Fenwick tree) plus a fixed-size batch sampler that
realizes arbitrary feasible per-coordinate marginals exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

PLAN_TIE_TOL = 1e-12


def _check_distribution(p: np.ndarray) -> np.ndarray:
    p = np.ascontiguousarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("need a non-empty 1-d probability vector")
    if np.any(p < 0.0):
        raise ValueError("negative probability entry")
    total = float(p.sum())
    if total <= 0.0:
        raise ValueError("probabilities sum to zero")
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"probabilities sum to {total}, not 1")
    return p


@njit(cache=True)
def _alias_fill(scaled, prob, alias):  # pragma: no cover - exercised via AliasTable
    n = scaled.size
    small = np.empty(n, np.int64)
    large = np.empty(n, np.int64)
    ns = 0
    nl = 0
    for i in range(n):
        if scaled[i] < 1.0:
            small[ns] = i
            ns += 1
        else:
            large[nl] = i
            nl += 1
    while ns > 0 and nl > 0:
        ns -= 1
        nl -= 1
        s = small[ns]
        g = large[nl]
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] = (scaled[g] + scaled[s]) - 1.0
        if scaled[g] < 1.0:
            small[ns] = g
            ns += 1
        else:
            large[nl] = g
            nl += 1
    while nl > 0:
        nl -= 1
        i = large[nl]
        prob[i] = 1.0
        alias[i] = i
    while ns > 0:
        ns -= 1
        i = small[ns]
        prob[i] = 1.0
        alias[i] = i


class CdfSampler:
    """Inverse-CDF sampler; the plain reference the fancier structures are checked against."""

    def __init__(self, p):
        self.p = _check_distribution(p)
        self.cum = np.cumsum(self.p)
        self.n = self.p.size

    def draw(self, rng) -> int:
        u = rng.random() * self.cum[-1]
        return min(int(np.searchsorted(self.cum, u, side="right")), self.n - 1)

    def draw_many(self, rng, size: int) -> np.ndarray:
        u = rng.random(size) * self.cum[-1]
        return np.minimum(np.searchsorted(self.cum, u, side="right"), self.n - 1)


class AliasTable:
    """Vose alias structure for a fixed discrete distribution.

    Building pairs under- and over-full buckets with two worklists in O(n);
    every draw is one uniform bucket pick plus one biased coin, independent
    of n.  ``touches`` counts array reads per draw for cost accounting.
    """

    __slots__ = ("n", "prob", "alias", "source", "draws", "touches", "last_touches")

    def __init__(self, p):
        p = _check_distribution(p)
        self.n = p.size
        self.source = p
        scaled = p * self.n
        self.prob = np.empty(self.n)
        self.alias = np.empty(self.n, dtype=np.int64)
        _alias_fill(scaled, self.prob, self.alias)
        self.draws = 0
        self.touches = 0
        self.last_touches = 0

    def draw(self, rng) -> int:
        i = int(rng.integers(self.n))
        t = 1
        if rng.random() >= self.prob[i]:
            i = int(self.alias[i])
            t += 1
        self.draws += 1
        self.last_touches = t
        self.touches += t
        return i

    def draw_many(self, rng, size: int) -> np.ndarray:
        buckets = rng.integers(self.n, size=size)
        coins = rng.random(size)
        return np.where(coins < self.prob[buckets], buckets, self.alias[buckets])

    def reconstructed(self) -> np.ndarray:
        """Per-coordinate probability implied by the table, for auditing."""
        rec = self.prob / self.n
        np.add.at(rec, self.alias, (1.0 - self.prob) / self.n)
        return rec


@njit(cache=True)
def _fenwick_build(w):  # pragma: no cover - exercised via TreeSampler
    n = w.size
    tree = np.zeros(n + 1)
    for i in range(1, n + 1):
        tree[i] += w[i - 1]
        j = i + (i & -i)
        if j <= n:
            tree[j] += tree[i]
    return tree


@njit(cache=True)
def _fenwick_search_many(tree, n, top, targets, out):  # pragma: no cover
    for k in range(targets.size):
        rem = targets[k]
        pos = 0
        bit = top
        while bit:
            nxt = pos + bit
            if nxt <= n and tree[nxt] <= rem:
                rem -= tree[nxt]
                pos = nxt
            bit >>= 1
        out[k] = pos


class TreeSampler:
    """Fenwick-tree weighted sampler with O(log n) point updates.

    ``draw`` returns ``(index, weight_fraction)`` where the fraction is the
    normalized probability of the index at draw time, as needed by
    importance-weighted steps.  Single-writer: interleave updates and draws
    from one execution context only.
    """

    def __init__(self, weights):
        w = np.ascontiguousarray(weights, dtype=np.float64).copy()
        if w.ndim != 1 or w.size == 0:
            raise ValueError("need a non-empty 1-d weight vector")
        if np.any(w < 0.0):
            raise ValueError("negative weight")
        self.n = w.size
        self.weights = w
        self.tree = _fenwick_build(w)
        self.top = 1 << (self.n.bit_length() - 1)
        self.updates = 0
        self.last_update_touches = 0

    def total(self) -> float:
        j = self.n
        s = 0.0
        while j:
            s += self.tree[j]
            j &= j - 1
        return s

    def prefix(self, count: int) -> float:
        """Sum of the first ``count`` weights."""
        j = int(count)
        s = 0.0
        while j:
            s += self.tree[j]
            j &= j - 1
        return s

    def weight(self, i: int) -> float:
        return float(self.weights[i])

    def update(self, i: int, new_weight: float) -> None:
        if new_weight < 0.0:
            raise ValueError("negative weight")
        delta = new_weight - self.weights[i]
        self.weights[i] = new_weight
        touches = 0
        j = i + 1
        while j <= self.n:
            self.tree[j] += delta
            touches += 1
            j += j & -j
        self.updates += 1
        self.last_update_touches = touches

    def _locate(self, target: float) -> int:
        pos = 0
        rem = target
        bit = self.top
        while bit:
            nxt = pos + bit
            if nxt <= self.n and self.tree[nxt] <= rem:
                rem -= self.tree[nxt]
                pos = nxt
            bit >>= 1
        if pos >= self.n:
            pos = self.n - 1
        # float ties can land on a zero-weight boundary; move to real mass
        while pos < self.n - 1 and self.weights[pos] == 0.0:
            pos += 1
        while pos > 0 and self.weights[pos] == 0.0:
            pos -= 1
        return pos

    def draw(self, rng) -> tuple[int, float]:
        tot = self.total()
        if tot <= 0.0:
            raise ValueError("cannot draw: all weights are zero")
        i = self._locate(rng.random() * tot)
        return i, float(self.weights[i] / tot)

    def draw_many(self, rng, size: int) -> np.ndarray:
        tot = self.total()
        if tot <= 0.0:
            raise ValueError("cannot draw: all weights are zero")
        targets = rng.random(size) * tot
        out = np.empty(size, dtype=np.int64)
        _fenwick_search_many(self.tree, self.n, self.top, targets, out)
        out = np.minimum(out, self.n - 1)
        bad = self.weights[out] == 0.0
        for k in np.flatnonzero(bad):
            out[k] = self._locate(targets[k])
        return out


@dataclass(frozen=True)
class SamplingPlan:
    """Mixture decomposition of a fixed-size sampling with prescribed marginals.

    Level k (chosen with probability ``t[k]``) includes sorted positions
    ``1 .. lo[k]-1`` deterministically plus ``batch - lo[k] + 1`` uniform
    picks from positions ``lo[k] .. hi[k]`` (all 1-based in descending
    marginal order).  ``order`` maps sorted positions back to the caller's
    coordinate ids.
    """

    t: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    order: np.ndarray
    batch: int
    n: int
    cum: np.ndarray = field(repr=False, default=None)

    @property
    def levels(self) -> int:
        return int(self.t.size)


def plan_build(q, batch: int) -> SamplingPlan:
    """Decompose marginals ``q`` (each in (0,1), summing to ``batch``) into a plan.

    Runs at most n peeling steps: each one emits a level whose mass is the
    largest keeping the residual marginals sorted and consistent, which
    merges at least one more coordinate into the tie block around position
    ``batch``.  The final level is uniform over all n coordinates and
    absorbs the remaining mass, so level masses sum to one exactly.
    """
    q = np.ascontiguousarray(q, dtype=np.float64)
    n = q.size
    b = int(batch)
    if not 1 <= b < n:
        raise ValueError("batch size must satisfy 1 <= b < n")
    bad = np.flatnonzero((q <= 0.0) | (q >= 1.0))
    if bad.size:
        i = int(bad[0])
        raise ValueError(f"marginal q[{i}]={q[i]} outside (0, 1)")
    if abs(q.sum() - b) > 1e-9:
        raise ValueError(f"marginals sum to {q.sum()}, expected batch size {b}")

    order = np.argsort(-q, kind="stable")
    qs = q[order]

    # tie block around position b (0-based b-1); it only ever grows
    lo = hi = b - 1
    while lo > 0 and qs[lo - 1] - qs[b - 1] <= PLAN_TIE_TOL:
        lo -= 1
    while hi + 1 < n and qs[b - 1] - qs[hi + 1] <= PLAN_TIE_TOL:
        hi += 1
    blk = float(qs[b - 1])
    head_cut = 0.0  # mass removed so far from every coordinate left of the block
    emitted = 0.0
    ts: list[float] = []
    los: list[int] = []
    his: list[int] = []
    for _ in range(n):
        if lo == 0 and hi == n - 1:
            ts.append(1.0 - emitted)  # uniform tail level absorbs rounding residue
            los.append(1)
            his.append(n)
            break
        span = hi - lo + 1
        picks = b - lo
        rho = picks / span
        t_head = np.inf
        if lo > 0 and hi + 1 > b:
            t_head = (qs[lo - 1] - head_cut - blk) * span / (hi + 1 - b)
        tail_val = qs[hi + 1] if hi + 1 < n else 0.0
        t_tail = (blk - tail_val) * span / picks
        t = max(min(t_head, t_tail), 0.0)
        ts.append(t)
        los.append(lo + 1)
        his.append(hi + 1)
        emitted += t
        head_cut += t
        blk -= rho * t
        grew = False
        while lo > 0 and (qs[lo - 1] - head_cut) - blk <= PLAN_TIE_TOL:
            lo -= 1
            grew = True
        while hi + 1 < n and blk - qs[hi + 1] <= PLAN_TIE_TOL:
            hi += 1
            grew = True
        if not grew:  # float guard: force the nearer boundary into the block
            if t_head <= t_tail and lo > 0:
                lo -= 1
            else:
                hi += 1
    else:
        raise RuntimeError("sampling plan did not terminate within n levels")

    t_arr = np.asarray(ts)
    keep = t_arr > 0.0
    keep[-1] = True  # final level carries the uniform fallback even if tiny
    t_arr = t_arr[keep]
    lo_arr = np.asarray(los, dtype=np.int64)[keep]
    hi_arr = np.asarray(his, dtype=np.int64)[keep]
    cum = np.cumsum(t_arr)
    cum[-1] = 1.0
    return SamplingPlan(t=t_arr, lo=lo_arr, hi=hi_arr, order=order, batch=b, n=n, cum=cum)


def plan_draw(plan: SamplingPlan, rng) -> np.ndarray:
    """One batch: ``batch`` distinct coordinate ids, ascending."""
    k = min(int(np.searchsorted(plan.cum, rng.random(), side="right")), plan.levels - 1)
    lo = int(plan.lo[k]) - 1
    hi = int(plan.hi[k]) - 1
    picks = plan.batch - lo
    chosen = rng.choice(hi - lo + 1, size=picks, replace=False) + lo
    positions = np.concatenate([np.arange(lo), chosen])
    return np.sort(plan.order[positions])


def plan_draw_many(plan: SamplingPlan, rng, size: int, chunk: int = 1 << 17) -> np.ndarray:
    """Vectorized batches as a (size, batch) id matrix (rows unsorted sets)."""
    ks = np.minimum(np.searchsorted(plan.cum, rng.random(size), side="right"), plan.levels - 1)
    out = np.empty((size, plan.batch), dtype=np.int64)
    for k in range(plan.levels):
        rows = np.flatnonzero(ks == k)
        if rows.size == 0:
            continue
        lo = int(plan.lo[k]) - 1
        hi = int(plan.hi[k]) - 1
        span = hi - lo + 1
        picks = plan.batch - lo
        if lo:
            out[rows, :lo] = np.arange(lo)
        for start in range(0, rows.size, chunk):
            part = rows[start : start + chunk]
            keys = rng.random((part.size, span))
            sel = np.argpartition(keys, picks - 1, axis=1)[:, :picks] + lo
            out[part, lo:] = sel
    return plan.order[out]


def marginals_of(plan: SamplingPlan) -> np.ndarray:
    """Exact per-coordinate inclusion probabilities implied by the plan."""
    qm = np.zeros(plan.n)
    for t, lo1, hi1 in zip(plan.t, plan.lo, plan.hi):
        lo = int(lo1) - 1
        hi = int(hi1) - 1
        qm[:lo] += t
        qm[lo : hi + 1] += t * (plan.batch - lo) / (hi - lo + 1)
    out = np.empty(plan.n)
    out[plan.order] = qm
    return out
