"""Training loops for l2-regularized ERM via dual-free coordinate ascent.

Four variants share one state pair: pseudo-dual variables ``alpha`` and the
primal iterate ``w``, linked by ``w = X^T alpha / (lam * n)`` at every step.

* ``dfsdca``        uniform sampling, fixed step size
* ``adfsdca``       residue-adaptive sampling, probabilities refreshed per step
* ``adfsdca_plus``  probabilities refreshed per epoch, shrunk after each draw
* ``minibatch``     adaptive sampling of b coordinates per step with exact marginals
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .losses import LossModel
from .probability import (
    CaseParams,
    case_params,
    compute_residues,
    contraction_certificate,
    eso_v,
    optimal_probabilities,
    theta_lower_bound,
    theta_of,
)
from .samplers import AliasTable, TreeSampler, plan_build, plan_draw

LINK_TOL = 1e-8
VARIANTS = ("dfsdca", "adfsdca", "adfsdca_plus", "minibatch")

TRACE_COLUMNS = (
    "epoch",
    "iter",
    "seconds",
    "primal",
    "subopt",
    "gap_G",
    "residue_norm",
    "residue_p90",
    "theta",
)


def _philox(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass
class SolverConfig:
    variant: str = "adfsdca"
    lam: float = 0.1
    case: str = "all_convex"
    theta_policy: str = "adaptive"  # "adaptive" recomputes the safe maximum each step
    theta: float | None = None  # explicit fixed value, overrides the policy default
    shrink: float = 10.0
    batch: int = 1
    eso_mode: str = "example_nnz"
    epochs: int = 20
    seed: int = 0
    alpha0: np.ndarray | None = None
    record_certificate: bool = False
    residue_epochs: tuple[int, ...] = ()

    def validate(self, n: int | None = None) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.lam <= 0.0:
            raise ValueError("lam must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.shrink < 1.0:
            raise ValueError("shrink parameter must be >= 1")
        if self.theta_policy not in ("adaptive", "fixed"):
            raise ValueError(f"unknown theta policy {self.theta_policy!r}")
        if self.theta is not None and not 0.0 < self.theta:
            raise ValueError("explicit theta must be positive")
        if self.batch < 1:
            raise ValueError("batch size must be >= 1")
        if n is not None and self.variant == "minibatch" and not self.batch < n:
            raise ValueError("batch size must satisfy 1 <= b < n")


@dataclass
class SolverState:
    alpha: np.ndarray
    w: np.ndarray
    t: int
    epoch: int
    theta: float
    seed: int


@dataclass(frozen=True)
class TraceRecord:
    epoch: int
    iteration: int
    seconds: float
    primal: float
    subopt: float
    gap: float
    residue_norm: float
    residue_p90: float
    theta: float


@dataclass
class SolverResult:
    trace: list[TraceRecord]
    alpha: np.ndarray
    w: np.ndarray
    converged: bool
    message: str
    config: SolverConfig
    certificates: np.ndarray | None = None  # (iters, 2): slack, scale
    residue_snapshots: dict[int, np.ndarray] = field(default_factory=dict)

    def epochs_to(self, target: float) -> int | None:
        for row in self.trace:
            if np.isfinite(row.subopt) and row.subopt <= target:
                return row.epoch
        return None

    def iterations_to(self, target: float) -> int | None:
        for row in self.trace:
            if np.isfinite(row.subopt) and row.subopt <= target:
                return row.iteration
        return None


@dataclass(frozen=True)
class Reference:
    """High-accuracy solution used for suboptimality and gap traces."""

    alpha: np.ndarray
    w: np.ndarray
    primal: float
    grad_inf: float
    approximate: bool


@dataclass(frozen=True)
class GapReport:
    gap: float
    alpha_term: float
    w_term: float
    subopt: float
    smooth_bound: float
    bound_ok: bool


@dataclass(frozen=True)
class VarianceReport:
    lhs: float
    rhs: float
    ok: bool
    kappa_sq: float
    m_const: float
    l_const: float


def primal_value(w: np.ndarray, ds, loss: LossModel, lam: float) -> float:
    margins = ds.matvec(w)
    return float(np.mean(loss.value(margins, ds.labels)) + 0.5 * lam * (w @ w))


def primal_gradient(w: np.ndarray, ds, loss: LossModel, lam: float) -> np.ndarray:
    g = loss.derivative(ds.matvec(w), ds.labels)
    return ds.rmatvec(g) / ds.n + lam * w


def residue_gradient(kappa: np.ndarray, ds) -> np.ndarray:
    """X^T kappa / n; equals the primal gradient whenever the state link holds."""
    return ds.rmatvec(kappa) / ds.n


def _apply_step(alpha, w, i, p_i, kappa_i, theta, ds, lam):
    alpha[i] -= theta / p_i * kappa_i
    lo, hi = ds.indptr[i], ds.indptr[i + 1]
    w[ds.indices[lo:hi]] -= (theta / (ds.n * lam * p_i) * kappa_i) * ds.data[lo:hi]


def step_serial(
    state: SolverState, i: int, p_i: float, kappa_i: float, theta: float, ds, lam: float
) -> SolverState:
    """One coordinate step: alpha_i -= theta/p_i * kappa_i with the matching w update."""
    if p_i <= 0.0:
        raise ValueError("selection probability must be positive")
    alpha = state.alpha.copy()
    w = state.w.copy()
    _apply_step(alpha, w, i, p_i, kappa_i, theta, ds, lam)
    return replace(state, alpha=alpha, w=w, t=state.t + 1, theta=theta)


def _init_state(cfg: SolverConfig, ds) -> tuple[np.ndarray, np.ndarray]:
    if cfg.alpha0 is None:
        return np.zeros(ds.n), np.zeros(ds.d)
    alpha = np.asarray(cfg.alpha0, dtype=np.float64).copy()
    if alpha.shape != (ds.n,):
        raise ValueError("alpha0 has the wrong length")
    return alpha, ds.rmatvec(alpha) / (cfg.lam * ds.n)


def _resync_link(alpha, w, ds, lam):
    exact = ds.rmatvec(alpha) / (lam * ds.n)
    if np.linalg.norm(w - exact) > LINK_TOL * (1.0 + np.linalg.norm(w)):
        w[:] = exact


def _trace_row(epoch, iters, start, alpha, w, res, ds, loss, lam, reference, cp, theta):
    primal = primal_value(w, ds, loss, lam)
    if reference is not None:
        rep = compute_gap(alpha, w, reference, cp, ds, loss)
        subopt, gap = rep.subopt, rep.gap
    else:
        subopt = gap = float("nan")
    abs_kappa = np.abs(res.kappa)
    return TraceRecord(
        epoch=epoch,
        iteration=iters,
        seconds=time.perf_counter() - start,
        primal=primal,
        subopt=subopt,
        gap=gap,
        residue_norm=math.sqrt(res.sq_norm),
        residue_p90=float(np.percentile(abs_kappa, 90)),
        theta=theta,
    )


def _fixed_theta(cfg: SolverConfig, ds, bound, cp, v, batch=1) -> float:
    if cfg.theta is not None:
        return float(cfg.theta)
    if cfg.variant == "dfsdca":
        return cfg.lam / (cfg.lam * ds.n + bound.L_max)
    return theta_lower_bound(cp, v, batch)


def _run_serial(cfg, ds, loss, reference, hook, uniform, stop_inf_norm=None):
    bound = loss.bind(ds)
    n, lam = ds.n, cfg.lam
    cp = case_params(ds, loss, lam, cfg.case)
    v = ds.norms
    lb = theta_lower_bound(cp, v)
    adaptive = (not uniform) and cfg.theta_policy == "adaptive" and cfg.theta is None
    fixed = None if adaptive else _fixed_theta(cfg, ds, bound, cp, v)

    rng = _philox(cfg.seed)
    alpha, w = _init_state(cfg, ds)
    p_unif = np.full(n, 1.0 / n)
    unif_table = AliasTable(p_unif) if uniform else None
    certs: list[tuple[float, float]] | None = [] if cfg.record_certificate else None
    snapshots: dict[int, np.ndarray] = {}
    trace: list[TraceRecord] = []
    start = time.perf_counter()
    theta_used = float("nan")
    iters = 0
    converged = False
    message = ""

    for epoch in range(cfg.epochs + 1):
        if epoch:
            _resync_link(alpha, w, ds, lam)
        res = compute_residues(alpha, w, ds, loss)
        trace.append(_trace_row(epoch, iters, start, alpha, w, res, ds, loss, lam, reference, cp, theta_used))
        if epoch in cfg.residue_epochs:
            snapshots[epoch] = np.abs(res.kappa)
        if converged or epoch == cfg.epochs:
            break
        for _ in range(n):
            res = compute_residues(alpha, w, ds, loss)
            if not res.support.any():
                converged = True
                message = "converged: zero residue"
                break
            if stop_inf_norm is not None and np.max(np.abs(res.kappa)) < stop_inf_norm:
                converged = True
                message = "converged: residue below tolerance"
                break
            if uniform:
                p, table = p_unif, unif_table
                theta = fixed
                if __debug__:
                    p_star = optimal_probabilities(res, cp, v)
                    assert theta_of(res, p_star, cp, v) >= lb * (1.0 - 1e-9)
            else:
                p = optimal_probabilities(res, cp, v)
                table = AliasTable(p)
                theta_star = theta_of(res, p, cp, v)
                assert theta_star >= lb * (1.0 - 1e-9)
                theta = theta_star if adaptive else fixed
            i = table.draw(rng)
            if certs is not None:
                certs.append(contraction_certificate(res, p, theta, cp, v))
            if hook is not None:
                hook(iters, alpha, w, res, p, theta, (i, p[i]))
            _apply_step(alpha, w, i, p[i], res.kappa[i], theta, ds, lam)
            theta_used = theta
            iters += 1

    return SolverResult(
        trace=trace,
        alpha=alpha,
        w=w,
        converged=converged,
        message=message,
        config=cfg,
        certificates=np.asarray(certs) if certs is not None else None,
        residue_snapshots=snapshots,
    )


def _run_plus(cfg, ds, loss, reference, hook):
    bound = loss.bind(ds)
    n, lam = ds.n, cfg.lam
    cp = case_params(ds, loss, lam, cfg.case)
    v = ds.norms
    lb = theta_lower_bound(cp, v)
    adaptive = cfg.theta_policy == "adaptive" and cfg.theta is None
    fixed = None if adaptive else _fixed_theta(cfg, ds, bound, cp, v)

    rng = _philox(cfg.seed)
    alpha, w = _init_state(cfg, ds)
    certs: list[tuple[float, float]] | None = [] if cfg.record_certificate else None
    snapshots: dict[int, np.ndarray] = {}
    trace: list[TraceRecord] = []
    start = time.perf_counter()
    theta_used = float("nan")
    iters = 0
    converged = False
    message = ""

    for epoch in range(cfg.epochs + 1):
        if epoch:
            _resync_link(alpha, w, ds, lam)
        res = compute_residues(alpha, w, ds, loss)
        trace.append(_trace_row(epoch, iters, start, alpha, w, res, ds, loss, lam, reference, cp, theta_used))
        if epoch in cfg.residue_epochs:
            snapshots[epoch] = np.abs(res.kappa)
        if converged or epoch == cfg.epochs:
            break
        budget = n
        while budget and not converged:
            # probabilities and the held step size refresh here; mid-epoch
            # re-entry happens only if repeated shrinking drains the tree
            res = compute_residues(alpha, w, ds, loss)
            if not res.support.any():
                converged = True
                message = "converged: zero residue"
                break
            p_star = optimal_probabilities(res, cp, v)
            theta_star = theta_of(res, p_star, cp, v)
            assert theta_star >= lb * (1.0 - 1e-9)
            theta = theta_star if adaptive else fixed
            tree = TreeSampler(p_star)
            labels = ds.labels
            nlam = n * lam
            l_tilde = bound.l_tilde_i
            while budget:
                if tree.total() <= 1e-300:
                    break
                i, p_draw = tree.draw(rng)
                # the step needs the residue of the *current* state, so the
                # drawn coordinate's margin is refreshed (one sparse dot)
                idx, vals = ds.row(i)
                kappa_i = float(alpha[i] + loss.derivative(vals @ w[idx], labels[i]))
                # probabilities are stale within the epoch, so the held theta
                # can overshoot rarely-drawn coordinates; the fixed-sampling
                # safe bound at the drawn coordinate caps the step so that a
                # drawn residue never grows in magnitude
                theta_i = min(theta, p_draw * nlam / (nlam + v[i] * l_tilde[i]))
                if hook is not None:
                    hook(iters, alpha, w, res, p_star, theta, (i, p_draw))
                _apply_step(alpha, w, i, p_draw, kappa_i, theta_i, ds, lam)
                tree.update(i, tree.weight(i) / cfg.shrink)
                theta_used = theta
                iters += 1
                budget -= 1

    return SolverResult(
        trace=trace,
        alpha=alpha,
        w=w,
        converged=converged,
        message=message,
        config=cfg,
        certificates=np.asarray(certs) if certs is not None else None,
        residue_snapshots=snapshots,
    )


def cap_marginals(q_raw: np.ndarray, batch: int, eps: float = 1e-6) -> np.ndarray:
    """Repair batch marginals that violate q_i < 1.

    Offending coordinates are capped at ``1 - eps`` and the deficit is
    redistributed proportionally over the rest of the support; if the
    support alone cannot carry the batch mass, the remainder spills
    uniformly onto zero-residue coordinates (whose steps are no-ops).
    """
    q = np.asarray(q_raw, dtype=np.float64).copy()
    support = q > 0.0
    cap = 1.0 - eps
    target = float(batch)
    if cap * support.sum() <= target:
        q[support] = cap
        rest = ~support
        q[rest] = (target - cap * support.sum()) / rest.sum()
        return q
    free = support.copy()
    for _ in range(q.size):
        over = free & (q > cap)
        if not over.any():
            break
        q[over] = cap
        free[over] = False
        if not free.any():
            break
        need = target - q[~free].sum()
        q[free] *= need / q[free].sum()
    return q


def _run_minibatch(cfg, ds, loss, reference, hook):
    b = cfg.batch
    if b == 1:
        # a single-coordinate batch is exactly the serial adaptive loop
        return _run_serial(cfg, ds, loss, reference, hook, uniform=False)
    bound = loss.bind(ds)
    n, d, lam = ds.n, ds.d, cfg.lam
    if not b < n:
        raise ValueError("batch size must satisfy 1 <= b < n")
    cp = case_params(ds, loss, lam, cfg.case)
    v = ds.norms
    eso = eso_v(ds, b, cfg.eso_mode)
    lb = theta_lower_bound(cp, v)
    adaptive = cfg.theta_policy == "adaptive" and cfg.theta is None
    fixed = None if adaptive else _fixed_theta(cfg, ds, bound, cp, eso.v, batch=b)
    iters_per_epoch = math.ceil(n / b)

    rng = _philox(cfg.seed)
    alpha, w = _init_state(cfg, ds)
    certs: list[tuple[float, float]] | None = [] if cfg.record_certificate else None
    snapshots: dict[int, np.ndarray] = {}
    trace: list[TraceRecord] = []
    start = time.perf_counter()
    theta_used = float("nan")
    iters = 0
    converged = False
    message = ""

    for epoch in range(cfg.epochs + 1):
        if epoch:
            _resync_link(alpha, w, ds, lam)
        res = compute_residues(alpha, w, ds, loss)
        trace.append(_trace_row(epoch, iters, start, alpha, w, res, ds, loss, lam, reference, cp, theta_used))
        if epoch in cfg.residue_epochs:
            snapshots[epoch] = np.abs(res.kappa)
        if converged or epoch == cfg.epochs:
            break
        for _ in range(iters_per_epoch):
            res = compute_residues(alpha, w, ds, loss)
            if not res.support.any():
                converged = True
                message = "converged: zero residue"
                break
            p_star = optimal_probabilities(res, cp, v)
            assert theta_of(res, p_star, cp, v) >= lb * (1.0 - 1e-9)
            q = cap_marginals(b * p_star, b)
            theta = theta_of(res, q, cp, eso.v) if adaptive else fixed
            active = np.flatnonzero(q > 0.0)
            plan = plan_build(q[active], b)
            batch_ids = active[plan_draw(plan, rng)]
            if certs is not None:
                certs.append(contraction_certificate(res, q, theta, cp, eso.v))
            if hook is not None:
                hook(iters, alpha, w, res, q / b, theta, (batch_ids, q[batch_ids]))
            kappa_sel = res.kappa[batch_ids]
            alpha[batch_ids] -= theta * kappa_sel / q[batch_ids]
            delta = np.zeros(d)
            for i, ki in zip(batch_ids, kappa_sel):  # ascending: order-independent result
                lo, hi = ds.indptr[i], ds.indptr[i + 1]
                delta[ds.indices[lo:hi]] += (theta / (n * lam * q[i]) * ki) * ds.data[lo:hi]
            w -= delta
            theta_used = theta
            iters += 1

    return SolverResult(
        trace=trace,
        alpha=alpha,
        w=w,
        converged=converged,
        message=message,
        config=cfg,
        certificates=np.asarray(certs) if certs is not None else None,
        residue_snapshots=snapshots,
    )


def run(cfg: SolverConfig, ds, loss: LossModel, reference: Reference | None = None, hook=None) -> SolverResult:
    """Dispatch on ``cfg.variant``; ``hook(t, alpha, w, res, p, theta, sel)`` is
    called before every step with the live state (read-only by convention)."""
    cfg.validate(ds.n)
    loss.validate_labels(ds.labels)
    if cfg.variant == "dfsdca":
        return _run_serial(cfg, ds, loss, reference, hook, uniform=True)
    if cfg.variant == "adfsdca":
        return _run_serial(cfg, ds, loss, reference, hook, uniform=False)
    if cfg.variant == "adfsdca_plus":
        return _run_plus(cfg, ds, loss, reference, hook)
    return _run_minibatch(cfg, ds, loss, reference, hook)


def run_dfsdca_uniform(cfg, ds, loss, reference=None, hook=None):
    return run(replace(cfg, variant="dfsdca"), ds, loss, reference, hook)


def run_adfsdca(cfg, ds, loss, reference=None, hook=None):
    return run(replace(cfg, variant="adfsdca"), ds, loss, reference, hook)


def run_adfsdca_plus(cfg, ds, loss, reference=None, hook=None):
    return run(replace(cfg, variant="adfsdca_plus"), ds, loss, reference, hook)


def run_minibatch(cfg, ds, loss, reference=None, hook=None):
    return run(replace(cfg, variant="minibatch"), ds, loss, reference, hook)


def run_reference(
    ds, loss: LossModel, lam: float, tol: float = 1e-12, max_epochs: int = 300, seed: int = 0
) -> Reference:
    """Solve to machine-level residues with the adaptive serial loop.

    Returns ``w*`` together with ``alpha* = -loss'(X w*)`` and the optimal
    primal value; flagged approximate when the epoch cap is hit first.
    """
    cfg = SolverConfig(variant="adfsdca", lam=lam, epochs=max_epochs, seed=seed)
    result = _run_serial(cfg, ds, loss, None, None, uniform=False, stop_inf_norm=tol)
    w = result.w
    alpha_star = -loss.derivative(ds.matvec(w), ds.labels)
    grad_inf = float(np.max(np.abs(primal_gradient(w, ds, loss, lam))))
    approximate = not result.converged
    if not approximate:
        assert grad_inf <= 1e-8, f"reference gradient too large: {grad_inf}"
    return Reference(
        alpha=alpha_star,
        w=w,
        primal=primal_value(w, ds, loss, lam),
        grad_inf=grad_inf,
        approximate=approximate,
    )


def compute_gap(alpha, w, reference: Reference, cp: CaseParams, ds, loss) -> GapReport:
    """Weighted optimality gap plus the smoothness bound linking it to suboptimality."""
    if reference is None:
        raise ValueError("missing reference solution")
    bound = loss.bind(ds)
    da = alpha - reference.alpha
    dw = w - reference.w
    alpha_term = float(cp.beta @ (da * da))
    w_term = float(dw @ dw)
    gap = alpha_term + cp.gamma * w_term
    subopt = primal_value(w, ds, loss, cp.lam) - reference.primal
    smooth_bound = (bound.L_bar + cp.lam) / (2.0 * cp.gamma) * gap
    ok = subopt <= smooth_bound + 1e-9 * (1.0 + abs(smooth_bound))
    assert ok, "suboptimality exceeded its smoothness bound"
    return GapReport(
        gap=gap,
        alpha_term=alpha_term,
        w_term=w_term,
        subopt=subopt,
        smooth_bound=smooth_bound,
        bound_ok=ok,
    )


def variance_check(alpha, w, p, reference: Reference, cp: CaseParams, ds, loss) -> VarianceReport:
    """Second moment of the importance-weighted update against its decay bound.

    lhs = sum_i p_i ||kappa_i x_i / (n p_i)||^2; the bound is
    M * (2||alpha - alpha*||^2 + 2 L ||w - w*||^2) with M = Q(1 + gamma Q/(lam^2 n)),
    Q the mean squared row norm, and L = sum_i l_tilde_i^2 ||x_i||^2 (the
    per-coordinate derivative smoothness aggregated over examples).
    """
    bound = loss.bind(ds)
    res = compute_residues(alpha, w, ds, loss)
    m = res.support
    n = ds.n
    lhs = float(np.sum(res.kappa[m] ** 2 * ds.norms[m] / (n * n * p[m])))
    q_const = float(ds.norms.mean())
    gamma_var = cp.lam * n if cp.case == "all_convex" else float(np.mean(bound.L**2))
    m_const = q_const * (1.0 + gamma_var * q_const / (cp.lam**2 * n))
    l_const = float(np.sum(bound.l_tilde_i**2 * ds.norms))
    da = alpha - reference.alpha
    dw = w - reference.w
    rhs = m_const * (2.0 * float(da @ da) + 2.0 * l_const * float(dw @ dw))
    return VarianceReport(
        lhs=lhs,
        rhs=rhs,
        ok=lhs <= rhs * (1.0 + 1e-9),
        kappa_sq=res.sq_norm,
        m_const=m_const,
        l_const=l_const,
    )


def trace_to_csv(trace: list[TraceRecord], include_seconds: bool = True) -> str:
    """CSV text, one row per epoch; column order matches ``TRACE_COLUMNS``."""
    buf = io.StringIO()
    columns = TRACE_COLUMNS if include_seconds else tuple(c for c in TRACE_COLUMNS if c != "seconds")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in trace:
        values = {
            "epoch": row.epoch,
            "iter": row.iteration,
            "seconds": repr(row.seconds),
            "primal": repr(row.primal),
            "subopt": repr(row.subopt),
            "gap_G": repr(row.gap),
            "residue_norm": repr(row.residue_norm),
            "residue_p90": repr(row.residue_p90),
            "theta": repr(row.theta),
        }
        writer.writerow([values[c] for c in columns])
    return buf.getvalue()
