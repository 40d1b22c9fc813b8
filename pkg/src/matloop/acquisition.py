"""Acquisition functions and their maximizer.

Single-objective: analytic expected improvement, probability of improvement
and lower confidence bound. Multi-objective: exact two-objective expected
hypervolume improvement via a strip decomposition of the nondominated region
(products of univariate normal partial moments), and Monte-Carlo qEHVI for
batches. Multi-fidelity candidates are scored per evaluation cost.

The maximizer seeds with scrambled low-discrepancy points, refines the best
seeds with bounded Nelder-Mead, and builds batches greedily: each new point
maximizes the joint score with the already-chosen points held fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr
from scipy.stats import qmc

from .errors import (
    DimensionMismatchError,
    InvalidRefPointError,
    NonFiniteInputError,
    UnknownFidelityError,
)
from .gp import GpModel, joint_posterior, predict
from .pareto import pareto_front
from .seeding import rng_for, subseed_sequence

SQRT_2PI = math.sqrt(2.0 * math.pi)

RAW_CANDIDATES = 1024
REFINE_TOP = 16
REFINE_ITERS = 60

ACQUISITION_KINDS = ("EI", "PI", "LCB", "EHVI", "qEHVI")


@dataclass(frozen=True)
class AcquisitionSpec:
    kind: str = "EI"
    q: int = 1
    beta: float = 1.0
    mc_samples: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ACQUISITION_KINDS:
            raise ValueError(f"unknown acquisition kind {self.kind!r}")
        if self.q < 1:
            raise ValueError("batch size q must be >= 1")
        if self.q > 1 and self.kind != "qEHVI":
            raise ValueError(f"q > 1 requires qEHVI, not {self.kind}")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be positive")


@dataclass(frozen=True)
class CostModel:
    """Evaluation cost per fidelity: discrete level/ratio table or a smooth
    c(s) = c0 + s**p curve. The highest discrete level is the target s = 1."""

    mode: str = "continuous"
    levels: tuple[float, ...] = ()
    ratios: tuple[float, ...] = ()
    c0: float = 0.2
    exponent: float = 2.0

    def __post_init__(self):
        if self.mode not in ("continuous", "discrete"):
            raise ValueError(f"unknown cost mode {self.mode!r}")
        if self.mode == "discrete":
            if not self.levels:
                raise ValueError("discrete cost model needs fidelity levels")
            if len(self.levels) != len(self.ratios):
                raise ValueError("levels and ratios must align")
            if any(c <= 0 for c in self.ratios):
                raise ValueError("costs must be positive")
            if list(self.levels) != sorted(set(self.levels)):
                raise ValueError("levels must be strictly increasing")
            if self.levels[-1] != 1.0:
                raise ValueError("highest fidelity level must be 1.0")
        else:
            if self.c0 <= 0:
                raise ValueError("c0 must be positive")

    def cost(self, s: float) -> float:
        if self.mode == "discrete":
            for level, ratio in zip(self.levels, self.ratios):
                if level == s:
                    return float(ratio)
            raise UnknownFidelityError(f"fidelity {s} not in levels {self.levels}")
        if not 0.0 <= s <= 1.0:
            raise UnknownFidelityError(f"fidelity {s} outside [0, 1]")
        return self.c0 + float(s) ** self.exponent

    def to_json_dict(self) -> dict:
        if self.mode == "discrete":
            return {"mode": "discrete", "levels": list(self.levels),
                    "ratios": list(self.ratios)}
        return {"mode": "continuous", "c0": self.c0, "exponent": self.exponent}

    @classmethod
    def from_json_dict(cls, d: dict) -> "CostModel":
        if d["mode"] == "discrete":
            return cls(mode="discrete", levels=tuple(d["levels"]), ratios=tuple(d["ratios"]))
        return cls(mode="continuous", c0=d.get("c0", 0.2), exponent=d.get("exponent", 2.0))


@dataclass
class Proposal:
    id: str
    x: tuple[float, ...]
    fidelity: float | None
    acq_value: float
    acq_value_weighted: float | None = None
    predicted_mean: tuple[float, ...] = ()
    predicted_sd: tuple[float, ...] = ()
    status: str = "pending"

    def mark_measured(self):
        if self.status != "pending":
            raise ValueError(f"proposal {self.id} already {self.status}")
        self.status = "measured"

    def mark_expired(self):
        if self.status != "pending":
            raise ValueError(f"proposal {self.id} already {self.status}")
        self.status = "expired"

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "x": list(self.x),
            "fidelity": self.fidelity,
            "acq_value": self.acq_value,
            "acq_value_weighted": self.acq_value_weighted,
            "predicted_mean": list(self.predicted_mean),
            "predicted_sd": list(self.predicted_sd),
            "status": self.status,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "Proposal":
        return cls(
            id=d["id"], x=tuple(d["x"]), fidelity=d["fidelity"],
            acq_value=d["acq_value"], acq_value_weighted=d.get("acq_value_weighted"),
            predicted_mean=tuple(d.get("predicted_mean", ())),
            predicted_sd=tuple(d.get("predicted_sd", ())),
            status=d.get("status", "pending"),
        )


# ---------------------------------------------------------------------------
# Analytic single-objective acquisitions (maximize convention)
# ---------------------------------------------------------------------------

def _check_finite(*values):
    for v in values:
        if not np.all(np.isfinite(v)):
            raise NonFiniteInputError("acquisition inputs must be finite")


def expected_improvement(mean, sd, incumbent):
    """(mu - f*) Phi(z) + sigma phi(z) with z = (mu - f*)/sigma; the sd -> 0
    limit is max(mu - f*, 0)."""
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    _check_finite(mean, sd, incumbent)
    diff = mean - incumbent
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sd > 0, diff / np.where(sd > 0, sd, 1.0), 0.0)
    z = np.clip(z, -1e8, 1e8)
    phi = np.exp(-0.5 * z * z) / SQRT_2PI
    ei = np.where(sd > 0, diff * ndtr(z) + sd * phi, np.maximum(diff, 0.0))
    return float(ei) if ei.ndim == 0 else ei


def probability_of_improvement(mean, sd, incumbent):
    """Phi((mu - f*)/sigma); the sd -> 0 limit is the strict-improvement
    indicator."""
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    _check_finite(mean, sd, incumbent)
    diff = mean - incumbent
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sd > 0, diff / np.where(sd > 0, sd, 1.0), 0.0)
    z = np.clip(z, -1e8, 1e8)
    pi = np.where(sd > 0, ndtr(z), (diff > 0).astype(float))
    return float(pi) if pi.ndim == 0 else pi


def lower_confidence_bound(mean, sd, beta):
    """mu - beta*sigma; selection minimizes this score."""
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    _check_finite(mean, sd, beta)
    if beta < 0:
        raise ValueError("beta must be >= 0")
    out = mean - beta * sd
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Expected hypervolume improvement (2 objectives, exact)
# ---------------------------------------------------------------------------

def _exceedance(mu, sd, h):
    """E[(Z - h)+] for Z ~ N(mu, sd^2); vectorizes over mu/sd against h."""
    mu = np.asarray(mu, dtype=float)
    sd = np.asarray(sd, dtype=float)
    diff = mu - h
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sd > 0, diff / np.where(sd > 0, sd, 1.0), 0.0)
    z = np.clip(z, -1e8, 1e8)
    phi = np.exp(-0.5 * z * z) / SQRT_2PI
    return np.where(sd > 0, diff * ndtr(z) + sd * phi, np.maximum(diff, 0.0))


def _front_segments(front_values: np.ndarray, r: np.ndarray
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vertical strips of the improvement region above a 2-D maximize front.

    Returns (starts, ends, ceilings): within [starts_j, ends_j] a new point
    (z1, z2) gains area (z1 - u in strip) x (z2 - ceilings_j)+.
    """
    if front_values.shape[0] == 0:
        return (np.array([r[0]]), np.array([np.inf]), np.array([r[1]]))
    keep = np.all(front_values > r, axis=1)
    pts = front_values[keep]
    if pts.shape[0] == 0:
        return (np.array([r[0]]), np.array([np.inf]), np.array([r[1]]))
    pts = pareto_front(pts).values
    order = np.argsort(pts[:, 0])
    xs = pts[order, 0]
    ys = pts[order, 1]
    starts = np.concatenate([[r[0]], xs])
    ends = np.concatenate([xs, [np.inf]])
    ceilings = np.concatenate([ys, [r[1]]])
    return starts, ends, ceilings


def ehvi_exact(means, sds, front_values, r) -> float:
    """Exact EHVI for two objectives with independent normal marginals.

    ``front_values`` and ``r`` are in the internal maximize convention.
    """
    means = np.asarray(means, dtype=float).ravel()
    sds = np.asarray(sds, dtype=float).ravel()
    if means.shape != (2,) or sds.shape != (2,):
        raise DimensionMismatchError("exact EHVI requires exactly two objectives")
    _check_finite(means, sds)
    r = np.asarray(r, dtype=float).ravel()
    if r.shape != (2,):
        raise InvalidRefPointError(f"reference point must have 2 components, got {r.shape}")
    front_values = np.asarray(front_values, dtype=float).reshape(-1, 2)
    starts, ends, ceilings = _front_segments(front_values, r)
    finite_ends = np.where(np.isinf(ends), 0.0, ends)
    end_exceed = np.where(np.isinf(ends), 0.0, _exceedance(means[0], sds[0], finite_ends))
    width = _exceedance(means[0], sds[0], starts) - end_exceed
    height = _exceedance(means[1], sds[1], ceilings)
    return float(np.sum(width * height))


def ehvi_exact_many(means: np.ndarray, sds: np.ndarray, front_values, r) -> np.ndarray:
    """Exact 2-objective EHVI for many independent candidates at once.

    means/sds are (n, 2); returns (n,).
    """
    means = np.asarray(means, dtype=float)
    sds = np.asarray(sds, dtype=float)
    r = np.asarray(r, dtype=float).ravel()
    starts, ends, ceilings = _front_segments(
        np.asarray(front_values, dtype=float).reshape(-1, 2), r
    )
    mu1 = means[:, 0][:, None]
    sd1 = sds[:, 0][:, None]
    finite_ends = np.where(np.isinf(ends), 0.0, ends)[None, :]
    end_exceed = np.where(np.isinf(ends)[None, :], 0.0, _exceedance(mu1, sd1, finite_ends))
    width = _exceedance(mu1, sd1, starts[None, :]) - end_exceed
    height = _exceedance(means[:, 1][:, None], sds[:, 1][:, None], ceilings[None, :])
    return np.sum(width * height, axis=1)


def qehvi_single_many(models: Sequence[GpModel], X, front_values, r,
                      spec: AcquisitionSpec) -> np.ndarray:
    """MC q=1 EHVI for many candidates with common random numbers: (n,)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    m = len(models)
    r = np.asarray(r, dtype=float).ravel()
    front = np.asarray(front_values, dtype=float).reshape(-1, m)
    S = spec.mc_samples
    outcomes = np.empty((S, n, m))
    for k, model in enumerate(models):
        sl = predict(model, X)
        sd = spec.beta * np.sqrt(np.maximum(sl.variance, 0.0))
        rng = rng_for(spec.seed, "qehvi", k)
        z = rng.standard_normal((S, n))
        outcomes[:, :, k] = sl.mean[None, :] + z * sd[None, :]
    if m == 2:
        gains = np.empty(n)
        chunk = max(1, 2**22 // max(S * (front.shape[0] + 2), 1))
        for a in range(0, n, chunk):
            b = min(a + chunk, n)
            flat = hv_improvement_2d(outcomes[:, a:b, :].reshape(S * (b - a), 2), front, r)
            gains[a:b] = flat.reshape(S, b - a).mean(axis=0)
        return gains
    gains = np.empty(n)
    for i in range(n):
        gains[i] = _mc_improvement(outcomes[:, i:i + 1, :], front, r)
    return gains


def hv_improvement_2d(points: np.ndarray, front_values: np.ndarray, r) -> np.ndarray:
    """Hypervolume gained by each of ``points`` (n, 2) over the front."""
    r = np.asarray(r, dtype=float)
    starts, ends, ceilings = _front_segments(np.asarray(front_values, dtype=float), r)
    z1 = points[:, 0][:, None]
    z2 = points[:, 1][:, None]
    overlap = np.maximum(0.0, np.minimum(z1, ends[None, :]) - starts[None, :])
    gain = np.maximum(0.0, z2 - ceilings[None, :])
    return np.sum(overlap * gain, axis=1)


def batch_hv_2d(points: np.ndarray, r) -> np.ndarray:
    """2-D hypervolume for a batch of point sets: points (S, n, 2) -> (S,)."""
    r = np.asarray(r, dtype=float)
    S, n, _ = points.shape
    clipped = np.where(np.all(points > r, axis=2, keepdims=True), points, r)
    order = np.argsort(-clipped[:, :, 0], axis=1)
    y0 = np.take_along_axis(clipped[:, :, 0], order, axis=1)
    y1 = np.take_along_axis(clipped[:, :, 1], order, axis=1)
    prev = np.concatenate(
        [np.full((S, 1), r[1]), np.maximum.accumulate(np.maximum(y1, r[1]), axis=1)[:, :-1]],
        axis=1,
    )
    return np.sum((y0 - r[0]) * np.maximum(y1 - prev, 0.0), axis=1)


def _sample_outcomes(models: Sequence[GpModel], X: np.ndarray, n_samples: int,
                     beta: float, seed: int) -> np.ndarray:
    """(S, q, m) joint posterior draws with covariance inflated by beta^2."""
    q = X.shape[0]
    m = len(models)
    out = np.empty((n_samples, q, m))
    for k, model in enumerate(models):
        mean, cov = joint_posterior(model, X)
        cov = cov * beta**2
        cov[np.diag_indices_from(cov)] += 1e-12
        try:
            L = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            L = np.diag(np.sqrt(np.maximum(np.diag(cov), 0.0)))
        rng = rng_for(seed, "qehvi", k)
        z = rng.standard_normal((n_samples, q))
        out[:, :, k] = mean[None, :] + z @ L.T
    return out


def qehvi_mc(models: Sequence[GpModel], X_batch, front_values, r,
             spec: AcquisitionSpec) -> float:
    """Monte-Carlo qEHVI: mean hypervolume gain of the batch outcomes over the
    front, deterministic given the seed carried by the AcquisitionSpec."""
    X = np.atleast_2d(np.asarray(X_batch, dtype=float))
    if X.shape[0] < 1:
        raise DimensionMismatchError("batch must contain at least one point")
    if spec.mc_samples < 128:
        raise ValueError("qEHVI requires mc_samples >= 128")
    r = np.asarray(r, dtype=float).ravel()
    m = len(models)
    if r.shape[0] != m:
        raise InvalidRefPointError(
            f"reference point has {r.shape[0]} components for {m} objectives"
        )
    front = np.asarray(front_values, dtype=float).reshape(-1, m)
    outcomes = _sample_outcomes(models, X, spec.mc_samples, spec.beta, spec.seed)
    return _mc_improvement(outcomes, front, r)


def _mc_improvement(outcomes: np.ndarray, front: np.ndarray, r: np.ndarray) -> float:
    S, q, m = outcomes.shape
    if m == 2:
        if q == 1:
            return float(np.mean(hv_improvement_2d(outcomes[:, 0, :], front, r)))
        if front.shape[0]:
            keep = np.all(front > r, axis=1)
            front = pareto_front(front[keep]).values if keep.any() else front[:0]
        base = batch_hv_2d(front[None, :, :], r)[0] if front.shape[0] else 0.0
        stacked = np.concatenate(
            [np.broadcast_to(front, (S,) + front.shape), outcomes], axis=1
        ) if front.shape[0] else outcomes
        return float(np.mean(batch_hv_2d(stacked, r) - base))
    from .pareto import hypervolume  # m >= 3: exact per-sample evaluation
    base = hypervolume(front, r) if front.shape[0] else 0.0
    gains = np.empty(S)
    for i in range(S):
        gains[i] = hypervolume(np.vstack([front, outcomes[i]]), r) - base
    return float(np.mean(np.maximum(gains, 0.0)))


def cost_weighted(acq_value: float, fidelity: float, cost_model: CostModel) -> float:
    """Per-cost acquisition: raw value divided by the evaluation cost."""
    return float(acq_value) / cost_model.cost(fidelity)


# ---------------------------------------------------------------------------
# Acquisition maximization
# ---------------------------------------------------------------------------

@dataclass
class CandidateScore:
    x: np.ndarray
    fidelity: float | None
    raw: float
    weighted: float | None


def _sobol_candidates(bounds: np.ndarray, n: int, seed_seq) -> np.ndarray:
    sampler = qmc.Sobol(d=bounds.shape[0], scramble=True, seed=np.random.default_rng(seed_seq))
    U = sampler.random_base2(int(math.ceil(math.log2(n))))[:n]
    return bounds[:, 0] + U * (bounds[:, 1] - bounds[:, 0])


def _lockstep_nelder_mead(fn: Callable, starts: np.ndarray, bounds: np.ndarray,
                          maxiter: int) -> tuple[np.ndarray, np.ndarray]:
    """Bounded Nelder-Mead on several starts at once, maximizing ``fn``.

    All simplexes advance in lockstep, so each round costs at most three
    stacked ``fn(X)`` calls (reflections, expansions/contractions, shrinks)
    instead of one scalar call per simplex step. Candidates are clipped into
    the box. Returns (best points (K, d), best values (K,)).
    """
    K, d = starts.shape
    lo, hi = bounds[:, 0], bounds[:, 1]
    n_v = d + 1
    simplex = np.empty((K, n_v, d))
    simplex[:, 0, :] = starts
    step = 0.05 * (hi - lo)
    for j in range(d):
        vert = starts.copy()
        vert[:, j] = np.where(vert[:, j] + step[j] <= hi[j],
                              vert[:, j] + step[j], vert[:, j] - step[j])
        simplex[:, j + 1, :] = vert
    vals = fn(simplex.reshape(K * n_v, d)).reshape(K, n_v)

    ALPHA, GAMMA, RHO, SIGMA = 1.0, 2.0, 0.5, 0.5
    iters = np.zeros(K, dtype=int)
    while True:
        active = np.flatnonzero(iters < maxiter)
        if active.size == 0:
            break
        # ascending sort: vertex 0 is the worst, vertex -1 the best
        for k in active:
            order = np.argsort(vals[k], kind="stable")
            simplex[k] = simplex[k, order]
            vals[k] = vals[k, order]
        centroid = simplex[active, 1:, :].mean(axis=1)
        worst = simplex[active, 0, :]
        xr = np.clip(centroid + ALPHA * (centroid - worst), lo, hi)
        fr = fn(xr)

        second_pts: list[np.ndarray] = []
        second_meta: list[tuple[int, str, np.ndarray, float]] = []
        for i, k in enumerate(active):
            if fr[i] > vals[k, -1]:
                xe = np.clip(centroid[i] + GAMMA * (xr[i] - centroid[i]), lo, hi)
                second_pts.append(xe)
                second_meta.append((k, "expand", xr[i], fr[i]))
            elif fr[i] > vals[k, 1]:
                simplex[k, 0] = xr[i]
                vals[k, 0] = fr[i]
                iters[k] += 1
            elif fr[i] > vals[k, 0]:
                xc = np.clip(centroid[i] + RHO * (xr[i] - centroid[i]), lo, hi)
                second_pts.append(xc)
                second_meta.append((k, "contract_out", xr[i], fr[i]))
            else:
                xc = np.clip(centroid[i] + RHO * (worst[i] - centroid[i]), lo, hi)
                second_pts.append(xc)
                second_meta.append((k, "contract_in", xr[i], fr[i]))

        shrink_ks: list[int] = []
        if second_pts:
            pts = np.asarray(second_pts)
            fvals = fn(pts)
            for (k, kind, xr_k, fr_k), xq, fq in zip(second_meta, pts, fvals):
                if kind == "expand":
                    if fq > fr_k:
                        simplex[k, 0] = xq
                        vals[k, 0] = fq
                    else:
                        simplex[k, 0] = xr_k
                        vals[k, 0] = fr_k
                    iters[k] += 1
                elif kind == "contract_out":
                    if fq >= fr_k:
                        simplex[k, 0] = xq
                        vals[k, 0] = fq
                        iters[k] += 1
                    else:
                        shrink_ks.append(k)
                else:
                    if fq > vals[k, 0]:
                        simplex[k, 0] = xq
                        vals[k, 0] = fq
                        iters[k] += 1
                    else:
                        shrink_ks.append(k)

        if shrink_ks:
            ks = np.asarray(shrink_ks)
            best = simplex[ks, -1, :][:, None, :]
            shrunk = best + SIGMA * (simplex[ks, :-1, :] - best)
            fvals = fn(shrunk.reshape(len(ks) * (n_v - 1), d)).reshape(len(ks), n_v - 1)
            simplex[ks, :-1, :] = shrunk
            vals[ks, :-1] = fvals
            iters[ks] += 1

    bi = np.argmax(vals, axis=1)
    rows = np.arange(K)
    return simplex[rows, bi, :], vals[rows, bi]


def optimize_acquisition(score_joint: Callable, bounds, q: int,
                         cost_model: CostModel | None, spec: AcquisitionSpec,
                         score_many: Callable | None = None) -> list[CandidateScore]:
    """Maximize an acquisition over a box, with optional fidelity dimension.

    ``score_joint(X (k,d), fidelities (k,) | None) -> float`` is the raw joint
    score of a batch; ``score_many(X (n,d), s) -> (n,)`` is an optional
    vectorized fast path for scoring first-point candidates (``s`` may be
    None, a scalar level, or a per-row array for continuous fidelity).

    Stage 1 scores scrambled low-discrepancy seeds; stage 2 refines the top
    seeds with bounded lockstep Nelder-Mead; the seed/refine budget is shared
    across discrete fidelity levels. Batches are built by sequential-greedy
    conditioning, selecting on cost-weighted marginal gain when a cost model
    is present. Deterministic given the AcquisitionSpec seed; sorted by raw
    acquisition value descending.
    """
    bounds = np.asarray(bounds, dtype=float)
    d = bounds.shape[0]
    levels: list[float | None]
    continuous_fidelity = cost_model is not None and cost_model.mode == "continuous"
    if cost_model is None:
        levels = [None]
    elif cost_model.mode == "discrete":
        levels = list(cost_model.levels)
    else:
        levels = ["continuous"]  # s handled as an extra optimization dimension

    chosen_x: list[np.ndarray] = []
    chosen_s: list[float] = []
    base = 0.0
    results: list[CandidateScore] = []

    def joint(with_x: np.ndarray, with_s: float | None) -> float:
        X = np.array(chosen_x + [with_x])
        if cost_model is None:
            return float(score_joint(X, None))
        s_vec = np.array(chosen_s + [1.0 if with_s is None else with_s])
        return float(score_joint(X, s_vec))

    # the seed/refine budget is shared across discrete fidelity levels
    n_levels = len(levels)
    raw_per_level = max(RAW_CANDIDATES // n_levels, 64)
    refine_per_level = max(REFINE_TOP // n_levels, 2)

    def level_costs(level, S: np.ndarray | None) -> np.ndarray | float:
        if cost_model is None:
            return 1.0
        if continuous_fidelity:
            return cost_model.c0 + np.clip(S, 0.0, 1.0) ** cost_model.exponent
        return cost_model.cost(level)

    for step in range(q):
        best: CandidateScore | None = None
        for li, level in enumerate(levels):
            opt_bounds = bounds
            if continuous_fidelity:
                opt_bounds = np.vstack([bounds, [0.0, 1.0]])
            seed_seq = subseed_sequence(spec.seed, "acq-opt", step, li)
            cands = _sobol_candidates(opt_bounds, raw_per_level, seed_seq)

            def split(v: np.ndarray) -> tuple[np.ndarray, float | None]:
                if continuous_fidelity:
                    return v[:d], float(np.clip(v[d], 0.0, 1.0))
                return v, (level if level is not None else None)

            def raw_rows(V: np.ndarray) -> np.ndarray:
                """Raw joint-gain score per candidate row."""
                V = np.atleast_2d(V)
                if step == 0 and score_many is not None:
                    if continuous_fidelity:
                        return np.asarray(
                            score_many(V[:, :d], np.clip(V[:, d], 0.0, 1.0)), dtype=float
                        )
                    return np.asarray(score_many(V, level), dtype=float)
                return np.array([joint(*split(v)) - base for v in V])

            def weighted_rows(V: np.ndarray) -> np.ndarray:
                V = np.atleast_2d(V)
                raws = raw_rows(V)
                if cost_model is None:
                    return raws
                S = V[:, d] if continuous_fidelity else None
                return raws / level_costs(level, S)

            keys = weighted_rows(cands)
            top = np.argsort(-keys)[:refine_per_level]
            xs, fvals = _lockstep_nelder_mead(weighted_rows, cands[top], opt_bounds,
                                              REFINE_ITERS)
            bi = int(np.argmax(fvals))
            x, s = split(xs[bi])
            raw = float(raw_rows(xs[bi][None, :])[0])
            weighted = None if cost_model is None else float(fvals[bi])
            cand = CandidateScore(np.clip(x, bounds[:, 0], bounds[:, 1]), s, raw, weighted)
            key = cand.weighted if cost_model is not None else cand.raw
            best_key = None if best is None else (
                best.weighted if cost_model is not None else best.raw
            )
            if best is None or key > best_key:
                best = cand

        assert best is not None
        results.append(best)
        chosen_x.append(best.x)
        chosen_s.append(1.0 if best.fidelity is None else best.fidelity)
        if q > 1:
            X = np.array(chosen_x)
            s_vec = None if cost_model is None else np.array(chosen_s)
            base = float(score_joint(X, s_vec))

    results.sort(key=lambda c: -c.raw)
    return results
