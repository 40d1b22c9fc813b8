"""Campaign orchestration: the propose-measure-learn loop.

Two operating modes share one state machine. Benchmark mode closes the loop
itself by evaluating analytic test functions; dataset mode bootstraps from a
governed table and waits for human measurements of each pending batch.

Objective directions are normalized to maximize at ingestion and restored on
export. Input normalization always uses the configured bounds, never the
observed data, so it is iteration-invariant. All randomness derives from the
master seed through tagged sub-streams; identical config and seed replay to
identical proposals and identical CSV bytes.
"""

from __future__ import annotations

import csv
import io
import json
import time
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from . import benchmarks
from .acquisition import (
    AcquisitionSpec,
    CostModel,
    Proposal,
    batch_hv_2d,
    ehvi_exact_many,
    expected_improvement,
    hv_improvement_2d,
    lower_confidence_bound,
    optimize_acquisition,
    probability_of_improvement,
    qehvi_mc,
    qehvi_single_many,
)
from .errors import (
    AllMissingError,
    AlreadyMeasuredError,
    ArityMismatchError,
    CampaignStateError,
    ConfigError,
    EmptyLogError,
    UnknownProposalError,
)
from .gp import GpModel, fit_gp, joint_posterior, paired_posterior_cov, predict
from .pareto import (
    RefPointWarning,
    default_reference_point,
    hypervolume,
    pareto_front,
    to_internal,
)
from .seeding import deterministic_uuid, rng_for, subseed_sequence
from .store import DataStore, RowSet, format_cell

PHASES = ("configured", "awaiting_measurement", "updating", "converged",
          "budget_exhausted")

INIT_METHODS = ("lhs", "sobol", "uniform")
IMPUTATION_KINDS = ("drop_rows", "mean", "median", "constant")

SEARCH_MC_SAMPLES = 512
REPORT_MC_SAMPLES = 4096


def seed_int(master: int, *tags) -> int:
    return int(subseed_sequence(master, *tags).generate_state(1)[0])


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CampaignConfig:
    mode: str = "benchmark"
    benchmark: str | None = None
    table_id: str | None = None
    x_columns: tuple[str, ...] = ()
    y_columns: tuple[str, ...] = ()
    directions: tuple[str, ...] = ()
    bounds: tuple[tuple[float, float], ...] = ()
    fidelity: CostModel | None = None
    iterations: int = 10
    init_n: int = 5
    init_method: str = "lhs"
    acquisition: str | None = None
    q: int = 1
    beta: float = 1.0
    mc_samples: int = SEARCH_MC_SAMPLES
    seed: int = 0
    budget: float | None = None
    imputation: str = "drop_rows"
    imputation_constant: float = 0.0
    ref_point: tuple[float, ...] | None = None
    noise: str | float = "auto"
    gp_restarts: int = 8

    def validate(self, store: DataStore | None = None) -> "CampaignConfig":
        if self.mode not in ("benchmark", "dataset"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.iterations < 1:
            raise ConfigError("iterations must be positive")
        if self.init_n < 2:
            raise ConfigError("init_n must be >= 2")
        if self.init_method not in INIT_METHODS:
            raise ConfigError(f"unknown init_method {self.init_method!r}")
        if self.q < 1:
            raise ConfigError("q must be >= 1")
        if self.mc_samples < 1:
            raise ConfigError("mc_samples must be positive")
        if self.budget is not None and self.budget <= 0:
            raise ConfigError("budget must be positive")
        if self.imputation not in IMPUTATION_KINDS:
            raise ConfigError(f"unknown imputation {self.imputation!r}")
        if self.mode == "benchmark":
            if not self.benchmark:
                raise ConfigError("benchmark mode requires a benchmark name")
            benchmarks.get_benchmark(self.benchmark)
        else:
            if not self.table_id or not self.x_columns or not self.y_columns:
                raise ConfigError("dataset mode requires table_id, x_columns, y_columns")
            if len(self.bounds) != len(self.x_columns):
                raise ConfigError("dataset mode requires bounds per input column")
            if self.directions and len(self.directions) != len(self.y_columns):
                raise ConfigError("directions must align with y_columns")
            for d in self.directions:
                if d not in ("maximize", "minimize"):
                    raise ConfigError(f"bad direction {d!r}")
            if store is not None:
                meta = store.table_metadata(self.table_id)
                for col in list(self.x_columns) + list(self.y_columns):
                    if col not in meta["columns"]:
                        raise ConfigError(f"column {col!r} not in table {self.table_id!r}")
                    if meta["dtypes"][col] != "real":
                        raise ConfigError(f"column {col!r} must be real-typed")
        kind = self.resolved_acquisition()
        if kind in ("EI", "PI", "LCB") and self.objective_count() != 1:
            raise ConfigError(f"{kind} requires a single objective")
        if kind in ("EHVI", "qEHVI") and self.objective_count() < 2:
            raise ConfigError(f"{kind} requires multiple objectives")
        if self.q > 1 and kind != "qEHVI":
            raise ConfigError("q > 1 requires the qEHVI acquisition")
        if self.ref_point is not None and len(self.ref_point) != self.objective_count():
            raise ConfigError("ref_point arity must match the objective count")
        return self

    def objective_count(self) -> int:
        if self.mode == "benchmark":
            return benchmarks.get_benchmark(self.benchmark).objectives
        return len(self.y_columns)

    def objective_directions(self) -> tuple[str, ...]:
        if self.mode == "benchmark":
            return benchmarks.get_benchmark(self.benchmark).directions
        if self.directions:
            return self.directions
        return tuple("maximize" for _ in self.y_columns)

    def input_bounds(self) -> np.ndarray:
        if self.mode == "benchmark":
            defn = benchmarks.get_benchmark(self.benchmark)
            return np.asarray(defn.bounds, dtype=float)
        return np.asarray(self.bounds, dtype=float)

    def input_names(self) -> list[str]:
        if self.mode == "dataset":
            return list(self.x_columns)
        return [f"x_{j + 1}" for j in range(self.input_bounds().shape[0])]

    def objective_names(self) -> list[str]:
        if self.mode == "dataset":
            return list(self.y_columns)
        return [f"y_{k + 1}" for k in range(self.objective_count())]

    def resolved_acquisition(self) -> str:
        if self.acquisition:
            return self.acquisition
        return "EI" if self.objective_count() == 1 else "qEHVI"

    def resolved_noise(self) -> str | float:
        if self.noise != "auto":
            return self.noise
        return 1e-6 if self.mode == "benchmark" else "fit"

    def to_json_dict(self) -> dict:
        d = {
            "mode": self.mode,
            "iterations": self.iterations,
            "init_n": self.init_n,
            "init_method": self.init_method,
            "acquisition": self.acquisition,
            "q": self.q,
            "beta": self.beta,
            "mc_samples": self.mc_samples,
            "seed": self.seed,
            "budget": self.budget,
            "imputation": self.imputation,
            "imputation_constant": self.imputation_constant,
            "ref_point": list(self.ref_point) if self.ref_point else None,
            "noise": self.noise,
            "gp_restarts": self.gp_restarts,
            "fidelity": self.fidelity.to_json_dict() if self.fidelity else None,
        }
        if self.mode == "benchmark":
            d["benchmark"] = self.benchmark
        else:
            d.update({
                "table_id": self.table_id,
                "x_columns": list(self.x_columns),
                "y_columns": list(self.y_columns),
                "directions": list(self.directions),
                "bounds": [list(b) for b in self.bounds],
            })
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "CampaignConfig":
        known = {
            "mode", "benchmark", "table_id", "x_columns", "y_columns", "directions",
            "bounds", "fidelity", "iterations", "init_n", "init_method", "acquisition",
            "q", "beta", "mc_samples", "seed", "budget", "imputation",
            "imputation_constant", "ref_point", "noise", "gp_restarts",
        }
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        fidelity = d.get("fidelity")
        return cls(
            mode=d.get("mode", "benchmark"),
            benchmark=d.get("benchmark"),
            table_id=d.get("table_id"),
            x_columns=tuple(d.get("x_columns", ())),
            y_columns=tuple(d.get("y_columns", ())),
            directions=tuple(d.get("directions", ())),
            bounds=tuple(tuple(b) for b in d.get("bounds", ())),
            fidelity=CostModel.from_json_dict(fidelity) if fidelity else None,
            iterations=int(d.get("iterations", 10)),
            init_n=int(d.get("init_n", 5)),
            init_method=d.get("init_method", "lhs"),
            acquisition=d.get("acquisition"),
            q=int(d.get("q", 1)),
            beta=float(d.get("beta", 1.0)),
            mc_samples=int(d.get("mc_samples", SEARCH_MC_SAMPLES)),
            seed=int(d.get("seed", 0)),
            budget=None if d.get("budget") is None else float(d["budget"]),
            imputation=d.get("imputation", "drop_rows"),
            imputation_constant=float(d.get("imputation_constant", 0.0)),
            ref_point=tuple(d["ref_point"]) if d.get("ref_point") else None,
            noise=d.get("noise", "auto"),
            gp_restarts=int(d.get("gp_restarts", 8)),
        )


# ---------------------------------------------------------------------------
# Initial design and imputation
# ---------------------------------------------------------------------------

def initial_design(bounds, n: int, method: str, seed: int) -> np.ndarray:
    """Space-filling design inside the box; deterministic given the seed.

    lhs puts exactly one point in each of n per-dimension strata; sobol takes
    the first n points of a scrambled sequence.
    """
    if n < 2:
        raise ValueError("initial design needs n >= 2")
    return _space_filling(bounds, n, method, seed)


def _space_filling(bounds, n: int, method: str, seed: int) -> np.ndarray:
    bounds = np.asarray(bounds, dtype=float)
    d = bounds.shape[0]
    rng = rng_for(seed, "init-design")
    if method == "lhs":
        U = np.empty((n, d))
        for j in range(d):
            strata = rng.permutation(n)
            U[:, j] = (strata + rng.uniform(size=n)) / n
    elif method == "sobol":
        sampler = qmc.Sobol(d=d, scramble=True, seed=rng)
        m = int(np.ceil(np.log2(max(n, 2))))
        U = sampler.random_base2(m)[:n]
    elif method == "uniform":
        U = rng.uniform(size=(n, d))
    else:
        raise ValueError(f"unknown init method {method!r}")
    return bounds[:, 0] + U * (bounds[:, 1] - bounds[:, 0])


def impute(rowset: RowSet, columns: list[str], strategy: str,
           constant: float = 0.0) -> tuple[np.ndarray, dict]:
    """Materialize real-valued columns without missing cells.

    Returns (matrix (n, len(columns)), report). drop_rows removes rows with
    any missing target cell; mean/median/constant fill per column.
    """
    names = rowset.column_names()
    idx = [names.index(c) for c in columns]
    raw = [[row[i] for i in idx] for row in rowset.rows]
    rows_dropped = 0
    cells_filled = 0
    if strategy == "drop_rows":
        kept = [r for r in raw if all(v is not None for v in r)]
        rows_dropped = len(raw) - len(kept)
        data = np.array([[float(v) for v in r] for r in kept], dtype=float) \
            if kept else np.empty((0, len(columns)))
    else:
        data = np.array(
            [[np.nan if v is None else float(v) for v in r] for r in raw], dtype=float
        ) if raw else np.empty((0, len(columns)))
        for j, col in enumerate(columns):
            mask = np.isnan(data[:, j])
            if not mask.any():
                continue
            if strategy == "constant":
                fill = constant
            else:
                present = data[~mask, j]
                if present.size == 0:
                    raise AllMissingError(f"column {col!r} has no observed values to impute")
                fill = float(np.mean(present)) if strategy == "mean" else float(np.median(present))
            data[mask, j] = fill
            cells_filled += int(mask.sum())
    report = {"rows_dropped": rows_dropped, "cells_filled": cells_filled}
    return data, report


# ---------------------------------------------------------------------------
# Iteration diagnostics record
# ---------------------------------------------------------------------------

@dataclass
class IterationRecord:
    iteration: int
    hv: float
    delta_hv: float
    gd: float | None
    acq_raw: float
    acq_weighted: float | None
    fidelities: tuple[float, ...] = ()
    cum_cost: float = 0.0
    wall_ms: float = 0.0
    step_size: float | None = None
    best_value: float | None = None

    def to_json_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "hv": self.hv,
            "delta_hv": self.delta_hv,
            "gd": self.gd,
            "acq_raw": self.acq_raw,
            "acq_weighted": self.acq_weighted,
            "fidelities": list(self.fidelities),
            "cum_cost": self.cum_cost,
            "wall_ms": self.wall_ms,
            "step_size": self.step_size,
            "best_value": self.best_value,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "IterationRecord":
        return cls(
            iteration=d["iteration"], hv=d["hv"], delta_hv=d["delta_hv"],
            gd=d.get("gd"), acq_raw=d["acq_raw"], acq_weighted=d.get("acq_weighted"),
            fidelities=tuple(d.get("fidelities", ())), cum_cost=d.get("cum_cost", 0.0),
            wall_ms=d.get("wall_ms", 0.0), step_size=d.get("step_size"),
            best_value=d.get("best_value"),
        )


# ---------------------------------------------------------------------------
# Campaign
# ---------------------------------------------------------------------------

class Campaign:
    """One serialized propose-measure-learn state machine."""

    def __init__(self, config: CampaignConfig, store: DataStore | None = None):
        config.validate(store)
        if config.mode == "dataset" and store is None:
            raise ConfigError("dataset mode requires a datastore")
        self.config = config
        self.store = store
        self.phase = "configured"
        self.X_obs: list[tuple[float, ...]] = []
        self.Y_obs: list[tuple[float, ...]] = []   # user-direction values
        self.fid_obs: list[float | None] = []
        self.cost_obs: list[float] = []
        self.iter_obs: list[int] = []
        self.obs_proposal_ids: list[str] = []
        self.pending: list[Proposal] = []
        self.proposal_log: list[Proposal] = []
        self.records: list[IterationRecord] = []
        self.iteration = 0            # completed BO iterations
        self.eval_count = 0           # total evaluations issued (seeding)
        self.cum_cost = 0.0
        self.frozen_ref: np.ndarray | None = None
        self.hv_prev: float | None = None
        self.degenerate_fallback = False
        self.imputation_report: dict | None = None
        self._pending_wall_start: float | None = None
        if config.mode == "dataset":
            self._bootstrap_from_table()

    # -- shared helpers -----------------------------------------------------

    @property
    def m(self) -> int:
        return self.config.objective_count()

    @property
    def directions(self) -> tuple[str, ...]:
        return self.config.objective_directions()

    def internal_Y(self) -> np.ndarray:
        if not self.Y_obs:
            return np.empty((0, self.m))
        return to_internal(np.asarray(self.Y_obs, dtype=float), self.directions)

    def X_array(self) -> np.ndarray:
        if not self.X_obs:
            return np.empty((0, self.config.input_bounds().shape[0]))
        return np.asarray(self.X_obs, dtype=float)

    def _bootstrap_from_table(self):
        cols = list(self.config.x_columns) + list(self.config.y_columns)
        rowset = self.store.query_rows(self.config.table_id, cols)
        data, report = impute(rowset, cols, self.config.imputation,
                              self.config.imputation_constant)
        self.imputation_report = report
        d = len(self.config.x_columns)
        for row in data:
            self.X_obs.append(tuple(float(v) for v in row[:d]))
            self.Y_obs.append(tuple(float(v) for v in row[d:]))
            self.fid_obs.append(1.0 if self.config.fidelity else None)
            self.cost_obs.append(0.0)  # historical rows cost nothing
            self.iter_obs.append(0)
            self.obs_proposal_ids.append("")

    def _uuid(self) -> str:
        rng = rng_for(self.config.seed, "uuid", self.eval_count, len(self.proposal_log))
        return deterministic_uuid(rng)

    def _cost_of(self, fidelity: float | None) -> float:
        if self.config.fidelity is None:
            return 1.0
        return self.config.fidelity.cost(1.0 if fidelity is None else fidelity)

    def _remaining_budget(self) -> float | None:
        if self.config.budget is None:
            return None
        return self.config.budget - self.cum_cost

    def _min_cost(self) -> float:
        cm = self.config.fidelity
        if cm is None:
            return 1.0 if self.config.budget is not None else 0.0
        if cm.mode == "discrete":
            return min(cm.ratios)
        return cm.c0

    # -- initial design allocation -------------------------------------------

    def _init_fidelities(self, n: int) -> list[float | None]:
        cm = self.config.fidelity
        if cm is None:
            return [None] * n
        if cm.mode == "discrete":
            inv = np.array([1.0 / c for c in cm.ratios])
            frac = inv / inv.sum() * n
            counts = np.floor(frac).astype(int)
            # largest remainder, then guarantee one target-fidelity anchor
            order = np.argsort(-(frac - counts))
            for i in order[: n - counts.sum()]:
                counts[i] += 1
            if counts[-1] == 0 and n >= 1:
                counts[int(np.argmax(counts))] -= 1
                counts[-1] += 1
            out: list[float | None] = []
            for level, c in zip(cm.levels, counts):
                out.extend([level] * int(c))
            return out[:n]
        if n == 1:
            return [1.0]
        return [j / (n - 1) for j in range(n)]

    # -- propose --------------------------------------------------------------

    def propose(self) -> list[Proposal]:
        """Rank and stage the next batch of candidate evaluations."""
        if self.phase not in ("configured", "updating"):
            raise CampaignStateError(
                f"propose is not allowed in phase {self.phase!r}", phase=self.phase
            )
        remaining = self._remaining_budget()
        if remaining is not None and remaining < self._min_cost():
            self.phase = "budget_exhausted"
            return []

        self._pending_wall_start = time.perf_counter()
        n_obs = len(self.X_obs)
        if n_obs < self.config.init_n:
            proposals = self._propose_initial(self.config.init_n - n_obs)
        else:
            if self.hv_prev is None:
                self.hv_prev = self._hv_now()  # bootstrap already covered init
            proposals = self._propose_model_based()

        # budget gate: never issue an evaluation that would overrun
        if self.config.budget is not None:
            feasible: list[Proposal] = []
            planned = self.cum_cost
            for p in proposals:
                c = self._cost_of(p.fidelity)
                if planned + c <= self.config.budget + 1e-12:
                    feasible.append(p)
                    planned += c
                else:
                    p.status = "expired"
                    self.proposal_log.append(p)
            proposals = feasible
            if not proposals:
                self.phase = "budget_exhausted"
                return []

        self.pending = proposals
        self.proposal_log.extend(proposals)
        self.phase = "awaiting_measurement"
        return list(proposals)

    def _propose_initial(self, n: int) -> list[Proposal]:
        bounds = self.config.input_bounds()
        X = _space_filling(bounds, max(n, 2),
                           self.config.init_method,
                           seed_int(self.config.seed, "init", len(self.X_obs)))[:n]
        fids = self._init_fidelities(n)
        out = []
        for x, s in zip(X, fids):
            out.append(Proposal(
                id=self._uuid(), x=tuple(float(v) for v in x), fidelity=s,
                acq_value=0.0, acq_value_weighted=None,
            ))
            self.eval_count += 1
        return out

    def _fit_models(self) -> list[GpModel]:
        bounds = self.config.input_bounds()
        X = self.X_array()
        if self.config.fidelity is not None:
            fid = np.array([1.0 if f is None else f for f in self.fid_obs])
            X = np.column_stack([X, fid])
            bounds = np.vstack([bounds, [0.0, 1.0]])
        Yint = self.internal_Y()
        noise = self.config.resolved_noise()
        models = []
        for k in range(self.m):
            models.append(fit_gp(
                X, Yint[:, k],
                input_bounds=bounds,
                seed=seed_int(self.config.seed, "fit", self.iteration, k),
                n_restarts=self.config.gp_restarts,
                fix_noise=None if noise == "fit" else float(noise),
            ))
        return models

    def _propose_model_based(self) -> list[Proposal]:
        cfg = self.config
        Yint = self.internal_Y()
        self.degenerate_fallback = False
        if np.all(Yint == Yint[0]):
            self.degenerate_fallback = True
            bounds = cfg.input_bounds()
            X = _space_filling(bounds, max(cfg.q, 2), "uniform",
                               seed_int(cfg.seed, "degenerate", self.iteration))[:cfg.q]
            fids = self._init_fidelities(cfg.q)
            out = []
            for x, s in zip(X, fids):
                out.append(Proposal(id=self._uuid(), x=tuple(float(v) for v in x),
                                    fidelity=s, acq_value=0.0))
                self.eval_count += 1
            return out

        models = self._fit_models()
        kind = cfg.resolved_acquisition()
        search_seed = seed_int(cfg.seed, "acq", self.iteration)
        spec = AcquisitionSpec(kind=kind, q=cfg.q, beta=cfg.beta,
                               mc_samples=max(cfg.mc_samples, 128), seed=search_seed)
        bounds = cfg.input_bounds()
        fid_active = cfg.fidelity is not None

        def query_at(X: np.ndarray, s) -> np.ndarray:
            if not fid_active:
                return X
            if s is None:
                col = np.ones((X.shape[0], 1))
            else:
                s_arr = np.asarray(s, dtype=float)
                col = (np.full((X.shape[0], 1), float(s_arr)) if s_arr.ndim == 0
                       else s_arr.reshape(-1, 1))
            return np.column_stack([X, col])

        def posterior_for(model: GpModel, X: np.ndarray, s
                          ) -> tuple[np.ndarray, np.ndarray]:
            """Candidate outcome distribution: target-fidelity posterior, with
            the spread discounted by the correlation between the latent value
            at the candidate fidelity and at the target. A low-fidelity probe
            never dominates with its biased mean, only informs through the
            correlated uncertainty it would remove."""
            Xq1 = query_at(X, 1.0 if fid_active else None)
            p1 = predict(model, Xq1)
            var1 = np.maximum(p1.variance, 0.0)
            if not fid_active or s is None or (np.isscalar(s) and float(s) == 1.0):
                return p1.mean, np.sqrt(var1)
            Xqs = query_at(X, s)
            ps = predict(model, Xqs)
            var_s = np.maximum(ps.variance, 0.0)
            cov = paired_posterior_cov(model, Xqs, Xq1)
            denom = np.sqrt(var_s * var1)
            rho = np.where(denom > 0, np.abs(cov) / np.where(denom > 0, denom, 1.0), 0.0)
            rho = np.clip(rho, 0.0, 1.0)
            return p1.mean, rho * np.sqrt(var1)

        if self.m == 1:
            incumbent = float(Yint[:, 0].max())
            model = models[0]

            def score_many(X, s):
                mean, sd = posterior_for(model, np.atleast_2d(X), s)
                if kind == "EI":
                    return expected_improvement(mean, sd, incumbent)
                if kind == "PI":
                    return probability_of_improvement(mean, sd, incumbent)
                # LCB minimizes mu - beta*sigma of the user objective, which is
                # maximizing mu + beta*sigma internally
                return -lower_confidence_bound(-mean, sd, cfg.beta)

            def score_joint(X, s_vec):
                s = None if s_vec is None else float(np.asarray(s_vec).ravel()[-1])
                return float(np.max(score_many(np.atleast_2d(X)[-1:, :], s)))

        else:
            if fid_active:
                Xq = query_at(self.X_array(), 1.0)
                pred_front = np.column_stack([predict(mo, Xq).mean for mo in models])
                archive_int = pred_front
            else:
                archive_int = Yint
            front = pareto_front(archive_int).values
            if cfg.ref_point is not None:
                r = to_internal(np.asarray(cfg.ref_point, dtype=float), self.directions)
            else:
                r = default_reference_point(archive_int)

            if kind == "EHVI":
                def score_many(X, s):
                    X = np.atleast_2d(X)
                    means = np.empty((X.shape[0], 2))
                    sds = np.empty((X.shape[0], 2))
                    for k, mo in enumerate(models):
                        means[:, k], sds[:, k] = posterior_for(mo, X, s)
                    return ehvi_exact_many(means, sds, front, r)

                def score_joint(X, s_vec):
                    s = None if s_vec is None else float(np.asarray(s_vec).ravel()[-1])
                    return float(score_many(np.atleast_2d(X)[-1:, :], s)[0])

            elif not fid_active:  # qEHVI without a fidelity dimension
                def score_many(X, s):
                    return qehvi_single_many(models, np.atleast_2d(X), front, r, spec)

                def score_joint(X, s_vec):
                    return qehvi_mc(models, np.atleast_2d(X), front, r, spec)

            else:  # qEHVI over (x, s) candidates
                def score_many(X, s):
                    X = np.atleast_2d(X)
                    S = spec.mc_samples
                    out = np.empty((S, X.shape[0], self.m))
                    for k, mo in enumerate(models):
                        mean, sd = posterior_for(mo, X, s)
                        rng = rng_for(spec.seed, "qehvi", k)
                        z = rng.standard_normal((S, X.shape[0]))
                        out[:, :, k] = mean[None, :] + z * (spec.beta * sd)[None, :]
                    gains = np.empty(X.shape[0])
                    for i in range(X.shape[0]):
                        gains[i] = float(np.mean(
                            hv_improvement_2d(out[:, i, :], front, r)))
                    return gains

                def score_joint(X, s_vec):
                    X = np.atleast_2d(X)
                    S = spec.mc_samples
                    outcomes = np.empty((S, X.shape[0], self.m))
                    for k, mo in enumerate(models):
                        Xq1 = query_at(X, 1.0)
                        mean, cov = joint_posterior(mo, Xq1)
                        _, sd_eff = posterior_for(
                            mo, X, None if s_vec is None else np.asarray(s_vec))
                        sd1 = np.sqrt(np.maximum(np.diag(cov), 1e-18))
                        scale = np.where(sd1 > 0, sd_eff / sd1, 0.0)
                        cov_eff = cov * np.outer(scale, scale) * spec.beta**2
                        cov_eff[np.diag_indices_from(cov_eff)] += 1e-12
                        try:
                            L = np.linalg.cholesky(cov_eff)
                        except np.linalg.LinAlgError:
                            L = np.diag(np.sqrt(np.maximum(np.diag(cov_eff), 0.0)))
                        rng = rng_for(spec.seed, "qehvi", k)
                        z = rng.standard_normal((S, X.shape[0]))
                        outcomes[:, :, k] = mean[None, :] + z @ L.T
                    keep = np.all(front > r, axis=1)
                    fr = pareto_front(front[keep]).values if keep.any() else front[:0]
                    base_hv = batch_hv_2d(fr[None, :, :], r)[0] if fr.shape[0] else 0.0
                    stacked = (np.concatenate(
                        [np.broadcast_to(fr, (S,) + fr.shape), outcomes], axis=1)
                        if fr.shape[0] else outcomes)
                    return float(np.mean(batch_hv_2d(stacked, r) - base_hv))

        candidates = optimize_acquisition(score_joint, bounds, cfg.q, cfg.fidelity,
                                          spec, score_many=score_many)

        # report acquisition values at the higher MC budget
        report_spec = AcquisitionSpec(kind=kind, q=cfg.q, beta=cfg.beta,
                                      mc_samples=max(REPORT_MC_SAMPLES, cfg.mc_samples),
                                      seed=search_seed)
        out = []
        for cand in candidates:
            raw = cand.raw
            if kind == "qEHVI" and cfg.q == 1 and self.m > 1 and not fid_active:
                raw = float(qehvi_single_many(models, cand.x[None, :], front, r,
                                              report_spec)[0])
            weighted = None
            if cfg.fidelity is not None:
                weighted = raw / cfg.fidelity.cost(
                    1.0 if cand.fidelity is None else cand.fidelity
                )
            Xp = query_at(cand.x[None, :], cand.fidelity)
            pm, psd = [], []
            for mo in models:
                sl = predict(mo, Xp)
                pm.append(float(sl.mean[0]))
                psd.append(float(np.sqrt(max(sl.variance[0], 0.0))))
            # predictions reported in user direction
            signs = [1.0 if d == "maximize" else -1.0 for d in self.directions]
            pm = [v * s for v, s in zip(pm, signs)]
            out.append(Proposal(
                id=self._uuid(), x=tuple(float(v) for v in cand.x),
                fidelity=cand.fidelity, acq_value=raw, acq_value_weighted=weighted,
                predicted_mean=tuple(pm), predicted_sd=tuple(psd),
            ))
            self.eval_count += 1
        out.sort(key=lambda p: -p.acq_value)
        return out

    # -- measurement ----------------------------------------------------------

    def _find_pending(self, proposal_id: str) -> Proposal:
        for p in self.pending:
            if p.id == proposal_id:
                return p
        for p in self.proposal_log:
            if p.id == proposal_id:
                if p.status == "measured":
                    raise AlreadyMeasuredError(f"proposal {proposal_id} already measured")
                raise UnknownProposalError(f"proposal {proposal_id} is {p.status}")
        raise UnknownProposalError(f"no proposal {proposal_id!r}")

    def submit_measurements(self, proposal_id: str, y_values,
                            fidelity_used: float | None = None) -> "Campaign":
        """Record the measured objective vector for one pending proposal."""
        if self.phase != "awaiting_measurement":
            raise CampaignStateError(
                f"submit_measurements not allowed in phase {self.phase!r}",
                phase=self.phase,
            )
        p = self._find_pending(proposal_id)
        y = np.asarray(y_values, dtype=float).ravel()
        if y.shape[0] != self.m:
            raise ArityMismatchError(f"expected {self.m} objectives, got {y.shape[0]}")
        if not np.all(np.isfinite(y)):
            raise ArityMismatchError("measurements must be finite")
        s = fidelity_used if fidelity_used is not None else p.fidelity
        cost = self._cost_of(s)
        if self.config.budget is not None and \
                self.cum_cost + cost > self.config.budget + 1e-12:
            raise CampaignStateError(
                "measurement cost would exceed the campaign budget", phase=self.phase
            )
        p.mark_measured()
        self.pending = [q for q in self.pending if q.id != proposal_id]
        self.X_obs.append(tuple(p.x))
        self.Y_obs.append(tuple(float(v) for v in y))
        self.fid_obs.append(s if self.config.fidelity is not None else None)
        self.cost_obs.append(cost)
        self.iter_obs.append(self.iteration + 1 if self.hv_prev is not None else 0)
        self.obs_proposal_ids.append(p.id)
        self.cum_cost += cost
        if not self.pending:
            self._complete_batch()
        return self

    def expire_proposal(self, proposal_id: str) -> "Campaign":
        if self.phase != "awaiting_measurement":
            raise CampaignStateError(
                f"expire_proposal not allowed in phase {self.phase!r}", phase=self.phase
            )
        p = self._find_pending(proposal_id)
        p.mark_expired()
        self.pending = [q for q in self.pending if q.id != proposal_id]
        if not self.pending:
            self._complete_batch()
        return self

    # -- iteration bookkeeping -------------------------------------------------

    def _hv_now(self) -> float:
        Yint = self.internal_Y()
        if self.frozen_ref is None:
            self.frozen_ref = default_reference_point(Yint)
        if self.m == 1:
            return float(max(Yint[:, 0].max() - self.frozen_ref[0], 0.0))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RefPointWarning)
            return hypervolume(pareto_front(Yint), self.frozen_ref)

    def _gd_now(self) -> float | None:
        if self.config.mode != "benchmark":
            return None
        defn = benchmarks.get_benchmark(self.config.benchmark)
        ref = benchmarks.reference_front(self.config.benchmark)
        Yint = self.internal_Y()
        if self.m == 1:
            if defn.optima:
                best_int = Yint[:, 0].max()
                opt_int = to_internal(np.array([defn.optima[0][0]]), defn.directions)[0]
                return float(abs(opt_int - best_int))
            return float(abs(ref[0, 0] - Yint[:, 0].max()))
        front = pareto_front(Yint).values
        dists = np.sqrt(
            (((front[:, None, :] - ref[None, :, :]) ** 2).sum(axis=2)).min(axis=1)
        )
        return float(dists.mean())

    def _complete_batch(self):
        """All pending resolved: emit a record (post-init) and advance phase."""
        measured_now = [i for i, it in enumerate(self.iter_obs)
                        if it == self.iteration + 1]
        # benchmark replays must be byte-identical, so the auto-evaluated loop
        # never records wall time
        wall_ms = 0.0
        if self._pending_wall_start is not None:
            if self.config.mode == "dataset":
                wall_ms = (time.perf_counter() - self._pending_wall_start) * 1000.0
            self._pending_wall_start = None

        if self.hv_prev is None:
            # initialization just completed: set the baseline, no record
            self.hv_prev = self._hv_now()
            self.phase = "updating"
            self._check_stop()
            return
        if not measured_now:
            # batch fully expired: no archive change, no record
            self.phase = "updating"
            self._check_stop()
            return

        hv = self._hv_now()
        delta = max(hv - self.hv_prev, 0.0)
        self.hv_prev = hv
        iter_props = [p for p in self.proposal_log
                      if p.status == "measured" and
                      p.id in {self.obs_proposal_ids[i] for i in measured_now}]
        acq_raw = max((p.acq_value for p in iter_props), default=0.0)
        weighted_vals = [p.acq_value_weighted for p in iter_props
                         if p.acq_value_weighted is not None]
        acq_weighted = max(weighted_vals) if weighted_vals else None
        fids = tuple(f for i in measured_now
                     if (f := self.fid_obs[i]) is not None)
        step_size = None
        first = measured_now[0]
        if first > 0:
            a = np.asarray(self.X_obs[first])
            b = np.asarray(self.X_obs[first - 1])
            step_size = float(np.linalg.norm(a - b))
        best_value = None
        if self.m == 1:
            Yint = self.internal_Y()
            sign = 1.0 if self.directions[0] == "maximize" else -1.0
            best_value = float(sign * Yint[:, 0].max())

        self.iteration += 1
        self.records.append(IterationRecord(
            iteration=self.iteration, hv=hv, delta_hv=delta, gd=self._gd_now(),
            acq_raw=acq_raw, acq_weighted=acq_weighted, fidelities=fids,
            cum_cost=self.cum_cost, wall_ms=wall_ms, step_size=step_size,
            best_value=best_value,
        ))
        self._check_stop()

    def _check_stop(self):
        if self.iteration >= self.config.iterations:
            self.phase = "converged"
            return
        remaining = self._remaining_budget()
        if remaining is not None and remaining < self._min_cost():
            self.phase = "budget_exhausted"
            return
        self.phase = "updating"

    # -- benchmark loop --------------------------------------------------------

    def step_benchmark(self) -> IterationRecord | None:
        """One closed-loop step: propose, auto-evaluate, learn.

        Returns the new IterationRecord, or None for the initialization step.
        """
        if self.config.mode != "benchmark":
            raise CampaignStateError("step_benchmark requires benchmark mode")
        if self.phase not in ("configured", "updating"):
            raise CampaignStateError(
                f"step_benchmark not allowed in phase {self.phase!r}", phase=self.phase
            )
        n_records = len(self.records)
        proposals = self.propose()
        if not proposals:
            return None
        name = self.config.benchmark
        for p in list(proposals):
            if self.config.fidelity is not None:
                s = 1.0 if p.fidelity is None else p.fidelity
                y, _ = benchmarks.eval_fidelity(name, np.asarray(p.x), s)
            else:
                defn = benchmarks.get_benchmark(name)
                if defn.kind == "single":
                    y = [benchmarks.eval_single(name, np.asarray(p.x))]
                else:
                    y = benchmarks.eval_multi(name, np.asarray(p.x))
            self.submit_measurements(p.id, np.asarray(y, dtype=float).ravel(),
                                     fidelity_used=p.fidelity)
        return self.records[-1] if len(self.records) > n_records else None

    def run(self) -> "Campaign":
        """Drive a benchmark campaign to its stop condition."""
        while self.phase not in ("converged", "budget_exhausted"):
            self.step_benchmark()
        return self

    # -- diagnostics -----------------------------------------------------------

    def diagnostics(self) -> dict:
        if not self.records:
            raise EmptyLogError("no iteration records yet")
        recs = self.records
        bundle = {
            "iteration": [r.iteration for r in recs],
            "hv": [r.hv for r in recs],
            "delta_hv": [r.delta_hv for r in recs],
            "acq_raw": [r.acq_raw for r in recs],
            "acq_weighted": [r.acq_weighted for r in recs],
            "cum_cost": [r.cum_cost for r in recs],
            "wall_ms": [r.wall_ms for r in recs],
            "step_size": [r.step_size for r in recs],
        }
        if self.config.mode == "benchmark":
            bundle["gd"] = [r.gd for r in recs]
        if self.config.fidelity is not None:
            hist: dict[float, int] = {}
            for f in self.fid_obs:
                if f is not None:
                    hist[f] = hist.get(f, 0) + 1
            bundle["fidelity_histogram"] = {str(k): v for k, v in sorted(hist.items())}
            bundle["fidelity_per_iteration"] = [list(r.fidelities) for r in recs]
        if self.m == 1:
            bundle["best_value"] = [r.best_value for r in recs]
            defn = (benchmarks.get_benchmark(self.config.benchmark)
                    if self.config.mode == "benchmark" else None)
            if defn is not None and defn.optima:
                opt = defn.optima[0][0]
                bundle["distance_to_optimum"] = [abs(r.best_value - opt) for r in recs]
        return bundle

    # -- exports ----------------------------------------------------------------

    def _x_headers(self) -> list[str]:
        return self.config.input_names()

    def _y_headers(self) -> list[str]:
        return self.config.objective_names()

    def export_csv(self, which: str) -> str:
        """RFC-4180 export of observations, proposals, iterations or front."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        deterministic = self.config.mode == "benchmark"
        if which == "observations":
            w.writerow(["iter", "proposal_id"] + self._x_headers()
                       + ["fidelity", "cost"] + self._y_headers())
            for i in range(len(self.X_obs)):
                w.writerow(
                    [self.iter_obs[i], self.obs_proposal_ids[i]]
                    + [format_cell(v) for v in self.X_obs[i]]
                    + [format_cell(self.fid_obs[i]), format_cell(self.cost_obs[i])]
                    + [format_cell(v) for v in self.Y_obs[i]]
                )
        elif which == "iterations":
            w.writerow(["iter", "hv", "delta_hv", "gd", "acq_raw",
                        "acq_costweighted", "fidelity", "cum_cost", "wall_ms"])
            for r in self.records:
                w.writerow([
                    r.iteration, format_cell(r.hv), format_cell(r.delta_hv),
                    format_cell(r.gd), format_cell(r.acq_raw),
                    format_cell(r.acq_weighted),
                    ";".join(format_cell(f) for f in r.fidelities),
                    format_cell(r.cum_cost),
                    "" if deterministic else format_cell(r.wall_ms),
                ])
        elif which == "proposals":
            w.writerow(["id", "status"] + self._x_headers() + ["fidelity", "acq_value"]
                       + [f"pred_mean_{n}" for n in self._y_headers()]
                       + [f"pred_sd_{n}" for n in self._y_headers()])
            for p in self.proposal_log:
                pm = list(p.predicted_mean) + [None] * (self.m - len(p.predicted_mean))
                psd = list(p.predicted_sd) + [None] * (self.m - len(p.predicted_sd))
                w.writerow([p.id, p.status] + [format_cell(v) for v in p.x]
                           + [format_cell(p.fidelity), format_cell(p.acq_value)]
                           + [format_cell(v) for v in pm]
                           + [format_cell(v) for v in psd])
        elif which == "front":
            w.writerow(self._x_headers() + self._y_headers())
            if self.Y_obs:
                front = pareto_front(self.internal_Y())
                for i in front.indices:
                    w.writerow([format_cell(v) for v in self.X_obs[i]]
                               + [format_cell(v) for v in self.Y_obs[i]])
        else:
            raise ValueError(f"unknown export {which!r}")
        return buf.getvalue()

    # -- snapshot / resume -------------------------------------------------------

    def snapshot(self) -> dict:
        return {
            "config": self.config.to_json_dict(),
            "phase": self.phase,
            "X_obs": [list(x) for x in self.X_obs],
            "Y_obs": [list(y) for y in self.Y_obs],
            "fid_obs": self.fid_obs,
            "cost_obs": self.cost_obs,
            "iter_obs": self.iter_obs,
            "obs_proposal_ids": self.obs_proposal_ids,
            "pending": [p.to_json_dict() for p in self.pending],
            "proposal_log": [p.to_json_dict() for p in self.proposal_log],
            "records": [r.to_json_dict() for r in self.records],
            "iteration": self.iteration,
            "eval_count": self.eval_count,
            "cum_cost": self.cum_cost,
            "frozen_ref": None if self.frozen_ref is None else self.frozen_ref.tolist(),
            "hv_prev": self.hv_prev,
            "imputation_report": self.imputation_report,
        }

    def to_json(self) -> str:
        return json.dumps(self.snapshot(), sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_snapshot(cls, doc: dict, store: DataStore | None = None) -> "Campaign":
        config = CampaignConfig.from_json_dict(doc["config"])
        camp = cls.__new__(cls)
        camp.config = config.validate(store)
        camp.store = store
        camp.phase = doc["phase"]
        camp.X_obs = [tuple(x) for x in doc["X_obs"]]
        camp.Y_obs = [tuple(y) for y in doc["Y_obs"]]
        camp.fid_obs = list(doc["fid_obs"])
        camp.cost_obs = list(doc["cost_obs"])
        camp.iter_obs = list(doc["iter_obs"])
        camp.obs_proposal_ids = list(doc["obs_proposal_ids"])
        camp.proposal_log = [Proposal.from_json_dict(p) for p in doc["proposal_log"]]
        pending_ids = {p["id"] for p in doc["pending"]}
        camp.pending = [p for p in camp.proposal_log if p.id in pending_ids]
        camp.records = [IterationRecord.from_json_dict(r) for r in doc["records"]]
        camp.iteration = doc["iteration"]
        camp.eval_count = doc["eval_count"]
        camp.cum_cost = doc["cum_cost"]
        camp.frozen_ref = None if doc["frozen_ref"] is None else np.asarray(doc["frozen_ref"])
        camp.hv_prev = doc["hv_prev"]
        camp.degenerate_fallback = False
        camp.imputation_report = doc.get("imputation_report")
        camp._pending_wall_start = None
        return camp

    @classmethod
    def from_json(cls, text: str, store: DataStore | None = None) -> "Campaign":
        return cls.from_snapshot(json.loads(text), store=store)


def read_observations_csv(text: str) -> dict:
    """Parse an observations export back into aligned arrays."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    d = header.index("fidelity") - 2
    m = len(header) - d - 4
    out = {"iter": [], "proposal_id": [], "X": [], "fidelity": [], "cost": [], "Y": []}
    for row in reader:
        if not row:
            continue
        out["iter"].append(int(row[0]))
        out["proposal_id"].append(row[1])
        out["X"].append(tuple(float(v) for v in row[2:2 + d]))
        out["fidelity"].append(None if row[2 + d] == "" else float(row[2 + d]))
        out["cost"].append(float(row[3 + d]))
        out["Y"].append(tuple(float(v) for v in row[4 + d:4 + d + m]))
    return out
