"""Analytic benchmark functions with known optima.

Single-objective surfaces use their natural domains; multi-objective pairs
share one input in the unit box, with each component receiving an affine
rescale to its own natural domain. Fidelity-augmented evaluation adds a
fixed low-frequency cosine bias that vanishes at the target fidelity:

    f(x, s) = f(x, 1) + (1 - s) * B(x),   cost(s) = c0 + s**p

with B seeded per benchmark at 10% of each objective's observed range.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.stats import qmc

from .errors import OutOfBoundsError, UnknownBenchmarkError
from .pareto import pareto_front
from .seeding import rng_for

DEFAULT_COST_C0 = 0.2
DEFAULT_COST_EXPONENT = 2.0

_RANGE_SCAN_N = 10_000
_REFERENCE_SCAN_N = 100_000
_SCAN_SEED = 20_240_817


# ---------------------------------------------------------------------------
# Scalar surfaces (vectorized over (n, d) arrays)
# ---------------------------------------------------------------------------

def _branin(X):
    x1, x2 = X[:, 0], X[:, 1]
    a, b, c = 1.0, 5.1 / (4 * math.pi**2), 5.0 / math.pi
    r, s, t = 6.0, 10.0, 1.0 / (8 * math.pi)
    return a * (x2 - b * x1**2 + c * x1 - r) ** 2 + s * (1 - t) * np.cos(x1) + s


def _goldstein_price(X):
    x, y = X[:, 0], X[:, 1]
    t1 = 1 + (x + y + 1) ** 2 * (19 - 14 * x + 3 * x**2 - 14 * y + 6 * x * y + 3 * y**2)
    t2 = 30 + (2 * x - 3 * y) ** 2 * (18 - 32 * x + 12 * x**2 + 48 * y - 36 * x * y + 27 * y**2)
    return t1 * t2


def _schwefel(X):
    return 418.9829 * X.shape[1] - np.sum(X * np.sin(np.sqrt(np.abs(X))), axis=1)


def _ackley(X):
    d = X.shape[1]
    return (
        -20.0 * np.exp(-0.2 * np.sqrt(np.sum(X**2, axis=1) / d))
        - np.exp(np.sum(np.cos(2 * math.pi * X), axis=1) / d)
        + 20.0 + math.e
    )


def _rastrigin(X):
    return 10.0 * X.shape[1] + np.sum(X**2 - 10.0 * np.cos(2 * math.pi * X), axis=1)


def _eggholder(X):
    x1, x2 = X[:, 0], X[:, 1]
    return (
        -(x2 + 47.0) * np.sin(np.sqrt(np.abs(x2 + x1 / 2.0 + 47.0)))
        - x1 * np.sin(np.sqrt(np.abs(x1 - (x2 + 47.0))))
    )


def _booth(X):
    x, y = X[:, 0], X[:, 1]
    return (x + 2 * y - 7) ** 2 + (2 * x + y - 5) ** 2


def _currin(X):
    # domain closure: the exponential prefactor tends to 1 as x2 -> 0+
    x1, x2 = X[:, 0], X[:, 1]
    with np.errstate(divide="ignore"):
        pref = np.where(x2 > 0, 1.0 - np.exp(-1.0 / (2.0 * np.maximum(x2, 1e-300))), 1.0)
    num = 2300 * x1**3 + 1900 * x1**2 + 2092 * x1 + 60
    den = 100 * x1**3 + 500 * x1**2 + 4 * x1 + 20
    return pref * num / den


_HARTMANN3_A = np.array([[3.0, 10, 30], [0.1, 10, 35], [3.0, 10, 30], [0.1, 10, 35]])
_HARTMANN3_P = 1e-4 * np.array([
    [3689, 1170, 2673], [4699, 4387, 7470], [1091, 8732, 5547], [381, 5743, 8828],
])
_HARTMANN3_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])


def _hartmann3(X):
    inner = np.sum(_HARTMANN3_A[None, :, :] * (X[:, None, :] - _HARTMANN3_P[None, :, :]) ** 2,
                   axis=2)
    return -np.sum(_HARTMANN3_ALPHA[None, :] * np.exp(-inner), axis=1)


def _himmelblau(X):
    x, y = X[:, 0], X[:, 1]
    return (x**2 + y - 11.0) ** 2 + (x + y**2 - 7.0) ** 2


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BenchmarkDef:
    name: str
    kind: str                       # "single" or "multi"
    dim: int
    bounds: tuple[tuple[float, float], ...]   # natural input domain
    objectives: int
    directions: tuple[str, ...]
    optima: tuple[tuple[float, tuple[float, ...]], ...] = ()
    tolerance: float = 1e-6
    variable_dim: bool = False
    cost_c0: float = DEFAULT_COST_C0
    cost_exponent: float = DEFAULT_COST_EXPONENT
    description: str = ""

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "dim": self.dim,
            "bounds": [list(b) for b in self.bounds],
            "objectives": self.objectives,
            "directions": list(self.directions),
            "optima": [{"value": v, "at": list(x)} for v, x in self.optima],
            "tolerance": self.tolerance,
            "variable_dim": self.variable_dim,
            "description": self.description,
        }


_SINGLE_FUNCS = {
    "branin": _branin,
    "goldstein_price": _goldstein_price,
    "schwefel": _schwefel,
    "ackley": _ackley,
    "rastrigin": _rastrigin,
    "eggholder": _eggholder,
}

# component name -> (function, natural bounds per used dim)
_COMPONENTS = {
    "branin": (_branin, ((-5.0, 10.0), (0.0, 15.0))),
    "currin": (_currin, ((0.0, 1.0), (0.0, 1.0))),
    "booth": (_booth, ((-10.0, 10.0), (-10.0, 10.0))),
    "rastrigin2": (_rastrigin, ((-5.12, 5.12), (-5.12, 5.12))),
    "hartmann3": (_hartmann3, ((0.0, 1.0), (0.0, 1.0), (0.0, 1.0))),
    "himmelblau": (_himmelblau, ((-5.0, 5.0), (-5.0, 5.0))),
}

_MULTI_PAIRS = {
    "branin_currin": ("branin", "currin", 2),
    "booth_rastrigin": ("booth", "rastrigin2", 2),
    "hartmann_himmelblau": ("hartmann3", "himmelblau", 3),
}

REGISTRY: dict[str, BenchmarkDef] = {}


def _register(defn: BenchmarkDef):
    REGISTRY[defn.name] = defn


_register(BenchmarkDef(
    "branin", "single", 2, ((-5.0, 10.0), (0.0, 15.0)), 1, ("minimize",),
    optima=((0.39788735772973816, (math.pi, 2.275)),
            (0.39788735772973816, (-math.pi, 12.275)),
            (0.39788735772973816, (9.42478, 2.475))),
    tolerance=1e-5,
    description="smooth multimodal surface with three equal minima",
))
_register(BenchmarkDef(
    "goldstein_price", "single", 2, ((-2.0, 2.0), (-2.0, 2.0)), 1, ("minimize",),
    optima=((3.0, (0.0, -1.0)),),
    tolerance=1e-9,
    description="steep polynomial valley with a single global minimum",
))
_register(BenchmarkDef(
    "schwefel", "single", 2, ((-500.0, 500.0), (-500.0, 500.0)), 1, ("minimize",),
    optima=((0.0, (420.9687, 420.9687)),),
    # the published additive constant is rounded, so exact zero is unreachable
    tolerance=1e-3,
    variable_dim=True,
    description="deceptive landscape; global minimum far from the second best",
))
_register(BenchmarkDef(
    "ackley", "single", 2, ((-32.768, 32.768), (-32.768, 32.768)), 1, ("minimize",),
    optima=((0.0, (0.0, 0.0)),),
    variable_dim=True,
    description="highly oscillatory with a narrow central funnel",
))
_register(BenchmarkDef(
    "rastrigin", "single", 2, ((-5.12, 5.12), (-5.12, 5.12)), 1, ("minimize",),
    optima=((0.0, (0.0, 0.0)),),
    variable_dim=True,
    description="regular grid of local minima",
))
_register(BenchmarkDef(
    "eggholder", "single", 2, ((-512.0, 512.0), (-512.0, 512.0)), 1, ("minimize",),
    optima=((-959.6407, (512.0, 404.2319)),),
    tolerance=1e-3,
    description="rugged surface with sharp gradients",
))

for _name, (_ca, _cb, _dim) in _MULTI_PAIRS.items():
    _register(BenchmarkDef(
        _name, "multi", _dim, tuple(((0.0, 1.0),) * _dim), 2,
        ("minimize", "minimize"),
        description=f"{_ca} and {_cb} on a shared unit-box input",
    ))


def list_benchmarks() -> list[BenchmarkDef]:
    return [REGISTRY[k] for k in sorted(REGISTRY)]


def get_benchmark(name: str) -> BenchmarkDef:
    try:
        return REGISTRY[name]
    except KeyError:
        raise UnknownBenchmarkError(f"unknown benchmark {name!r}", name=name) from None


def _as_batch(x, dim: int, variable_dim: bool) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if not variable_dim and arr.shape[1] != dim:
        raise OutOfBoundsError(f"expected {dim}-dimensional input, got {arr.shape[1]}")
    return arr, single


def eval_single(name: str, x):
    """Evaluate a single-objective benchmark at x (natural domain)."""
    defn = get_benchmark(name)
    if defn.kind != "single":
        raise UnknownBenchmarkError(f"{name!r} is not single-objective", name=name)
    X, single = _as_batch(x, defn.dim, defn.variable_dim)
    if defn.variable_dim:
        lo, hi = defn.bounds[0]
        if np.any(X < lo) or np.any(X > hi):
            raise OutOfBoundsError(f"{name}: input outside [{lo}, {hi}]^d")
    else:
        for j, (lo, hi) in enumerate(defn.bounds):
            if np.any(X[:, j] < lo) or np.any(X[:, j] > hi):
                raise OutOfBoundsError(f"{name}: coordinate {j} outside [{lo}, {hi}]")
    out = _SINGLE_FUNCS[name](X)
    return float(out[0]) if single else out


def _rescale(U: np.ndarray, bounds) -> np.ndarray:
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    return lo + U * (hi - lo)


def eval_multi(name: str, x):
    """Evaluate a multi-objective pair at x in the unit box; returns m values."""
    defn = get_benchmark(name)
    if defn.kind != "multi":
        raise UnknownBenchmarkError(f"{name!r} is not multi-objective", name=name)
    U, single = _as_batch(x, defn.dim, False)
    if np.any(U < 0.0) or np.any(U > 1.0):
        raise OutOfBoundsError(f"{name}: input outside the unit box")
    comp_a, comp_b, _ = _MULTI_PAIRS[name]
    fa, ba = _COMPONENTS[comp_a]
    fb, bb = _COMPONENTS[comp_b]
    ya = fa(_rescale(U[:, : len(ba)], ba))
    yb = fb(_rescale(U[:, : len(bb)], bb))
    out = np.stack([ya, yb], axis=1)
    return out[0] if single else out


def _sobol_scan(dim: int, n: int, seed: int) -> np.ndarray:
    sampler = qmc.Sobol(d=dim, scramble=True, seed=seed)
    return sampler.random_base2(int(math.ceil(math.log2(n))))[:n]


@lru_cache(maxsize=None)
def _objective_ranges(name: str) -> np.ndarray:
    """(m,) per-objective value range from a seeded low-discrepancy scan."""
    defn = get_benchmark(name)
    U = _sobol_scan(defn.dim, _RANGE_SCAN_N,
                    _SCAN_SEED + zlib.crc32(name.encode()) % 1000)
    if defn.kind == "multi":
        Y = eval_multi(name, U)
    else:
        lo = np.array([b[0] for b in defn.bounds])
        hi = np.array([b[1] for b in defn.bounds])
        Y = eval_single(name, lo + U * (hi - lo))[:, None]
    return Y.max(axis=0) - Y.min(axis=0)


@lru_cache(maxsize=None)
def _bias_params(name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-objective (amplitude, frequency vector, phase) of the bias field."""
    defn = get_benchmark(name)
    m = defn.objectives
    amp = 0.1 * _objective_ranges(name)
    rng = rng_for(zlib.crc32(name.encode()), "fidelity-bias")
    freq = rng.uniform(0.5, 1.5, size=(m, defn.dim))
    phase = rng.uniform(0.0, 1.0, size=m)
    return amp, freq, phase


def fidelity_bias(name: str, x) -> np.ndarray:
    """The fixed bias field B(x); f(x, s) = f(x, 1) + (1 - s) * B(x)."""
    defn = get_benchmark(name)
    U, single = _as_batch(x, defn.dim, False)
    amp, freq, phase = _bias_params(name)
    B = amp[None, :] * np.cos(2 * math.pi * (U @ freq.T + phase[None, :]))
    return B[0] if single else B


def evaluation_cost(name: str, s: float) -> float:
    defn = get_benchmark(name)
    return defn.cost_c0 + float(s) ** defn.cost_exponent


def eval_fidelity(name: str, x, s: float):
    """Evaluate at fidelity s in [0, 1]; returns (values, cost).

    s = 1 reproduces the target-fidelity evaluation exactly.
    """
    if not 0.0 <= s <= 1.0:
        raise OutOfBoundsError(f"fidelity {s} outside [0, 1]")
    defn = get_benchmark(name)
    if defn.kind == "multi":
        base = eval_multi(name, x)
    else:
        base = np.atleast_1d(eval_single(name, x))
        if np.ndim(base) == 1 and np.asarray(x).ndim == 2:
            base = base[:, None]
    if s == 1.0:
        return base, evaluation_cost(name, s)
    bias = fidelity_bias(name, x)
    if np.ndim(base) == 1 and np.ndim(bias) == 2:
        bias = bias[:, 0] if np.asarray(x).ndim == 2 else bias
    return base + (1.0 - s) * np.reshape(bias, np.shape(base)), evaluation_cost(name, s)


@lru_cache(maxsize=None)
def reference_front(name: str) -> np.ndarray:
    """Frozen nondominated set (internal maximize convention) from a seeded
    dense domain scan; used for generational-distance diagnostics."""
    defn = get_benchmark(name)
    U = _sobol_scan(defn.dim, _REFERENCE_SCAN_N,
                    _SCAN_SEED + 7 + zlib.crc32(name.encode()) % 1000)
    if defn.kind == "multi":
        Y = eval_multi(name, U)
        signs = np.array([1.0 if d == "maximize" else -1.0 for d in defn.directions])
        return pareto_front(Y * signs).values
    lo = np.array([b[0] for b in defn.bounds])
    hi = np.array([b[1] for b in defn.bounds])
    Y = eval_single(name, lo + U * (hi - lo))
    sign = 1.0 if defn.directions[0] == "maximize" else -1.0
    return np.array([[float((sign * Y).max())]])
