"""Closed-form predictable compensators and their Monte Carlo verification.

For the parametric increasing processes in the catalog the compensator is
linear in time: rate * t for a Poisson counter, rate * E[J] * t for a
compound Poisson sum of nonnegative jumps, and sigma^2 t + rate * E[J^2] t
for the quadratic variation of a jump diffusion.  The verification
estimates E int Y dA and E int Y dA^p with paired sampling, so the verdict
compares the mean difference against three standard errors of the paired
difference.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import UnsupportedModelError
from .paths import (
    BrownianMotion,
    CompoundPoissonJumps,
    JumpDiffusion,
    TwoPointLaw,
    UniformLaw,
)

__all__ = [
    "PoissonCounting",
    "CompoundPoissonIncreasing",
    "PathQV",
    "DeterministicIncreasing",
    "ConstantY",
    "StepY",
    "StateY",
    "compensator_closed_form",
    "verify_compensator",
    "martingale_check",
    "CompensatorVerdict",
    "catalog_models",
    "catalog_test_processes",
]


# ---------------------------------------------------------------------------
# increasing process models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PoissonCounting:
    rate: float

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("rate must be > 0")

    label = property(lambda self: f"poisson_counting(rate={self.rate})")


@dataclass(frozen=True)
class CompoundPoissonIncreasing:
    rate: float
    law: object

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("rate must be > 0")
        if not self.law.nonnegative():
            raise ValueError("increasing process needs a jump law supported on [0, inf)")

    label = property(lambda self: f"compound_poisson_increasing(rate={self.rate})")


@dataclass(frozen=True)
class PathQV:
    """Quadratic variation of a diffusion-with-jumps path model."""

    model: object

    def __post_init__(self):
        if not isinstance(self.model, (BrownianMotion, JumpDiffusion, CompoundPoissonJumps)):
            raise ValueError("PathQV supports BM, jump diffusion, or compound Poisson models")

    label = property(lambda self: f"path_qv({self.model.label})")

    @property
    def sigma(self) -> float:
        return getattr(self.model, "sigma", 0.0)

    @property
    def rate(self) -> float:
        return getattr(self.model, "rate", 0.0)

    @property
    def law(self):
        return getattr(self.model, "law", None)


@dataclass(frozen=True)
class DeterministicIncreasing:
    slope: float = 1.0

    def __post_init__(self):
        if self.slope < 0:
            raise ValueError("slope must be >= 0")

    label = property(lambda self: f"deterministic(slope={self.slope})")


def compensator_closed_form(model) -> Callable[[np.ndarray], np.ndarray]:
    """The predictable compensator t -> A^p_t of a catalog model."""
    if isinstance(model, PoissonCounting):
        coeff = model.rate
    elif isinstance(model, CompoundPoissonIncreasing):
        coeff = model.rate * model.law.mean
    elif isinstance(model, PathQV):
        coeff = model.sigma**2
        if model.law is not None:
            coeff += model.rate * model.law.second_moment
    elif isinstance(model, DeterministicIncreasing):
        coeff = model.slope
    else:
        raise UnsupportedModelError(f"no closed-form compensator for {model!r}")
    return lambda t: coeff * np.asarray(t, dtype=float)


# ---------------------------------------------------------------------------
# predictable test processes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantY:
    c: float = 1.0

    label = property(lambda self: f"const({self.c})")


@dataclass(frozen=True)
class StepY:
    """Y_t = 1{t <= tau} with deterministic tau."""

    tau: float

    label = property(lambda self: f"step(tau={self.tau})")


@dataclass(frozen=True)
class StateY:
    """Y_s = h(X_{s-}) with bounded h from a small named catalog."""

    h_name: str

    _FUNCS = {
        "cos": np.cos,
        "sign": lambda x: np.where(np.asarray(x, dtype=float) >= 0, 1.0, -1.0),
        "tanh": np.tanh,
    }

    def __post_init__(self):
        if self.h_name not in self._FUNCS:
            raise ValueError(f"unknown bounded state function {self.h_name!r}")

    @property
    def h(self):
        return self._FUNCS[self.h_name]

    label = property(lambda self: f"state({self.h_name})")


def catalog_models():
    return [
        PoissonCounting(rate=3.0),
        CompoundPoissonIncreasing(rate=2.0, law=UniformLaw(0.0, 1.0)),
        CompoundPoissonIncreasing(rate=1.5, law=TwoPointLaw(0.4, 0.5, 2.0)),
        PathQV(BrownianMotion(sigma=1.0)),
        PathQV(JumpDiffusion(sigma=0.8, drift=0.1, rate=1.0, law=UniformLaw(-1.0, 1.0))),
    ]


def catalog_test_processes(T: float = 1.0):
    return [ConstantY(1.0), ConstantY(0.0), StepY(tau=T / 2), StateY("cos"), StateY("sign")]


# ---------------------------------------------------------------------------
# paired Monte Carlo for E int Y dA vs E int Y dA^p
# ---------------------------------------------------------------------------


def _poisson_events(rng, rate, T, n_paths):
    """Ragged event times/sizes per path, flattened with path ids, time-sorted."""
    counts = rng.poisson(rate * T, size=n_paths)
    total = int(np.sum(counts))
    path_id = np.repeat(np.arange(n_paths), counts)
    times = rng.uniform(0.0, T, size=total)
    order = np.lexsort((times, path_id))
    return counts, path_id[order], times[order]


def _segment_integral(h, counts, path_id, times, levels_before, sizes, T):
    """Per-path exact integral of h(level process) dt for a pure-jump state.

    ``levels_before[k]`` is the state just before event k; the state is
    piecewise constant between events.
    """
    n_paths = len(counts)
    out = np.zeros(n_paths)
    starts = np.concatenate(([0], np.cumsum(counts)))
    # initial segment: state 0 from 0 to the first event (or T)
    first_t = np.full(n_paths, T)
    has = counts > 0
    first_t[has] = times[starts[:-1][has]]
    out += np.asarray(h(np.zeros(n_paths)), dtype=float) * first_t
    total = len(times)
    if total:
        ends = np.cumsum(counts) - 1
        is_last = np.zeros(total, dtype=bool)
        is_last[ends[has]] = True
        next_t = np.empty(total)
        next_t[:-1] = times[1:]
        next_t[-1] = T
        next_t[is_last] = T
        level_after = levels_before + sizes
        np.add.at(out, path_id, np.asarray(h(level_after), dtype=float) * (next_t - times))
    return out


def _ragged_prefix_before(counts, values):
    """Exclusive prefix sums of values within each path segment."""
    if len(values) == 0:
        return values
    cum = np.cumsum(values)
    starts = np.concatenate(([0], np.cumsum(counts)))[:-1]
    seg_start_cum = np.concatenate(([0.0], cum))[starts]
    seg_id = np.repeat(np.arange(len(counts)), counts)
    return cum - values - seg_start_cum[seg_id]


@dataclass(frozen=True)
class CompensatorVerdict:
    model_label: str
    y_label: str
    lhs_mean: float
    rhs_mean: float
    diff: float
    se_combined: float
    n_paths: int
    passed: bool

    def to_json_dict(self):
        return {
            "model": self.model_label, "Y": self.y_label,
            "lhs_mean": self.lhs_mean, "rhs_mean": self.rhs_mean,
            "diff": self.diff, "se_combined": self.se_combined,
            "n_paths": self.n_paths, "passed": self.passed,
        }

    def to_json(self):
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2)


def _verdict(model, y, lhs, rhs):
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    diff = lhs - rhs
    n = len(diff)
    se = float(np.std(diff, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    mean_diff = float(np.mean(diff))
    passed = abs(mean_diff) <= 3.0 * se + 1e-12
    return CompensatorVerdict(
        model_label=model.label, y_label=y.label,
        lhs_mean=float(np.mean(lhs)), rhs_mean=float(np.mean(rhs)),
        diff=mean_diff, se_combined=se, n_paths=n, passed=passed,
    )


def verify_compensator(
    model, y, n_paths: int = 10_000, T: float = 1.0, seed: int = 0,
    n_steps: int = 512, rate_factor: float = 1.0,
) -> CompensatorVerdict:
    """Monte Carlo check of E int Y dA == E int Y dA^p for a catalog pair.

    ``rate_factor`` scales the rate used in the closed-form side only; a
    value != 1 is the deliberate negative control (the check must fail).
    """
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))

    if isinstance(model, DeterministicIncreasing):
        if isinstance(y, ConstantY):
            val = y.c * model.slope * T
        elif isinstance(y, StepY):
            val = model.slope * min(y.tau, T)
        else:
            ts = np.linspace(0, T, n_steps + 1)
            state = model.slope * ts[:-1]
            val = float(np.sum(np.asarray(y.h(state), dtype=float) * model.slope * np.diff(ts)))
        lhs = np.full(2, val)
        rhs = np.full(2, rate_factor * val)
        return _verdict(model, y, lhs, rhs)

    if isinstance(model, (PoissonCounting, CompoundPoissonIncreasing)):
        rate = model.rate
        counts, path_id, times = _poisson_events(rng, rate, T, n_paths)
        if isinstance(model, PoissonCounting):
            sizes = np.ones(len(times))
            mean_size = 1.0
        else:
            sizes = np.asarray(model.law.sample(rng, len(times)), dtype=float)
            mean_size = model.law.mean
        comp_coeff = rate_factor * rate * mean_size

        lhs = np.zeros(n_paths)
        if isinstance(y, ConstantY):
            np.add.at(lhs, path_id, y.c * sizes)
            rhs = np.full(n_paths, y.c * comp_coeff * T)
        elif isinstance(y, StepY):
            sel = times <= y.tau
            np.add.at(lhs, path_id[sel], sizes[sel])
            rhs = np.full(n_paths, comp_coeff * min(y.tau, T))
        elif isinstance(y, StateY):
            before = _ragged_prefix_before(counts, sizes)
            np.add.at(lhs, path_id, np.asarray(y.h(before), dtype=float) * sizes)
            integral = _segment_integral(y.h, counts, path_id, times, before, sizes, T)
            rhs = comp_coeff * integral
        else:
            raise ValueError(f"unknown test process {y!r}")
        return _verdict(model, y, lhs, rhs)

    if isinstance(model, PathQV):
        sigma = model.sigma
        rate = model.rate
        law = model.law
        ts = np.linspace(0.0, T, n_steps + 1)
        dt = T / n_steps
        x = np.zeros((n_paths, n_steps + 1))
        if sigma > 0 or getattr(model.model, "drift", 0.0) != 0.0:
            drift = getattr(model.model, "drift", 0.0)
            incr = drift * dt + sigma * np.sqrt(dt) * rng.normal(size=(n_paths, n_steps))
            x[:, 1:] = np.cumsum(incr, axis=1)
        jump_lhs = np.zeros(n_paths)
        if rate > 0 and law is not None:
            counts, path_id, times = _poisson_events(rng, rate, T, n_paths)
            sizes = np.asarray(law.sample(rng, len(times)), dtype=float)
            # the state driving Y is the continuous component, read at the
            # left edge of the grid cell holding the jump; it is adapted and
            # left-continuous, and both sides below use the same state
            cell = np.minimum((times / dt).astype(np.int64), n_steps - 1)
            state_before = x[path_id, cell]
            np.add.at(jump_lhs, path_id, np.asarray(_h_of(y, state_before, times), dtype=float) * sizes**2)
        hvals = _h_series(y, x[:, :-1], ts[:-1])
        quad = np.sum(hvals, axis=1) * dt
        lhs = sigma**2 * quad + jump_lhs
        jump_coeff = rate * law.second_moment if (rate > 0 and law is not None) else 0.0
        rhs = rate_factor * (sigma**2 + jump_coeff) * quad
        return _verdict(model, y, lhs, rhs)

    raise UnsupportedModelError(f"verify_compensator does not support {model!r}")


def _h_of(y, state, times):
    if isinstance(y, ConstantY):
        return np.full(len(times), y.c)
    if isinstance(y, StepY):
        return (times <= y.tau).astype(float)
    if isinstance(y, StateY):
        return y.h(state)
    raise ValueError(f"unknown test process {y!r}")


def _h_series(y, states, ts):
    if isinstance(y, ConstantY):
        return np.full(states.shape, y.c)
    if isinstance(y, StepY):
        return np.broadcast_to((ts <= y.tau).astype(float), states.shape)
    if isinstance(y, StateY):
        return np.asarray(y.h(states), dtype=float)
    raise ValueError(f"unknown test process {y!r}")


# ---------------------------------------------------------------------------
# martingale increments of A - A^p
# ---------------------------------------------------------------------------


def martingale_check(
    model, n_paths: int = 10_000, checkpoints=(0.0, 0.5, 1.0), seed: int = 0,
    rate_factor: float = 1.0,
) -> dict:
    """Sample-mean increments of A - A^p between checkpoints, graded at 3 SE.

    ``rate_factor`` != 1 corrupts the closed form (negative control).
    """
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    cps = [float(t) for t in checkpoints]
    if any(cps[i + 1] <= cps[i] for i in range(len(cps) - 1)) or cps[0] < 0:
        raise ValueError("checkpoints must be increasing and nonnegative")

    results = []
    all_pass = True
    for s, t in zip(cps[:-1], cps[1:]):
        span = t - s
        if isinstance(model, PoissonCounting):
            incr = rng.poisson(model.rate * span, size=n_paths).astype(float)
            comp = rate_factor * model.rate * span
        elif isinstance(model, CompoundPoissonIncreasing):
            counts = rng.poisson(model.rate * span, size=n_paths)
            sizes = np.asarray(model.law.sample(rng, int(np.sum(counts))), dtype=float)
            incr = np.zeros(n_paths)
            np.add.at(incr, np.repeat(np.arange(n_paths), counts), sizes)
            comp = rate_factor * model.rate * model.law.mean * span
        elif isinstance(model, PathQV):
            sigma, rate, law = model.sigma, model.rate, model.law
            incr = np.full(n_paths, sigma**2 * span)
            jump_coeff = 0.0
            if rate > 0 and law is not None:
                counts = rng.poisson(rate * span, size=n_paths)
                sizes = np.asarray(law.sample(rng, int(np.sum(counts))), dtype=float)
                np.add.at(incr, np.repeat(np.arange(n_paths), counts), sizes**2)
                jump_coeff = rate * law.second_moment
            comp = rate_factor * (sigma**2 + jump_coeff) * span
        elif isinstance(model, DeterministicIncreasing):
            incr = np.full(n_paths, model.slope * span)
            comp = rate_factor * model.slope * span
        else:
            raise UnsupportedModelError(f"martingale_check does not support {model!r}")

        centered = incr - comp
        se = float(np.std(centered, ddof=1) / np.sqrt(n_paths)) if n_paths > 1 else 0.0
        mean = float(np.mean(centered))
        ok = abs(mean) <= 3.0 * se + 1e-12
        all_pass = all_pass and ok
        results.append({"s": s, "t": t, "mean_increment": mean, "se": se, "passed": ok})
    return {"model": model.label, "increments": results, "passed": all_pass}
