"""Seeded simulation of cadlag sample paths with explicit jump bookkeeping.

Randomness comes from numpy's Philox counter-based 64-bit generator keyed
by the seed, so identical (model, n_steps, horizon, seed) always reproduce
a bit-identical path.  Jump times are inserted as dedicated grid points
(never rounded onto the Euler grid); path values use the right-continuous
post-jump convention with the left limits stored in a separate column.

Draw order is fixed and documented: jump count, jump times, jump sizes,
then one Gaussian increment per cell of the jump-refined grid.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "TwoPointLaw",
    "UniformLaw",
    "NormalLaw",
    "BrownianMotion",
    "CompoundPoissonJumps",
    "JumpDiffusion",
    "FiniteVariationPath",
    "SamplePath",
    "simulate",
    "split_jumps",
    "reattach_jumps",
    "realized_qv",
]


# ---------------------------------------------------------------------------
# jump size laws
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TwoPointLaw:
    """Jump size a1 with probability p, else a2."""

    p: float
    a1: float
    a2: float

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise ValueError("two-point law needs p in [0, 1]")

    @property
    def mean(self) -> float:
        return self.p * self.a1 + (1 - self.p) * self.a2

    @property
    def second_moment(self) -> float:
        return self.p * self.a1**2 + (1 - self.p) * self.a2**2

    def sample(self, rng, size):
        return np.where(rng.uniform(size=size) < self.p, self.a1, self.a2)

    def nonnegative(self) -> bool:
        return self.a1 >= 0 and self.a2 >= 0

    def to_dict(self):
        return {"kind": "two_point", "p": self.p, "a1": self.a1, "a2": self.a2}


@dataclass(frozen=True)
class UniformLaw:
    lo: float
    hi: float

    def __post_init__(self):
        if not (self.lo <= self.hi):
            raise ValueError("uniform law needs lo <= hi")

    @property
    def mean(self) -> float:
        return (self.lo + self.hi) / 2

    @property
    def second_moment(self) -> float:
        return (self.lo**2 + self.lo * self.hi + self.hi**2) / 3

    def sample(self, rng, size):
        return rng.uniform(self.lo, self.hi, size=size)

    def nonnegative(self) -> bool:
        return self.lo >= 0

    def to_dict(self):
        return {"kind": "uniform", "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class NormalLaw:
    mean_: float
    std: float

    def __post_init__(self):
        if self.std < 0:
            raise ValueError("normal law needs std >= 0")

    @property
    def mean(self) -> float:
        return self.mean_

    @property
    def second_moment(self) -> float:
        return self.mean_**2 + self.std**2

    def sample(self, rng, size):
        return rng.normal(self.mean_, self.std, size=size)

    def nonnegative(self) -> bool:
        return False

    def to_dict(self):
        return {"kind": "normal", "mean": self.mean_, "std": self.std}


def law_from_dict(d) -> TwoPointLaw | UniformLaw | NormalLaw:
    kind = d["kind"]
    if kind == "two_point":
        return TwoPointLaw(d["p"], d["a1"], d["a2"])
    if kind == "uniform":
        return UniformLaw(d["lo"], d["hi"])
    if kind == "normal":
        return NormalLaw(d["mean"], d["std"])
    raise ValueError(f"unknown jump law kind {kind!r}")


# ---------------------------------------------------------------------------
# path models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BrownianMotion:
    sigma: float = 1.0
    drift: float = 0.0
    x0: float = 0.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")

    @property
    def label(self) -> str:
        return f"bm(sigma={self.sigma},drift={self.drift})"

    def to_dict(self):
        return {"kind": "bm", "sigma": self.sigma, "drift": self.drift, "x0": self.x0}


@dataclass(frozen=True)
class CompoundPoissonJumps:
    rate: float
    law: TwoPointLaw | UniformLaw | NormalLaw
    x0: float = 0.0

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("rate must be >= 0")

    @property
    def label(self) -> str:
        return f"cpj(rate={self.rate})"

    def to_dict(self):
        return {"kind": "cpj", "rate": self.rate, "law": self.law.to_dict(), "x0": self.x0}


@dataclass(frozen=True)
class JumpDiffusion:
    sigma: float
    drift: float
    rate: float
    law: TwoPointLaw | UniformLaw | NormalLaw
    x0: float = 0.0

    def __post_init__(self):
        if self.sigma < 0 or self.rate < 0:
            raise ValueError("sigma and rate must be >= 0")

    @property
    def label(self) -> str:
        return f"jd(sigma={self.sigma},drift={self.drift},rate={self.rate})"

    def to_dict(self):
        return {"kind": "jd", "sigma": self.sigma, "drift": self.drift,
                "rate": self.rate, "law": self.law.to_dict(), "x0": self.x0}


@dataclass(frozen=True)
class FiniteVariationPath:
    """Deterministic piecewise-linear path through (knots_t, knots_x)."""

    knots_t: tuple
    knots_x: tuple

    def __post_init__(self):
        t = np.asarray(self.knots_t, dtype=float)
        if len(t) < 2 or np.any(np.diff(t) <= 0) or t[0] != 0.0:
            raise ValueError("knots_t must start at 0 and increase strictly")
        object.__setattr__(self, "knots_t", tuple(float(v) for v in self.knots_t))
        object.__setattr__(self, "knots_x", tuple(float(v) for v in self.knots_x))

    @property
    def label(self) -> str:
        return "fv"

    def to_dict(self):
        return {"kind": "fv", "knots_t": list(self.knots_t), "knots_x": list(self.knots_x)}


def model_from_dict(d):
    kind = d["kind"]
    if kind == "bm":
        return BrownianMotion(d.get("sigma", 1.0), d.get("drift", 0.0), d.get("x0", 0.0))
    if kind == "cpj":
        return CompoundPoissonJumps(d["rate"], law_from_dict(d["law"]), d.get("x0", 0.0))
    if kind == "jd":
        return JumpDiffusion(d.get("sigma", 1.0), d.get("drift", 0.0), d["rate"],
                             law_from_dict(d["law"]), d.get("x0", 0.0))
    if kind == "fv":
        return FiniteVariationPath(tuple(d["knots_t"]), tuple(d["knots_x"]))
    raise ValueError(f"unknown path model kind {kind!r}")


# ---------------------------------------------------------------------------
# sample paths
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SamplePath:
    """A discretized trajectory with explicit jump marks.

    ``values`` holds the post-jump (right-continuous) state at each grid
    time; ``pre_values`` differs from ``values`` only at jump indices,
    where it holds the left limit.  ``readd_correction`` carries the
    compensated-arithmetic residues produced by :func:`split_jumps` so that
    :func:`reattach_jumps` is bit-exact; it is ``None`` for simulated and
    imported paths.
    """

    times: np.ndarray
    values: np.ndarray
    pre_values: np.ndarray
    jump_indices: np.ndarray
    jump_sizes: np.ndarray
    horizon: float
    model: Optional[object] = None
    seed: Optional[int] = None
    n_steps: Optional[int] = None
    readd_correction: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        times = np.ascontiguousarray(self.times, dtype=float)
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        if not (np.all(np.isfinite(self.values)) and np.all(np.isfinite(self.pre_values))):
            raise ValueError("path values must be finite")
        for name in ("times", "values", "pre_values", "jump_indices", "jump_sizes"):
            arr = np.ascontiguousarray(getattr(self, name))
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n_points(self) -> int:
        return len(self.times)

    @property
    def jump_times(self) -> np.ndarray:
        return self.times[self.jump_indices]

    def is_jump_index(self) -> np.ndarray:
        mask = np.zeros(self.n_points, dtype=bool)
        mask[self.jump_indices] = True
        return mask

    def to_csv(self, path) -> None:
        """Columns: time, value, pre_jump_value, jump_size."""
        sizes = np.zeros(self.n_points)
        sizes[self.jump_indices] = self.jump_sizes
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time", "value", "pre_jump_value", "jump_size"])
            for row in zip(self.times, self.values, self.pre_values, sizes):
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "SamplePath":
        times, values, pre, sizes = [], [], [], []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:4] != ["time", "value", "pre_jump_value", "jump_size"]:
                raise ValueError(f"unexpected CSV header {header!r}")
            for row in reader:
                times.append(float(row[0]))
                values.append(float(row[1]))
                pre.append(float(row[2]))
                sizes.append(float(row[3]))
        sizes = np.asarray(sizes)
        jump_idx = np.nonzero(sizes != 0.0)[0]
        return cls(
            times=np.asarray(times), values=np.asarray(values),
            pre_values=np.asarray(pre), jump_indices=jump_idx,
            jump_sizes=sizes[jump_idx], horizon=float(times[-1]),
        )


def simulate(model, n_steps: int, T: float, seed: int) -> SamplePath:
    """Simulate a sample path on a uniform n_steps grid over [0, T].

    Poisson jump times are superposed as extra grid points carrying exact
    pre/post values; Gaussian increments are drawn per cell of the refined
    grid so the diffusion law is exact at the inserted times too.
    """
    if n_steps < 1 or T <= 0:
        raise ValueError("need n_steps >= 1 and T > 0")
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    base = np.linspace(0.0, T, n_steps + 1)

    if isinstance(model, FiniteVariationPath):
        if model.knots_t[-1] < T:
            raise ValueError("finite-variation knots must cover the horizon")
        values = np.interp(base, model.knots_t, model.knots_x)
        return SamplePath(
            times=base, values=values, pre_values=values.copy(),
            jump_indices=np.array([], dtype=np.int64), jump_sizes=np.array([]),
            horizon=T, model=model, seed=seed, n_steps=n_steps,
        )

    if isinstance(model, BrownianMotion):
        rate, law = 0.0, None
        sigma, drift, x0 = model.sigma, model.drift, model.x0
    elif isinstance(model, CompoundPoissonJumps):
        rate, law = model.rate, model.law
        sigma, drift, x0 = 0.0, 0.0, model.x0
    elif isinstance(model, JumpDiffusion):
        rate, law = model.rate, model.law
        sigma, drift, x0 = model.sigma, model.drift, model.x0
    else:
        raise ValueError(f"unknown path model {model!r}")

    # fixed draw order: jump count, times, sizes, then diffusion increments
    if rate > 0:
        n_jumps = int(rng.poisson(rate * T))
        jump_times = np.sort(rng.uniform(0.0, T, size=n_jumps))
        jump_sizes = np.asarray(law.sample(rng, n_jumps), dtype=float)
        keep = ~np.isin(jump_times, base)  # exact grid collisions (measure zero)
        jump_times, jump_sizes = jump_times[keep], jump_sizes[keep]
        if len(jump_times) > 1:  # coincident jump times (measure zero)
            keep = np.concatenate(([True], np.diff(jump_times) > 0))
            jump_times, jump_sizes = jump_times[keep], jump_sizes[keep]
    else:
        jump_times = np.array([])
        jump_sizes = np.array([])

    times = np.sort(np.concatenate([base, jump_times]))
    jump_idx = np.searchsorted(times, jump_times)
    dt = np.diff(times)
    if sigma > 0 or drift != 0.0:
        z = rng.normal(size=len(dt))
        incr = drift * dt + sigma * np.sqrt(dt) * z
    else:
        incr = np.zeros(len(dt))

    cont = x0 + np.concatenate(([0.0], np.cumsum(incr)))
    offsets = np.zeros(len(times))
    if len(jump_idx):
        contrib = np.zeros(len(times))
        contrib[jump_idx] = jump_sizes
        offsets = np.cumsum(contrib)
    values = cont + offsets
    pre_values = values.copy()
    if len(jump_idx):
        before = offsets[jump_idx] - jump_sizes
        pre_values[jump_idx] = cont[jump_idx] + before
        # post-jump state is defined as left limit plus jump, exactly
        values[jump_idx] = pre_values[jump_idx] + jump_sizes

    return SamplePath(
        times=times, values=values, pre_values=pre_values,
        jump_indices=jump_idx.astype(np.int64), jump_sizes=jump_sizes,
        horizon=T, model=model, seed=seed, n_steps=n_steps,
    )


# ---------------------------------------------------------------------------
# jump splitting
# ---------------------------------------------------------------------------


def _two_sum(a: np.ndarray, b: np.ndarray):
    """Error-free transform: returns (s, e) with a + b = s + e exactly."""
    s = a + b
    bv = s - a
    e = (a - (s - bv)) + (b - bv)
    return s, e


def split_jumps(path: SamplePath, a: float):
    """Remove jumps larger than ``a`` in absolute size.

    Returns the continuous(-er) path with those displacements subtracted
    plus the ordered list of removed ``(time, size)`` pairs.  The returned
    path carries compensation residues, so :func:`reattach_jumps` restores
    the original values bit-exactly.
    """
    if a <= 0:
        raise ValueError("jump threshold a must be > 0")
    big = np.abs(path.jump_sizes) > a
    if not np.any(big):
        return path, []

    n = path.n_points
    removed_idx = path.jump_indices[big]
    removed_sizes = path.jump_sizes[big]
    contrib = np.zeros(n)
    contrib[removed_idx] = removed_sizes
    cum = np.cumsum(contrib)
    # the left limit at a removed jump carries the offset without that jump
    cum_pre = cum.copy()
    cum_pre[removed_idx] = cum[removed_idx] - removed_sizes

    values0, err_v = _two_sum(path.values, -cum)
    pre0, err_p = _two_sum(path.pre_values, -cum_pre)

    stripped = SamplePath(
        times=path.times.copy(), values=values0, pre_values=pre0,
        jump_indices=path.jump_indices[~big].copy(),
        jump_sizes=path.jump_sizes[~big].copy(),
        horizon=path.horizon, model=path.model, seed=path.seed,
        n_steps=path.n_steps,
        readd_correction=np.stack([err_v, err_p]),
    )
    removed = [(float(path.times[i]), float(s))
               for i, s in zip(removed_idx, removed_sizes)]
    return stripped, removed


def reattach_jumps(path: SamplePath, removed) -> SamplePath:
    """Inverse of :func:`split_jumps`; bit-exact when the correction is present."""
    if not removed:
        return path
    times = np.asarray([t for t, _ in removed])
    sizes = np.asarray([s for _, s in removed])
    idx = np.searchsorted(path.times, times)
    if not np.array_equal(path.times[idx], times):
        raise ValueError("removed jump times are not grid points of the path")

    n = path.n_points
    contrib = np.zeros(n)
    contrib[idx] = sizes
    cum = np.cumsum(contrib)
    cum_pre = cum.copy()
    cum_pre[idx] = cum[idx] - sizes  # left limits exclude the jump itself

    if path.readd_correction is not None:
        err_v, err_p = path.readd_correction
        s, e2 = _two_sum(path.values, cum)
        values = s + (e2 + err_v)
        s, e2 = _two_sum(path.pre_values, cum_pre)
        pre = s + (e2 + err_p)
    else:
        values = path.values + cum
        pre = path.pre_values + cum_pre

    all_idx = np.concatenate([path.jump_indices, idx])
    all_sizes = np.concatenate([path.jump_sizes, sizes])
    order = np.argsort(all_idx)
    return SamplePath(
        times=path.times.copy(), values=values, pre_values=pre,
        jump_indices=all_idx[order], jump_sizes=all_sizes[order],
        horizon=path.horizon, model=path.model, seed=path.seed,
        n_steps=path.n_steps,
    )


def realized_qv(path: SamplePath, grid) -> float:
    """Sum of squared raw increments of the path over the grid indices."""
    idx = np.asarray(grid.indices if hasattr(grid, "indices") else grid, dtype=np.int64)
    x = path.values[idx]
    return float(np.sum((x[1:] - x[:-1]) ** 2))
