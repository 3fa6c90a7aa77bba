"""Pathwise sums of two-index functionals along refining stopping-time grids.

Grids come in two families: dyadic time grids (refined with the path's jump
times) and first-passage grids over an eps-spaced value lattice, which are
stopping times by construction.  Convergence in probability is certified
empirically through tail frequencies across refinement levels and across
grid families.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import OutsideDomainError, ResolutionExhaustedError
from .functional import TwoIndexFn
from .paths import SamplePath, simulate

__all__ = [
    "RiemannGrid",
    "dyadic_grid",
    "hitting_grid",
    "build_grid",
    "PathFunctional",
    "pathwise_sum",
    "stopped_functional",
    "squared_increment_ratio",
    "boundedness_scan",
    "ConvergenceDiagnostic",
    "limit_in_probability",
]


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RiemannGrid:
    """Increasing grid-point indices into a path, from time 0 to the horizon."""

    path: SamplePath
    indices: np.ndarray
    scheme: str
    param: float
    mesh: float

    def __post_init__(self):
        idx = np.ascontiguousarray(self.indices, dtype=np.int64)
        if idx[0] != 0 or idx[-1] != self.path.n_points - 1:
            raise ValueError("grid must start at index 0 and end at the horizon")
        if np.any(np.diff(idx) <= 0):
            raise ValueError("grid indices must be strictly increasing")
        idx.flags.writeable = False
        object.__setattr__(self, "indices", idx)

    @property
    def times(self) -> np.ndarray:
        return self.path.times[self.indices]

    def __len__(self) -> int:
        return len(self.indices)


def dyadic_grid(path: SamplePath, level: int) -> RiemannGrid:
    """Indices nearest to the dyadic times j T / 2^level, plus all jump times."""
    if level < 0:
        raise ValueError("level must be >= 0")
    targets = path.horizon * np.arange(2**level + 1) / 2**level
    pos = np.searchsorted(path.times, targets)
    pos = np.clip(pos, 0, path.n_points - 1)
    left = np.clip(pos - 1, 0, path.n_points - 1)
    pick_left = np.abs(path.times[left] - targets) < np.abs(path.times[pos] - targets)
    idx = np.where(pick_left, left, pos)
    idx = np.union1d(idx, path.jump_indices)
    idx = np.union1d(idx, [0, path.n_points - 1])
    mesh = float(np.max(np.diff(path.times[idx])))
    return RiemannGrid(path=path, indices=idx, scheme="dyadic", param=float(level), mesh=mesh)


def hitting_grid(path: SamplePath, eps: float) -> RiemannGrid:
    """First-passage indices of the path across an eps-spaced value lattice.

    The lattice is anchored at the starting value; each grid point is the
    first index where the path has moved at least eps from the previous
    lattice anchor, which makes the sequence a family of stopping times.
    Raises :class:`ResolutionExhaustedError` when eps is below twice the
    median absolute continuous move of the path.
    """
    if eps <= 0:
        raise ValueError("eps must be > 0")
    x = path.values
    moves = np.abs(np.diff(x))
    if len(path.jump_indices):
        cont = np.abs(path.pre_values[1:] - x[:-1])
        moves = cont
    resolution = 2.0 * float(np.median(moves)) if len(moves) else 0.0
    if eps < resolution:
        raise ResolutionExhaustedError(
            f"eps={eps} is below the path resolution heuristic {resolution:.3g}"
        )

    n = len(x)
    out = [0]
    anchor = x[0]
    i = 0
    block = 256
    while i < n - 1:
        j = i + 1
        found = -1
        width = block
        while j < n:
            hi = min(n, j + width)
            seg = np.abs(x[j:hi] - anchor)
            hit = np.nonzero(seg >= eps)[0]
            if len(hit):
                found = j + int(hit[0])
                break
            j = hi
            width *= 2
        if found < 0:
            break
        out.append(found)
        anchor = anchor + eps * np.trunc((x[found] - anchor) / eps)
        i = found
    if out[-1] != n - 1:
        out.append(n - 1)
    idx = np.asarray(out, dtype=np.int64)
    mesh = float(np.max(np.diff(path.times[idx])))
    return RiemannGrid(path=path, indices=idx, scheme="hitting", param=float(eps), mesh=mesh)


def build_grid(path: SamplePath, scheme: str, param) -> RiemannGrid:
    if scheme == "dyadic":
        return dyadic_grid(path, int(param))
    if scheme == "hitting":
        return hitting_grid(path, float(param))
    raise ValueError(f"unknown grid scheme {scheme!r}")


# ---------------------------------------------------------------------------
# path functionals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PathFunctional:
    """A two-index functional composed with a path: F(s, t) = base(X_s, X_t).

    With ``left_limits`` set, the first slot uses the left limit X_{s-}
    when s is a jump time.  ``stop_index`` (set via
    :func:`stopped_functional`) clamps both time slots, realizing
    F(u ^ sigma, v ^ sigma).
    """

    path: SamplePath
    base: TwoIndexFn
    left_limits: bool = False
    stop_index: Optional[int] = None
    label: str = ""

    def pair_values(self, i, j) -> np.ndarray:
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        if self.stop_index is not None:
            i = np.minimum(i, self.stop_index)
            j = np.minimum(j, self.stop_index)
        left = self.path.values[i]
        if self.left_limits and len(self.path.jump_indices):
            is_jump = self.path.is_jump_index()[i]
            left = np.where(is_jump, self.path.pre_values[i], left)
        return np.asarray(self.base(left, self.path.values[j]), dtype=float)


def pathwise_sum(pf: PathFunctional, grid: RiemannGrid) -> float:
    """Sum of F over consecutive grid times."""
    if grid.path is not pf.path:
        raise ValueError("grid belongs to a different path")
    idx = grid.indices
    return float(np.sum(pf.pair_values(idx[:-1], idx[1:])))


def pathwise_series(pf: PathFunctional, grid: RiemannGrid) -> np.ndarray:
    """Cumulative sums of F along the grid (0 at time 0)."""
    idx = grid.indices
    vals = pf.pair_values(idx[:-1], idx[1:])
    return np.concatenate(([0.0], np.cumsum(vals)))


def stopped_functional(pf: PathFunctional, sigma: float) -> PathFunctional:
    """Clamp both time slots at sigma (snapped to the last grid time <= sigma)."""
    if not (0.0 <= sigma <= pf.path.horizon):
        raise ValueError("sigma must lie within [0, horizon]")
    cap = int(np.searchsorted(pf.path.times, sigma, side="right") - 1)
    return replace(pf, stop_index=cap)


def squared_increment_ratio(pf: PathFunctional, s: float, t: float) -> float:
    """F(s, t) / (X_t - X_s)^2 for a pair of grid times with X_s != X_t."""
    i = int(np.searchsorted(pf.path.times, s))
    j = int(np.searchsorted(pf.path.times, t))
    if pf.path.times[i] != s or pf.path.times[j] != t:
        raise ValueError("s and t must be grid times of the path")
    xs, xt = pf.path.values[i], pf.path.values[j]
    if xs == xt:
        raise OutsideDomainError("pair has X_s == X_t; the ratio is undefined there")
    return float(pf.pair_values(i, j)) / (xt - xs) ** 2


# ---------------------------------------------------------------------------
# boundedness scan of the normalized ratio
# ---------------------------------------------------------------------------


def _ratio_extrema(pf: PathFunctional, i: np.ndarray, j: np.ndarray, min_sq_move: float):
    xs = pf.path.values[i]
    xt = pf.path.values[j]
    keep = (xt - xs) ** 2 > min_sq_move
    if not np.any(keep):
        return None
    vals = pf.pair_values(i[keep], j[keep]) / (xt[keep] - xs[keep]) ** 2
    return float(np.min(vals)), float(np.max(vals))


def boundedness_scan(
    base: TwoIndexFn,
    paths: Sequence[SamplePath],
    bound_type: str = "bounded",
    left_limits: bool = False,
    n_random_pairs: int = 20000,
    seed: int = 0,
    growth_tol: float = 2.0,
    min_sq_move: float = 1e-12,
):
    """Scan F(s, t) / (X_t - X_s)^2 over sampled grid pairs of many paths.

    Adjacent pairs are scanned at geometrically coarsened strides plus a
    random sample of non-adjacent pairs; the bound flag requires the
    extremum to stay stable as the stride (hence the pair separation)
    shrinks.  ``bound_type`` chooses sup-|ratio| stability ("bounded") or
    stability of the lower tail ("lower_bounded").  Pairs with squared
    move below ``min_sq_move`` are skipped: there the ratio amplifies
    cancellation roundoff like ulp / (X_t - X_s)^2.
    """
    if bound_type not in ("bounded", "lower_bounded"):
        raise ValueError("bound_type must be 'bounded' or 'lower_bounded'")
    if not paths:
        raise ValueError("need at least one path")
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    strides = (8, 4, 2, 1)
    sup_abs = {s: 0.0 for s in strides}
    inf_val = {s: np.inf for s in strides}
    for path in paths:
        pf = PathFunctional(path=path, base=base, left_limits=left_limits)
        n = path.n_points
        for s in strides:
            i = np.arange(0, n - s, s, dtype=np.int64)
            ext = _ratio_extrema(pf, i, i + s, min_sq_move)
            if ext is not None:
                inf_val[s] = min(inf_val[s], ext[0])
                sup_abs[s] = max(sup_abs[s], abs(ext[0]), abs(ext[1]))
        i = rng.integers(0, n - 1, size=n_random_pairs)
        j = rng.integers(1, n, size=n_random_pairs)
        i, j = np.minimum(i, j - 1), np.maximum(i + 1, j)
        ext = _ratio_extrema(pf, i.astype(np.int64), j.astype(np.int64), min_sq_move)
        if ext is not None:
            inf_val[1] = min(inf_val[1], ext[0])
            sup_abs[1] = max(sup_abs[1], abs(ext[0]), abs(ext[1]))

    coarse, fine = strides[0], strides[-1]
    if bound_type == "bounded":
        flag = sup_abs[fine] <= growth_tol * sup_abs[coarse] + 1e-9
        return sup_abs[fine], bool(flag)
    flag = inf_val[fine] >= growth_tol * min(inf_val[coarse], 0.0) - 1e-9
    return inf_val[fine], bool(flag)


# ---------------------------------------------------------------------------
# convergence in probability
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceDiagnostic:
    """Empirical certificate for a limit in probability along refining grids.

    ``estimates[label]`` is an (n_paths, n_levels) array of pathwise sums;
    ``tail_probs[label][k]`` is the empirical frequency of
    |S_k - S_{k+1}| > eps.  The verdict requires the final per-scheme tail
    frequency and every cross-scheme discrepancy frequency (at the finest
    levels) to fall below delta.
    """

    scheme_params: dict
    estimates: dict
    tail_probs: dict
    cross_tail: dict
    eps: float
    delta: float
    verdict: bool

    def to_json_dict(self):
        return {
            "scheme_params": self.scheme_params,
            "estimates": {k: np.asarray(v).tolist() for k, v in self.estimates.items()},
            "tail_probs": self.tail_probs,
            "cross_tail": self.cross_tail,
            "eps": self.eps,
            "delta": self.delta,
            "verdict": self.verdict,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2)

    def trace_csv(self, fh) -> None:
        fh.write("scheme,path,level_ordinal,param,estimate\n")
        for label, arr in sorted(self.estimates.items()):
            params = self.scheme_params[label]
            for p in range(arr.shape[0]):
                for lv in range(arr.shape[1]):
                    fh.write(f"{label},{p},{lv},{params[lv]},{arr[p, lv]!r}\n")


def limit_in_probability(
    base: TwoIndexFn | Callable[[SamplePath], PathFunctional],
    model,
    schemes: Sequence[dict],
    n_paths: int,
    eps: float = 0.05,
    delta: float = 0.05,
    n_steps: int = 4096,
    T: float = 1.0,
    base_seed: int = 0,
    left_limits: bool = False,
) -> ConvergenceDiagnostic:
    """Monte Carlo test that pathwise sums converge and are grid-independent.

    ``schemes`` is a list of {"scheme": name, "params": [...]} with params
    ordered coarse to fine.  At least two schemes are required, since
    independence of the intervening grid family is part of the contract.
    """
    if len(schemes) < 2:
        raise ValueError("need at least two grid schemes to test independence")
    labels = []
    estimates = {}
    for spec in schemes:
        label = spec["scheme"]
        labels.append(label)
        estimates[label] = np.zeros((n_paths, len(spec["params"])))

    for p in range(n_paths):
        path = simulate(model, n_steps=n_steps, T=T, seed=base_seed + p)
        pf = (
            base(path)
            if callable(base) and not isinstance(base, TwoIndexFn)
            else PathFunctional(path=path, base=base, left_limits=left_limits)
        )
        for spec in schemes:
            for lv, param in enumerate(spec["params"]):
                grid = build_grid(path, spec["scheme"], param)
                estimates[spec["scheme"]][p, lv] = pathwise_sum(pf, grid)

    tail_probs = {}
    for spec in schemes:
        arr = estimates[spec["scheme"]]
        tails = [
            float(np.mean(np.abs(arr[:, k] - arr[:, k + 1]) > eps))
            for k in range(arr.shape[1] - 1)
        ]
        tail_probs[spec["scheme"]] = tails

    cross_tail = {}
    ok_cross = True
    for i in range(len(labels)):
        for j in range(i + 1, len(labels)):
            a = estimates[labels[i]][:, -1]
            b = estimates[labels[j]][:, -1]
            frac = float(np.mean(np.abs(a - b) > eps))
            cross_tail[f"{labels[i]}|{labels[j]}"] = frac
            ok_cross = ok_cross and frac <= delta

    ok_scheme = all(
        (not tails) or tails[-1] <= delta for tails in tail_probs.values()
    )
    return ConvergenceDiagnostic(
        scheme_params={s["scheme"]: list(s["params"]) for s in schemes},
        estimates=estimates,
        tail_probs=tail_probs,
        cross_tail=cross_tail,
        eps=eps,
        delta=delta,
        verdict=bool(ok_scheme and ok_cross),
    )
