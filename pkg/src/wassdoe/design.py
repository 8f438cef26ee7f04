"""Space-filling designs in the measure space and the mixed product space.

Measure designs maximize the minimum pairwise Wasserstein distance by block
coordinate descent over CDF increment vectors, refined through a schedule of
grid resolutions.  Mixed designs pair a Euclidean base design with a measure
base design through the permutation that maximizes the product-space
minimum distance.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError
from .measure import CappedSimplex, DiscretizedMeasure, random_increments
from .wasserstein import (MixedPoint, WassersteinOrder, _integral_abs_power,
                          pairwise_w_pp, product_distance, w_pp_many)


@dataclass(frozen=True)
class OptimizerConfig:
    """Knobs of the block-coordinate-descent design search."""

    epsilon: float = 1e-6
    restarts: int = 20
    inner_iters: int = 60
    seed: int = 0
    refine_schedule: tuple = (11, 21, 41)
    max_sweeps: int = 200
    n_directions: int = 20
    soft_temp: float = 1e-2
    step_floor: float = 1e-7

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValidationError("epsilon must be positive")
        if self.restarts < 1 or self.inner_iters < 1:
            raise ValidationError("restarts and inner_iters must be >= 1")
        sched = tuple(int(m) for m in self.refine_schedule)
        if len(sched) < 1 or sched[0] < 2:
            raise ValidationError("refine_schedule needs at least one m >= 2")
        for a, b in zip(sched, sched[1:]):
            if b != 2 * (a - 1) + 1:
                raise ValidationError(
                    f"refine_schedule must double cells: {b} != 2*({a}-1)+1"
                )
        object.__setattr__(self, "refine_schedule", sched)


@dataclass(frozen=True)
class MeasureDesign:
    """Ordered set of measures with its minimum-distance criterion."""

    runs: tuple
    order: WassersteinOrder
    tau: float
    criterion_value: float
    trace: tuple = ()
    converged: bool = True

    def __post_init__(self):
        runs = tuple(self.runs)
        if any(not isinstance(mu, DiscretizedMeasure) for mu in runs):
            raise ValidationError("runs must be DiscretizedMeasure instances")
        if len({(mu.m, mu.tau, mu.support) for mu in runs}) > 1:
            raise ValidationError("runs must share grid size, tau and support")
        object.__setattr__(self, "runs", runs)
        object.__setattr__(self, "trace", tuple(self.trace))

    @property
    def n(self) -> int:
        return len(self.runs)


@dataclass(frozen=True)
class MixedDesign:
    """Pairing (x_i, mu_{e_i}) of a Euclidean and a measure base design."""

    base_euclidean: np.ndarray
    base_measures: MeasureDesign
    permutation: np.ndarray
    order: WassersteinOrder
    criterion_value: float

    def __post_init__(self):
        x = np.array(self.base_euclidean, dtype=float)
        if x.ndim != 2:
            raise ValidationError("base_euclidean must be an n x d matrix")
        perm = np.array(self.permutation, dtype=int)
        if sorted(perm.tolist()) != list(range(len(perm))):
            raise ValidationError("permutation must be a bijection on 0..n-1")
        if x.shape[0] != self.base_measures.n or x.shape[0] != len(perm):
            raise ValidationError("base designs and permutation disagree on n")
        x.flags.writeable = False
        perm.flags.writeable = False
        object.__setattr__(self, "base_euclidean", x)
        object.__setattr__(self, "permutation", perm)

    @property
    def n(self) -> int:
        return self.base_euclidean.shape[0]

    def runs(self) -> list:
        meas = self.base_measures.runs
        return [MixedPoint(self.base_euclidean[i], meas[self.permutation[i]])
                for i in range(self.n)]


# -- criteria ---------------------------------------------------------------


def _pairwise_distances(design) -> np.ndarray:
    """Condensed vector of all pairwise distances of a design."""
    if isinstance(design, MeasureDesign):
        mat = pairwise_w_pp(design.runs, design.order.q)
        ii, jj = np.triu_indices(design.n, k=1)
        return mat[ii, jj]
    if isinstance(design, MixedDesign):
        runs = design.runs()
        order = design.order
        n = design.n
        if order.is_fast_path:
            x = design.base_euclidean
            dm = pairwise_w_pp(design.base_measures.runs, order.p)
            e = design.permutation
            ii, jj = np.triu_indices(n, k=1)
            if order.q == 1.0:
                dx = np.abs(x[ii] - x[jj]).sum(axis=1)
                return dx + dm[e[ii], e[jj]]
            dx2 = ((x[ii] - x[jj]) ** 2).sum(axis=1)
            return np.sqrt(dx2 + dm[e[ii], e[jj]] ** 2)
        return np.array([product_distance(runs[i], runs[j], order)
                         for i in range(n) for j in range(i + 1, n)])
    raise ValidationError(f"unsupported design type {type(design).__name__}")


def mdc(design) -> float:
    """Minimum pairwise distance of the design (the maximin criterion)."""
    if design.n < 2:
        raise ValidationError("mdc needs at least two runs")
    return float(_pairwise_distances(design).min())


def phi_p(design, p_exponent: float) -> float:
    """Morris-Mitchell aggregate (sum of d_ij^-p)^(1/p); inf on coincidence."""
    if p_exponent < 1:
        raise ValidationError("p_exponent must be >= 1")
    d = _pairwise_distances(design)
    if np.any(d == 0.0):
        return float("inf")
    return float(np.sum(d ** (-p_exponent)) ** (1.0 / p_exponent))


# -- block coordinate descent in the measure space ---------------------------


def _project_rows(V, cap):
    """Row-wise Euclidean projection onto the capped simplex.

    The projection is clip(v - lam, 0, cap); the coordinate sum is piecewise
    linear and nonincreasing in lam with knots at {v_i, v_i - cap}, so the
    exact lam is found by scanning the sorted knots.
    """
    V = np.asarray(V, dtype=float)
    knots = np.sort(np.concatenate([V - cap, V], axis=1), axis=1)
    sums = np.clip(V[:, None, :] - knots[:, :, None], 0.0, cap).sum(axis=2)
    j = np.maximum((sums > 1.0).sum(axis=1), 1)[:, None]
    k0 = np.take_along_axis(knots, j - 1, axis=1)
    k1 = np.take_along_axis(knots, j, axis=1)
    f0 = np.take_along_axis(sums, j - 1, axis=1)
    f1 = np.take_along_axis(sums, j, axis=1)
    with np.errstate(invalid="ignore"):
        lam = np.where(f0 > f1, k0 + (f0 - 1.0) * (k1 - k0) / (f0 - f1), k0)
    X = np.clip(V - lam, 0.0, cap)
    free = (X > 0.0) & (X < cap)
    nfree = free.sum(axis=1)
    resid = 1.0 - X.sum(axis=1)
    adjust = np.where(nfree > 0, resid / np.maximum(nfree, 1), 0.0)
    return np.clip(X + adjust[:, None] * free, 0.0, cap)


class _BcdState:
    """Mutable increments and pairwise-distance matrix of a design in progress."""

    def __init__(self, increments, m, tau, q):
        self.T = [np.array(t, dtype=float) for t in increments]
        self.m = m
        self.tau = tau
        self.q = q
        self.n = len(increments)
        self._rebuild()

    def _rebuild(self):
        self.D = np.zeros((self.n, self.n))
        measures = [self._measure(i) for i in range(self.n)]
        for i in range(self.n):
            others = measures[:i] + measures[i + 1:]
            if others:
                row = w_pp_many(measures[i], others, self.q)
                self.D[i, np.arange(self.n) != i] = row

    def _measure(self, i):
        return DiscretizedMeasure(self.m, self.T[i], self.tau)

    def set_run(self, i, t, dvec):
        self.T[i] = np.array(t, dtype=float)
        idx = np.arange(self.n) != i
        self.D[i, idx] = dvec
        self.D[idx, i] = dvec

    def xi(self) -> float:
        ii, jj = np.triu_indices(self.n, k=1)
        return float(self.D[ii, jj].min())

    def rest_min(self, i) -> float:
        keep = [k for k in range(self.n) if k != i]
        sub = self.D[np.ix_(keep, keep)]
        ii, jj = np.triu_indices(len(keep), k=1)
        return float(sub[ii, jj].min()) if len(keep) >= 2 else np.inf


def _softmin(d, temp):
    lo = d.min(axis=-1)
    return lo - temp * np.log(np.exp(-(d - lo[..., None]) / temp).sum(axis=-1))


def _inner_solve(state: _BcdState, i: int, config: OptimizerConfig,
                 rng: np.random.Generator):
    """Pattern search on run i; returns (t, dvec, accepted)."""
    cap = state.tau / (state.m - 1)
    dim = state.m - 1
    idx = np.arange(state.n) != i
    rest = state.rest_min(i)
    d_cur = state.D[i, idx]
    xi_cur = min(float(d_cur.min()), rest) if state.n > 1 else 0.0

    others = [j for j in range(state.n) if j != i]
    S_o = np.stack([np.concatenate([[0.0], np.cumsum(state.T[j])]) for j in others])
    S_o = np.clip(S_o, 0.0, 1.0)
    S_o[:, -1] = 1.0
    n_o = len(others)
    inv_q = 1.0 / state.q

    def distances(cand_T):
        cand_T = np.atleast_2d(cand_T)
        n_cand = cand_T.shape[0]
        S_c = np.concatenate([np.zeros((n_cand, 1)), np.cumsum(cand_T, axis=1)], axis=1)
        np.clip(S_c, 0.0, 1.0, out=S_c)
        S_c[:, -1] = 1.0
        vals = _integral_abs_power(np.repeat(S_c, n_o, axis=0),
                                   np.tile(S_o, (n_cand, 1)), state.q) ** inv_q
        return vals.reshape(n_cand, n_o)

    simplex = CappedSimplex(dim, cap)
    starts = [np.array(state.T[i]), random_increments(rng, simplex)]
    results = []
    temp = config.soft_temp
    for t0 in starts:
        t = t0
        d = distances(t)[0]
        soft = float(_softmin(d, temp))
        step = 0.25
        for _ in range(config.inner_iters):
            dirs = rng.standard_normal((config.n_directions, dim))
            dirs -= dirs.mean(axis=1, keepdims=True)
            norms = np.linalg.norm(dirs, axis=1, keepdims=True)
            dirs /= np.where(norms > 0, norms, 1.0)
            cands = _project_rows(t[None, :] + step * dirs, cap)
            dists = distances(cands)
            softs = _softmin(dists, temp)
            k = int(np.argmax(softs))
            if softs[k] > soft:
                t, soft, d = cands[k], float(softs[k]), dists[k]
            else:
                step *= 0.5
                if step < config.step_floor:
                    break
        results.append((t, d))
        temp *= 0.5

    best_t, best_d = max(results, key=lambda r: min(float(r[1].min()), rest))
    xi_new = min(float(best_d.min()), rest)
    if xi_new > xi_cur:
        return best_t, best_d, True
    return np.array(state.T[i]), d_cur, False


def inner_solve(design: MeasureDesign, i: int, config: OptimizerConfig):
    """Re-optimize run i of a design holding the others fixed.

    Returns a feasible increment vector; the design criterion evaluated with
    the returned vector is never below the incumbent's.
    """
    if not 0 <= i < design.n:
        raise ValidationError(f"run index {i} out of range")
    state = _BcdState([mu.increments for mu in design.runs],
                      design.runs[0].m, design.tau, design.order.q)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    t, _, _ = _inner_solve(state, i, config, rng)
    return t


def _bcd_sweeps(state: _BcdState, config: OptimizerConfig,
                rng: np.random.Generator):
    """Run sweeps until the per-sweep improvement drops below epsilon."""
    xi_log = [state.xi()]
    converged = False
    for _ in range(config.max_sweeps):
        for i in range(state.n):
            t, dvec, accepted = _inner_solve(state, i, config, rng)
            if accepted:
                state.set_run(i, t, dvec)
        xi_log.append(state.xi())
        if xi_log[-1] - xi_log[-2] < config.epsilon:
            converged = True
            break
    return xi_log, converged


def maximin_measure_design(n: int, config: OptimizerConfig,
                           order: WassersteinOrder, tau: float) -> MeasureDesign:
    """Approximate maximin Wasserstein design by multiresolution BCD.

    Runs block coordinate descent at the coarsest grid of the refinement
    schedule from `config.restarts` random starts, keeps the best design,
    then alternates exact grid refinement with further descent at each finer
    resolution.  The criterion trace is recorded per stage and is
    nondecreasing across sweeps and stages.
    """
    if n < 2:
        raise ValidationError("a design needs at least two runs")
    schedule = config.refine_schedule
    m0 = schedule[0]
    CappedSimplex(m0 - 1, tau / (m0 - 1))  # rejects infeasible tau early

    root = np.random.SeedSequence(config.seed)
    restart_seeds = root.spawn(config.restarts)
    sweep_seed = root.spawn(1)[0]

    best = None
    for seed in restart_seeds:
        rng = np.random.default_rng(seed)
        simplex = CappedSimplex(m0 - 1, tau / (m0 - 1))
        init = [random_increments(rng, simplex) for _ in range(n)]
        state = _BcdState(init, m0, tau, order.q)
        xi_log, converged = _bcd_sweeps(state, config, rng)
        if best is None or xi_log[-1] > best[1][-1]:
            best = (state, xi_log, converged)

    state, xi_log, converged = best
    trace = [{"m": m0, "xi": xi_log, "converged": converged}]

    rng = np.random.default_rng(sweep_seed)
    for m in schedule[1:]:
        refined = [np.repeat(t / 2.0, 2) for t in state.T]
        state = _BcdState(refined, m, state.tau, order.q)
        xi_log, converged = _bcd_sweeps(state, config, rng)
        trace.append({"m": m, "xi": xi_log, "converged": converged})

    runs = [DiscretizedMeasure(state.m, t, tau) for t in state.T]
    return MeasureDesign(tuple(runs), order, tau, state.xi(),
                         tuple(trace), all(t["converged"] for t in trace))


# -- Euclidean base designs ---------------------------------------------------


def euclidean_base_design(n: int, d: int, seed: int = 0,
                          iters: int | None = None) -> np.ndarray:
    """Maximin l2 Latin hypercube on the grid {0, 1/(n-1), ..., 1}^d.

    For d = 1 this is the equispaced grid itself; otherwise each column is a
    permutation of the grid, improved by random within-column row exchanges
    that increase the minimum pairwise distance.
    """
    if n < 2 or d < 1:
        raise ValidationError("need n >= 2 and d >= 1")
    grid = np.linspace(0.0, 1.0, n)
    if d == 1:
        return grid[:, None].copy()

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    x = np.stack([rng.permutation(grid) for _ in range(d)], axis=1)

    def min_dist(mat):
        ii, jj = np.triu_indices(n, k=1)
        return float(np.sqrt(((mat[ii] - mat[jj]) ** 2).sum(axis=1)).min())

    best = min_dist(x)
    budget = iters if iters is not None else 200 * n * d
    for _ in range(budget):
        col = rng.integers(d)
        i, j = rng.choice(n, size=2, replace=False)
        x[i, col], x[j, col] = x[j, col], x[i, col]
        cand = min_dist(x)
        if cand > best:
            best = cand
        else:
            x[i, col], x[j, col] = x[j, col], x[i, col]
    return x


# -- LH-type designs in the product space ------------------------------------

_EXHAUSTIVE_LIMIT = 8


def _permutation_criteria(perms, dx, dm, order):
    """Criterion of each permutation given base distance matrices."""
    n = perms.shape[1]
    ii, jj = np.triu_indices(n, k=1)
    if order.q == 1.0:
        pair = dx[ii, jj][None, :] + dm[perms[:, ii], perms[:, jj]]
        return pair.min(axis=1)
    pair = dx[ii, jj][None, :] + dm[perms[:, ii], perms[:, jj]] ** 2
    return np.sqrt(pair.min(axis=1))


def lh_type_design(base_x, base_measures: MeasureDesign, order: WassersteinOrder,
                   n_perms: int = 100_000, seed: int = 0) -> MixedDesign:
    """Best pairing of the two base designs under the product-space criterion.

    Searches exhaustively for n <= 8 and by seeded Monte-Carlo permutations
    (identity included) otherwise; ties resolve to the first maximizer in
    enumeration order.
    """
    if not order.is_fast_path:
        raise ValidationError("LH-type pairing supports orders (1,1) and (2,2) only")
    base_x = np.asarray(base_x, dtype=float)
    n = base_measures.n
    if base_x.ndim != 2 or base_x.shape[0] != n:
        raise ValidationError("base designs must have equal run counts")
    if n_perms < 1:
        raise ValidationError("n_perms must be >= 1")

    ii, jj = np.triu_indices(n, k=1)
    diff = base_x[ii] - base_x[jj]
    if order.q == 1.0:
        dx = np.zeros((n, n))
        dx[ii, jj] = np.abs(diff).sum(axis=1)
        dm = pairwise_w_pp(base_measures.runs, 1.0)
    else:
        dx = np.zeros((n, n))
        dx[ii, jj] = (diff ** 2).sum(axis=1)
        dm = pairwise_w_pp(base_measures.runs, 2.0)

    best_perm, best_val = None, -np.inf
    if n <= _EXHAUSTIVE_LIMIT:
        chunks = (np.array(list(itertools.permutations(range(n))), dtype=np.intp),)
    else:
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        def _random_chunks():
            yield np.arange(n, dtype=np.intp)[None, :]
            left = n_perms
            while left > 0:
                take = min(left, 4096)
                yield np.stack([rng.permutation(n) for _ in range(take)])
                left -= take
        chunks = _random_chunks()

    for perms in chunks:
        vals = _permutation_criteria(perms, dx, dm, order)
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val, best_perm = float(vals[k]), perms[k].copy()

    return MixedDesign(base_x, base_measures, best_perm, order, best_val)
