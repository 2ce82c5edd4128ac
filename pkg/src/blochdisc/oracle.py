"""Independent numerical verification of the analytic solvers.

The guessing probability of a qubit ensemble equals the value of the convex
dual problem

    min over v in R^3 of  F(v) = max_i ( w_i + |w_i nu_i - v| ),

so an ensemble can be solved, and any claimed optimum certified, without ever
touching the closed-form branch logic.  This module owns that numerical route:

* :func:`dual_minimax` minimises F by seeded multi-start pattern descent with
  shrinking steps, coordinate-wise trisection refinement, and a final
  active-set Newton polish on the equal-value system.
* :func:`certify` compares a primal measurement against a dual point and runs
  the full KKT residual check.
* :func:`primal_strategy_scan` brute-forces two-outcome projective strategies
  over a sphere grid, giving a solver-free lower bound for 2x2 instances with
  post-measurement information.

Restart points come from an explicit linear congruential generator,
``x -> (1664525 x + 1013904223) mod 2^32`` (Numerical Recipes constants), so
runs are reproducible from the seed alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import (MepiEnsemble, Povm, ShapeError, WeightedEnsemble,
                   success_probability)

_LCG_MULT = 1664525
_LCG_INC = 1013904223
_LCG_MOD = 2 ** 32

DEFAULT_SEED = 20210 + 1103  # arbitrary fixed default; reproducibility only


class ConvergenceError(RuntimeError):
    """Minimax ran out of its evaluation budget; carries the best iterate."""

    def __init__(self, message: str, best_s: float, best_v):
        super().__init__(message)
        self.best_s = best_s
        self.best_v = np.asarray(best_v, dtype=float)


@dataclass(frozen=True)
class MinimaxOptions:
    max_iters: int = 400_000          # total F evaluations allowed per call
    tol_value: float = 1e-10
    tol_point: float = 1e-9
    n_starts: int = 8
    seed: int = DEFAULT_SEED
    initial_radius: float = 2.0       # covers the ball of weighted points

    def __post_init__(self):
        if self.tol_value <= 0 or self.tol_point <= 0:
            raise ValueError("tolerances must be positive")
        if self.n_starts < 1:
            raise ValueError("need at least one start")


@dataclass(frozen=True)
class MinimaxResult:
    s_star: float
    v_star: np.ndarray
    iters: int

    def to_dict(self) -> dict:
        return {"s_star": self.s_star, "v_star": list(map(float, self.v_star)),
                "iters": self.iters}


@dataclass(frozen=True)
class Certification:
    primal: float
    dual: float
    gap: float
    kkt_pass: bool
    residuals: dict
    passed: bool

    def to_dict(self) -> dict:
        return {"primal": self.primal, "dual": self.dual, "gap": self.gap,
                "kkt_pass": self.kkt_pass, "passed": self.passed,
                "residuals": dict(self.residuals)}


class _Lcg:
    """Deterministic 32-bit linear congruential generator."""

    def __init__(self, seed: int):
        self.state = seed % _LCG_MOD

    def next_unit(self) -> float:
        self.state = (_LCG_MULT * self.state + _LCG_INC) % _LCG_MOD
        return self.state / _LCG_MOD

    def unit_vector(self) -> tuple[float, float, float]:
        z = 2.0 * self.next_unit() - 1.0
        ang = 2.0 * math.pi * self.next_unit()
        r = math.sqrt(max(0.0, 1.0 - z * z))
        return (r * math.cos(ang), r * math.sin(ang), z)

    def ball_point(self, radius: float) -> list[float]:
        d = self.unit_vector()
        r = radius * self.next_unit() ** (1.0 / 3.0)
        return [r * d[0], r * d[1], r * d[2]]


class _Budget:
    """Shared F-evaluation counter with a hard cap."""

    def __init__(self, cap: int):
        self.cap = cap
        self.used = 0

    def spend(self):
        self.used += 1
        if self.used > self.cap:
            raise _BudgetExceeded()


class _BudgetExceeded(Exception):
    pass


def _make_objective(ensemble: WeightedEnsemble, budget: _Budget):
    w = [s.weight for s in ensemble.states]
    pts = [tuple(s.weighted_point()) for s in ensemble.states]
    n = len(w)

    def F(v) -> float:
        budget.spend()
        vx, vy, vz = v[0], v[1], v[2]
        best = -math.inf
        for k in range(n):
            px, py, pz = pts[k]
            dx = px - vx
            dy = py - vy
            dz = pz - vz
            val = w[k] + math.sqrt(dx * dx + dy * dy + dz * dz)
            if val > best:
                best = val
        return best

    return F, w, pts


_AXES = ((1.0, 0.0, 0.0), (-1.0, 0.0, 0.0),
         (0.0, 1.0, 0.0), (0.0, -1.0, 0.0),
         (0.0, 0.0, 1.0), (0.0, 0.0, -1.0))


def _pattern_descent(F, v0, f0, step0, min_step, lcg, n_random=4):
    """Hooke-Jeeves style descent with shrinking steps.

    Axis moves are tried first; when all of them stall (a kink of F), a few
    random directions are tried before the step is halved.  A successful
    sweep is followed by doubling pattern moves, which walk curved valleys
    far faster than axis moves alone.
    """
    v = list(v0)
    f = f0
    step = step0
    while step > min_step:
        base = list(v)
        improved = False
        for ax, ay, az in _AXES:
            cand = (v[0] + step * ax, v[1] + step * ay, v[2] + step * az)
            fc = F(cand)
            if fc < f:
                v = list(cand)
                f = fc
                improved = True
        if improved:
            # pattern moves along the net displacement of the sweep
            for _ in range(64):
                cand = (2.0 * v[0] - base[0], 2.0 * v[1] - base[1],
                        2.0 * v[2] - base[2])
                fc = F(cand)
                if fc < f:
                    base = list(v)
                    v = list(cand)
                    f = fc
                else:
                    break
            continue
        for _ in range(n_random):
            dx, dy, dz = lcg.unit_vector()
            cand = (v[0] + step * dx, v[1] + step * dy, v[2] + step * dz)
            fc = F(cand)
            if fc < f:
                v = list(cand)
                f = fc
                improved = True
                break
        if not improved:
            step *= 0.5
    return v, f


def _trisection_polish(F, v, f, half_width, iters=48, sweeps=2):
    """Coordinate-wise trisection; F is convex along every line."""
    v = list(v)
    for _ in range(sweeps):
        for axis in range(3):
            lo = v[axis] - half_width
            hi = v[axis] + half_width
            for _ in range(iters):
                third = (hi - lo) / 3.0
                a = lo + third
                b = hi - third
                va = list(v)
                va[axis] = a
                vb = list(v)
                vb[axis] = b
                if F(va) <= F(vb):
                    hi = b
                else:
                    lo = a
            v[axis] = 0.5 * (lo + hi)
            fc = F(v)
            if fc < f:
                f = fc
    return v, f


def _newton_system(w, pts, act, v, s, c):
    """Residual and Jacobian of the equal-value stationarity system."""
    k = len(act)
    m = k + 4
    G = np.zeros(m)
    J = np.zeros((m, 4 + k))
    grads = []
    for row, i in enumerate(act):
        d = v - pts[i]
        dist = math.sqrt(d @ d)
        if dist < 1e-14:
            return None, None
        g = d / dist
        grads.append((g, dist))
        G[row] = w[i] + dist - s
        J[row, 0:3] = g
        J[row, 3] = -1.0
    # stationarity: sum_i c_i g_i = 0
    stat = np.zeros(3)
    Jvv = np.zeros((3, 3))
    for col, (g, dist) in enumerate(grads):
        stat += c[col] * g
        Jvv += c[col] * (np.eye(3) - np.outer(g, g)) / dist
        J[k:k + 3, 4 + col] = g
    G[k:k + 3] = stat
    J[k:k + 3, 0:3] = Jvv
    # normalisation: sum c = 1
    G[k + 3] = c.sum() - 1.0
    J[k + 3, 4:] = 1.0
    return G, J


def _newton_refine(w, pts, act, v0):
    """Solve the active-set optimality system by damped least-squares Newton."""
    pts_arr = [np.asarray(p) for p in pts]
    v = np.asarray(v0, dtype=float).copy()
    s = max(w[i] + np.linalg.norm(v - pts_arr[i]) for i in act)
    c = np.full(len(act), 1.0 / len(act))
    for _ in range(60):
        G, J = _newton_system(w, pts_arr, act, v, s, c)
        if G is None:
            return None
        norm = np.linalg.norm(G)
        step = np.linalg.lstsq(J, -G, rcond=None)[0]
        # keep position updates modest; the system is only locally valid
        dv = step[0:3]
        dv_norm = np.linalg.norm(dv)
        if dv_norm > 0.25:
            step = step * (0.25 / dv_norm)
        v = v + step[0:3]
        s = s + step[3]
        c = c + step[4:]
        if norm < 1e-13:
            break
    G, _ = _newton_system(w, pts_arr, act, v, s, c)
    if G is None or np.linalg.norm(G) > 1e-9:
        return None
    return v, s, c


def _active_set_newton(w, pts, v, f, atol=1e-5):
    """Polish a near-optimal point to machine precision.

    Identifies the near-active states, solves the smooth equal-value system,
    and repairs the active set when a multiplier goes negative or an inactive
    state overtakes the value.  Purely local and independent of any
    closed-form branch.
    """
    n = len(w)
    pts_arr = [np.asarray(p) for p in pts]

    def phi_all(vv):
        return [w[i] + np.linalg.norm(vv - pts_arr[i]) for i in range(n)]

    act = sorted(i for i, val in enumerate(phi_all(np.asarray(v))) if val >= f - atol)
    if not act:
        return None
    for _ in range(2 * n + 4):
        if not act:
            return None
        res = _newton_refine(w, pts, act, v)
        if res is None:
            return None
        v_new, s_new, c = res
        vals = phi_all(v_new)
        worst = max(range(n), key=lambda i: vals[i])
        if vals[worst] > s_new + 1e-11 and worst not in act:
            act = sorted(set(act) | {worst})
            continue
        if len(act) > 1 and min(c) < -1e-9:
            drop = act[int(np.argmin(c))]
            act = [i for i in act if i != drop]
            continue
        return v_new, max(vals)
    return None


def dual_minimax(ensemble: WeightedEnsemble,
                 opts: Optional[MinimaxOptions] = None) -> MinimaxResult:
    """Minimise ``max_i (w_i + |w_i nu_i - v|)`` over v.

    Deterministic given the options.  Starts are the weighted points, their
    centroid, and ``n_starts`` seeded points in the ball of radius
    ``initial_radius``; each start runs a shrinking-step pattern descent, the
    ordered-best result is refined by coordinate trisection and an active-set
    Newton polish.  Raises :class:`ConvergenceError` when the evaluation
    budget runs out, carrying the best iterate found.
    """
    opts = opts or MinimaxOptions()
    if len(ensemble) < 2:
        raise ShapeError("minimax needs at least 2 states")
    budget = _Budget(opts.max_iters)
    F, w, pts = _make_objective(ensemble, budget)

    best_f = math.inf
    best_v = None
    try:
        # Weighted points are exact minimiser candidates: F >= max_j w_j
        # everywhere, so F(p_i) == w_i proves global optimality on the spot.
        for i, p in enumerate(pts):
            fp = F(p)
            if fp <= w[i]:
                return MinimaxResult(fp, np.asarray(p, dtype=float), budget.used)
            if fp < best_f:
                best_f = fp
                best_v = list(p)

        centroid = [sum(p[k] for p in pts) / len(pts) for k in range(3)]
        lcg = _Lcg(opts.seed)
        starts = [centroid, list(best_v)]
        starts += [lcg.ball_point(opts.initial_radius) for _ in range(opts.n_starts)]

        coarse_floor = max(1e-6, opts.tol_point * 10.0)
        results = []
        for idx, s0 in enumerate(starts):
            v, f = _pattern_descent(F, s0, F(s0), step0=0.5 * opts.initial_radius,
                                    min_step=coarse_floor, lcg=lcg)
            results.append((f, idx, v))
        f, _, v = min(results, key=lambda t: (t[0], t[1]))

        v, f = _pattern_descent(F, v, f, step0=coarse_floor * 4.0,
                                min_step=opts.tol_point / 10.0, lcg=lcg)
        v, f = _trisection_polish(F, v, f, half_width=1e-3)

        polished = _active_set_newton(w, pts, v, f)
        if polished is not None and polished[1] <= f + opts.tol_value:
            v, f = polished[0], polished[1]
        v = np.asarray(v, dtype=float)
        return MinimaxResult(F(v), v, budget.used)
    except _BudgetExceeded:
        raise ConvergenceError(
            f"minimax exhausted {opts.max_iters} evaluations",
            best_s=best_f if best_f < math.inf else math.nan,
            best_v=best_v if best_v is not None else [0.0, 0.0, 0.0])


def max_phi(ensemble: WeightedEnsemble, v: Sequence[float]) -> float:
    """The dual objective F(v); a certified upper bound on the primal value."""
    vv = np.asarray(v, dtype=float)
    return max(s.weight + float(np.linalg.norm(s.weighted_point() - vv))
               for s in ensemble.states)


def certify(ensemble: WeightedEnsemble, povm: Povm, s: float,
            v: Sequence[float], tol: float = 1e-8) -> Certification:
    """Weak-duality and KKT certification of a (measurement, dual point) pair.

    ``primal`` is the achieved success probability, ``dual`` the value of the
    dual objective at ``v``; their gap bounds the suboptimality of both sides.
    """
    from .me import kkt_verify  # deferred: me builds on this module

    primal = success_probability(ensemble, povm)
    dual = max_phi(ensemble, v)
    gap = dual - primal
    report = kkt_verify(ensemble, povm, s, v, tol)
    passed = bool(gap <= tol and report.passed)
    return Certification(primal=primal, dual=dual, gap=gap,
                         kkt_pass=report.passed, residuals=report.residuals,
                         passed=passed)


def _product_weights_points(mepi: MepiEnsemble):
    """Tuple weights/points of the product reduction, computed from scratch.

    Kept local so the scan stays independent of the solver-side reduction.
    """
    shape = mepi.shape
    labels = []
    weights = []
    points = []

    def rec(b, idx):
        if b == mepi.m:
            labels.append(tuple(i + 1 for i in idx))
            weights.append(math.fsum(
                mepi.subensembles[bb].states[ii].weight
                for bb, ii in enumerate(idx)))
            points.append(sum(
                (mepi.subensembles[bb].states[ii].weighted_point()
                 for bb, ii in enumerate(idx)), np.zeros(3)))
            return
        for i in range(shape[b]):
            rec(b + 1, idx + [i])

    rec(0, [])
    return labels, np.array(weights), np.array(points)


def primal_strategy_scan(mepi: MepiEnsemble, grid_density: int = 720) -> float:
    """Best two-outcome projective strategy over a polar direction grid.

    Every scanned strategy is a feasible measurement (each grid direction
    defines a binary projective POVM, and each of its two outcomes is mapped
    to the best guessing rule), so the result is a strict lower bound on the
    optimum with post-measurement information.  The no-measurement strategy
    is included, so instances solvable without measuring score their exact
    optimum.
    """
    if not mepi.is_2x2():
        raise ShapeError("the strategy scan only supports the 2x2 shape")
    _, weights, points = _product_weights_points(mepi)

    g = int(grid_density)
    if g < 1:
        raise ValueError("grid_density must be >= 1")
    thetas = np.linspace(0.0, math.pi, g + 1)
    phis = 2.0 * math.pi * np.arange(2 * g) / (2 * g)
    sin_t = np.sin(thetas)[:, None]
    dirs = np.empty((thetas.size * phis.size, 3))
    dirs[:, 0] = (sin_t * np.cos(phis)[None, :]).ravel()
    dirs[:, 1] = (sin_t * np.sin(phis)[None, :]).ravel()
    dirs[:, 2] = np.broadcast_to(np.cos(thetas)[:, None],
                                 (thetas.size, phis.size)).ravel()

    best_plus = np.full(dirs.shape[0], -np.inf)
    best_minus = np.full(dirs.shape[0], -np.inf)
    for eta, mu in zip(weights, points):
        proj = dirs @ mu
        np.maximum(best_plus, 0.5 * (eta + proj), out=best_plus)
        np.maximum(best_minus, 0.5 * (eta - proj), out=best_minus)
    best = float(np.max(best_plus + best_minus))
    return max(best, float(np.max(weights)))
