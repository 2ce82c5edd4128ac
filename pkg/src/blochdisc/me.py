"""Minimum-error discrimination of a weighted qubit ensemble.

The solver works entirely in the weighted-point geometry: with
``m_i = w_i nu_i`` and ``phi_i(v) = w_i + |m_i - v|``, the guessing
probability is ``min_v max_i phi_i(v)`` and every optimal measurement is
built from the unique minimiser v.  The module provides

* the no-measurement criterion (``eps_i >= lam_i`` for all i) and the
  structure test for optimal measurements in that regime,
* the equal-value point of a two-state face,
* the full solver: dual point from the numerical oracle, active faces,
  a minimal-support optimal POVM, and a dual certificate,
* the geometric KKT residual check used by every certification path.

Indices are 0-based throughout; index 0 always carries the greatest weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from itertools import combinations
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog, nnls

from .core import (TOL_GEOM, Effect, BlochVector, Povm, ValidationError,
                   WeightedEnsemble, identity_povm)
from .oracle import MinimaxOptions, dual_minimax

# eps-vs-lam comparisons flip the classification discontinuously; a symmetric
# band keeps both directions testable.
TOL_CLASS = 1e-9
# active-set extraction tolerance; the dual point carries solver noise.
TOL_ACTIVE = 1e-7


class InfeasibleFaceError(ValueError):
    """The dual point admits no nonnegative convex combination over the face."""


class DegenerateFaceError(ValueError):
    """The dual point coincides with a weighted point of the face."""


# ---------------------------------------------------------------------------
# No-measurement regime
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrivialCheck:
    """Result of the no-measurement criterion."""

    trivial: bool
    eps: tuple[float, ...]
    lam: tuple[float, ...]
    boundary: tuple[int, ...]  # indices with eps == lam within tolerance

    def to_dict(self) -> dict:
        return {"trivial": self.trivial, "eps": list(self.eps),
                "lam": list(self.lam), "boundary": list(self.boundary)}


def check_no_measurement(ensemble: WeightedEnsemble,
                         tol: float = TOL_CLASS) -> TrivialCheck:
    """Decide whether guessing the heaviest state is already optimal.

    ``eps_i = w_0 - w_i`` and ``lam_i = |m_0 - m_i|``; guessing state 0
    without measuring is optimal iff ``eps_i >= lam_i`` for every i.
    """
    w = ensemble.weights
    pts = ensemble.points
    eps = w[0] - w
    lam = np.linalg.norm(pts[0] - pts, axis=1)
    trivial = bool(np.all(eps >= lam - tol))
    boundary = tuple(i for i in range(1, len(w)) if abs(eps[i] - lam[i]) <= tol)
    return TrivialCheck(trivial, tuple(map(float, eps)), tuple(map(float, lam)),
                        boundary)


def trivial_optimal_check(ensemble: WeightedEnsemble, povm: Povm,
                          tol: float = TOL_CLASS) -> bool:
    """Is this POVM optimal for an ensemble in the no-measurement regime?

    Outcomes with ``eps_i > lam_i`` must be null; boundary outcomes
    (``eps_i == lam_i``) may carry weight only along ``(m_i - m_0)/lam_i``.
    """
    tc = check_no_measurement(ensemble, tol)
    if not tc.trivial:
        raise ValidationError("ensemble is not in the no-measurement regime")
    if len(povm) != len(ensemble):
        raise ValidationError("POVM must be index-aligned with the ensemble")
    pts = ensemble.points
    for i in range(1, len(ensemble)):
        p_i = povm.effects[i].p
        if p_i <= tol:
            continue
        if tc.eps[i] > tc.lam[i] + tol:
            return False
        if tc.lam[i] <= TOL_GEOM:
            continue  # duplicate weighted point: any axis acceptable
        mu = (pts[i] - pts[0]) / tc.lam[i]
        if np.linalg.norm(povm.effects[i].u.as_array() - mu) > max(tol, 1e-9):
            return False
    return True


def pair_z(ensemble: WeightedEnsemble, i: int, j: int) -> Optional[np.ndarray]:
    """Equal-value point on the open segment between weighted points i and j.

    Exists iff the segment is longer than the weight difference; it sits at
    distance ``(lam + w_j - w_i)/2`` from point i and satisfies
    ``phi_i = phi_j`` there.
    """
    if i == j:
        raise ValidationError("need two distinct indices")
    pts = ensemble.points
    w = ensemble.weights
    diff = pts[j] - pts[i]
    lam = float(np.linalg.norm(diff))
    if lam <= abs(w[i] - w[j]):
        return None
    d_i = 0.5 * (lam + w[j] - w[i])
    return pts[i] + (d_i / lam) * diff


# ---------------------------------------------------------------------------
# Convex-coefficient machinery
# ---------------------------------------------------------------------------

def _affine_system(points: np.ndarray, v: np.ndarray):
    k = len(points)
    A = np.vstack([np.asarray(points, dtype=float).T, np.ones((1, k))])
    b = np.append(np.asarray(v, dtype=float), 1.0)
    return A, b


def _min_norm_solution(A, b):
    c, *_ = np.linalg.lstsq(A, b, rcond=None)
    # one step of iterative refinement keeps the completeness residual at the
    # float noise floor even for short faces
    c = c + np.linalg.lstsq(A, b - A @ c, rcond=None)[0]
    return c, float(np.linalg.norm(A @ c - b))


def convex_coefficients(points: np.ndarray, v: Sequence[float],
                        tol: float = 1e-9) -> np.ndarray:
    """Nonnegative coefficients with ``sum c_i points_i = v, sum c_i = 1``.

    The minimum-norm affine solution is used when it is already nonnegative;
    otherwise a nonnegative least-squares solve (with a min-norm re-solve on
    its support) decides feasibility.  Raises
    :class:`InfeasibleFaceError` when v is not in the convex hull.
    """
    pts = np.asarray(points, dtype=float)
    A, b = _affine_system(pts, np.asarray(v, dtype=float))
    c, resid = _min_norm_solution(A, b)
    if resid > tol:
        raise InfeasibleFaceError(f"point is {resid:.3e} outside the affine hull")
    if c.min() >= -1e-11:
        return np.clip(c, 0.0, None)
    c_nn, rnorm = nnls(A, b)
    if rnorm > tol:
        raise InfeasibleFaceError(
            f"no nonnegative combination within {tol:.1e} (residual {rnorm:.3e})")
    support = c_nn > 0.0
    if support.any() and support.sum() < len(c_nn):
        sub, sub_res = _min_norm_solution(A[:, support], b)
        if sub_res <= tol and sub.min() >= -1e-11:
            out = np.zeros_like(c_nn)
            out[support] = np.clip(sub, 0.0, None)
            return out
    return c_nn


def in_relative_interior(points: np.ndarray, v: Sequence[float],
                         pos_tol: float = 1e-9, tol: float = 1e-9) -> bool:
    """Does v admit a strictly positive convex combination of the points?

    Affinely independent faces have a unique combination; otherwise a small
    LP maximises the least coefficient.
    """
    pts = np.asarray(points, dtype=float)
    A, b = _affine_system(pts, np.asarray(v, dtype=float))
    c, resid = _min_norm_solution(A, b)
    if resid > tol:
        return False
    k = len(pts)
    if np.linalg.matrix_rank(A) == k:
        return bool(c.min() > pos_tol)
    # maximise t subject to A c = b and c_i >= t
    obj = np.zeros(k + 1)
    obj[-1] = -1.0
    A_eq = np.hstack([A, np.zeros((A.shape[0], 1))])
    A_ub = np.hstack([-np.eye(k), np.ones((k, 1))])
    res = linprog(obj, A_ub=A_ub, b_ub=np.zeros(k), A_eq=A_eq, b_eq=b,
                  bounds=[(None, None)] * (k + 1), method="highs")
    if not res.success:
        return False
    return bool(res.x[-1] > pos_tol)


def affine_dimension(points: np.ndarray, tol: float = 1e-9) -> int:
    pts = np.asarray(points, dtype=float)
    diffs = pts[1:] - pts[0]
    if len(diffs) == 0:
        return 0
    svals = np.linalg.svd(diffs, compute_uv=False)
    return int(np.sum(svals > tol * max(1.0, svals[0])))


# ---------------------------------------------------------------------------
# Optimal POVM construction and KKT verification
# ---------------------------------------------------------------------------

def construct_povm_from_v(ensemble: WeightedEnsemble, v: Sequence[float],
                          support: Sequence[int],
                          outcome_labels=None) -> Povm:
    """Optimal measurement supported on a face containing the dual point.

    For i in the support, ``u_i`` points from v to the weighted point and
    ``p_i`` is proportional to ``c_i |m_i - v|`` where c are convex
    coefficients of v over the face; all other effects are zero.  The result
    satisfies the POVM constraints to the geometric tolerance by
    construction.
    """
    S = sorted(set(int(i) for i in support))
    n = len(ensemble)
    if not S or S[0] < 0 or S[-1] >= n:
        raise ValidationError(f"support {S} out of range for {n} outcomes")
    pts = ensemble.points
    vv = np.asarray(v, dtype=float)
    dists = np.linalg.norm(pts[S] - vv, axis=1)
    if np.any(dists <= 10 * TOL_GEOM):
        raise DegenerateFaceError("dual point coincides with a weighted point")
    c = convex_coefficients(pts[S], vv)
    den = float(c @ dists)
    effects = [Effect(0.0, BlochVector(0.0, 0.0, 0.0))] * n
    for c_i, d_i, i in zip(c, dists, S):
        u = (pts[i] - vv) / d_i
        effects[i] = Effect(c_i * d_i / den, BlochVector(*u))
    return Povm(tuple(effects), outcome_labels)


@dataclass(frozen=True)
class KktReport:
    """Residuals of the seven geometric KKT condition groups."""

    residuals: dict
    passed: bool
    tol: float

    def to_dict(self) -> dict:
        return {"residuals": {k: float(val) for k, val in self.residuals.items()},
                "passed": self.passed, "tol": self.tol}


def kkt_verify(ensemble: WeightedEnsemble, povm: Povm, s: float,
               v: Sequence[float], tol: float = 1e-8) -> KktReport:
    """Residuals of (P0)-(P2), (D0)-(D2) and complementary slackness (C0).

    The dual side is derived from (s, v): ``r_i = s - w_i`` and
    ``w_i = (v - m_i)/r_i`` when r_i is meaningfully positive, else the check
    requires v to coincide with the weighted point.
    """
    if len(povm) != len(ensemble):
        raise ValidationError("POVM must be index-aligned with the ensemble")
    w = ensemble.weights
    pts = ensemble.points
    vv = np.asarray(v, dtype=float)
    ps = povm.ps
    us = povm.us

    p0 = max(0.0, float(-ps.min()))
    p0 = max(p0, max(0.0, float(np.linalg.norm(us, axis=1).max() - 1.0)))
    p1 = abs(float(ps.sum()) - 1.0)
    p2 = float(np.linalg.norm(ps @ us))

    r = s - w
    d0 = max(0.0, float(-r.min()))
    d2 = 0.0
    c0 = 0.0
    for i in range(len(w)):
        gap_vec = vv - pts[i]
        if r[i] > tol:
            w_vec = gap_vec / r[i]
            d0 = max(d0, max(0.0, float(np.linalg.norm(w_vec)) - 1.0))
        else:
            w_vec = np.zeros(3)
            d2 = max(d2, float(np.linalg.norm(gap_vec)))
        slack = min(abs(float(ps[i] * r[i])),
                    abs(1.0 + float(us[i] @ w_vec)))
        c0 = max(c0, slack)

    residuals = {"P0": p0, "P1": p1, "P2": p2,
                 "D0": d0, "D1": 0.0, "D2": d2, "C0": c0}
    passed = all(val <= tol for val in residuals.values())
    return KktReport(residuals, passed, tol)


# ---------------------------------------------------------------------------
# Full solver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DualCertificate:
    """Dual variables proving optimality: value s, point v, multipliers."""

    s: float
    v: np.ndarray
    r: tuple[float, ...]
    w: tuple  # tuple of 3-vectors

    def to_dict(self) -> dict:
        return {"s": self.s, "v": [float(x) for x in self.v],
                "r": list(self.r),
                "w": [[float(x) for x in vec] for vec in self.w]}


@dataclass(frozen=True)
class MeSolution:
    p_guess: float
    certificate: DualCertificate
    active_sets: tuple[tuple[int, ...], ...]
    povm: Povm
    trivial: bool
    kkt: KktReport

    @property
    def v_star(self) -> np.ndarray:
        return self.certificate.v

    def to_dict(self) -> dict:
        return {"p_guess": self.p_guess,
                "v": [float(x) for x in self.certificate.v],
                "s": self.certificate.s,
                "active_sets": [list(s) for s in self.active_sets],
                "povm": self.povm.to_dict(),
                "trivial": self.trivial,
                "kkt_residuals": self.kkt.to_dict()["residuals"]}


def _certificate(ensemble: WeightedEnsemble, s: float, v: np.ndarray,
                 tol: float) -> DualCertificate:
    w = ensemble.weights
    pts = ensemble.points
    r = s - w
    wvecs = []
    for i in range(len(w)):
        if r[i] > tol:
            wvecs.append(tuple((v - pts[i]) / r[i]))
        else:
            wvecs.append((0.0, 0.0, 0.0))
    return DualCertificate(float(s), np.asarray(v, dtype=float),
                           tuple(map(float, r)), tuple(wvecs))


def _active_faces(pts: np.ndarray, active: Sequence[int],
                  v: np.ndarray) -> list[tuple[int, ...]]:
    faces = []
    for size in range(2, len(active) + 1):
        for sub in combinations(active, size):
            if in_relative_interior(pts[list(sub)], v):
                faces.append(sub)
    if faces:
        return sorted(faces, key=lambda f: (len(f), f))
    # numeric fallback: accept the smallest face whose closed hull contains v
    for size in range(2, len(active) + 1):
        for sub in combinations(active, size):
            try:
                convex_coefficients(pts[list(sub)], v)
            except InfeasibleFaceError:
                continue
            return [sub]
    return []


def solve_me(ensemble: WeightedEnsemble,
             opts: Optional[MinimaxOptions] = None,
             tol_class: float = TOL_CLASS,
             tol_active: float = TOL_ACTIVE) -> MeSolution:
    """Solve minimum-error discrimination of a qubit ensemble.

    In the no-measurement regime the answer is immediate.  Otherwise the
    dual point comes from the numerical minimax oracle, the faces containing
    it are enumerated as active sets, and the canonical POVM is built on the
    smallest face (lexicographic tie-break).  Works for unnormalised
    ensembles too; the value is then relative to the ensemble's own total.
    """
    tc = check_no_measurement(ensemble, tol_class)
    w = ensemble.weights
    pts = ensemble.points
    n = len(ensemble)
    if tc.trivial:
        s = float(w[0])
        v = pts[0].copy()
        povm = identity_povm(n)
        cert = _certificate(ensemble, s, v, tol_class)
        report = kkt_verify(ensemble, povm, s, v)
        return MeSolution(p_guess=s, certificate=cert, active_sets=((0,),),
                          povm=povm, trivial=True, kkt=report)

    res = dual_minimax(ensemble, opts)
    v = res.v_star
    phis = w + np.linalg.norm(pts - v, axis=1)
    p_guess = float(phis.max())
    active = [i for i in range(n) if phis[i] >= p_guess - tol_active]
    faces = _active_faces(pts, active, v)
    if not faces:
        raise InfeasibleFaceError(
            "dual point lies on no face of the active set; ensemble may be "
            "degenerate beyond solver tolerances")
    povm = construct_povm_from_v(ensemble, v, faces[0])
    cert = _certificate(ensemble, p_guess, v, tol_class)
    report = kkt_verify(ensemble, povm, p_guess, v)
    return MeSolution(p_guess=p_guess, certificate=cert,
                      active_sets=tuple(faces), povm=povm, trivial=False,
                      kkt=report)


def helstrom_value(ensemble: WeightedEnsemble) -> float:
    """Two-state closed form: ``max(w_0, (w_0 + w_1 + lam)/2)``."""
    if len(ensemble) != 2:
        raise ValidationError("the closed form applies to two states")
    w = ensemble.weights
    lam = float(np.linalg.norm(ensemble.points[0] - ensemble.points[1]))
    return max(float(w[0]), 0.5 * (float(w[0] + w[1]) + lam))
