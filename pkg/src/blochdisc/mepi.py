"""Discrimination with post-measurement information.

An ensemble split into subensembles, whose label arrives only after the
measurement, is solved by reduction to plain minimum-error discrimination of
the product ensemble: outcome tuples ``(i_1, .., i_m)`` carry weight
``sum_b w_{i_b b}`` and weighted point ``sum_b m_{i_b b}``.  On top of that
reduction this module implements

* the prior/post comparison and the incompatibility gap witness,
* the no-measurement criterion for the split ensemble,
* the complete closed-form classification of the 2x2 case: which face of the
  weighted-point parallelogram holds the dual point, the optimal value, the
  dual point itself, uniqueness of the optimal measurement, and existence of
  a measurement with no null outcome,
* face predicates that let tests confront the closed forms with the face
  definitions directly.

Outcome tuples are 1-based (index 1 is the heaviest state of a subensemble),
matching the case names ``Edge_11_12``, ``Diag_11_22``, ...; flat state
indices remain 0-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from itertools import product as iter_product
from typing import Optional, Sequence

import numpy as np

from .core import (TOL_GEOM, MepiEnsemble, Povm, ShapeError, ValidationError,
                   WeightedEnsemble, WeightedState, identity_povm)
from .me import (TOL_CLASS, MeSolution, construct_povm_from_v, kkt_verify,
                 solve_me)
from .oracle import MinimaxOptions


class InternalConsistencyError(RuntimeError):
    """A closed form and its own self-check disagree; treat as a bug signal."""


# case name -> outcome tuples spanning the face that holds the dual point
CASE_SUPPORTS = {
    "Trivial_eta1": ((1, 1),),
    "Edge_11_12": ((1, 1), (1, 2)),
    "Edge_11_21": ((1, 1), (2, 1)),
    "Diag_11_22": ((1, 1), (2, 2)),
    "AntiDiag_12_21": ((1, 2), (2, 1)),
    "Tri_11_12_21": ((1, 1), (1, 2), (2, 1)),
    "Tri_11_12_22": ((1, 1), (1, 2), (2, 2)),
    "Tri_11_21_22": ((1, 1), (2, 1), (2, 2)),
}

_CASE_ORDER = ("Edge_11_12", "Edge_11_21", "Diag_11_22", "AntiDiag_12_21",
               "Tri_11_12_21", "Tri_11_12_22", "Tri_11_21_22")


# ---------------------------------------------------------------------------
# Product reduction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProductEnsemble:
    """The flat ensemble equivalent to guessing with late label information."""

    ensemble: WeightedEnsemble
    labels: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(tuple(l) for l in self.labels))
        if len(self.labels) != len(self.ensemble):
            raise ValidationError("one outcome tuple per product state required")

    @property
    def weights(self) -> np.ndarray:
        return self.ensemble.weights

    @property
    def points(self) -> np.ndarray:
        return self.ensemble.points

    def index_of(self, label: Sequence[int]) -> int:
        return self.labels.index(tuple(label))

    def point_of(self, label: Sequence[int]) -> np.ndarray:
        return self.ensemble.points[self.index_of(label)]

    def weight_of(self, label: Sequence[int]) -> float:
        return float(self.ensemble.weights[self.index_of(label)])


def product_ensemble(mepi: MepiEnsemble) -> ProductEnsemble:
    """Build the product reduction; the all-ones tuple lands at flat index 0."""
    shape = mepi.shape
    entries = []
    for idx in iter_product(*(range(nb) for nb in shape)):
        weight = math.fsum(mepi.subensembles[b].states[i].weight
                           for b, i in enumerate(idx))
        point = np.zeros(3)
        for b, i in enumerate(idx):
            point = point + mepi.subensembles[b].states[i].weighted_point()
        entries.append((tuple(i + 1 for i in idx), weight, point))
    # heaviest outcome first; the stable sort keeps lexicographic order on
    # ties, so the all-ones tuple always lands first
    entries.sort(key=lambda e: -e[1])
    states = tuple(WeightedState(wt, tuple(pt / wt)) for _, wt, pt in entries)
    ensemble = WeightedEnsemble(states, normalized=False)
    return ProductEnsemble(ensemble, tuple(e[0] for e in entries))


def _eps_lam(mepi: MepiEnsemble):
    """Per-subensemble weight gaps and point distances to the heaviest state."""
    eps = []
    lam = []
    for sub in mepi.subensembles:
        w = sub.weights
        pts = sub.points
        eps.append(tuple(float(w[0] - wi) for wi in w))
        lam.append(tuple(float(np.linalg.norm(pts[0] - p)) for p in pts))
    return eps, lam


def _mu_hats(mepi: MepiEnsemble):
    """Unit vectors from the heaviest weighted point to the runner-up."""
    hats = []
    for sub in mepi.subensembles:
        pts = sub.points
        diff = pts[1] - pts[0]
        norm = float(np.linalg.norm(diff))
        hats.append(diff / norm if norm > TOL_GEOM else None)
    return hats


# ---------------------------------------------------------------------------
# Prior vs post comparison
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PriorResult:
    p_prior: float
    per_subensemble: tuple[MeSolution, ...]

    def to_dict(self) -> dict:
        return {"p_prior": self.p_prior,
                "per_subensemble": [s.to_dict() for s in self.per_subensemble]}


def prior_guess_probability(mepi: MepiEnsemble,
                            opts: Optional[MinimaxOptions] = None) -> PriorResult:
    """Best average success when the label arrives before the measurement.

    Each subensemble is solved as-is (unnormalised weights), and the values
    add up.
    """
    sols = tuple(solve_me(sub, opts) for sub in mepi.subensembles)
    return PriorResult(math.fsum(s.p_guess for s in sols), sols)


def post_guess_probability(mepi: MepiEnsemble,
                           opts: Optional[MinimaxOptions] = None) -> MeSolution:
    """Generic route: solve the product ensemble; outcomes keep tuple labels."""
    prod = product_ensemble(mepi)
    sol = solve_me(prod.ensemble, opts)
    relabeled = Povm(sol.povm.effects, prod.labels)
    return replace(sol, povm=relabeled)


def marginal_povms(povm: Povm, mepi: MepiEnsemble) -> list[Povm]:
    """Per-subensemble measurements obtained by summing over the other slots."""
    shape = mepi.shape
    m = len(shape)
    for label in povm.outcome_labels:
        if (not isinstance(label, tuple) or len(label) != m or
                any(not (1 <= l <= nb) for l, nb in zip(label, shape))):
            raise ValidationError(f"outcome label {label!r} does not match "
                                  f"subensemble shape {shape}")
    out = []
    for b, nb in enumerate(shape):
        effects = []
        for i in range(1, nb + 1):
            p = 0.0
            mom = np.zeros(3)
            for e, label in zip(povm.effects, povm.outcome_labels):
                if label[b] == i:
                    p += e.p
                    mom = mom + e.p * e.u.as_array()
            u = mom / p if p > TOL_GEOM else np.zeros(3)
            effects.append((p, u))
        out.append(Povm.from_dict(
            {"effects": [{"p": p, "u": list(u), "label": i}
                         for i, (p, u) in enumerate(effects)]}))
    return out


@dataclass(frozen=True)
class StrictGapCheck:
    strictly_better: bool
    method: str  # "closed_form" or "numeric"

    def to_dict(self) -> dict:
        return {"strictly_better": self.strictly_better, "method": self.method}


def pre_strictly_better(mepi: MepiEnsemble,
                        opts: Optional[MinimaxOptions] = None,
                        tol: float = TOL_CLASS) -> StrictGapCheck:
    """Is early label information strictly better than late?

    With two states per subensemble this is closed form: every subensemble
    must genuinely need a measurement and two of the optimal measurement axes
    must differ.  Other shapes fall back to comparing the two solved values.
    """
    if all(nb == 2 for nb in mepi.shape):
        eps, lam = _eps_lam(mepi)
        if any(eps[b][1] >= lam[b][1] for b in range(mepi.m)):
            return StrictGapCheck(False, "closed_form")
        hats = _mu_hats(mepi)
        for b in range(mepi.m):
            for b2 in range(b + 1, mepi.m):
                if float(np.linalg.norm(np.cross(hats[b], hats[b2]))) > TOL_GEOM:
                    return StrictGapCheck(True, "closed_form")
        return StrictGapCheck(False, "closed_form")
    p_prior = prior_guess_probability(mepi, opts).p_prior
    p_post = post_guess_probability(mepi, opts).p_guess
    return StrictGapCheck(bool(p_post < p_prior - tol), "numeric")


def incompatibility_gap(mepi: MepiEnsemble,
                        opts: Optional[MinimaxOptions] = None) -> float:
    """The witness ``max(0, p_prior - p_post)``; zero for compatible optima."""
    p_prior = prior_guess_probability(mepi, opts).p_prior
    p_post = post_guess_probability(mepi, opts).p_guess
    return max(0.0, p_prior - p_post)


# ---------------------------------------------------------------------------
# No-measurement regime for the split ensemble
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OutcomeStructure:
    label: tuple[int, ...]
    kind: str  # "nonnull_allowed" or "forced_null"
    direction: Optional[tuple[float, float, float]]

    def to_dict(self) -> dict:
        return {"label": list(self.label), "kind": self.kind,
                "direction": list(self.direction) if self.direction else None}


@dataclass(frozen=True)
class TrivialMepiReport:
    trivial: bool
    p_post: Optional[float]
    outcomes: tuple[OutcomeStructure, ...]

    def to_dict(self) -> dict:
        return {"trivial": self.trivial, "p_post": self.p_post,
                "outcomes": [o.to_dict() for o in self.outcomes]}


def trivial_mepi_check(mepi: MepiEnsemble, tol: float = TOL_CLASS) -> TrivialMepiReport:
    """No measurement helps iff every subensemble is in that regime.

    When it holds, each outcome other than the all-ones tuple is either
    forced null or may fire along one specific axis (its weight gap equals
    its point distance, which requires the per-slot equalities to share a
    unit vector).
    """
    eps, lam = _eps_lam(mepi)
    trivial = all(eps[b][i] >= lam[b][i] - tol
                  for b in range(mepi.m)
                  for i in range(len(eps[b])))
    if not trivial:
        return TrivialMepiReport(False, None, ())
    prod = product_ensemble(mepi)
    top = prod.points[0]
    eta1 = float(prod.weights[0])
    outcomes = []
    for idx in range(1, len(prod.labels)):
        label = prod.labels[idx]
        eps_t = eta1 - float(prod.weights[idx])
        diff = prod.points[idx] - top
        lam_t = float(np.linalg.norm(diff))
        if abs(eps_t - lam_t) <= tol and lam_t > TOL_GEOM:
            outcomes.append(OutcomeStructure(label, "nonnull_allowed",
                                             tuple(diff / lam_t)))
        else:
            outcomes.append(OutcomeStructure(label, "forced_null", None))
    return TrivialMepiReport(True, eta1, tuple(outcomes))


# ---------------------------------------------------------------------------
# Closed-form classification of the 2x2 case
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MepiScalars:
    """Derived quantities the 2x2 classification runs on."""

    eps: tuple
    lam: tuple
    mu_hat: tuple
    Phi: Optional[float]
    alpha: Optional[float]
    beta_plus: Optional[float]
    beta_minus: Optional[float]
    gamma_plus: Optional[float]
    gamma_minus: Optional[float]
    Theta_plus: Optional[float]
    Theta_minus: Optional[float]
    Xi_plus: Optional[float]
    Xi_minus: Optional[float]
    arccos_clamp_residual: float = 0.0

    def to_dict(self) -> dict:
        def arr(x):
            return None if x is None else [float(c) for c in x]
        return {"eps": [list(e) for e in self.eps],
                "lam": [list(l) for l in self.lam],
                "mu_hat": [arr(h) for h in self.mu_hat],
                "Phi": self.Phi, "alpha": self.alpha,
                "beta_plus": self.beta_plus, "beta_minus": self.beta_minus,
                "gamma_plus": self.gamma_plus, "gamma_minus": self.gamma_minus,
                "Theta_plus": self.Theta_plus, "Theta_minus": self.Theta_minus,
                "Xi_plus": self.Xi_plus, "Xi_minus": self.Xi_minus,
                "arccos_clamp_residual": self.arccos_clamp_residual}


@dataclass(frozen=True)
class MepiClassification:
    cases: tuple[str, ...]
    p_post: float
    v_star: Optional[np.ndarray]
    unique_measurement: Optional[bool]
    nonnull_exists: Optional[bool]
    scalars: MepiScalars
    trivial: bool = False
    degenerate: bool = False  # value equals the prior-information optimum
    p_prior: Optional[float] = None
    p_post_by_case: Optional[dict] = None
    fallback_generic: bool = False

    @property
    def primary_case(self) -> Optional[str]:
        return self.cases[0] if self.cases else None

    def to_dict(self) -> dict:
        return {"cases": list(self.cases), "p_post": self.p_post,
                "v_star": None if self.v_star is None else
                [float(x) for x in self.v_star],
                "unique_measurement": self.unique_measurement,
                "nonnull_exists": self.nonnull_exists,
                "trivial": self.trivial, "degenerate": self.degenerate,
                "p_prior": self.p_prior,
                "p_post_by_case": self.p_post_by_case,
                "fallback_generic": self.fallback_generic,
                "scalars": self.scalars.to_dict()}


def _clamped_arccos(x: float) -> tuple[float, float]:
    clamped = min(1.0, max(-1.0, x))
    return math.acos(clamped), abs(x) - 1.0 if abs(x) > 1.0 else 0.0


def _scalars_2x2(mepi: MepiEnsemble) -> MepiScalars:
    eps, lam = _eps_lam(mepi)
    hats = _mu_hats(mepi)
    e1, e2 = eps[0][1], eps[1][1]
    l1, l2 = lam[0][1], lam[1][1]
    if hats[0] is None or hats[1] is None:
        return MepiScalars(tuple(eps), tuple(lam),
                           tuple(tuple(h) if h is not None else None for h in hats),
                           None, None, None, None, None, None,
                           None, None, None, None)
    cphi, clamp1 = _clamped_arccos(float(hats[0] @ hats[1]))
    cos_phi = math.cos(cphi)
    alpha = l1 * l2 * cos_phi - e1 * e2
    beta_p = e1 * l2 ** 2 - e2 * l1 ** 2 + (e1 - e2) * l1 * l2 * cos_phi
    beta_m = e1 * l2 ** 2 + e2 * l1 ** 2 - (e1 + e2) * l1 * l2 * cos_phi
    gamma_p = math.sqrt(max(0.0, l1 ** 2 + l2 ** 2 + 2 * l1 * l2 * cos_phi))
    gamma_m = math.sqrt(max(0.0, l1 ** 2 + l2 ** 2 - 2 * l1 * l2 * cos_phi))
    q1 = l1 ** 2 - e1 ** 2
    q2 = l2 ** 2 - e2 ** 2
    clamp = clamp1
    theta_p = theta_m = xi_p = xi_m = None
    if q1 > 0.0 and q2 > 0.0:
        out = []
        for sign in (+1.0, -1.0):
            den_sq = (l1 ** 2 * q2 ** 2 + l2 ** 2 * q1 ** 2
                      + sign * 2.0 * l1 * l2 * q1 * q2 * cos_phi)
            den = math.sqrt(max(0.0, den_sq))
            if den <= 0.0:
                out.append((None, None))
                continue
            th, r1 = _clamped_arccos((e2 * q1 + sign * e1 * q2) / den)
            xi, r2 = _clamped_arccos((l1 * q2 + sign * l2 * q1 * cos_phi) / den)
            clamp = max(clamp, r1, r2)
            out.append((th, xi))
        (theta_p, xi_p), (theta_m, xi_m) = out
    return MepiScalars(tuple(eps), tuple(lam),
                       tuple(tuple(h) for h in hats),
                       cphi, alpha, beta_p, beta_m, gamma_p, gamma_m,
                       theta_p, theta_m, xi_p, xi_m, clamp)


def _plane_basis(hats):
    """Orthonormal in-plane basis (e1 along the first measurement axis)."""
    b1 = np.asarray(hats[0], dtype=float)
    raw = np.asarray(hats[1], dtype=float)
    b2 = raw - (raw @ b1) * b1
    n = np.linalg.norm(b2)
    if n <= TOL_GEOM:
        return None
    return b1, b2 / n


def _triangle_vertex_data(case: str, prod: ProductEnsemble, sc: MepiScalars):
    """(anchor label, edge target label, interior side sign, angle, distance)."""
    e1 = sc.eps[0][1]
    l1 = sc.lam[0][1]
    q1 = l1 ** 2 - e1 ** 2
    if case == "Tri_11_12_21":
        ang = sc.Theta_minus - sc.Xi_minus
        den = 2.0 * (l1 * math.cos(ang) + e1)
        return (1, 1), (2, 1), +1.0, ang, q1 / den
    if case == "Tri_11_12_22":
        ang = math.pi - sc.Theta_plus - sc.Xi_plus
        den = 2.0 * (l1 * math.cos(ang) + e1)
        return (1, 2), (2, 2), -1.0, ang, q1 / den
    if case == "Tri_11_21_22":
        ang = sc.Theta_plus - sc.Xi_plus
        den = 2.0 * (l1 * math.cos(ang) - e1)
        return (2, 1), (1, 1), +1.0, ang, q1 / den
    raise ValueError(case)


def _case_value(case: str, prod: ProductEnsemble, sc: MepiScalars) -> float:
    e2, l2 = sc.eps[1][1], sc.lam[1][1]
    e1, l1 = sc.eps[0][1], sc.lam[0][1]
    if case == "Edge_11_12":
        return prod.weight_of((1, 1)) + 0.5 * (l2 - e2)
    if case == "Edge_11_21":
        return prod.weight_of((1, 1)) + 0.5 * (l1 - e1)
    if case == "Diag_11_22":
        return 0.5 * (1.0 + sc.gamma_plus)
    if case == "AntiDiag_12_21":
        return 0.5 * (1.0 + sc.gamma_minus)
    anchor, _, _, ang, dist = _triangle_vertex_data(case, prod, sc)
    return prod.weight_of(anchor) + dist


def _case_point(case: str, prod: ProductEnsemble, sc: MepiScalars,
                flip: bool = False):
    e1, l1 = sc.eps[0][1], sc.lam[0][1]
    e2, l2 = sc.eps[1][1], sc.lam[1][1]
    mu = prod.point_of
    if case == "Edge_11_12":
        return ((l2 + e2) * mu((1, 1)) + (l2 - e2) * mu((1, 2))) / (2.0 * l2)
    if case == "Edge_11_21":
        return ((l1 + e1) * mu((1, 1)) + (l1 - e1) * mu((2, 1))) / (2.0 * l1)
    if case == "Diag_11_22":
        g = sc.gamma_plus
        return ((g + e1 + e2) * mu((1, 1)) + (g - e1 - e2) * mu((2, 2))) / (2.0 * g)
    if case == "AntiDiag_12_21":
        g = sc.gamma_minus
        return ((g + e1 - e2) * mu((1, 2)) + (g - e1 + e2) * mu((2, 1))) / (2.0 * g)
    basis = _plane_basis(sc.mu_hat)
    if basis is None:
        return None
    _, b2 = basis
    anchor, target, side, ang, dist = _triangle_vertex_data(case, prod, sc)
    if not math.isfinite(dist) or dist <= 0.0:
        return None
    edge = prod.point_of(target) - prod.point_of(anchor)
    edge = edge / np.linalg.norm(edge)
    # rotate the edge direction by `ang` within the parallelogram plane,
    # toward the triangle's interior; the equal-value self-check downstream
    # rejects a wrong orientation, which then retries with flip=True
    perp = b2 - (b2 @ edge) * edge
    perp_n = np.linalg.norm(perp)
    if perp_n <= TOL_GEOM:
        return None
    perp = perp / perp_n
    if flip:
        side = -side
    direction = math.cos(ang) * edge + side * math.sin(ang) * perp
    return prod.point_of(anchor) + dist * direction


def _phi_values(prod: ProductEnsemble, v: np.ndarray) -> np.ndarray:
    return prod.weights + np.linalg.norm(prod.points - v, axis=1)


def _point_self_check(prod: ProductEnsemble, v, support, p_post,
                      tol: float = 1e-8) -> bool:
    if v is None:
        return False
    phis = _phi_values(prod, np.asarray(v))
    idx = [prod.index_of(l) for l in support]
    scale = max(1.0, abs(p_post))
    if any(abs(phis[i] - p_post) > tol * scale for i in idx):
        return False
    return bool(phis.max() <= p_post + tol * scale)


def classify_2x2(mepi: MepiEnsemble, tol: float = TOL_CLASS,
                 opts: Optional[MinimaxOptions] = None) -> MepiClassification:
    """Closed-form classification of a two-subensemble, two-state instance.

    Every case whose defining inequalities hold within ``tol`` is reported
    (symmetric instances legitimately sit on several boundaries at once); all
    matching value formulas must agree, and the first case in canonical order
    supplies the value and the dual point.  Instances where no measurement
    helps, or where late information costs nothing, are routed to their own
    branches before any case formula is evaluated.
    """
    if not mepi.is_2x2():
        raise ShapeError(f"classification needs the 2x2 shape, got {mepi.shape}")
    sc = _scalars_2x2(mepi)
    prod = product_ensemble(mepi)
    e = (sc.eps[0][1], sc.eps[1][1])
    l = (sc.lam[0][1], sc.lam[1][1])

    if all(e[b] >= l[b] - tol for b in range(2)):
        report = trivial_mepi_check(mepi, tol)
        allowed = [o for o in report.outcomes if o.kind == "nonnull_allowed"]
        return MepiClassification(
            cases=("Trivial_eta1",), p_post=report.p_post,
            v_star=prod.points[0].copy(),
            unique_measurement=not allowed,
            nonnull_exists=len(allowed) == len(report.outcomes),
            scalars=sc, trivial=True)

    strict = (e[0] < l[0] and e[1] < l[1] and sc.mu_hat[0] is not None
              and sc.mu_hat[1] is not None and
              float(np.linalg.norm(np.cross(sc.mu_hat[0], sc.mu_hat[1]))) > TOL_GEOM)
    if not strict:
        # late information costs nothing here; the optimum equals the sum of
        # per-subensemble two-state optima
        from .me import helstrom_value
        p_prior = math.fsum(helstrom_value(sub) for sub in mepi.subensembles)
        return MepiClassification(cases=(), p_post=p_prior, v_star=None,
                                  unique_measurement=None, nonnull_exists=None,
                                  scalars=sc, degenerate=True, p_prior=p_prior)

    cos_phi = math.cos(sc.Phi)
    q1 = l[0] ** 2 - e[0] ** 2
    q2 = l[1] ** 2 - e[1] ** 2
    t1a1 = (e[0] + l[0] * cos_phi) * (l[1] - e[1]) - q1
    t1a2 = (e[0] - l[0] * cos_phi) * (l[1] + e[1]) - q1
    t1b1 = (e[1] + l[1] * cos_phi) * (l[0] - e[0]) - q2
    t1b2 = (e[1] - l[1] * cos_phi) * (l[0] + e[0]) - q2
    a = sc.alpha
    gp_a_m = sc.gamma_plus * a - sc.beta_plus
    gp_a_p = sc.gamma_plus * a + sc.beta_plus
    gm_a_p = sc.gamma_minus * a + sc.beta_minus
    gm_a_m = sc.gamma_minus * a - sc.beta_minus

    conditions = {
        "Edge_11_12": t1a1 >= -tol and t1a2 >= -tol,
        "Edge_11_21": t1b1 >= -tol and t1b2 >= -tol,
        "Diag_11_22": gp_a_m >= -tol and gp_a_p >= -tol,
        "AntiDiag_12_21": gm_a_p <= tol and gm_a_m <= tol,
        "Tri_11_12_21": (t1a1 < tol and t1b1 < tol
                         and a <= tol and gm_a_p > -tol),
        "Tri_11_12_22": (t1a2 < tol
                         and (e[1] + l[1] * cos_phi) * (l[0] - e[0]) + q2 > -tol
                         and a >= -tol and gp_a_m < tol),
        "Tri_11_21_22": (t1b2 < tol
                         and (e[0] + l[0] * cos_phi) * (l[1] - e[1]) + q1 > -tol
                         and a >= -tol and gp_a_p < tol),
    }
    matched = tuple(name for name in _CASE_ORDER if conditions[name])
    if not matched:
        raise InternalConsistencyError(
            f"no classification case matched within tol={tol}; scalars: "
            f"{sc.to_dict()}")

    p_by_case = {name: float(_case_value(name, prod, sc)) for name in matched}
    p_post = p_by_case[matched[0]]
    spread = max(abs(p - p_post) for p in p_by_case.values())
    if spread > 1e-9 * max(1.0, abs(p_post)):
        raise InternalConsistencyError(
            f"boundary cases disagree on the optimum by {spread:.3e}: {p_by_case}")

    edge_matched = any(name.startswith("Edge") for name in matched)
    nonnull = (not edge_matched) and abs(a) <= tol
    unique = not nonnull

    v_star = None
    fallback = False
    for name in matched:
        for flip in (False, True):
            cand = _case_point(name, prod, sc, flip=flip)
            if cand is not None and _point_self_check(prod, cand,
                                                      CASE_SUPPORTS[name], p_post):
                v_star = np.asarray(cand, dtype=float)
                break
            if not name.startswith("Tri"):
                break  # only the triangle construction has an orientation sign
        if v_star is not None:
            if name != matched[0]:
                matched = (name,) + tuple(c for c in matched if c != name)
            break
    if v_star is None:
        sol = post_guess_probability(mepi, opts)
        v_star = sol.v_star
        p_post = sol.p_guess
        fallback = True

    return MepiClassification(cases=matched, p_post=p_post, v_star=v_star,
                              unique_measurement=unique, nonnull_exists=nonnull,
                              scalars=sc, p_post_by_case=p_by_case,
                              fallback_generic=fallback)


def optimal_povm_2x2(mepi: MepiEnsemble,
                     classification: MepiClassification) -> Povm:
    """Build the measurement the classification certifies.

    The effects sit on the classified support: each axis points from the
    dual point to its weighted outcome point.  The trivial branch returns
    the guess-the-heaviest measurement; the value-degenerate branch carries
    no single canonical measurement and is rejected.
    """
    if classification.degenerate:
        raise ValidationError("degenerate instances have no classified support")
    prod = product_ensemble(mepi)
    if classification.trivial:
        return identity_povm(len(prod.labels), outcome=0,
                             outcome_labels=prod.labels)
    support = [prod.index_of(lbl)
               for lbl in CASE_SUPPORTS[classification.primary_case]]
    return construct_povm_from_v(prod.ensemble, classification.v_star, support,
                                 outcome_labels=prod.labels)


# ---------------------------------------------------------------------------
# Face predicates (test hooks against the definitions)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FaceCheck:
    in_X: bool
    in_Y: bool

    def to_dict(self) -> dict:
        return {"in_X": self.in_X, "in_Y": self.in_Y}


def face_predicates(prod: ProductEnsemble, s_prime: Sequence[Sequence[int]],
                    s: Sequence[Sequence[int]], v: Sequence[float],
                    tol: float = 1e-9) -> FaceCheck:
    """Evaluate the two half-space predicates whose intersection is Z.

    ``in_X``: v lies in the open face of S' with equal values there, and the
    S' values dominate the rest of S.  ``in_Y``: the S' values dominate
    everything outside S.
    """
    from .me import in_relative_interior

    sp = [tuple(l) for l in s_prime]
    ss = [tuple(l) for l in s]
    if not set(sp) <= set(ss):
        raise ValidationError("S' must be a subset of S")
    if not set(ss) <= set(prod.labels):
        raise ValidationError("S must consist of outcome tuples")
    vv = np.asarray(v, dtype=float)
    phis = _phi_values(prod, vv)
    idx_sp = [prod.index_of(l) for l in sp]
    idx_rest_s = [prod.index_of(l) for l in ss if tuple(l) not in set(sp)]
    idx_out = [i for i, l in enumerate(prod.labels) if l not in set(ss)]

    vals_sp = phis[idx_sp]
    equal = float(vals_sp.max() - vals_sp.min()) <= tol
    dominate_in_s = (not idx_rest_s or
                     float(vals_sp.min()) >= float(phis[idx_rest_s].max()) - tol)
    interior = in_relative_interior(prod.points[idx_sp], vv, tol=max(tol, 1e-9))
    in_x = bool(interior and equal and dominate_in_s)
    in_y = bool(not idx_out or
                float(vals_sp.min()) >= float(phis[idx_out].max()) - tol)
    return FaceCheck(in_x, in_y)
