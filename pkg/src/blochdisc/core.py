"""Bloch-sphere data model shared by all solvers.

Qubit states, measurement effects and ensembles are kept purely in Bloch
coordinates: a state is ``rho = (1 + nu.sigma)/2`` with ``|nu| <= 1`` and an
effect is ``M = p (1 + u.sigma)`` with ``p >= 0``, ``|u| <= 1``.  No complex
2x2 matrices are materialised anywhere; every quantity the solvers need is a
function of weights and real 3-vectors.

All types are immutable after construction and all operations are pure
functions, so values can be shared freely between threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

# Norm / completeness tolerance for type invariants.  Unit vectors produced by
# normalising differences carry ~1 ulp of drift, which this absorbs.
TOL_GEOM = 1e-12


class ValidationError(ValueError):
    """Raised when an input violates a type invariant or schema."""


class ShapeError(ValidationError):
    """Raised when an operation requires a specific ensemble shape."""


def _as_xyz(value) -> tuple[float, float, float]:
    seq = tuple(float(c) for c in value)
    if len(seq) != 3:
        raise ValidationError(f"expected 3 components, got {len(seq)}")
    for c in seq:
        if not math.isfinite(c):
            raise ValidationError("non-finite component in 3-vector")
    return seq


@dataclass(frozen=True)
class BlochVector:
    """Point in R^3 with norm <= 1 (+ tolerance) encoding a qubit state."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "z", float(self.z))
        n = self.norm()
        if not math.isfinite(n):
            raise ValidationError("non-finite Bloch vector")
        if n > 1.0 + TOL_GEOM:
            raise ValidationError(f"Bloch vector norm {n!r} exceeds 1")
        if n > 1.0:
            # within tolerance of the sphere: clamp onto it
            object.__setattr__(self, "x", self.x / n)
            object.__setattr__(self, "y", self.y / n)
            object.__setattr__(self, "z", self.z / n)

    @classmethod
    def of(cls, value: Sequence[float] | "BlochVector") -> "BlochVector":
        if isinstance(value, BlochVector):
            return value
        return cls(*_as_xyz(value))

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    def dot(self, other: "BlochVector") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.z]


@dataclass(frozen=True)
class WeightedState:
    """A qubit state together with its (positive) preparation weight."""

    weight: float
    bloch: BlochVector

    def __post_init__(self):
        object.__setattr__(self, "weight", float(self.weight))
        object.__setattr__(self, "bloch", BlochVector.of(self.bloch))
        if not (self.weight > 0.0) or not math.isfinite(self.weight):
            raise ValidationError(f"state weight must be positive, got {self.weight!r}")

    def weighted_point(self) -> np.ndarray:
        """The point ``weight * bloch`` all solver geometry is built on."""
        return self.weight * self.bloch.as_array()


@dataclass(frozen=True)
class WeightedEnsemble:
    """Ordered list of weighted qubit states, greatest weight first.

    Construction stably sorts the states by descending weight (ties keep the
    input order), so index 0 always carries the greatest weight.  Callers that
    pair the ensemble with an index-aligned POVM must build the POVM against
    the sorted order.

    ``normalized`` records whether the weights sum to one; product ensembles
    deliberately do not (their total exceeds one).  When it is not given it is
    inferred from the weight total.
    """

    states: tuple[WeightedState, ...]
    normalized: bool = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        states = tuple(self.states)
        if len(states) < 2:
            raise ValidationError("an ensemble needs at least 2 states")
        states = tuple(sorted(states, key=lambda s: -s.weight))
        object.__setattr__(self, "states", states)
        total = math.fsum(s.weight for s in states)
        if self.normalized is None:
            object.__setattr__(self, "normalized", abs(total - 1.0) <= 1e-12)
        elif self.normalized and abs(total - 1.0) > 1e-12:
            raise ValidationError(f"weights sum to {total!r}, not 1")

    @classmethod
    def of(cls, pairs: Iterable[tuple[float, Sequence[float]]],
           normalized: Optional[bool] = None) -> "WeightedEnsemble":
        return cls(tuple(WeightedState(w, BlochVector.of(b)) for w, b in pairs),
                   normalized)

    def __len__(self) -> int:
        return len(self.states)

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def weights(self) -> np.ndarray:
        return np.array([s.weight for s in self.states])

    @property
    def points(self) -> np.ndarray:
        """n x 3 array of weighted Bloch points ``w_i * nu_i``."""
        return np.array([s.weighted_point() for s in self.states])

    def total_weight(self) -> float:
        return math.fsum(s.weight for s in self.states)

    def to_dict(self) -> dict:
        return {"states": [{"weight": s.weight, "bloch": s.bloch.as_list()}
                           for s in self.states]}

    @classmethod
    def from_dict(cls, data: dict) -> "WeightedEnsemble":
        try:
            states = data["states"]
        except (KeyError, TypeError):
            raise ValidationError("ensemble document needs a 'states' list")
        return cls.of((s["weight"], s["bloch"]) for s in states)


@dataclass(frozen=True)
class Effect:
    """Measurement element ``M = p (1 + u.sigma)`` with p >= 0, |u| <= 1."""

    p: float
    u: BlochVector

    def __post_init__(self):
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "u", BlochVector.of(self.u))
        if not math.isfinite(self.p) or self.p < -TOL_GEOM:
            raise ValidationError(f"effect scale must be >= 0, got {self.p!r}")
        if self.p < 0.0:
            object.__setattr__(self, "p", 0.0)

    def to_dict(self) -> dict:
        return {"p": self.p, "u": self.u.as_list()}


def _label_key(label):
    return tuple(label) if isinstance(label, (tuple, list)) else label


@dataclass(frozen=True)
class Povm:
    """A finite POVM in Bloch form.

    Completeness in Bloch coordinates reads ``sum p_i = 1`` and
    ``sum p_i u_i = 0``; both are enforced at construction (within ``tol``)
    unless ``validate=False``, which is reserved for building measurement
    candidates that are then inspected with :func:`validate_povm`.

    ``outcome_labels`` default to plain 0-based indices; discrimination with
    post-measurement information labels outcomes with 1-based tuples instead.
    """

    effects: tuple[Effect, ...]
    outcome_labels: tuple = None  # type: ignore[assignment]
    validate: bool = True
    tol: float = TOL_GEOM

    def __post_init__(self):
        effects = tuple(self.effects)
        object.__setattr__(self, "effects", effects)
        if self.outcome_labels is None:
            object.__setattr__(self, "outcome_labels", tuple(range(len(effects))))
        else:
            labels = tuple(_label_key(l) for l in self.outcome_labels)
            if len(labels) != len(effects):
                raise ValidationError("one outcome label per effect required")
            object.__setattr__(self, "outcome_labels", labels)
        if self.validate:
            report = validate_povm(self, self.tol)
            if not report.ok:
                raise ValidationError(f"invalid POVM: {report.describe()}")

    def __len__(self) -> int:
        return len(self.effects)

    @property
    def ps(self) -> np.ndarray:
        return np.array([e.p for e in self.effects])

    @property
    def us(self) -> np.ndarray:
        return np.array([e.u.as_array() for e in self.effects])

    def effect_for(self, label) -> Effect:
        return self.effects[self.outcome_labels.index(_label_key(label))]

    def to_dict(self) -> dict:
        out = []
        for e, label in zip(self.effects, self.outcome_labels):
            d = e.to_dict()
            if label is not None:
                d["label"] = list(label) if isinstance(label, tuple) else label
            out.append(d)
        return {"effects": out}

    @classmethod
    def from_dict(cls, data: dict, validate: bool = True) -> "Povm":
        try:
            raw = data["effects"]
        except (KeyError, TypeError):
            raise ValidationError("POVM document needs an 'effects' list")
        effects = tuple(Effect(e["p"], BlochVector.of(e["u"])) for e in raw)
        labels = [e.get("label", i) for i, e in enumerate(raw)]
        return cls(effects, tuple(labels), validate=validate)


@dataclass(frozen=True)
class MepiEnsemble:
    """Ensemble split into subensembles whose label arrives after measuring.

    Each subensemble is itself a :class:`WeightedEnsemble` (unnormalised on
    its own); the grand total of all weights must be 1.  Within a subensemble
    index 0 carries the greatest weight, inherited from the subensemble
    constructor.
    """

    subensembles: tuple[WeightedEnsemble, ...]

    def __post_init__(self):
        subs = tuple(self.subensembles)
        if len(subs) < 2:
            raise ValidationError("need at least 2 subensembles")
        object.__setattr__(self, "subensembles", subs)
        total = math.fsum(s.weight for sub in subs for s in sub.states)
        if abs(total - 1.0) > 1e-12:
            raise ValidationError(f"grand weight total is {total!r}, not 1")

    @property
    def m(self) -> int:
        return len(self.subensembles)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(sub) for sub in self.subensembles)

    def is_2x2(self) -> bool:
        return self.shape == (2, 2)

    def to_dict(self) -> dict:
        return {"subensembles": [sub.to_dict() for sub in self.subensembles]}

    @classmethod
    def from_dict(cls, data: dict) -> "MepiEnsemble":
        try:
            subs = data["subensembles"]
        except (KeyError, TypeError):
            raise ValidationError("MEPI document needs a 'subensembles' list")
        return cls(tuple(WeightedEnsemble.from_dict(s) for s in subs))


# ---------------------------------------------------------------------------
# Basic functionals
# ---------------------------------------------------------------------------

def effect_probability(effect: Effect, bloch: BlochVector | Sequence[float]) -> float:
    """Outcome probability ``p (1 + u.nu)`` of an effect on a state.

    The exact value lies in [0, 2p] for valid inputs; only rounding noise
    within the geometric tolerance is clamped away.
    """
    nu = BlochVector.of(bloch)
    raw = effect.p * (1.0 + effect.u.dot(nu))
    return min(max(raw, 0.0), 2.0 * effect.p)


def success_probability(ensemble: WeightedEnsemble, povm: Povm) -> float:
    """Average probability that outcome i fires on state i.

    The ensemble and POVM are index-aligned; a length mismatch signals a
    malformed pairing.
    """
    if len(ensemble) != len(povm):
        raise ValidationError(
            f"ensemble has {len(ensemble)} states but POVM has {len(povm)} effects")
    return math.fsum(
        s.weight * effect_probability(e, s.bloch)
        for s, e in zip(ensemble.states, povm.effects))


def phi(ensemble: WeightedEnsemble, i: int, v: Sequence[float]) -> float:
    """``w_i + |w_i nu_i - v|``: the dual objective term for state i."""
    s = ensemble.states[i]
    p = s.weighted_point()
    vx, vy, vz = float(v[0]), float(v[1]), float(v[2])
    dx, dy, dz = p[0] - vx, p[1] - vy, p[2] - vz
    return s.weight + math.sqrt(dx * dx + dy * dy + dz * dz)


@dataclass(frozen=True)
class PovmReport:
    """Constraint-by-constraint validation of a candidate POVM."""

    violations: tuple[tuple[str, float], ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def describe(self) -> str:
        if self.ok:
            return "valid"
        return "; ".join(f"{name} residual {mag:.3e}" for name, mag in self.violations)

    def to_dict(self) -> dict:
        return {"ok": self.ok,
                "violations": [{"constraint": n, "residual": m}
                               for n, m in self.violations]}


def validate_povm(povm: Povm, tol: float = TOL_GEOM) -> PovmReport:
    """Check positivity (P0), unit total (P1) and zero moment (P2)."""
    violations = []
    worst_p = 0.0
    worst_u = 0.0
    for e in povm.effects:
        worst_p = max(worst_p, -e.p)
        worst_u = max(worst_u, e.u.norm() - 1.0)
    if worst_p > tol:
        violations.append(("P0 effect scale >= 0", worst_p))
    if worst_u > tol:
        violations.append(("P0 axis norm <= 1", worst_u))
    total = math.fsum(e.p for e in povm.effects)
    if abs(total - 1.0) > tol:
        violations.append(("P1 scales sum to 1", abs(total - 1.0)))
    mx = math.fsum(e.p * e.u.x for e in povm.effects)
    my = math.fsum(e.p * e.u.y for e in povm.effects)
    mz = math.fsum(e.p * e.u.z for e in povm.effects)
    moment = math.sqrt(mx * mx + my * my + mz * mz)
    if moment > tol:
        violations.append(("P2 weighted axes cancel", moment))
    return PovmReport(tuple(violations))


def identity_povm(n: int, outcome: int = 0, outcome_labels=None) -> Povm:
    """The n-outcome POVM whose single non-null effect is the identity."""
    effects = tuple(Effect(1.0 if i == outcome else 0.0, BlochVector(0, 0, 0))
                    for i in range(n))
    return Povm(effects, outcome_labels)


def to_json(obj) -> str:
    """Canonical JSON used everywhere: sorted keys, shortest float repr."""
    if hasattr(obj, "to_dict"):
        obj = obj.to_dict()
    return json.dumps(obj, sort_keys=True, separators=(",", ": "), indent=1)
