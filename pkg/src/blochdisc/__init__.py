"""Minimum-error discrimination of qubit ensembles on the Bloch sphere.

Plain discrimination, discrimination with post-measurement information, the
closed-form 2x2 classification, and an independent dual-minimax oracle with
KKT certification.
"""

from .core import (BlochVector, Effect, MepiEnsemble, Povm, PovmReport,
                   ShapeError, ValidationError, WeightedEnsemble,
                   WeightedState, effect_probability, identity_povm, phi,
                   success_probability, to_json, validate_povm)
from .me import (DualCertificate, KktReport, MeSolution, TrivialCheck,
                 check_no_measurement, construct_povm_from_v, kkt_verify,
                 pair_z, solve_me, trivial_optimal_check)
from .mepi import (FaceCheck, InternalConsistencyError, MepiClassification,
                   MepiScalars, ProductEnsemble, classify_2x2,
                   face_predicates, incompatibility_gap, marginal_povms,
                   optimal_povm_2x2, post_guess_probability,
                   pre_strictly_better, prior_guess_probability,
                   product_ensemble, trivial_mepi_check)
from .oracle import (Certification, ConvergenceError, MinimaxOptions,
                     MinimaxResult, certify, dual_minimax, max_phi,
                     primal_strategy_scan)

__version__ = "0.1.0"

__all__ = [
    "BlochVector", "Effect", "WeightedState", "WeightedEnsemble",
    "MepiEnsemble", "Povm", "PovmReport", "ValidationError", "ShapeError",
    "effect_probability", "success_probability", "phi", "validate_povm",
    "identity_povm", "to_json",
    "TrivialCheck", "DualCertificate", "MeSolution", "KktReport",
    "check_no_measurement", "trivial_optimal_check", "pair_z", "solve_me",
    "construct_povm_from_v", "kkt_verify",
    "ProductEnsemble", "MepiScalars", "MepiClassification", "FaceCheck",
    "InternalConsistencyError", "product_ensemble", "prior_guess_probability",
    "post_guess_probability", "marginal_povms", "pre_strictly_better",
    "trivial_mepi_check", "classify_2x2", "optimal_povm_2x2",
    "face_predicates", "incompatibility_gap",
    "MinimaxOptions", "MinimaxResult", "Certification", "ConvergenceError",
    "dual_minimax", "certify", "max_phi", "primal_strategy_scan",
]
