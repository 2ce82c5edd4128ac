"""Command-line front end.

Subcommands::

    solve-me    solve a plain ensemble (JSON with "states")
    solve-mepi  solve a split ensemble (JSON with "subensembles")
    classify    closed-form classification of a 2x2 split ensemble
    verify      KKT / duality report for an ensemble + POVM (+ optional s, v)
    oracle      run the dual minimax alone
    geometry    export the 2x2 weighted-point geometry for plotting

Exit codes: 0 success, 2 validation error, 3 solver non-convergence,
4 internal-consistency or certification failure.  Results print to stdout
(or ``--output``); diagnostics go to stderr.  Solve commands refuse to print
an uncertified value unless ``--uncertified`` is given.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import core, me, mepi, oracle
from .core import (MepiEnsemble, Povm, ShapeError, ValidationError,
                   WeightedEnsemble, to_json, validate_povm)
from .mepi import InternalConsistencyError
from .oracle import ConvergenceError, MinimaxOptions

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CONVERGENCE = 3
EXIT_INTERNAL = 4

CERT_TOL = 1e-8


class _CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _load_document(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise _CliError(EXIT_VALIDATION, f"cannot read {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise _CliError(EXIT_VALIDATION, f"{path} is not valid JSON: {exc}")


def _make_opts(args) -> MinimaxOptions:
    kwargs = {}
    if args.seed is not None:
        kwargs["seed"] = args.seed
    if args.tol_value is not None:
        if args.tol_value <= 0:
            raise _CliError(EXIT_VALIDATION, "--tol-value must be positive")
        kwargs["tol_value"] = args.tol_value
    return MinimaxOptions(**kwargs)


def _tol_class(args) -> float:
    if args.tol_class is None:
        return me.TOL_CLASS
    if args.tol_class <= 0:
        raise _CliError(EXIT_VALIDATION, "--tol-class must be positive")
    return args.tol_class


def _emit(args, text: str):
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
            if not text.endswith("\n"):
                fh.write("\n")
    else:
        print(text)


def _require_json_format(args):
    if args.format != "json":
        raise _CliError(EXIT_VALIDATION,
                        f"format {args.format!r} is only available for geometry")


def _gate_certification(args, cert: oracle.Certification):
    if cert.passed or args.uncertified:
        return
    raise _CliError(
        EXIT_INTERNAL,
        f"certification failed (gap {cert.gap:.3e}, kkt {cert.kkt_pass}); "
        f"rerun with --uncertified to print the value anyway")


def _cmd_solve_me(args) -> int:
    _require_json_format(args)
    ens = WeightedEnsemble.from_dict(_load_document(args.input))
    sol = me.solve_me(ens, _make_opts(args), tol_class=_tol_class(args))
    cert = oracle.certify(ens, sol.povm, sol.certificate.s, sol.v_star, CERT_TOL)
    _gate_certification(args, cert)
    _emit(args, to_json({"solution": sol.to_dict(),
                         "certification": cert.to_dict(),
                         "certified": cert.passed}))
    return EXIT_OK


def _solve_mepi_payload(args, ens: MepiEnsemble) -> dict:
    opts = _make_opts(args)
    prior = mepi.prior_guess_probability(ens, opts)
    post = mepi.post_guess_probability(ens, opts)
    prod = mepi.product_ensemble(ens)
    cert = oracle.certify(prod.ensemble, post.povm, post.certificate.s,
                          post.v_star, CERT_TOL)
    _gate_certification(args, cert)
    classification = None
    if ens.is_2x2():
        cls = mepi.classify_2x2(ens, _tol_class(args), opts)
        if abs(cls.p_post - post.p_guess) > 1e-7:
            raise InternalConsistencyError(
                f"closed form {cls.p_post!r} vs oracle {post.p_guess!r}")
        classification = cls.to_dict()
    return {"p_post": post.p_guess,
            "p_prior": prior.p_prior,
            "gap": max(0.0, prior.p_prior - post.p_guess),
            "classification": classification,
            "solution": post.to_dict(),
            "per_subensemble": [s.to_dict() for s in prior.per_subensemble],
            "certification": cert.to_dict(),
            "certified": cert.passed}


def _cmd_solve_mepi(args) -> int:
    _require_json_format(args)
    ens = MepiEnsemble.from_dict(_load_document(args.input))
    _emit(args, to_json(_solve_mepi_payload(args, ens)))
    return EXIT_OK


def _cmd_classify(args) -> int:
    _require_json_format(args)
    ens = MepiEnsemble.from_dict(_load_document(args.input))
    opts = _make_opts(args)
    cls = mepi.classify_2x2(ens, _tol_class(args), opts)
    prod = mepi.product_ensemble(ens)
    if cls.degenerate:
        sol = mepi.post_guess_probability(ens, opts)
        cert = oracle.certify(prod.ensemble, sol.povm, sol.certificate.s,
                              sol.v_star, CERT_TOL)
    else:
        povm = mepi.optimal_povm_2x2(ens, cls)
        cert = oracle.certify(prod.ensemble, povm, cls.p_post, cls.v_star,
                              CERT_TOL)
    _gate_certification(args, cert)
    _emit(args, to_json({"classification": cls.to_dict(),
                         "certification": cert.to_dict(),
                         "certified": cert.passed}))
    return EXIT_OK


def _cmd_verify(args) -> int:
    _require_json_format(args)
    doc = _load_document(args.input)
    if "ensemble" not in doc or "povm" not in doc:
        raise _CliError(EXIT_VALIDATION,
                        "verify input needs 'ensemble' and 'povm' entries")
    ens = WeightedEnsemble.from_dict(doc["ensemble"])
    povm = Povm.from_dict(doc["povm"], validate=False)
    structure = validate_povm(povm)
    if "s" in doc and "v" in doc:
        s = float(doc["s"])
        v = [float(x) for x in doc["v"]]
        dual_source = "input"
    else:
        res = oracle.dual_minimax(ens, _make_opts(args))
        s = res.s_star
        v = [float(x) for x in res.v_star]
        dual_source = "oracle"
    cert = oracle.certify(ens, povm, s, v, CERT_TOL)
    _emit(args, to_json({"povm_constraints": structure.to_dict(),
                         "dual_source": dual_source,
                         "s": s, "v": v,
                         "certification": cert.to_dict()}))
    return EXIT_OK


def _cmd_oracle(args) -> int:
    _require_json_format(args)
    doc = _load_document(args.input)
    if "subensembles" in doc:
        ens = mepi.product_ensemble(MepiEnsemble.from_dict(doc)).ensemble
    else:
        ens = WeightedEnsemble.from_dict(doc)
    res = oracle.dual_minimax(ens, _make_opts(args))
    _emit(args, to_json(res.to_dict()))
    return EXIT_OK


def _geometry_data(args, ens: MepiEnsemble):
    cls = mepi.classify_2x2(ens, _tol_class(args), _make_opts(args))
    prod = mepi.product_ensemble(ens)
    order = [(1, 1), (1, 2), (2, 1), (2, 2)]
    vertices = [(label, prod.point_of(label)) for label in order]
    case = cls.primary_case if cls.cases else "Degenerate_prior_equals_post"
    return cls, vertices, case


def _cmd_geometry(args) -> int:
    ens = MepiEnsemble.from_dict(_load_document(args.input))
    cls, vertices, case = _geometry_data(args, ens)
    if args.format == "csv":
        rows = []
        for label, point in vertices:
            tag = "-".join(str(c) for c in label)
            rows.append(f"vertex,{tag},{point[0]!r},{point[1]!r},{point[2]!r}")
        if cls.v_star is not None:
            v = cls.v_star
            rows.append(f"zpoint,-,{v[0]!r},{v[1]!r},{v[2]!r}")
        rows.append(f"case,{case}")
        _emit(args, "\n".join(rows))
    else:
        _emit(args, to_json({
            "vertices": [{"label": list(label), "point": [float(x) for x in pt]}
                         for label, pt in vertices],
            "v_star": None if cls.v_star is None else
            [float(x) for x in cls.v_star],
            "case": case,
            "cases": list(cls.cases)}))
    return EXIT_OK


_COMMANDS = {
    "solve-me": _cmd_solve_me,
    "solve-mepi": _cmd_solve_mepi,
    "classify": _cmd_classify,
    "verify": _cmd_verify,
    "oracle": _cmd_oracle,
    "geometry": _cmd_geometry,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blochdisc",
        description="Minimum-error discrimination of qubit ensembles, with "
                    "and without post-measurement information")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
            ("solve-me", "solve a plain weighted ensemble"),
            ("solve-mepi", "solve an ensemble with late label information"),
            ("classify", "closed-form classification of a 2x2 instance"),
            ("verify", "KKT / duality report for an ensemble and POVM"),
            ("oracle", "run the dual minimax solver alone"),
            ("geometry", "export weighted-point geometry for plotting")]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--input", required=True, help="input JSON file")
        p.add_argument("--output", help="output file (default: stdout)")
        p.add_argument("--tol-class", type=float, default=None,
                       help="tolerance for classification comparisons")
        p.add_argument("--tol-value", type=float, default=None,
                       help="oracle value tolerance")
        p.add_argument("--seed", type=int, default=None,
                       help="oracle restart seed")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--uncertified", action="store_true",
                       help="print values even when certification fails")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = _COMMANDS[args.command]
    try:
        return handler(args)
    except _CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ValidationError, ShapeError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConvergenceError as exc:
        print(f"solver did not converge: {exc} "
              f"(best value {exc.best_s!r} at {list(exc.best_v)!r})",
              file=sys.stderr)
        return EXIT_CONVERGENCE
    except InternalConsistencyError as exc:
        print(f"internal consistency error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
