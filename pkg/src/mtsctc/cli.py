"""Command line front end: ``mtsctc convert|prob|order|selftest``.

Exit status is 0 when every check passes, 1 when a check fails or the input
is rejected by a numerical precondition, and 2 for usage and parse errors.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from . import fileio, selftest
from .bridge import (
    Strategy,
    circuit_to_mts,
    circuit_to_mts_by_composition,
    comb_setting_to_mt_instrument,
    expected_ctc_dims,
    mts_to_pctc_comb,
    partition_spaces,
    pctc_comb_to_mts,
)
from .circuit import circuit_comb
from .errors import DimensionMismatch, MissingTimeLabels, MtsCtcError, ParseError
from .linalg import proportionality_residual
from .mts import MtDensityVector, MtInstrument, abl_probability
from .order import audit_stretches, decide_order, is_isomorphic
from .pctc import comb_probability
from .report import Check, Report

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _outcome_key(lab) -> str:
    return ",".join(lab) if isinstance(lab, tuple) else str(lab)


def _compare(name: str, target: MtDensityVector, got: MtDensityVector, tol: float, rep: Report):
    """Proportionality check; returns the constant target = k * got."""
    if got.space != target.space:
        rep.add(Check.flag(name, False, "spaces differ"))
        return None
    k, res = proportionality_residual(target.op, got.op)
    rep.add(Check.below(name, res, tol))
    return k


def _plan_metadata(plan) -> dict:
    return {
        "claimed_constant": fileio.enc_complex(plan.claimed_constant),
        "ctc_dims": list(plan.ctc_dims),
        "mixture_weights": [float(p) for p in plan.mixture_weights],
        "term_constants": [fileio.enc_complex(k) for k in plan.term_constants],
        "stretches": [{"system": s.system, "direction": s.direction.value,
                       "from": fileio.enc_fraction(s.from_time), "to": fileio.enc_fraction(s.to_time),
                       "via_ctc": s.via_ctc} for s in plan.stretches],
    }


def _convert_mts(eta: MtDensityVector, args, rep: Report) -> dict:
    plan = mts_to_pctc_comb(eta, Strategy(args.strategy), tol=args.tol)
    circ = plan.circuit
    circ.metadata.update(_plan_metadata(plan))
    back = circuit_to_mts(circ)
    k = _compare("reproduces_input", eta, back, args.tol, rep)
    if k is not None:
        claimed = plan.claimed_constant
        rep.add(Check.below("claimed_constant", abs(k - claimed) / max(1.0, abs(claimed)), args.tol))
    want = expected_ctc_dims(eta.space, Strategy(args.strategy))
    rep.add(Check.flag("ctc_budget", list(plan.ctc_dims) == want,
                       f"used {list(plan.ctc_dims)}, expected {want}"))
    problems = audit_stretches(plan.stretches)
    rep.add(Check.flag("stretches_free", not problems, "; ".join(problems)))
    part = partition_spaces(eta.space)
    chosen = Strategy(circ.metadata["strategy"])
    teleported = part.b2 if chosen is Strategy.USE_B2 else part.f1
    rep.results.update({"direction": "mts->circuit", "strategy": chosen.value,
                        "ctc_count": plan.ctc_count, "ctc_dims": list(plan.ctc_dims),
                        "teleporting_ctcs": len(teleported),
                        "claimed_constant": fileio.enc_complex(plan.claimed_constant),
                        "mixture_terms": len(plan.mixture_weights)})
    return fileio.circuit_doc(circ)


def _convert_circuit(c, args, rep: Report) -> dict:
    eta = circuit_to_mts(c)
    try:
        other = circuit_to_mts_by_composition(c)
    except DimensionMismatch as exc:
        rep.results["composition_check"] = f"skipped: {exc}"
    else:
        _compare("composition_route_agrees", eta, other, args.tol, rep)
    rep.results.update({"direction": "circuit->mts", "factors": len(eta.space),
                        "ctc_dims": list(c.ctc_dims)})
    return fileio.mts_doc(eta)


def cmd_convert(args) -> tuple[Report, Optional[dict]]:
    doc = fileio.read(args.input)
    rep = Report("convert")
    if doc["kind"] == "mts":
        out = _convert_mts(fileio.mts_from_doc(doc), args, rep)
    elif doc["kind"] == "circuit":
        out = _convert_circuit(fileio.circuit_from_doc(doc), args, rep)
    else:
        raise ParseError(f"cannot convert a {doc['kind']!r} document")
    return rep, out


def cmd_prob(args) -> tuple[Report, None]:
    obj = fileio.read(args.object)
    inst = fileio.instrument_from_doc(fileio.read(args.instruments))
    rep = Report("prob")
    if isinstance(inst, MtInstrument):
        if obj["kind"] == "mts":
            eta = fileio.mts_from_doc(obj)
        elif obj["kind"] == "circuit":
            eta = circuit_to_mts(fileio.circuit_from_doc(obj))
        else:
            raise ParseError(f"cannot measure a {obj['kind']!r} document")
        probs = abl_probability(eta, inst)
        rep.results["rule"] = "abl"
    else:
        if obj["kind"] != "circuit":
            raise ParseError("slot instruments need a circuit document")
        comb = circuit_comb(fileio.circuit_from_doc(obj))
        rho0, insts = inst
        table = comb_probability(comb, rho0, insts)
        probs = table.probs
        rep.results["rule"] = "comb"
        rep.results["denominator"] = table.denominator
        try:
            abl = abl_probability(pctc_comb_to_mts(comb), comb_setting_to_mt_instrument(comb, rho0, insts))
        except MissingTimeLabels as exc:
            rep.results["abl_check"] = f"skipped: {exc}"
        else:
            gap = max(abs(probs[k] - abl[k]) for k in probs)
            rep.add(Check.below("abl_agrees", gap, args.tol))
    rep.results["probabilities"] = {_outcome_key(k): float(v) for k, v in probs.items()}
    total = sum(probs.values())
    rep.add(Check.below("normalized", abs(total - 1.0), args.tol))
    return rep, None


def cmd_order(args) -> tuple[Report, None]:
    a = fileio.mts_from_doc(fileio.read(args.a))
    b = fileio.mts_from_doc(fileio.read(args.b))
    rep = Report("order")
    profile = is_isomorphic(a, b, args.tol)
    if profile is None:
        # a verdict about the inputs, not a failed check
        rep.results["relation"] = "not_isomorphic"
        return rep, None
    v = decide_order(profile)
    rep.results["relation"] = v.relation.value
    if v.witness is not None:
        rep.results["witness"] = [{"system": s.system, "direction": s.direction.value,
                                   "from": s.from_time, "to": s.to_time} for s in v.witness]
    if v.certificate:
        rep.results["certificate"] = v.certificate
    return rep, None


def cmd_selftest(args) -> tuple[Report, None]:
    return selftest.run(args.seed, args.inject), None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mtsctc", description="Multiple-time states and P-CTC circuits.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=1e-9, help="numerical tolerance (default 1e-9)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output file")
    common.add_argument("--format", choices=("human", "machine"), default="human")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("convert", parents=[common], help="MTS <-> circuit conversion")
    c.add_argument("input")
    c.add_argument("--strategy", choices=[s.value for s in Strategy], default="auto")
    c.set_defaults(func=cmd_convert)

    r = sub.add_parser("prob", parents=[common], help="outcome probabilities")
    r.add_argument("object")
    r.add_argument("instruments")
    r.set_defaults(func=cmd_prob)

    o = sub.add_parser("order", parents=[common], help="compare two time orderings")
    o.add_argument("a")
    o.add_argument("b")
    o.set_defaults(func=cmd_order)

    s = sub.add_parser("selftest", parents=[common], help="seeded consistency checks")
    s.add_argument("--inject", choices=selftest.INJECTIONS)
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rep, out = args.func(args)
    except ParseError as exc:
        print(f"mtsctc: parse error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MtsCtcError as exc:
        print(f"mtsctc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CHECK
    if out is not None:
        # converted document goes to --out, or to stdout with the report on stderr
        if args.out:
            fileio.write(args.out, out)
            rep.results["output"] = args.out
            sys.stdout.write(rep.render(args.format))
        else:
            sys.stdout.write(fileio.dumps(out))
            sys.stderr.write(rep.render(args.format))
    else:
        text = rep.render(args.format)
        if args.out:
            fileio.write(args.out, rep.to_doc())
        sys.stdout.write(text)
    return EXIT_OK if rep.ok else EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
