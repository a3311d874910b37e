"""Command-line entry point ``nl4s``."""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

import yaml

from .exponents import (
    ExponentDomainError,
    compute_paper_exponents,
    gamma_pq,
    is_biharmonic_admissible,
    is_schrodinger_admissible,
)
from .experiments import KINDS, RunConfig, apply_overrides, clean_json, run_experiment, verify_manifest


def _parse_overrides(extra: Sequence[str]) -> dict:
    """Turn ``--a.b value`` pairs into ``{"a.b": value}`` with YAML scalar typing."""
    out = {}
    it = iter(extra)
    for tok in it:
        if not tok.startswith("--"):
            raise SystemExit(f"unexpected argument {tok!r}; overrides look like --key value")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
        else:
            try:
                val = next(it)
            except StopIteration:
                raise SystemExit(f"override --{key} needs a value") from None
        out[key.replace("-", "_") if "." not in key else key] = yaml.safe_load(val)
    return out


def _load_config(path: Optional[str], kind: Optional[str], overrides: dict) -> RunConfig:
    raw = {}
    if path:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
    if kind:
        raw["kind"] = kind
    raw = apply_overrides(raw, overrides)
    return RunConfig.from_dict(raw)


def _report(man) -> int:
    print(json.dumps({"kind": man.kind, "passed": man.passed, "assertions": man.assertions, "errors": man.errors, "advisories": man.advisories}, indent=2, default=str))
    return 0 if man.passed else 1


def _num(s: str):
    s = s.strip().lower()
    if s in ("inf", "infinity", "oo"):
        return float("inf")
    try:
        return Fraction(s)
    except ValueError:
        return float(s)


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = argparse.ArgumentParser(prog="nl4s", description="Fourth-order NLS spectral laboratory")
    sub = ap.add_subparsers(dest="cmd", required=True)

    for name, helptext in (("ground-state", "solve for Q and certify it"), ("evolve", "integrate one configured run")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config")
        sp.add_argument("--out")

    sp = sub.add_parser("experiment", help="run one experiment kind")
    sp.add_argument("kind", choices=[k for k in KINDS if k != "evolve"])
    sp.add_argument("--config")
    sp.add_argument("--out")

    sp = sub.add_parser("exponents", help="thresholds and exponents for (d, gamma, delta)")
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--gamma", type=float, required=True)
    sp.add_argument("--delta", type=float)

    sp = sub.add_parser("check-pair", help="scaling gap and admissibility of (p, q)")
    sp.add_argument("--p", required=True)
    sp.add_argument("--q", required=True)
    sp.add_argument("--d", type=int, required=True)

    sp = sub.add_parser("verify", help="check a manifest's file hashes")
    sp.add_argument("manifest")

    args, extra = ap.parse_known_args(argv)

    if args.cmd in ("ground-state", "evolve", "experiment"):
        kind = {"ground-state": "ground_state", "evolve": "evolve"}.get(args.cmd) or args.kind
        cfg = _load_config(args.config, kind, _parse_overrides(extra))
        return _report(run_experiment(cfg, args.out))
    if extra:
        ap.error(f"unrecognized arguments: {' '.join(extra)}")

    if args.cmd == "exponents":
        try:
            rep = compute_paper_exponents(args.d, args.gamma, args.delta, strict=False)
        except (ExponentDomainError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        print(json.dumps(clean_json(rep.to_dict()), indent=2))
        return 0

    if args.cmd == "check-pair":
        p, q = _num(args.p), _num(args.q)
        g = gamma_pq(p, q, args.d)
        out = {
            "p": str(p),
            "q": str(q),
            "d": args.d,
            "gamma_pq": str(g),
            "schrodinger_admissible": is_schrodinger_admissible(p, q, args.d),
            "biharmonic_admissible": is_biharmonic_admissible(p, q, args.d),
        }
        print(json.dumps(out, indent=2))
        return 0 if out["biharmonic_admissible"] else 1

    if args.cmd == "verify":
        problems = verify_manifest(Path(args.manifest))
        for pr in problems:
            print(pr)
        if not problems:
            print("all hashes match")
        return 0 if not problems else 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
