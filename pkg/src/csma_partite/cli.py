"""Command-line interface: single-instance reports, nu-sweeps with power-law fits, validation.

Exit codes: 0 success, 1 validation or contract error, 2 capacity error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CapacityError, PartiteError, ValidationError
from .hitting import (
    HittingQuery,
    asymptotic_mean,
    escape_params,
    limit_law,
    limit_law_cdf,
    mean_hitting_time,
)
from .mixing import mixing_report
from .model import (
    PartiteNetwork,
    aggregate,
    build_generator,
    build_network,
    load_network,
    parse_state,
    stationary_agg,
    stationary_full,
)
from .montecarlo import ks_critical, ks_statistic, sample_hitting_time, sample_limit_law
from .spectral import absorption_spectrum, far_end, phase_type_cdf
from .validation import run_validation

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class PowerLawFit:
    slope: float
    log_intercept: float
    r_squared: float

    @property
    def prefactor(self) -> float:
        return math.exp(self.log_intercept)

    def as_dict(self) -> dict:
        return {"slope": self.slope, "log_intercept": self.log_intercept,
                "prefactor": self.prefactor, "r_squared": self.r_squared}


def fit_power_law(points: Sequence[tuple[float, float]]) -> PowerLawFit:
    """Least-squares line through ``(log nu, log value)``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
        raise ValidationError("a power-law fit needs at least two (nu, value) points")
    if np.any(pts <= 0):
        raise ValidationError("power-law fit needs positive nu and values")
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    if np.ptp(x) == 0:
        raise ValidationError("power-law fit needs at least two distinct nu values")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else max(0.0, min(1.0, 1.0 - float(np.sum(resid ** 2)) / ss_tot))
    return PowerLawFit(float(slope), float(intercept), r2)


# --- helpers -----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _sizes(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",")]
    except ValueError:
        raise ValidationError(f"sizes: malformed list {text!r}; expected e.g. 3,2") from None


def _network(args) -> PartiteNetwork:
    if getattr(args, "network", None):
        if args.sizes is not None or args.nu is not None:
            raise ValidationError("give either --network or --sizes/--nu, not both")
        return load_network(args.network)
    if args.sizes is None or args.nu is None:
        raise ValidationError("--sizes and --nu are required (or --network FILE)")
    return build_network(_sizes(args.sizes), args.nu)


def _require_seed(args, flag: str) -> int:
    if args.seed is None:
        raise ValidationError(f"{flag} needs an explicit --seed")
    return args.seed


def _json(obj: dict) -> str:
    return json.dumps({"schema_version": SCHEMA_VERSION, **obj}, indent=2, sort_keys=True) + "\n"


def _csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


# --- subcommands ---------------------------------------------------------------

def cmd_stationary(args) -> str:
    net = _network(args)
    if args.full:
        full = stationary_full(net)
        if args.aggregate:
            return aggregate(full, net).to_csv()
        return full.to_csv()
    return stationary_agg(net).to_csv()


def cmd_hitting(args) -> str:
    net = _network(args)
    q = HittingQuery(parse_state(args.source), parse_state(args.target))
    q.check(net)
    gen = build_generator(net)
    out: dict = {"command": "hitting", "sizes": list(net.sizes), "nu": net.nu,
                 "from": str(q.source), "to": str(q.target)}
    exact = mean_hitting_time(gen, q)
    if args.asymptotic:
        law = asymptotic_mean(net, q)
        out["asymptotic"] = {"coefficient": law.coefficient, "exponent": law.exponent,
                             "regime": law.regime, "degenerate": law.degenerate,
                             "value": law.value(net.nu)}
        out["mean_exact"] = exact
        out["ratio"] = exact / law.value(net.nu)
    elif args.simulate is not None:
        seed = _require_seed(args, "--simulate")
        ss = sample_hitting_time(gen, q, args.simulate, seed, workers=args.workers)
        out["simulation"] = {"n": ss.n, "seed": seed, "mean": ss.mean, "stderr": ss.stderr,
                             "oracle_mean_exact": exact,
                             "z_score": (ss.mean - exact) / ss.stderr}
        if args.samples_out:
            Path(args.samples_out).write_text(ss.to_csv(), encoding="utf-8")
    else:
        out["mean_exact"] = exact
    return _json(out)


def cmd_spectrum(args) -> str:
    net = _network(args)
    target = parse_state(args.absorb)
    if args.start is not None:
        start = parse_state(args.start)
    elif net.K <= 2:
        start = far_end(net, target)
    else:
        raise ValidationError("--start is required for networks with three or more components")
    gen = build_generator(net)
    pt = absorption_spectrum(gen, target, start)
    mean = mean_hitting_time(gen, HittingQuery(start, target))
    rows = [(i, a, a * mean) for i, a in enumerate(pt.rates, start=1)]
    return _csv(["index", "eigenvalue", "product_with_mean_hitting_time"], rows)


def cmd_mixing(args) -> str:
    net = _network(args)
    report = mixing_report(net, args.epsilon)
    return _json({"command": "mixing", "sizes": list(net.sizes), "nu": net.nu, **report.as_dict()})


def cmd_limit_law(args) -> str:
    net = _network(args) if args.nu is not None or args.network else build_network(_sizes(args.sizes), 1.0)
    params = escape_params(net, args.k1, args.k2)
    law = limit_law(net, args.k1, args.k2)
    out: dict = {"command": "limit-law", "sizes": list(net.sizes), "k1": args.k1, "k2": args.k2,
                 "Lstar": params.Lstar, "Kstar": sorted(params.Kstar), "pstar": params.pstar,
                 "indicator": params.indicator, "meanM": params.meanM, "atom": law.atom}
    if args.cdf is not None:
        out["cdf"] = [{"x": x, "F": float(limit_law_cdf(law, x))} for x in args.cdf]
    if args.sample is not None:
        seed = _require_seed(args, "--sample")
        ss = sample_limit_law(law, args.sample, seed, workers=args.workers)
        out["sample"] = {"n": ss.n, "seed": seed, "mean": ss.mean, "stderr": ss.stderr,
                         "atom_fraction": float(np.mean(ss.values == 0))}
        cont = ss.values[ss.values > 0]
        if law.indicator and cont.size >= 10:
            out["sample"]["ks_vs_closed_form"] = ks_statistic(cont, lambda x: limit_law_cdf(law, x))
            out["sample"]["ks_critical_1pct"] = ks_critical(cont.size)
        elif cont.size >= 10:
            p = law.pstar
            out["sample"]["ks_continuous_part"] = ks_statistic(cont, lambda x: -np.expm1(-p * x))
            out["sample"]["ks_critical_1pct"] = ks_critical(cont.size)
        if args.samples_out:
            Path(args.samples_out).write_text(ss.to_csv(), encoding="utf-8")
    return _json(out)


# --- sweeps ----------------------------------------------------------------------

SWEEP_KINDS = ("hitting", "mixing", "spectrum", "limit-law")


def _load_sweep(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        spec = json.load(fh)
    if not isinstance(spec, dict):
        raise ValidationError("sweep spec must be a JSON object")
    kind = spec.get("kind")
    if kind not in SWEEP_KINDS:
        raise ValidationError(f"kind: expected one of {', '.join(SWEEP_KINDS)}, got {kind!r}")
    if "sizes" not in spec or "nus" not in spec:
        raise ValidationError("sweep spec needs 'sizes' and 'nus'")
    nus = [float(v) for v in spec["nus"]]
    if len(nus) < 2:
        raise ValidationError("nus: at least two values are needed for a fit")
    if any(b <= a for a, b in zip(nus, nus[1:])):
        raise ValidationError("nus: values must be strictly increasing")
    build_network(spec["sizes"], nus[0])
    spec["nus"] = nus
    return spec


def _sweep_rows(spec: dict):
    kind, sizes = spec["kind"], spec["sizes"]
    if kind == "hitting":
        src, dst = parse_state(spec["from"]), parse_state(spec["to"])
        header = ["nu", "mean_exact", "mean_asymptotic", "ratio"]
        rows = []
        for nu in spec["nus"]:
            net = build_network(sizes, nu)
            q = HittingQuery(src, dst)
            exact = mean_hitting_time(build_generator(net), q)
            asym = asymptotic_mean(net, q).value(nu)
            rows.append((nu, exact, asym, exact / asym))
        return header, rows, 1
    if kind == "mixing":
        eps = float(spec.get("epsilon", 0.25))
        header = ["nu", "t_mix", "lower", "upper", "phi_C2", "phi_star"]
        rows = []
        for nu in spec["nus"]:
            r = mixing_report(build_network(sizes, nu), eps)
            rows.append((nu, r.t_mix, "" if r.lower_bound is None else r.lower_bound, r.upper_bound,
                         r.conductance_C2, "" if r.phi_star is None else r.phi_star))
        return header, rows, 1
    if kind == "spectrum":
        target = parse_state(spec.get("absorb", "0"))
        header = ["nu", "alpha_1", "mean_exact", "product"]
        rows = []
        for nu in spec["nus"]:
            net = build_network(sizes, nu)
            start = parse_state(spec["start"]) if "start" in spec else far_end(net, target)
            gen = build_generator(net)
            a1 = absorption_spectrum(gen, target, start).rates[0]
            mean = mean_hitting_time(gen, HittingQuery(start, target))
            rows.append((nu, a1, mean, a1 * mean))
        return header, rows, 1
    # limit-law: exact sup distance between the scaled phase-type law and Exp(1)
    target = parse_state(spec.get("to", "0"))
    header = ["nu", "mean_exact", "sup_distance_to_exponential"]
    rows = []
    for nu in spec["nus"]:
        net = build_network(sizes, nu)
        start = parse_state(spec["from"]) if "from" in spec else far_end(net, target)
        pt = absorption_spectrum(build_generator(net), target, start)
        if not pt.birth_death:
            raise ValidationError("limit-law sweeps need a birth-death (one or two component) chain")
        x = np.linspace(0.0, 20.0, 4001)
        dist = float(np.max(np.abs(phase_type_cdf(pt, x * pt.mean) + np.expm1(-x))))
        rows.append((nu, pt.mean, dist))
    return header, rows, 2


def cmd_sweep(args) -> str:
    spec = _load_sweep(args.spec)
    header, rows, fit_col = _sweep_rows(spec)
    fit = fit_power_law([(r[0], r[fit_col]) for r in rows])
    name = spec.get("name", Path(args.spec).stem)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{name}.csv"
    csv_path.write_text(_csv(header, rows), encoding="utf-8")
    top_nu, top_value = rows[-1][0], rows[-1][fit_col]
    report = {"command": "sweep", "kind": spec["kind"], "sizes": list(spec["sizes"]),
              "fitted_column": header[fit_col], "fit": fit.as_dict(), "csv": csv_path.name,
              "prefactor_at_top": top_value / top_nu ** round(fit.slope)}
    text = _json(report)
    (out_dir / f"{name}_fit.json").write_text(text, encoding="utf-8")
    return text


def cmd_validate(args) -> str:
    results = run_validation()
    report = {"command": "validate", "all_passed": all(r.passed for r in results),
              "checks": [r.as_dict() for r in results]}
    text = _json(report)
    args._exit_code = 0 if report["all_passed"] else 1
    return text


# --- entry point -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="csma-partite", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def net_args(sp):
        sp.add_argument("--sizes", help="component sizes, e.g. 3,2")
        sp.add_argument("--nu", type=float, help="activation rate")
        sp.add_argument("--network", help="JSON file with 'sizes' and 'nu'")

    sp = sub.add_parser("stationary", help="stationary law as CSV")
    net_args(sp)
    sp.add_argument("--full", action="store_true", help="law on the full per-node state space")
    sp.add_argument("--aggregate", action="store_true", help="with --full, push it onto the star")
    sp.set_defaults(func=cmd_stationary)

    sp = sub.add_parser("hitting", help="mean transition time report (JSON)")
    net_args(sp)
    sp.add_argument("--from", dest="source", required=True, help="source state, '0' or 'k:l'")
    sp.add_argument("--to", dest="target", required=True, help="target state")
    mode = sp.add_mutually_exclusive_group()
    mode.add_argument("--exact", action="store_true", help="exact first-step mean (default)")
    mode.add_argument("--asymptotic", action="store_true", help="leading-order growth law")
    mode.add_argument("--simulate", type=int, metavar="N", help="Monte Carlo with N samples")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--samples-out", help="write samples as CSV (index,value)")
    sp.set_defaults(func=cmd_hitting)

    sp = sub.add_parser("spectrum", help="absorption rates and eigen-time products (CSV)")
    net_args(sp)
    sp.add_argument("--absorb", default="0", help="absorbing state (default: center)")
    sp.add_argument("--start", help="start state (default: far end of the line)")
    sp.set_defaults(func=cmd_spectrum)

    sp = sub.add_parser("mixing", help="mixing time and bounds (JSON)")
    net_args(sp)
    sp.add_argument("--epsilon", type=float, default=0.25)
    sp.set_defaults(func=cmd_mixing)

    sp = sub.add_parser("sweep", help="nu-sweep from a JSON spec: CSV plus power-law fit")
    sp.add_argument("--spec", required=True)
    sp.add_argument("--out-dir", default=".")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("limit-law", help="limit law of scaled cross-branch transition times")
    net_args(sp)
    sp.add_argument("--k1", type=int, required=True)
    sp.add_argument("--k2", type=int, required=True)
    sp.add_argument("--cdf", type=float, nargs="+", metavar="X")
    sp.add_argument("--sample", type=int, metavar="N")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--samples-out")
    sp.set_defaults(func=cmd_limit_law)

    sp = sub.add_parser("validate", help="run the built-in invariant suite")
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        text = args.func(args)
    except CapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (PartiteError, ValueError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(text)
    return getattr(args, "_exit_code", 0)


if __name__ == "__main__":
    sys.exit(main())
