"""Command line front end: ``subgeo convert | chain | rwm-bound | simulate``.

Reports go to stdout as JSON; curves are written as tidy CSV.  Exit codes
are 0 on success, 2 for invalid input and 3 for numerical failures.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from importlib import resources

import numpy as np

from . import finite_chain as fc
from ._io import atomic_write_text, rows_to_csv
from .finite_chain import fit_decay_exponent
from .heavytail_rwm import TargetSpec, close_coupling, rwm_mixing_time, rwm_wcp_bound, smoothness_constant
from .samplers import (
    SimConfig,
    batch_means_asvar,
    fitted_exponent,
    jump_decay_coupled,
    jump_tv_proxy,
    simulate,
)
from .wpi_calculus import WpiCertificate, convert_certificate, decay_profile

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INVALID):
        super().__init__(message)
        self.code = code


def fixture_path(name: str) -> str:
    """Path of a bundled fixture such as ``counterexample_k8.json``."""
    return str(resources.files("subgeo") / "data" / name)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k) if not isinstance(k, str) else k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    return obj


def _dump(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True)


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise CliError(f"no such file: {path}")
    except json.JSONDecodeError as exc:
        raise CliError(f"malformed JSON in {path}: {exc}")


# ---------------------------------------------------------------------------
# convert


def cmd_convert(args) -> dict:
    try:
        cert = WpiCertificate.from_dict(_read_json(args.inp))
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"invalid certificate: {exc}")
    out = convert_certificate(cert, args.to)
    out.save(args.out)
    report = {"from": cert.param, "to": args.to, "out": args.out}
    try:
        _, _, prof = decay_profile(cert)
    except ValueError as exc:
        report["gamma_table"] = None
        report["gamma_note"] = str(exc)
        return report
    n = np.unique(np.round(np.geomspace(1, 1e6, 61)))
    gamma = prof.gamma(n)
    stem = args.out[:-5] if args.out.endswith(".json") else args.out
    path = stem + ".gamma.csv"
    atomic_write_text(path, rows_to_csv(["n", "gamma"], zip(n.astype(int), gamma.astype(float))))
    report["gamma_table"] = path
    return report


# ---------------------------------------------------------------------------
# chain


def _load_f(args, chain):
    if args.f is None:
        return None
    f = np.asarray(_read_json(args.f), float)
    if f.shape != (chain.n,):
        raise CliError(f"--f must hold {chain.n} values, got shape {f.shape}")
    return f


def _write_csv(args, name, text, report):
    if args.out:
        path = os.path.join(args.out, name)
        atomic_write_text(path, text)
        report.setdefault("csv", []).append(path)


def _staircase_csv(stair, column):
    rows = [(b, v) for b, v in zip(stair.breaks, stair.values)]
    return rows_to_csv(["v", column], rows)


def cmd_chain(args) -> dict:
    try:
        chain = fc.FiniteChain.from_dict(_read_json(args.inp))
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"invalid chain: {exc}")
    report: dict = {"report": args.report, "n_states": chain.n}
    kind = args.report
    try:
        if kind == "conductance":
            prof = fc.weak_conductance_exact(chain)
            report["breaks"] = list(prof.breaks)
            report["values"] = list(prof.values)
            report["minimising_sets"] = prof.annotations
            _write_csv(args, "conductance.csv", _staircase_csv(prof, "phi"), report)
        elif kind == "decay":
            n_max = args.n if args.n is not None else 50
            f = _load_f(args, chain)
            if f is None:
                f = np.zeros(chain.n)
                f[0] = 1.0
            curves = {"P": fc.exact_decay(chain, f, n_max),
                      "S": fc.exact_decay(fc.reversibilize(chain), f, n_max)}
            for name, curve in curves.items():
                tail = curve.values[-max(1, n_max // 10):]
                report[name] = {"values": curve.values, "final": float(curve.values[-1]),
                                "convergent": bool(np.max(tail) < 1e-6 * max(curve.values[0], 1e-300))}
                _write_csv(args, f"decay_{name}.csv", curve.to_csv(), report)
        elif kind == "beta-lower":
            s = np.geomspace(1e-2, 1e4, 61)
            cols = {"s": s, "sticky": fc.beta_lower_sticky(chain)(s)}
            if chain.n <= fc.SUBSET_CAP:
                cols["indicator"] = fc.beta_lower_indicator(chain)(s)
            if chain.n == 2:
                cols["exact"] = fc.exact_beta_two_state(chain)(s)
            report.update({k: v for k, v in cols.items()})
            _write_csv(args, "beta_lower.csv", rows_to_csv(list(cols), zip(*cols.values())), report)
        elif kind == "rupi":
            report["P"] = fc.rupi_check(chain)
            if "nu" in chain.info:
                k = args.n if args.n is not None else 2
                prod = fc.check_product_reducibility(chain, k)
                verdict = prod["rupi"]
                report[f"(P*)^{k}P^{k}"] = verdict
                report["all_trapped"] = prod["all_trapped"]
                if not verdict["is_rupi"]:
                    w = verdict["witness"]
                    report["verdict"] = (f"not RUPI for (P*)^{k}P^{k}, witness {tuple(w['from'])}; "
                                         f"absorbing {[tuple(s) for s in verdict['absorbing']]}")
                else:
                    report["verdict"] = f"RUPI for (P*)^{k}P^{k} with m={verdict['m']}"
            else:
                report["verdict"] = "RUPI" if report["P"]["is_rupi"] else "not RUPI"
        elif kind == "duality":
            n = args.n if args.n is not None else 1
            report.update(fc.duality_check(chain, n, rng=0))
    except fc.StateCapError as exc:
        raise CliError(f"{exc}; exact enumeration is exponential in the state count, "
                       "reduce the chain or use the sampled profile from the library")
    return report


# ---------------------------------------------------------------------------
# rwm-bound


def cmd_rwm_bound(args) -> dict:
    spec_kw = {"family": args.family, "d": args.d}
    if args.tau is not None:
        spec_kw["tau"] = args.tau
    if args.eta is not None:
        spec_kw["eta"] = args.eta
    if args.xi is not None:
        spec_kw["xi"] = args.xi
    if args.no_xi_lemma:
        spec_kw["use_xi_lemma"] = False
    try:
        spec = TargetSpec(**spec_kw)
        rwm_wcp_bound(spec, args.varsigma)  # raises with the failing precondition
        rep = rwm_mixing_time(spec, args.varsigma, args.eps, args.u)
    except (TypeError, ValueError) as exc:
        raise CliError(str(exc))
    if not rep.precondition_holds:
        raise CliError("precondition 2 varsigma L^{-1/2} I(1/4) <= sqrt(d) fails; reduce varsigma")
    out = rep.to_dict()
    cf = rep.closed_form_exact
    out["side_by_side"] = {
        "quadrature": rep.n_value,
        "closed_form_exact": cf,
        "closed_form": rep.closed_form,
        "relative_difference": None if cf is None else abs(cf - rep.n_value) / rep.n_value,
    }
    return out


# ---------------------------------------------------------------------------
# simulate


def _acceptance_summary(ens) -> dict:
    per = ens.accepted.mean(axis=1)
    if per.size >= 2:
        se = float(per.std(ddof=1) / math.sqrt(per.size))
    elif ens.accepted.shape[1] >= 1000:
        se = math.sqrt(batch_means_asvar(ens.accepted[0].astype(float))["estimate"] / ens.accepted.shape[1])
    else:
        se = float("nan")
    return {"mean_acceptance": float(per.mean()), "standard_error": se}


def cmd_simulate(args) -> dict:
    raw = _read_json(args.config)
    if not isinstance(raw, dict):
        raise CliError("config must be a JSON object")
    raw = dict(raw)
    diag_cfg = raw.pop("diagnostics", {}) or {}
    try:
        config = SimConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid config: {exc}")
    try:
        ens = simulate(config)
    except (KeyError, TypeError) as exc:
        raise CliError(f"invalid config: {exc}")
    os.makedirs(args.out, exist_ok=True)
    summary: dict = {"kernel": config.kernel["type"], "n_steps": config.n_steps,
                     "n_replicas": config.n_replicas, "seed": config.seed}
    summary.update(_acceptance_summary(ens))
    diagnostics: dict = {"per_replica_acceptance": ens.accepted.mean(axis=1)}
    kind = config.kernel["type"]
    if kind in ("rwm", "pm_rwm"):
        spec = TargetSpec.from_dict(config.target)
        Ld = smoothness_constant(spec) * spec.d
        varsigma = config.kernel.get("varsigma", ens.extra["sigma"] * math.sqrt(Ld))
        bound = close_coupling(Ld, varsigma)["alpha0_lb"]
        summary["acceptance_lower_bound"] = bound
        summary["varsigma"] = varsigma
        summary["bound_holds_within_3se"] = summary["mean_acceptance"] >= bound - 3 * summary["standard_error"]
        if kind == "pm_rwm":
            streaks = ens.extra["streaks"]
            summary["longest_rejection_streak"] = int(max((s.max() for s in streaks if s.size), default=0))
    if kind == "jump":
        a, b = float(config.target["a"]), float(config.target["b"])
        target_exp = (a - b - 1) / b
        decay_opts = {"n_max": 64, "n_outer": 128, "n_inner": 128, **diag_cfg.get("decay", {})}
        tv_opts = {"n_max": 256, "n_replicas": 16384, **diag_cfg.get("tv", {})}
        curve = jump_decay_coupled(a, b, lambda y: (y <= math.log(2)).astype(float),
                                   seed=config.seed, **decay_opts)
        tv = jump_tv_proxy(a, b, seed=config.seed, **tv_opts)
        l2 = fitted_exponent(curve)
        tv_exp = fit_decay_exponent(tv.n[1:], tv.values[1:])
        summary.update({
            "squared_norm_exponent": l2, "predicted_squared_norm_exponent": target_exp,
            "tv_proxy_exponent": tv_exp, "predicted_tv_exponent": target_exp,
            "tv_over_per_norm_exponent": tv_exp / (l2 / 2),
        })
        summary["jump_frequency"] = summary.pop("mean_acceptance")
        summary.pop("standard_error")
        atomic_write_text(os.path.join(args.out, "decay.csv"), curve.to_csv())
        atomic_write_text(os.path.join(args.out, "tv_proxy.csv"),
                          rows_to_csv(["n", "value"], zip(tv.n, tv.values.astype(float))))
    if config.record_states and ens.states is not None:
        atomic_write_text(os.path.join(args.out, "trajectories.csv"), ens.to_csv())
    atomic_write_text(os.path.join(args.out, "diagnostics.json"), _dump(diagnostics))
    atomic_write_text(os.path.join(args.out, "summary.json"), _dump(summary))
    return summary


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="subgeo", description="Weak Poincare inequality toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("convert", help="convert a WPI certificate")
    c.add_argument("--in", dest="inp", required=True)
    c.add_argument("--to", required=True, choices=["alpha", "beta", "kstar"])
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_convert)

    ch = sub.add_parser("chain", help="finite chain reports")
    ch.add_argument("--in", dest="inp", required=True)
    ch.add_argument("--report", required=True, choices=["conductance", "decay", "beta-lower", "rupi", "duality"])
    ch.add_argument("--f", default=None, help="JSON list of function values")
    ch.add_argument("--n", type=int, default=None)
    ch.add_argument("--out", default=None, help="directory for CSV curves")
    ch.set_defaults(func=cmd_chain)

    r = sub.add_parser("rwm-bound", help="RWM mixing-time bound")
    r.add_argument("--family", default="student_t")
    r.add_argument("--d", type=int, required=True)
    r.add_argument("--tau", type=float, default=None)
    r.add_argument("--eta", type=float, default=None)
    r.add_argument("--xi", type=float, default=None)
    r.add_argument("--no-xi-lemma", action="store_true")
    r.add_argument("--varsigma", type=float, default=1.0)
    r.add_argument("--eps", type=float, required=True)
    r.add_argument("--u", type=float, default=1.0)
    r.set_defaults(func=cmd_rwm_bound)

    s = sub.add_parser("simulate", help="run a simulation config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        report = args.func(args)
    except CliError as exc:
        print(f"subgeo {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"subgeo {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, TypeError, KeyError) as exc:
        print(f"subgeo {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(_dump(report))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
