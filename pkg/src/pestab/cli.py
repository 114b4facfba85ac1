"""Command-line front end: pestab simulate|certify|threshold|destabilize|sweep|tune.

Exit codes: 0 pass, 1 property failure, 2 invalid input, 3 partial result
(budget exceeded).  Every output embeds tool version, seed, the tolerance
set and the scenario hash, which together reproduce the run bit-for-bit.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, adversary, certify
from .errors import (ConstructionError, DegenerateStateError, DomainError,
                     InsufficientDataError, InternalConsistencyError,
                     NotNeutrallyStable, PestabError, PreconditionError,
                     ShapeError, SimulationError)
from .gains import di_gain
from .reachability import threshold_check
from .scenarios import (build_gain, build_signal, build_system, load_scenario,
                        scenario_hash)
from .signals import PeClass, make_battery
from .simcore import ClosedLoop, fmap_F, polar_lift, propagate

_INPUT_ERRORS = (DomainError, ShapeError, PreconditionError,
                 NotNeutrallyStable, FileNotFoundError,
                 json.JSONDecodeError, KeyError)
_RUNTIME_ERRORS = (ConstructionError, InternalConsistencyError,
                   SimulationError, InsufficientDataError,
                   DegenerateStateError)

LEMMA_SELECTORS = ("claim1", "multi", "finite", "ff00", "ff01", "final0",
                   "c2", "ouf0", "technic", "q1yes")

TOLERANCES = {
    "expm_rel": 1e-12,
    "pe_slack": 1e-12,
    "crossing_rel": 1e-12,
    "energy_slack": 1e-10,
    "f_slack": 1e-9,
    "gramian_rel": 1e-9,
    "eta_margin": 1e-5,
    "kl_rate_margin": 0.05,
    "kl_const_margin": 0.25,
}


def _meta(seed: int, scenario: dict | None = None, tol: float | None = None) -> dict:
    meta = {"tool": "pestab", "version": __version__, "seed": seed,
            "tolerances": dict(TOLERANCES)}
    if tol is not None:
        meta["tol_override"] = tol
    if scenario is not None:
        meta["scenario_hash"] = scenario_hash(scenario)
    return meta


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj: dict) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()[:16]


def _di_params(sc: dict, cls: PeClass) -> tuple:
    p = sc.get("params", {})
    rho = float(p.get("rho", 0.4 * cls.ratio))
    k = float(p.get("k", 4.0))
    lam = float(p.get("lam", 4.0 * k))
    return rho, k, lam


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    sc = load_scenario(args.scenario)
    seed = args.seed if args.seed is not None else sc.get("seed", 0)
    cls = PeClass(**sc["pe_class"])
    A, B = build_system(sc)
    K = build_gain(sc, A, B, cls)
    sig = build_signal(sc, cls)
    horizon = sc.get("horizon", 10.0 * cls.T)
    n = A.shape[0]
    x0_list = sc.get("x0") or [[1.0] + [0.0] * (n - 1)]
    out = _out_dir(args)
    loop = ClosedLoop(A, B, K, sig)
    runs = []
    for i, x0 in enumerate(x0_list):
        tr = propagate(loop, 0.0, np.asarray(x0, dtype=float), horizon,
                       sc.get("max_step"))
        if not np.all(np.isfinite(tr.states)):
            raise SimulationError(f"run {i} produced non-finite states")
        tr = tr.with_energy()
        if n == 2:
            tr = polar_lift(tr)
            g = sc.get("gain", {})
            if g.get("kind") == "di":
                k_eff = float(g.get("lam", 1.0)) * float(g["k"])
                tr = tr.with_channels(
                    F_theta=fmap_F(tr.channels["theta"], k_eff))
        csv_path = out / f"trajectory_{i:03d}.csv"
        tr.to_csv(csv_path)
        fit = certify.decay_rate(tr, float(tr.times[0]))
        runs.append({
            "x0": list(map(float, x0)),
            "csv": csv_path.name,
            "csv_sha256": _sha256(csv_path),
            "gamma_hat": fit["gamma_hat"],
            "C_hat": fit["C_hat"],
            "fit_residual": fit["residual"],
            "decaying": fit["gamma_hat"] > 0.0,
            "clean_exponential": fit["residual"] <= (args.tol or 1e-2),
        })
    summary = {"meta": _meta(seed, sc, args.tol), "runs": runs,
               "signal": sig.to_json(), "K": K.tolist(),
               "horizon": horizon}
    _write_json(out / "summary.json", summary)
    print(f"simulate: wrote {len(runs)} run(s) to {out}")
    for r in runs:
        flag = "decaying" if r["decaying"] else "NON-DECAYING"
        print(f"  x0={r['x0']}  gamma_hat={r['gamma_hat']:+.6g}  {flag}")
    return 0


# ---------------------------------------------------------------------------
# certify
# ---------------------------------------------------------------------------

def _certify_dispatch(selector: str, sc: dict, seed: int):
    cls = PeClass(**sc["pe_class"])
    bat_cfg = sc.get("battery", {})
    size = int(bat_cfg.get("size", 50))
    bseed = int(bat_cfg.get("seed", seed))
    rho, k, lam = _di_params(sc, cls)
    p = sc.get("params", {})

    if selector == "claim1":
        A, B = build_system(sc)
        battery = make_battery(cls, size, bseed)
        grid = certify.sphere_grid(A.shape[0], int(p.get("grid", 16)), bseed)
        return certify.estimate_eta(A, B, cls, battery.signals, grid,
                                    battery_info=battery.info)
    if selector == "multi":
        sig = build_signal(sc, cls)
        x0 = np.asarray((sc.get("x0") or [[1.0, 0.5]])[0], dtype=float)
        return certify.rescaling_identity(rho * k * k / 2.0, k, sig, x0,
                                          horizon=sc.get("horizon", 4.0 * cls.T))
    battery = make_battery(cls, size, bseed)
    grid = certify.unit_circle_grid(int(p.get("grid", 8)))
    if selector == "finite":
        return certify.dwell_scaling(cls, rho, k, lam / k, battery.signals,
                                     grid, battery_info=battery.info)
    if selector == "ff00":
        return certify.quadrant_battery(cls, rho, k, lam, battery.signals,
                                        grid, horizon=30.0 / k,
                                        battery_info=battery.info)
    if selector == "ff01":
        return certify.cs_decay_battery(cls, rho, k, lam, battery.signals,
                                        grid, horizon=30.0 / k,
                                        battery_info=battery.info)
    if selector == "final0":
        return certify.comparison_final0(rho, k, cls.ratio)
    if selector == "c2":
        return certify.comparison_c2(rho, k, cls.ratio)
    if selector == "ouf0":
        horizon = float(p.get("horizon", 20.0))
        return certify.chain_battery(cls, rho, k, lam, battery.signals, grid,
                                     horizon, battery_info=battery.info)
    if selector == "technic":
        A, B = build_system(sc)
        K = build_gain(sc, A, B, cls) if sc.get("gain") else -B.T
        x0 = np.asarray((sc.get("x0") or [[1.0] + [0.0] * (A.shape[0] - 1)])[0],
                        dtype=float)
        return certify.weak_star_demo(A, B, K, x0,
                                      duty=float(p.get("duty", 0.5)))
    if selector == "q1yes":
        A, B = build_system(sc)
        x0s = [np.asarray(v, dtype=float) for v in
               (sc.get("x0") or [[1.0, 0.0], [0.3, -0.7]])]
        battery = make_battery(cls, size, bseed)
        return certify.multi_input_identity(B, float(p.get("k", 1.0)), cls,
                                            battery.signals, x0s,
                                            horizon=sc.get("horizon", 5.0 * cls.T),
                                            battery_info=battery.info)
    raise DomainError(f"unknown selector {selector!r}; valid: "
                      + ", ".join(LEMMA_SELECTORS))


def cmd_certify(args) -> int:
    if args.lemma not in LEMMA_SELECTORS:
        print(f"unknown selector {args.lemma!r}; valid selectors: "
              + ", ".join(LEMMA_SELECTORS), file=sys.stderr)
        return 2
    sc = load_scenario(args.scenario)
    seed = args.seed if args.seed is not None else sc.get("seed", 0)
    cert = _certify_dispatch(args.lemma, sc, seed)
    out = _out_dir(args)
    payload = {"meta": _meta(seed, sc, args.tol),
               "selector": args.lemma,
               "certificate": cert.to_json()}
    _write_json(out / f"certificate_{args.lemma}.json", payload)
    verdict = "PASS" if cert.passed else "FAIL"
    keys = ", ".join(f"{k}={v:.6g}" for k, v in list(cert.measured.items())[:4])
    print(f"[{args.lemma}] {verdict}  {cert.name}  {keys}")
    return 0 if cert.passed else 1


# ---------------------------------------------------------------------------
# threshold
# ---------------------------------------------------------------------------

def _parse_grid(spec: str) -> list:
    if ":" in spec:
        a, b, s = (float(v) for v in spec.split(":"))
        n = int(round((b - a) / s)) + 1
        return [a + i * s for i in range(n) if a + i * s <= b + 1e-12]
    return [float(v) for v in spec.split(",")]


def cmd_threshold(args) -> int:
    if args.preset:
        sc = {"system": {"preset": args.preset}}
    else:
        sc = {"system": {"A": json.loads(args.A), "B": json.loads(args.B)}}
    A, B = build_system(sc)
    cls = PeClass(args.T, args.mu)
    seed = args.seed if args.seed is not None else 0
    battery = make_battery(cls, args.battery_size, seed)
    grid = _parse_grid(args.t_grid)
    out = _out_dir(args)
    rows = []
    all_ok = True
    for t in grid:
        rep = threshold_check(A, B, cls, t, battery.signals,
                              tol=args.tol or 1e-9)
        rows.append(rep)
        all_ok = all_ok and rep.claim
    boundary = cls.T - cls.mu
    csv_path = out / "threshold.csv"
    meta = _meta(seed, tol=args.tol)
    with open(csv_path, "w") as fh:
        for kk, vv in (("tool", "pestab"), ("version", __version__),
                       ("seed", seed), ("threshold", boundary)):
            fh.write(f"# {kk}={vv}\n")
        fh.write("t,regime,claim,min_sv,worst_relative_min_sv,at_boundary\n")
        for rep in rows:
            ev = rep.evidence
            fh.write(",".join([
                repr(rep.t), ev["kind"], str(rep.claim).lower(),
                repr(ev.get("min_sv", "")) if "min_sv" in ev else "",
                repr(ev["worst_relative_min_sv"])
                if "worst_relative_min_sv" in ev else "",
                str(abs(rep.t - boundary) < 1e-12).lower(),
            ]) + "\n")
    _write_json(out / "threshold.json", {
        "meta": meta, "T": cls.T, "mu": cls.mu, "threshold": boundary,
        "results": [r.to_json() for r in rows],
    })
    print(f"threshold: boundary at t = T - mu = {boundary}")
    for rep in rows:
        mark = "ok" if rep.claim else "VIOLATION"
        print(f"  t={rep.t:<8g} {rep.evidence['kind']:<12} {mark}")
    return 0 if all_ok else 1


# ---------------------------------------------------------------------------
# destabilize
# ---------------------------------------------------------------------------

def cmd_destabilize(args) -> int:
    if args.k1 <= 0.0 or args.k2 <= 0.0:
        print("invalid gain: A+bK is not Hurwitz unless both k1 and k2 are "
              "positive", file=sys.stderr)
        return 2
    K = np.array([[-args.k1, -args.k2]])
    cls = PeClass(args.T, args.mu)
    seed = args.seed if args.seed is not None else 0
    nu_hat = adversary.find_nu(K, tol=args.tol or 1e-10)
    out = _out_dir(args)
    warned = cls.ratio > nu_hat
    if warned:
        print(f"warning: mu/T = {cls.ratio:.6g} exceeds nu_hat = "
              f"{nu_hat:.6g}; the sector feedback will not destabilize "
              "this class")
    report = {"meta": _meta(seed, tol=args.tol),
              "K": K.tolist(), "nu_hat": nu_hat,
              "class": {"T": cls.T, "mu": cls.mu},
              "revolutions": args.revolutions,
              "ratio_exceeds_nu": warned}
    try:
        run = adversary.run_destabilizer(K, cls, revolutions=args.revolutions)
        report.update(run.to_json())
        sig_path = out / "induced_signal.json"
        _write_json(sig_path, run.induced_signal.to_json())
        report["induced_signal_file"] = sig_path.name
        print(f"nu_hat = {nu_hat:.8g}, growth_per_rev = "
              f"{run.growth_per_rev:.6g} over {args.revolutions} revolutions")
    except SimulationError as exc:
        report["note"] = str(exc)
        print(f"nu_hat = {nu_hat:.8g}; simulation stopped: {exc}")
    _write_json(out / "destabilizer.json", report)
    return 0


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def _set_path(obj: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = obj
    for key in keys[:-1]:
        node = node.setdefault(key, {})
    node[keys[-1]] = value


def _sweep_cell(payload) -> dict:
    sc, overrides = payload
    sc = json.loads(json.dumps(sc))
    for path, value in overrides:
        _set_path(sc, path, value)
    cls = PeClass(**sc["pe_class"])
    A, B = build_system(sc)
    K = build_gain(sc, A, B, cls)
    sig = build_signal(sc, cls)
    horizon = sc.get("horizon", 10.0 * cls.T)
    n = A.shape[0]
    x0 = np.asarray((sc.get("x0") or [[1.0] + [0.0] * (n - 1)])[0], dtype=float)
    tr = propagate(ClosedLoop(A, B, K, sig), 0.0, x0, horizon,
                   sc.get("max_step"))
    fit = certify.decay_rate(tr, float(tr.times[0]))
    nrm = tr.norms()
    return {"gamma_hat": fit["gamma_hat"], "C_hat": fit["C_hat"],
            "residual": fit["residual"],
            "final_norm_ratio": float(nrm[-1] / nrm[0])}


def _parse_param(spec: str):
    path, _, values = spec.partition("=")
    if not values:
        raise DomainError(f"malformed --param {spec!r}; expected path=v1,v2")
    vals = []
    for v in values.split(","):
        try:
            vals.append(float(v))
        except ValueError:
            vals.append(v)
    return path, vals


def cmd_sweep(args) -> int:
    sc = load_scenario(args.scenario)
    seed = args.seed if args.seed is not None else sc.get("seed", 0)
    params = [_parse_param(s) for s in (args.param or [])]
    cells: list = [[]]
    for path, vals in params:
        cells = [cell + [(path, v)] for cell in cells for v in vals]
    if not params:
        cells = []
    partial = False
    if args.max_cells is not None and len(cells) > args.max_cells:
        cells = cells[:args.max_cells]
        partial = True
    workers = args.workers or int(os.environ.get("PESTAB_WORKERS", "1"))
    payloads = [(sc, cell) for cell in cells]
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_cell, payloads))
    else:
        results = [_sweep_cell(p) for p in payloads]
    out = _out_dir(args)
    csv_path = out / "sweep.csv"
    names = [p for p, _ in params]
    with open(csv_path, "w") as fh:
        for kk, vv in (("tool", "pestab"), ("version", __version__),
                       ("seed", seed),
                       ("scenario_hash", scenario_hash(sc)),
                       ("partial", str(partial).lower())):
            fh.write(f"# {kk}={vv}\n")
        fh.write(",".join(names + ["gamma_hat", "C_hat", "residual",
                                   "final_norm_ratio"]) + "\n")
        for cell, res in zip(cells, results):
            vals = [repr(v) if isinstance(v, float) else str(v)
                    for _, v in cell]
            fh.write(",".join(vals + [repr(res["gamma_hat"]),
                                      repr(res["C_hat"]),
                                      repr(res["residual"]),
                                      repr(res["final_norm_ratio"])]) + "\n")
    print(f"sweep: {len(cells)} cell(s) -> {csv_path}"
          + (" (partial)" if partial else ""))
    return 3 if partial else 0


# ---------------------------------------------------------------------------
# tune
# ---------------------------------------------------------------------------

def cmd_tune(args) -> int:
    cls = PeClass(args.T, args.mu)
    seed = args.seed if args.seed is not None else 0
    rho = args.rho if args.rho is not None else 0.4 * cls.ratio
    result = adversary.tune_adversarial(cls, rho, seed=seed,
                                        budget=args.budget)
    out = _out_dir(args)
    gain = di_gain(cls, rho, result["k_star_hat"], result["lambda_star_hat"])
    payload = {"meta": _meta(seed, tol=args.tol),
               "T": cls.T, "mu": cls.mu, "rho": rho,
               "k_star_hat": result["k_star_hat"],
               "lambda_star_hat": result["lambda_star_hat"],
               "first_pass": result["first_pass"],
               "worst_case": result["worst_case"],
               "gain": gain.to_json(),
               "trace": result["trace"]}
    _write_json(out / "tuned_gain.json", payload)
    print(f"tuned: k_star_hat={result['k_star_hat']:g} "
          f"lambda_star_hat={result['lambda_star_hat']:g} "
          f"K={gain.K.tolist()}")
    return 0


# ---------------------------------------------------------------------------
# parser / entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pestab",
        description="simulate, certify and stress linear systems with a "
                    "persistently excited control channel")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, scenario=True):
        if scenario:
            p.add_argument("--scenario", required=True,
                           help="scenario JSON file")
        p.add_argument("--out-dir", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--tol", type=float, default=None,
                       help="override the command's headline tolerance")

    p = sub.add_parser("simulate", help="run a scenario and export CSV")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("certify", help="run one certificate selector")
    common(p)
    p.add_argument("--lemma", required=True,
                   help="selector: " + ", ".join(LEMMA_SELECTORS))
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("threshold", help="controllability horizon dichotomy")
    common(p, scenario=False)
    p.add_argument("--preset", choices=["double_integrator", "rotation"])
    p.add_argument("--A", help="JSON matrix")
    p.add_argument("--B", help="JSON matrix")
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--t-grid", required=True,
                   help="a:b:step or comma-separated horizons")
    p.add_argument("--battery-size", type=int, default=50)
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("destabilize", help="sector-feedback growth demo")
    common(p, scenario=False)
    p.add_argument("--k1", type=float, required=True)
    p.add_argument("--k2", type=float, required=True)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--revolutions", type=int, default=10)
    p.set_defaults(func=cmd_destabilize)

    p = sub.add_parser("sweep", help="cross-product parameter sweep")
    common(p)
    p.add_argument("--param", action="append",
                   help="dotted.path=v1,v2,... (repeatable)")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--max-cells", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("tune", help="search a stabilizing gain scale pair")
    common(p, scenario=False)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--budget", type=int, default=24)
    p.set_defaults(func=cmd_tune)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _INPUT_ERRORS as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 2
    except _RUNTIME_ERRORS as exc:
        print(f"property failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
