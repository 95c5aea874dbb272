"""Command-line driver: psi tables, periodic approximations, normal
forms, stability and splitting experiments, and the acceptance suite.

Exit codes: 0 ok, 2 config error, 3 threshold error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import acceptance
from .diophantine import (ExactFrequency, FrequencyError, psi_table,
                          periodic_approximations)
from .dynamics import stability_experiment
from .normalform import NormalFormConfig, ThresholdError, normal_form
from .splitting import (BandPatch, PatchError, epsilon_sweep, mu_sweep,
                        pendulum_model, split_model)
from .trigpoly import TrigTaylorPoly

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_THRESHOLD = 3
EXIT_NUMERICAL = 4


class ConfigError(ValueError):
    pass


def read_kv_config(path, known_keys):
    """Plain-text `key = value` config; '#' comments; unknown keys are
    rejected with their line number."""
    conf = {}
    text = Path(path).read_text()
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in known_keys:
            raise ConfigError(f"{path}:{ln}: unknown key {key!r}")
        conf[key] = val
    return conf


def _floats(s):
    return [float(x) for x in s.replace(",", " ").split()]


def cmd_psi(args):
    omega = ExactFrequency.parse(args.omega)
    table = psi_table(omega, args.qmax)
    lines = ["Q,psi,witness"]
    for q, val, wit in table.rows():
        lines.append(f"{q},{val!r},{' '.join(str(x) for x in wit)}")
    out = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(out)
    else:
        sys.stdout.write(out)
    return EXIT_OK


def cmd_approx(args):
    omega = ExactFrequency.parse(args.omega)
    res = periodic_approximations(omega, args.Q, c_budget=args.budget)
    payload = {
        "Q": args.Q,
        "psi_Q": res.psi_q,
        "det": res.det,
        "vectors": [
            {"lift": list(v.p), "T": str(v.T),
             "v": [str(x) for x in v.v],
             "error": err, "C_j": c}
            for v, err, c in zip(res.vectors, res.errors, res.constants)
        ],
    }
    out = json.dumps(payload, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(out)
    else:
        sys.stdout.write(out)
    return EXIT_OK


def cmd_nf(args):
    omega = ExactFrequency.parse(args.omega)
    f = TrigTaylorPoly.from_text(Path(args.ham).read_text())
    config = NormalFormConfig(grid_m=args.grid)
    q = args.Q if args.Q is not None else "auto"
    result = normal_form(omega, f, args.k, args.kappa, q=q, config=config)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "g.poly").write_text(result.g.to_text())
    (outdir / "f_remainder.poly").write_text(result.f_rem.to_text())
    (outdir / "avg_f.poly").write_text(result.avg_f.to_text())
    for i, gen in enumerate(result.generators):
        (outdir / f"generator_{i:02d}.poly").write_text(gen.chi.to_text())
    (outdir / "ledger.json").write_text(result.ledger.to_json())
    (outdir / "ledger.csv").write_text(result.ledger.to_csv())
    print(f"normal form written to {outdir} "
          f"(|f_k| = {result.ledger.final_norms['f_rem']:.6e})")
    return EXIT_OK


STAB_KEYS = {"omega", "k", "eps", "delta", "horizon", "family", "out"}


def cmd_stab(args):
    conf = read_kv_config(args.config, STAB_KEYS)
    try:
        omega = ExactFrequency.parse(conf["omega"])
        k = int(conf.get("k", "3"))
        eps_list = _floats(conf["eps"])
        delta = float(conf["delta"])
        horizon = int(float(conf.get("horizon", "1000000")))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{args.config}: {exc}")
    fam = conf.get("family", "drift-demo")
    if fam != "drift-demo":
        raise ConfigError(f"unknown family {fam!r}")
    report = stability_experiment(omega, k, eps_list, delta,
                                  horizon_steps=horizon,
                                  threads=args.threads)
    outdir = Path(conf.get("out", args.out or "stab_out"))
    outdir.mkdir(parents=True, exist_ok=True)
    rows = ["eps,Q,delta,t_obs,t_pred,max_drift,h"]
    for i, r in enumerate(report.rows):
        rows.append(f"{r.eps!r},{r.q!r},{r.delta!r},{r.t_obs!r},"
                    f"{r.t_pred!r},{r.max_drift!r},{r.h!r}")
        times, drift, energy = r.series
        series = ["t,drift,energy"]
        series += [f"{t!r},{d!r},{e!r}"
                   for t, d, e in zip(times, drift, energy)]
        (outdir / f"run_{i:02d}.csv").write_text("\n".join(series) + "\n")
    (outdir / "runs.csv").write_text("\n".join(rows) + "\n")
    summary = {
        "slope": report.slope,
        "predicted_exponent": report.predicted_exponent,
        "tau_fit": report.tau_fit,
        "unbounded": report.unbounded,
        "note": report.note,
    }
    (outdir / "summary.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary, indent=2))
    return EXIT_OK


SPLIT_KEYS = {"mode", "mu", "eps", "lam", "k", "w1", "out",
              "patch_center", "patch_halfwidth"}


def cmd_split(args):
    conf = read_kv_config(args.config, SPLIT_KEYS)
    outdir = Path(conf.get("out", args.out or "split_out"))
    outdir.mkdir(parents=True, exist_ok=True)
    mode = conf.get("mode", "single")
    kw = {}
    if "patch_center" in conf:
        kw["patch"] = BandPatch(float(conf["patch_center"]),
                                float(conf.get("patch_halfwidth", "0.125")))
    if mode == "single":
        model = pendulum_model(lam=float(conf.get("lam", "0.01")),
                               mu=float(conf.get("mu", "1e-4")),
                               w1=float(conf.get("w1", "1.4142135623730951")))
        wu, ws, rep = split_model(model, **kw)
        np.savetxt(outdir / "mesh_unstable.csv", wu.samples,
                   delimiter=",", header="theta1,theta2,I1,I2")
        np.savetxt(outdir / "mesh_stable.csv", ws.samples,
                   delimiter=",", header="theta1,theta2,I1,I2")
        _write_sgrid(outdir / "s_unstable.csv", wu)
        _write_sgrid(outdir / "s_stable.csv", ws)
        payload = {
            "theta_star": rep.theta_star.tolist(),
            "matrix": rep.matrix.tolist(),
            "angles": rep.angles.tolist(),
            "grad_residual": rep.grad_residual,
            "fit_residuals": [wu.sfun.residual, ws.sfun.residual],
            "exactness_witness": {"curl": wu.curl_sup,
                                  "loop": wu.loop_quadrature},
        }
    elif mode == "mu-sweep":
        rep = mu_sweep(_floats(conf["mu"]),
                       lam=float(conf.get("lam", "0.01")), **kw)
        payload = _sweep_payload(rep)
    elif mode == "eps-sweep":
        rep = epsilon_sweep(_floats(conf["eps"]),
                            k=int(conf.get("k", "3")), **kw)
        payload = _sweep_payload(rep)
    else:
        raise ConfigError(f"unknown split mode {mode!r}")
    (outdir / "splitting.json").write_text(json.dumps(payload, indent=2))
    print(json.dumps(payload, indent=2))
    return EXIT_OK


def _write_sgrid(path, man):
    patch = man.sfun.patch
    t1 = np.linspace(0, 1, 33)
    t2 = np.linspace(patch.lo, patch.hi, 17)
    rows = ["theta1,theta2,S"]
    for a in t1:
        vals = man.sfun.value(np.full_like(t2, a), t2)
        for b, v in zip(t2, vals):
            rows.append(f"{a!r},{b!r},{v!r}")
    Path(path).write_text("\n".join(rows) + "\n")


def _sweep_payload(rep):
    return {
        "slope": rep.slope,
        "slope_target": rep.slope_target,
        "leading_over_mu": list(rep.leading_over_mu),
        "small_over_mu": list(rep.small_over_mu),
        "rows": [{"mu": r.mu, "lam": r.lam, "eps": r.eps,
                  "angles": r.angles.tolist(),
                  "theta_star": r.theta_star.tolist()} for r in rep.rows],
        "note": rep.note,
    }


def cmd_check(args):
    selected = None
    if args.only:
        selected = {int(x) for x in args.only.split(",")}
    results = acceptance.run_all(selected=selected, verbose=True)
    ok = all(r.passed for r in results)
    return EXIT_OK if ok else EXIT_NUMERICAL


def build_parser():
    p = argparse.ArgumentParser(
        prog="resonorm",
        description="Resonant normal forms for finitely differentiable "
                    "Hamiltonians: frequency analysis, averaging, "
                    "stability and splitting experiments.")
    p.add_argument("--threads", type=int, default=1,
                   help="parallel sweep cells (1 = serial, reproducible)")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for randomized test corpora")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("psi", help="tabulate the small-divisor maximum")
    sp.add_argument("--omega", required=True)
    sp.add_argument("--qmax", type=float, required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_psi)

    sp = sub.add_parser("approx", help="certified periodic approximations")
    sp.add_argument("--omega", required=True)
    sp.add_argument("--Q", type=float, required=True)
    sp.add_argument("--budget", type=float, default=4.0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_approx)

    sp = sub.add_parser("nf", help="run the resonant normal form")
    sp.add_argument("--omega", required=True)
    sp.add_argument("--ham", required=True, help="TrigTaylorPoly text file")
    sp.add_argument("--k", type=int, required=True)
    sp.add_argument("--kappa", type=int, required=True)
    sp.add_argument("--Q", type=float, default=None)
    sp.add_argument("--grid", type=int, default=8)
    sp.add_argument("--out", default="nf_out")
    sp.set_defaults(func=cmd_nf)

    sp = sub.add_parser("stab", help="stability-time experiment")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_stab)

    sp = sub.add_parser("split", help="manifold splitting experiment")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_split)

    sp = sub.add_parser("check", help="run the acceptance suite")
    sp.add_argument("--only", help="comma-separated criterion numbers")
    sp.set_defaults(func=cmd_check)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FrequencyError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ThresholdError, PatchError) as exc:
        print(f"threshold error: {exc}", file=sys.stderr)
        return EXIT_THRESHOLD
    except Exception as exc:                      # numerical failures
        print(f"numerical failure: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
