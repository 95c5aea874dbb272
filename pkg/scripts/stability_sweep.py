#!/usr/bin/env python3
"""Exit-time sweep for the single-resonance drift family.

For each eps, integrates H = l_omega + a sin(2 pi K.theta) until the
projected action drift exceeds delta, then fits the exit-time exponent
and compares with the averaged-dynamics prediction at the empirically
fitted Diophantine exponent of omega.
"""

import argparse
import json
from pathlib import Path

import numpy as np

from resonorm import (DriftDemoFamily, cubic_frequency, golden_frequency,
                      stability_experiment)
from resonorm.trigpoly import TWO_PI


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--omega", choices=("cubic", "golden"), default="cubic")
    ap.add_argument("--k", type=int, default=3)
    ap.add_argument("--eps-decades", type=float, nargs=2,
                    default=[-3, -6])
    ap.add_argument("--n-eps", type=int, default=7)
    ap.add_argument("--out", default="stability_sweep")
    args = ap.parse_args()

    om = cubic_frequency() if args.omega == "cubic" else golden_frequency()
    eps_list = np.logspace(args.eps_decades[0], args.eps_decades[1],
                           args.n_eps)
    fam = DriftDemoFamily(omega=om, k=args.k, q_max=110)
    amp = [fam.build(e)["speed_pred"] * fam.build(e)["window"] / TWO_PI
           for e in eps_list]
    delta = 0.2 * min(amp)
    report = stability_experiment(om, args.k, eps_list, delta, q_max=110)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = ["eps,Q,t_obs,t_pred,max_drift"]
    for r in report.rows:
        rows.append(f"{r.eps!r},{r.q!r},{r.t_obs!r},{r.t_pred!r},"
                    f"{r.max_drift!r}")
        print(f"eps={r.eps:.2e}  Q={r.q:7.2f}  T_obs={r.t_obs:.4e}  "
              f"T_pred={r.t_pred:.4e}")
    (outdir / "runs.csv").write_text("\n".join(rows) + "\n")
    summary = {"slope": report.slope,
               "predicted_exponent": report.predicted_exponent,
               "tau_fit": report.tau_fit, "delta": delta}
    (outdir / "summary.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
