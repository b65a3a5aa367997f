#!/usr/bin/env python3
"""Compare training objectives on a conjugate scenario at equal budgets.

Trains one model per objective, scores each against the analytic posterior
on fresh datasets (C2ST plus W2), and writes a small CSV table. The defaults
reproduce the desk-scale ablation; crank --steps for tighter numbers.
"""

import argparse
import os
import time

import numpy as np

from icbayes.flowmatch import TrainConfig, train
from icbayes.metrics import c2st_auc, config_hash, summarize, wasserstein2
from icbayes.nncore import ModelConfig, gaussian_head_out_dim
from icbayes.odesolve import sample_posterior
from icbayes.probmodels import get_scenario, sample_dataset
from icbayes.probmodels.conjugate import analytic_posterior_nig
from icbayes.rngs import derive_rng


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default="glm-1-mini")
    ap.add_argument("--objectives", default="ot-fm,vp-fm,vp-sm,gaussian-head")
    ap.add_argument("--steps", type=int, default=782)
    ap.add_argument("--batch-size", type=int, default=256)
    ap.add_argument("--n-datasets", type=int, default=20)
    ap.add_argument("--n-draws", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/ablation")
    return ap.parse_args()


def main():
    args = parse_args()
    scenario = get_scenario(args.scenario)
    layout = scenario.latent_layout()
    rng = derive_rng(args.seed, "ablation-eval")
    datasets = [sample_dataset(scenario, rng)[0] for _ in range(args.n_datasets)]
    os.makedirs(args.out, exist_ok=True)

    lines = ["objective,metric,mean,se,n,train_minutes"]
    for objective in args.objectives.split(","):
        objective = objective.strip()
        out_dim = (gaussian_head_out_dim(layout.dim) if objective == "gaussian-head"
                   else layout.dim)
        mc = ModelConfig(row_dim=scenario.row_dim, latent_dim=layout.dim,
                         out_dim=out_dim)
        tc = TrainConfig(steps=args.steps, batch_size=args.batch_size,
                         objective=objective, seed=args.seed, log_every=200)
        t0 = time.perf_counter()
        result = train(mc, scenario, tc)
        train_min = (time.perf_counter() - t0) / 60.0
        print(f"[{objective}] trained {args.steps} steps in {train_min:.1f} min, "
              f"final loss {result.final_train_loss:.4f}")

        c2sts, w2s = [], []
        for i, ds in enumerate(datasets):
            gold = analytic_posterior_nig(scenario, ds).sample(
                derive_rng(args.seed, "ablation-gold", i), args.n_draws)
            icl = sample_posterior(result.params, mc, scenario, ds.rows,
                                   args.n_draws, objective=objective, seed=i)
            c2sts.append(c2st_auc(icl.constrained, gold, classifier="rf", seed=i))
            w2s.append(wasserstein2(icl.constrained, gold))
        for name, vals in (("c2st", c2sts), ("w2", w2s)):
            s = summarize(name, np.asarray(vals))
            lines.append(f"{objective},{name},{s.mean:.6f},{s.se:.6f},{s.n},"
                         f"{train_min:.2f}")
            print(f"[{objective}] {name} = {s.mean:.4f} +/- {s.se:.4f}")

    table = os.path.join(args.out, f"ablation-{config_hash(vars(args))}.csv")
    with open(table, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {table}")


if __name__ == "__main__":
    main()
