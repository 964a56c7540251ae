#!/usr/bin/env python3
"""End-to-end degraded-engine experiment.

Sizes the reference engine, generates Monte Carlo pretraining data, builds
the flight-disjoint synthetic flight dataset from a degraded engine,
runs both training phases, the test-time flow solver, and the baseline
comparison report. Desk-scale by default; --full mirrors the larger
dataset sizes.

Everything is seeded; rerunning with the same arguments reproduces the
same artifacts byte for byte.
"""

import argparse
import os
import sys
import time

import numpy as np

from hybridcycle.cascade import Y_SCHEMA, build_model, cascade_forward, save_model
from hybridcycle.cycle import degrade_config, design_point, save_config
from hybridcycle.data import build_fd_experiment, gen_mc, reference_t6, save_split
from hybridcycle.maps import Degradation
from hybridcycle.metrics import compare_report, save_tnn, tnn_predict, train_tnn_baseline
from hybridcycle.nn import TrainConfig
from hybridcycle.training import max_rel_errors, pretrain_mc, train_fd
from hybridcycle.wsolve import solve_w_batch

DEGRADATION = {"hpc": Degradation(flow=-0.015, eff=-0.02), "lpt": Degradation(eff=-0.01)}


def log(msg):
    print(f"[{time.strftime('%H:%M:%S')}] {msg}", flush=True)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="experiment_out", help="artifact directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--full", action="store_true", help="full-scale dataset sizes")
    parser.add_argument("--jobs", type=int, default=1)
    args = parser.parse_args()

    n_mc = 15360 if args.full else 4096
    mc_epochs = 500 if args.full else 300
    train_flights = 24 if args.full else 6
    test_flights = 9 if args.full else 3

    out = args.out
    os.makedirs(out, exist_ok=True)

    log("sizing reference engine")
    cfg = design_point()
    save_config(cfg, os.path.join(out, "cfg"))

    log(f"generating Monte Carlo dataset (n={n_mc})")
    mc, report = gen_mc(cfg, n=n_mc, seed=args.seed + 20, jobs=args.jobs)
    save_split(mc, os.path.join(out, "mc"))
    log(f"  {len(mc.train)} train / {len(mc.test)} test ({report['rejections']} rejections)")

    log(f"pretraining ({mc_epochs} epochs)")
    model = build_model(seed=args.seed, bleeds=cfg.bleeds)
    model, history = pretrain_mc(
        model, mc, TrainConfig(epochs=mc_epochs, seed=args.seed),
        cfg.areas, cfg.shafts, cfg.gas, out_dir=os.path.join(out, "pretrain"),
    )
    errs = max_rel_errors(model, mc.test)
    worst = max(errs.items(), key=lambda kv: kv[1])
    log(f"  final loss {history[-1]['loss']:.3e}; worst station error {worst[0]}={worst[1]:.4f}")

    log("building flight dataset from the degraded engine")
    degraded = degrade_config(cfg, DEGRADATION)
    fd = build_fd_experiment(cfg, degraded, seed=args.seed + 1,
                             train_flights=train_flights, test_flights=test_flights, jobs=args.jobs)
    save_split(fd, os.path.join(out, "fd"))
    log(f"  {len(fd.train)} train / {len(fd.test)} test quasi-steady samples")

    t6_col = Y_SCHEMA.index("T6")
    truth = fd.test.y[:, 0]
    pred_before, _ = cascade_forward(model, fd.test.x, fd.test.x_schema)

    log("flight-data training (500 epochs)")
    model, _ = train_fd(
        model, fd, TrainConfig(epochs=500, seed=args.seed), ["T6"],
        cfg.areas, cfg.shafts, cfg.gas, out_dir=os.path.join(out, "fdtrain"),
    )
    pred_after, _ = cascade_forward(model, fd.test.x, fd.test.x_schema)

    log("reference model on the test flights")
    t6_ref = reference_t6(cfg, fd.test)

    log("baseline net training")
    tnn, _ = train_tnn_baseline(fd, TrainConfig(epochs=500, seed=args.seed))
    save_tnn(tnn, os.path.join(out, "tnn"))

    log("test-time flow recovery on the test flights")
    flows, results = solve_w_batch(model, fd.test, cfg.areas, cfg.gas, cfg.shafts, cfg.design)
    x_iter = fd.test.x.copy()
    x_iter[:, fd.test.x_schema.index("W2")] = flows[:, 0]
    x_iter[:, fd.test.x_schema.index("W25")] = flows[:, 1]
    pred_iter, _ = cascade_forward(model, x_iter, fd.test.x_schema)

    log("writing comparison report")
    predictions = {
        "hybrid": pred_after[:, t6_col],
        "hybrid_iter": pred_iter[:, t6_col],
        "hybrid_mc_only": pred_before[:, t6_col],
        "reference": t6_ref,
        "tnn": tnn_predict(tnn, fd.test),
    }
    stats = compare_report(predictions, truth, os.path.join(out, "report"))
    print(f"\n{'model':16s} {'mean':>8s} {'max':>8s}")
    for name, st in stats.items():
        print(f"{name:16s} {st.mean:8.4f} {st.max:8.4f}")
    print(f"\nmodel parameter counts: hybrid={model.n_params}, baseline={tnn.mlp.n_params}")
    log(f"artifacts in {out}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
