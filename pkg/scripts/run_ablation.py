#!/usr/bin/env python3
"""Compare cascade variants on synthetic data across several seeds.

For each seed this generates a train/test pair, fits one joint prior on
the training shapes and labels, trains all four variants against that
shared prior, and reports held-out landmark error, weighted F1, and
weighted AUC, plus the per-stage error profile of the full variant.  A
summary counts how often each constrained variant beats the plain
cascade.

Usage:
    python scripts/run_ablation.py --train-n 500 --test-n 200 --seeds 5
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

import jointcascade as jc
from jointcascade.geometry import to_canonical
from jointcascade.rbm import fit_joint_prior
from jointcascade.synth import EYE_INDICES

VARIANTS = (
    jc.Variant.NOCONSTRAINT,
    jc.Variant.FULL,
    jc.Variant.CONSTRAINT_LANDMARK,
    jc.Variant.CONSTRAINT_AU,
)


def evaluate_model(model, test_samples, threshold):
    stage_errs = np.zeros(model.config.stages + 1)
    final_probs = []
    for s in test_samples:
        shapes, probs = jc.infer_stages(s.image, s.box, model)
        for t, shape in enumerate(shapes):
            stage_errs[t] += jc.normalized_error(
                shape, s.gt_shape, model.eye_indices
            )
        final_probs.append(probs[-1])
    stage_errs /= len(test_samples)
    P = np.stack(final_probs)
    Y = np.stack([s.labels for s in test_samples])
    _, wf1 = jc.f1_scores(P, Y, threshold=threshold)
    _, wauc = jc.auc_scores(P, Y)
    return {
        "error": float(stage_errs[-1]),
        "stage_errors": [float(e) for e in stage_errs],
        "weighted_f1": float(wf1),
        "weighted_auc": float(wauc),
    }


def run_seed(seed, args):
    train_s = jc.generate(jc.SynthConfig(n_samples=args.train_n, seed=seed))
    test_s = jc.generate(
        jc.SynthConfig(n_samples=args.test_n, seed=10_000 + seed)
    )
    canon = np.stack(
        [to_canonical(s.gt_shape, s.box).vector for s in train_s]
    )
    labels = np.stack([s.labels for s in train_s])
    prior = fit_joint_prior(
        labels,
        canon,
        jc.CDConfig(epochs=args.epochs, seed=seed),
        n_hidden=args.hidden,
    )

    results = {}
    for variant in VARIANTS:
        cfg = jc.CascadeConfig(
            stages=args.stages, variant=variant, seed=seed
        )
        model = jc.train(
            train_s, cfg, jc.DescriptorConfig(), prior, eye_indices=EYE_INDICES
        )
        results[variant.value] = evaluate_model(
            model, test_s, args.threshold
        )
    return results


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--train-n", type=int, default=500)
    ap.add_argument("--test-n", type=int, default=200)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--stages", type=int, default=4)
    ap.add_argument("--epochs", type=int, default=800)
    ap.add_argument("--hidden", type=int, default=150)
    ap.add_argument("--threshold", type=float, default=0.5)
    ap.add_argument("--json", help="write per-seed results to this path")
    args = ap.parse_args()

    all_results = {}
    t_start = time.time()
    for seed in range(args.seeds):
        t0 = time.time()
        res = run_seed(seed, args)
        all_results[seed] = res
        print(f"seed {seed} ({time.time() - t0:.1f}s)")
        for name, r in res.items():
            stages = " ".join(f"{e:.4f}" for e in r["stage_errors"])
            print(
                f"  {name:<19} err {r['error']:.4f}  "
                f"f1 {r['weighted_f1']:.4f}  auc {r['weighted_auc']:.4f}  "
                f"stages [{stages}]"
            )

    n = args.seeds
    wins = {
        "full err < nc": 0,
        "full f1 > nc": 0,
        "cl err < nc": 0,
        "ca f1 > nc": 0,
        "stages non-increasing (full)": 0,
        "late gain < early gain (full)": 0,
    }
    for res in all_results.values():
        nc, full = res["noconstraint"], res["full"]
        cl, ca = res["constraint-landmark"], res["constraint-au"]
        wins["full err < nc"] += full["error"] < nc["error"]
        wins["full f1 > nc"] += full["weighted_f1"] > nc["weighted_f1"]
        wins["cl err < nc"] += cl["error"] < nc["error"]
        wins["ca f1 > nc"] += ca["weighted_f1"] > nc["weighted_f1"]
        se = full["stage_errors"][1:]
        wins["stages non-increasing (full)"] += all(
            b <= a + 1e-12 for a, b in zip(se[:-1], se[1:])
        )
        wins["late gain < early gain (full)"] += (se[-2] - se[-1]) < (
            se[0] - se[1]
        )
    print(f"\ntotal {time.time() - t_start:.1f}s")
    for k, v in wins.items():
        print(f"  {k}: {v}/{n}")

    if args.json:
        with open(args.json, "w") as fh:
            json.dump(all_results, fh, indent=2)
        print(f"wrote {args.json}")


if __name__ == "__main__":
    main()
