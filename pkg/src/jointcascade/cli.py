"""Command-line interface: synthesize data, train, detect, evaluate.

Exit codes: 0 on success, 2 on usage errors (argparse), 1 on runtime
errors (I/O failures, schema mismatches), printed to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import dataio
from .cascade import CascadeConfig, CascadeModel, Variant, infer_stages
from .cascade import train_from_samples
from .descriptors import DescriptorConfig
from .metrics import evaluate
from .model_io import load_model, save_model
from .rbm import CDConfig
from .synth import SynthConfig, dataset_meta, generate

DETECT_META_NAME = "detect_meta.txt"


class CommandError(Exception):
    """Runtime failure reported with exit code 1."""


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer")
    if value <= 0:
        raise argparse.ArgumentTypeError("value must be a positive integer")
    return value


def _positive_real(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number")
    if not (value > 0 and np.isfinite(value)):
        raise argparse.ArgumentTypeError("value must be positive and finite")
    return value


def _nonneg_real(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number")
    if not (value >= 0 and np.isfinite(value)):
        raise argparse.ArgumentTypeError("value must be >= 0 and finite")
    return value


def _threshold(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number")
    if not (0.0 < value < 1.0):
        raise argparse.ArgumentTypeError("threshold must be in (0, 1)")
    return value


def _coupling(text: str) -> tuple:
    """Parse ``i:j:s,i:j:s,...``; an empty string means no couplings."""
    text = text.strip()
    if not text:
        return ()
    entries = []
    for part in text.split(","):
        fields = part.split(":")
        if len(fields) != 3:
            raise argparse.ArgumentTypeError(
                f"coupling entry {part!r} is not i:j:strength"
            )
        try:
            entries.append((int(fields[0]), int(fields[1]), float(fields[2])))
        except ValueError:
            raise argparse.ArgumentTypeError(
                f"coupling entry {part!r} has non-numeric fields"
            )
    return tuple(entries)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jointcascade",
        description=(
            "Joint facial landmark detection and action-unit recognition "
            "by constrained cascade regression."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset")
    p_synth.add_argument("--out", required=True, help="output dataset directory")
    p_synth.add_argument("--n", required=True, type=_positive_int,
                         help="number of samples")
    p_synth.add_argument("--aus", type=_positive_int, default=8,
                         help="number of action-unit labels")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--coupling", type=_coupling, default=None,
                         help="label couplings i:j:strength,... "
                              "(default: built-in correlated pairs; "
                              "empty string: independent labels)")
    p_synth.set_defaults(func=cmd_synth)

    p_train = sub.add_parser("train", help="train a model on a dataset")
    p_train.add_argument("--data", required=True, help="dataset directory")
    p_train.add_argument("--out", required=True, help="output model file")
    p_train.add_argument("--stages", type=_positive_int, default=4)
    p_train.add_argument("--lambda-shape", type=_nonneg_real, default=0.5)
    p_train.add_argument("--lambda-prob", type=_nonneg_real, default=0.5)
    p_train.add_argument("--hidden", type=_positive_int, default=150)
    p_train.add_argument("--epochs", type=_positive_int, default=800)
    p_train.add_argument("--variant", default=Variant.FULL.value,
                         choices=[v.value for v in Variant])
    p_train.add_argument("--ridge", type=_positive_real, default=1e-3)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.set_defaults(func=cmd_train)

    p_detect = sub.add_parser("detect", help="run detection with a model")
    p_detect.add_argument("--model", required=True, help="model file")
    p_detect.add_argument("--image", help="input PGM image (single mode)")
    p_detect.add_argument("--box", help="face box file (single mode)")
    p_detect.add_argument("--data", help="dataset directory (batch mode)")
    p_detect.add_argument("--out", required=True,
                          help="output prefix (single) or directory (batch)")
    p_detect.add_argument("--threshold", type=_threshold, default=0.5)
    p_detect.add_argument("--trace", action="store_true",
                          help="also write per-stage shapes and probabilities")
    p_detect.set_defaults(func=cmd_detect)

    p_eval = sub.add_parser("eval", help="score predictions against ground truth")
    p_eval.add_argument("--pred", required=True, help="predictions directory")
    p_eval.add_argument("--gt", required=True, help="ground-truth dataset directory")
    p_eval.add_argument("--threshold", type=_threshold, default=0.5)
    p_eval.add_argument("--out", help="also write the full report as JSON")
    p_eval.set_defaults(func=cmd_eval)

    return parser


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        n_samples=args.n,
        n_aus=args.aus,
        au_pair_coupling=args.coupling,
        seed=args.seed,
    )
    samples = generate(cfg)
    dataio.write_dataset(args.out, samples, dataset_meta(cfg))
    print(f"wrote {len(samples)} samples to {args.out}")
    return 0


def _manifest_eyes(meta: dict) -> tuple[int, int]:
    eyes = meta.get("eye_indices")
    if eyes is None or len(eyes) != 2:
        raise CommandError("dataset manifest does not name two eye indices")
    return (int(eyes[0]), int(eyes[1]))


def cmd_train(args) -> int:
    samples, meta = dataio.load_dataset(args.data)
    eyes = _manifest_eyes(meta)
    cascade_cfg = CascadeConfig(
        stages=args.stages,
        lambda_shape=args.lambda_shape,
        lambda_prob=args.lambda_prob,
        ridge=args.ridge,
        variant=Variant(args.variant),
        seed=args.seed,
    )
    cd_cfg = CDConfig(epochs=args.epochs, seed=args.seed)
    model = train_from_samples(
        samples,
        cascade_cfg,
        desc_cfg=DescriptorConfig(),
        cd_cfg=cd_cfg,
        n_hidden=args.hidden,
        eye_indices=eyes,
    )
    save_model(model, args.out)
    print(f"wrote model ({args.variant}, {args.stages} stages) to {args.out}")
    return 0


def _write_trace(path, shapes, probs) -> None:
    lines = [f"records {len(shapes)}"]
    for t, (shape, p) in enumerate(zip(shapes, probs)):
        lines.append(f"record {t}")
        lines.append(f"points {shape.n_points}")
        for x, y in shape.points:
            lines.append(f"{x!r} {y!r}")
        lines.append("probs " + " ".join(repr(float(v)) for v in p))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def _detect_one(model: CascadeModel, image, box, prefix, threshold, trace) -> None:
    shapes, probs = infer_stages(image, box, model)
    p = probs[-1]
    labels = (p >= threshold).astype(np.int64)
    dataio.write_pts(prefix + ".pts", shapes[-1])
    dataio.write_probs(prefix + ".auprob", p)
    dataio.write_labels(prefix + ".au", labels)
    if trace:
        _write_trace(prefix + ".trace.txt", shapes, probs)


def cmd_detect(args) -> int:
    single = args.image is not None
    batch = args.data is not None
    if single == batch:
        raise CommandError(
            "detect needs either --image/--box (single) or --data (batch)"
        )
    model = load_model(args.model)
    if single:
        if args.box is None:
            raise CommandError("single-image detection needs --box")
        image = dataio.read_pgm(args.image)
        box = dataio.read_box(args.box)
        _detect_one(model, image, box, args.out, args.threshold, args.trace)
        return 0
    samples, meta = dataio.load_dataset(args.data)
    if meta.get("d_landmarks") not in (None, model.n_landmarks):
        raise CommandError(
            f"model has {model.n_landmarks} landmarks but dataset has "
            f"{meta['d_landmarks']}"
        )
    if meta.get("n_aus") not in (None, model.n_labels):
        raise CommandError(
            f"model has {model.n_labels} labels but dataset has {meta['n_aus']}"
        )
    os.makedirs(args.out, exist_ok=True)
    for i, sample in enumerate(samples):
        prefix = os.path.join(args.out, dataio.sample_stem(i))
        _detect_one(
            model, sample.image, sample.box, prefix, args.threshold, args.trace
        )
    with open(os.path.join(args.out, DETECT_META_NAME), "w") as f:
        f.write(
            f"variant {model.config.variant.value}\n"
            f"stages {model.config.stages}\n"
            f"threshold {args.threshold!r}\n"
            f"n_samples {len(samples)}\n"
        )
    print(f"wrote {len(samples)} detections to {args.out}")
    return 0


def _read_detect_meta(pred_dir) -> dict:
    path = os.path.join(pred_dir, DETECT_META_NAME)
    if not os.path.exists(path):
        return {}
    meta = {}
    with open(path) as f:
        for line in f:
            key, _, val = line.strip().partition(" ")
            if key:
                meta[key] = val
    return meta


def cmd_eval(args) -> int:
    gt_samples, meta = dataio.load_dataset(args.gt)
    eyes = _manifest_eyes(meta)
    pred_shapes = []
    pred_probs = []
    for i in range(len(gt_samples)):
        stem = dataio.sample_stem(i)
        pts_path = os.path.join(args.pred, stem + ".pts")
        prob_path = os.path.join(args.pred, stem + ".auprob")
        if not (os.path.exists(pts_path) and os.path.exists(prob_path)):
            raise CommandError(
                f"predictions misaligned with ground truth: missing {stem}.*"
            )
        pred_shapes.append(dataio.read_pts(pts_path))
        pred_probs.append(dataio.read_probs(prob_path))
    extra = os.path.join(args.pred, dataio.sample_stem(len(gt_samples)) + ".pts")
    if os.path.exists(extra):
        raise CommandError(
            "predictions misaligned with ground truth: more predictions than samples"
        )
    report = evaluate(
        pred_shapes,
        [s.gt_shape for s in gt_samples],
        np.stack(pred_probs),
        np.stack([s.labels for s in gt_samples]),
        eyes,
        threshold=args.threshold,
    )
    detect_meta = _read_detect_meta(args.pred)
    variant = detect_meta.get("variant")
    if args.out:
        doc = report.to_dict()
        if variant:
            doc["variant"] = variant
        with open(args.out, "w") as f:
            json.dump(doc, f, indent=2)
            f.write("\n")
    if variant:
        print(f"variant {variant}")
    print(f"error {100.0 * report.mean_normalized_error:.2f}")
    print(f"f1 {100.0 * report.weighted_f1:.2f}")
    print(f"auc {100.0 * report.weighted_auc:.2f}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
