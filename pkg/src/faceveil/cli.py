"""Command line front end.

Subcommands: detect (boxes only), run (detect + classify + redact),
build-gallery (embed labeled chips), eval (score a report stream),
train-toy (synthetic training), gradcheck (finite-difference audit) and
bench (per-stage timing).  Exit codes: 0 success, 1 usage or
configuration, 2 bad data, 3 violated runtime invariant.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .denature import RedactionPolicy, parse_method
from .detect import DetectorConfig
from .embed import align_crop
from .errors import ConfigError, DataError, FaceveilError, InvariantError, TrainingDiverged
from .image import to_planar
from .imgio import iter_frames, load_image, save_ppm
from .nn import WeightStore, load_weights
from .pipeline import (
    Pipeline,
    PipelineConfig,
    bench,
    evaluate_reports,
    report_line,
)
from .recognize import (
    ADULT,
    CHILD,
    LABELS,
    gallery_build,
    load_gallery,
    save_gallery,
    save_roc,
)
from .train import TASKS, TrainerConfig, run_grad_checks, train_toy

PROTECT_CHOICES = {
    "child": frozenset({CHILD}),
    "adult": frozenset({ADULT}),
    "all": frozenset({CHILD, ADULT}),
    "none": frozenset(),
}
IMAGE_SUFFIXES = (".ppm", ".png")
_TC = TrainerConfig()


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; route through ConfigError for exit 1
    def error(self, message):
        raise ConfigError(message)


def build_parser():
    parser = _Parser(prog="faceveil", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_weights(p):
        p.add_argument(
            "--weights",
            action="append",
            required=True,
            metavar="FILE",
            help="weight file; repeat to merge several (names must not collide)",
        )

    def add_detector(p):
        p.add_argument("--min-face", type=int, default=20)
        p.add_argument("--scale-factor", type=float, default=0.709)
        p.add_argument("--thresholds", default="0.6,0.7,0.7", metavar="A,B,C",
                       help="per-stage face score cuts")

    p = sub.add_parser("detect", help="write face boxes for a frame stream")
    add_weights(p)
    p.add_argument("--input", required=True, metavar="PATH", help="frame file or directory")
    p.add_argument("--out", required=True, metavar="FILE", help="one JSON line per frame")
    add_detector(p)

    p = sub.add_parser("run", help="detect, classify and redact faces in a frame stream")
    add_weights(p)
    p.add_argument("--input", required=True, metavar="PATH", help="frame file or directory")
    p.add_argument("--out-dir", required=True, metavar="DIR", help="processed frames land here")
    p.add_argument("--report", metavar="FILE", help="report stream (default OUT_DIR/report.jsonl)")
    p.add_argument("--gallery", metavar="FILE", help="reference gallery file")
    p.add_argument("--threshold", type=float, default=0.0)
    p.add_argument("--chip-size", type=int, default=160)
    p.add_argument("--method", default="pixelate",
                   help="pixelate[:block] | blur[:sigma] | scramble:HEX")
    p.add_argument("--protect", choices=sorted(PROTECT_CHOICES), default="child")
    p.add_argument("--box-expansion", type=float, default=0.1)
    p.add_argument("--no-redact-ties", action="store_true")
    p.add_argument("--no-timing", action="store_true",
                   help="omit timing for byte-identical reports")
    add_detector(p)

    p = sub.add_parser("build-gallery", help="embed labeled face chips into a gallery file")
    add_weights(p)
    p.add_argument("--input", required=True, metavar="DIR", help="directory of chip images")
    p.add_argument("--labels", required=True, metavar="FILE", help="filename,label lines")
    p.add_argument("--out", required=True, metavar="FILE")
    p.add_argument("--chip-size", type=int, default=160)

    p = sub.add_parser("eval", help="score a report stream against truth labels")
    p.add_argument("--reports", required=True, metavar="FILE")
    p.add_argument("--labels", required=True, metavar="FILE", help="filename,label lines")
    p.add_argument("--roc", metavar="FILE", help="write threshold,fpr,tpr points here")

    p = sub.add_parser("train-toy", help="run a toy training task on synthetic data")
    p.add_argument("--task", choices=TASKS, default="detector")
    p.add_argument("--out", required=True, metavar="FILE", help="weight file to write")
    p.add_argument("--metrics", metavar="FILE", help="per-epoch CSV")
    p.add_argument("--epochs", type=int, default=_TC.epochs)
    p.add_argument("--lr", type=float, default=_TC.learning_rate)
    p.add_argument("--batch-size", type=int, default=_TC.batch_size)
    p.add_argument("--margin", type=float, default=_TC.margin)
    p.add_argument("--seed", type=int, default=_TC.seed)
    p.add_argument("--samples", type=int, default=_TC.n_train)
    p.add_argument("--chip-size", type=int, default=_TC.chip_size)

    p = sub.add_parser("gradcheck", help="finite-difference audit of losses and layers")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("bench", help="per-stage latency stats over repeated frames")
    p.add_argument("--config", required=True, metavar="FILE", help="pipeline config JSON")
    p.add_argument("--frames", type=int, default=0,
                   help="benchmark this many frames, cycling the input (0 = one pass)")
    return parser


def _merged_weights(paths):
    return WeightStore.merge(*(load_weights(p) for p in paths))


def _detector_config(args):
    parts = str(args.thresholds).split(",")
    if len(parts) != 3:
        raise ConfigError(f"--thresholds needs three values, got {args.thresholds!r}")
    try:
        cuts = tuple(float(v) for v in parts)
    except ValueError:
        raise ConfigError(f"--thresholds values must be numbers, got {args.thresholds!r}") from None
    return DetectorConfig(
        min_face_size=args.min_face, scale_factor=args.scale_factor, thresholds=cuts
    )


def iter_input(path):
    """Yield (source name, frame) from a directory or a concatenated stream.

    Directory entries that fail to load are skipped with a warning so a
    single bad file never kills the run.
    """
    path = Path(path)
    if path.is_dir():
        for f in sorted(path.iterdir()):
            if f.suffix.lower() not in IMAGE_SUFFIXES:
                continue
            try:
                yield f.name, load_image(f)
            except (FaceveilError, OSError) as e:
                print(f"faceveil: skipping {f.name}: {e}", file=sys.stderr)
        return
    if not path.exists():
        raise DataError(f"input {path} does not exist")
    for i, frame in enumerate(iter_frames(path)):
        yield str(i), frame


def load_labels(path):
    """filename,label lines -> {filename: label}; a header line is tolerated."""
    truth = {}
    with open(path, encoding="utf-8") as f:
        for ln, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            name, sep, label = line.rpartition(",")
            name, label = name.strip(), label.strip()
            if ln == 1 and label.lower() == "label":
                continue
            if not sep or not name:
                raise DataError(f"{path}:{ln}: expected 'filename,label'")
            if label not in LABELS:
                raise DataError(f"{path}:{ln}: unknown label {label!r}")
            if name in truth:
                raise DataError(f"{path}:{ln}: duplicate entry for {name!r}")
            truth[name] = label
    if not truth:
        raise DataError(f"{path}: no labels")
    return truth


def _cmd_detect(args):
    weights = _merged_weights(args.weights)
    cfg = PipelineConfig(
        detector=_detector_config(args), policy=RedactionPolicy(labels=frozenset())
    )
    pipe = Pipeline(weights, config=cfg)
    n_frames = n_faces = 0
    with open(args.out, "w", encoding="utf-8") as out:
        for i, (source, frame) in enumerate(iter_input(args.input)):
            _, report = pipe.process_frame(frame, i, source=source)
            lean = {
                "frame": report["frame"],
                "source": report["source"],
                "faces": [
                    {k: f[k] for k in ("box", "score", "landmarks")} for f in report["faces"]
                ],
            }
            out.write(report_line(lean) + "\n")
            n_frames += 1
            n_faces += len(report["faces"])
    print(json.dumps({"frames": n_frames, "faces": n_faces}))
    return 0


def _cmd_run(args):
    weights = _merged_weights(args.weights)
    gallery = load_gallery(args.gallery) if args.gallery else None
    policy = RedactionPolicy(
        labels=PROTECT_CHOICES[args.protect],
        redact_on_tie=not args.no_redact_ties,
        box_expansion=args.box_expansion,
    )
    cfg = PipelineConfig(
        detector=_detector_config(args),
        chip_size=args.chip_size,
        threshold=args.threshold,
        method=parse_method(args.method),
        policy=policy,
        emit_timing=not args.no_timing,
    )
    pipe = Pipeline(weights, gallery, cfg)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = Path(args.report) if args.report else out_dir / "report.jsonl"
    n_frames = n_faces = n_redacted = 0
    with open(report_path, "w", encoding="utf-8") as rep:
        for i, (source, frame) in enumerate(iter_input(args.input)):
            out, report = pipe.process_frame(frame, i, source=source)
            name = Path(source).stem if not source.isdigit() else f"frame_{i:05d}"
            save_ppm(out, out_dir / f"{name}.ppm")
            rep.write(report_line(report) + "\n")
            n_frames += 1
            n_faces += len(report["faces"])
            n_redacted += len(report["redactions"])
    print(json.dumps({"frames": n_frames, "faces": n_faces, "redacted": n_redacted}))
    return 0


def _cmd_build_gallery(args):
    weights = _merged_weights(args.weights)
    truth = load_labels(args.labels)
    root = Path(args.input)
    chips, labels, names = [], [], []
    for name in sorted(truth):
        f = root / name
        if not f.exists():
            raise DataError(f"label file names missing chip {name!r}")
        img = to_planar(load_image(f))
        chips.append(align_crop(img, (0, 0, img.shape[2], img.shape[1]), args.chip_size))
        labels.append(truth[name])
        names.append(name)
    gallery, failures = gallery_build(chips, labels, weights)
    for idx, msg in failures:
        print(f"faceveil: skipping {names[idx]}: {msg}", file=sys.stderr)
    if len(gallery) == 0:
        print("faceveil: warning: gallery is empty and cannot classify", file=sys.stderr)
    save_gallery(gallery, args.out)
    print(json.dumps({"entries": len(gallery), "skipped": len(failures)}))
    return 0


def _cmd_eval(args):
    reports = []
    with open(args.reports, encoding="utf-8") as f:
        for ln, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                reports.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise DataError(f"{args.reports}:{ln}: {e}") from None
    result = evaluate_reports(reports, load_labels(args.labels))
    if args.roc:
        if result.roc is None:
            raise DataError("no classification scores to build a ROC from")
        save_roc(result.roc, args.roc)
    print(json.dumps(result.summary()))
    return 0


def _cmd_train_toy(args):
    config = TrainerConfig(
        task=args.task,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        margin=args.margin,
        seed=args.seed,
        n_train=args.samples,
        chip_size=args.chip_size,
    )
    result = train_toy(config, weights_path=args.out, metrics_path=args.metrics)
    final = {}
    for stage, epoch, loss, acc in result.history:
        final[stage] = {"epoch": epoch, "loss": round(loss, 6), "accuracy": round(acc, 4)}
    print(json.dumps(final))
    return 0


def _cmd_gradcheck(args):
    report = run_grad_checks(args.seed)
    bounds = {name: 1e-6 if name in ("loss_box", "loss_landmark") else 1e-3 for name in report}
    print(json.dumps({name: f"{err:.3g}" for name, err in sorted(report.items())}))
    bad = {name: err for name, err in report.items() if err > bounds[name]}
    if bad:
        raise InvariantError(f"gradient checks failed: {bad}")
    return 0


def _cmd_bench(args):
    with open(args.config, encoding="utf-8") as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise DataError(f"{args.config}: {e}") from None
    if not isinstance(raw, dict) or "weights" not in raw or "input" not in raw:
        raise ConfigError(f"{args.config} must be a JSON object with weights and input")
    paths = raw["weights"] if isinstance(raw["weights"], list) else [raw["weights"]]
    weights = _merged_weights(paths)
    gallery = load_gallery(raw["gallery"]) if raw.get("gallery") else None
    policy = RedactionPolicy(
        labels=PROTECT_CHOICES[raw.get("protect", "child" if gallery else "none")],
        redact_on_tie=raw.get("redact_on_tie", True),
        box_expansion=raw.get("box_expansion", 0.1),
    )
    cfg = PipelineConfig(
        detector=DetectorConfig(
            min_face_size=raw.get("min_face", 20),
            scale_factor=raw.get("scale_factor", 0.709),
            thresholds=tuple(raw.get("thresholds", (0.6, 0.7, 0.7))),
        ),
        chip_size=raw.get("chip_size", 160),
        threshold=raw.get("threshold", 0.0),
        method=parse_method(raw.get("method", "pixelate")),
        policy=policy,
    )
    pipe = Pipeline(weights, gallery, cfg)
    frames = [frame for _, frame in iter_input(raw["input"])]
    if not frames:
        raise DataError(f"no frames in {raw['input']}")
    if args.frames > 0:
        frames = [frames[i % len(frames)] for i in range(args.frames)]
    print(json.dumps(bench(frames, pipe)))
    return 0


_COMMANDS = {
    "detect": _cmd_detect,
    "run": _cmd_run,
    "build-gallery": _cmd_build_gallery,
    "eval": _cmd_eval,
    "train-toy": _cmd_train_toy,
    "gradcheck": _cmd_gradcheck,
    "bench": _cmd_bench,
}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"faceveil: {e}", file=sys.stderr)
        return 1
    except DataError as e:
        print(f"faceveil: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"faceveil: {e}", file=sys.stderr)
        return 2
    except (InvariantError, TrainingDiverged) as e:
        print(f"faceveil: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
