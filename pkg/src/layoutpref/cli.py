"""Command-line entry point: each pipeline stage is a subcommand.

Exit codes: 0 success, 1 usage error, 2 validation/input error, 3 runtime
failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from .errors import (
    LayoutPrefError,
    ParameterError,
    ParseError,
    StageInputError,
    ValidationError,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

ENV_PORT = "LAYOUTPREF_PORT"
ENV_DATA = "LAYOUTPREF_DATA"


class _UsageExit(Exception):
    def __init__(self, code: int):
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise _UsageExit(EXIT_USAGE)

    def exit(self, status=0, message=None):
        if message:
            sys.stderr.write(message)
        raise _UsageExit(EXIT_USAGE if status else EXIT_OK)


def _int_pair(text: str) -> tuple[int, int]:
    try:
        lo, hi = (int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI integers, got {text!r}")
    if lo > hi:
        raise argparse.ArgumentTypeError(f"range must satisfy LO <= HI, got {text!r}")
    return lo, hi


def _int_tuple(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> _Parser:
    parser = _Parser(prog="layoutpref", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_data(p):
        p.add_argument("--data", default=os.environ.get(ENV_DATA, "data"), help="data directory")
        return p

    p = add_data(sub.add_parser("gen-graphs", help="generate the four-family graph corpus"))
    p.add_argument("--count-per-family", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--small-range", type=_int_pair, default=None, metavar="LO,HI")
    p.add_argument("--large-range", type=_int_pair, default=None, metavar="LO,HI")

    p = add_data(sub.add_parser("layout", help="compute the five layouts per graph"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)

    p = add_data(sub.add_parser("metrics", help="compute quality metrics for every layout"))
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)

    add_data(sub.add_parser("label-metric", help="label all layout pairs from metrics"))

    p = add_data(sub.add_parser("synth-votes", help="generate synthetic participant votes"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--flip-probability", type=float, default=0.15)
    p.add_argument("--votes-per-pair", type=int, default=1)

    add_data(sub.add_parser("label-hp", help="aggregate votes into preference labels"))

    p = add_data(sub.add_parser("rasterize", help="render layouts to training images"))
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)

    p = add_data(sub.add_parser("serve", help="serve the annotation UI and API"))
    p.add_argument("--port", type=int, default=int(os.environ.get(ENV_PORT, "8080")))
    p.add_argument("--static", default=None, help="directory of UI assets to serve at /")
    p.add_argument("--seed", type=int, default=0)

    p = add_data(sub.add_parser("train", help="train a preference model"))
    p.add_argument("--regime", choices=["m", "hp", "m+hp"], required=True)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--train-seed", type=int, default=0)
    p.add_argument("--epochs-pretrain", type=int, default=30)
    p.add_argument("--epochs-finetune", type=int, default=30)
    p.add_argument("--lr-pretrain", type=float, default=1e-3)
    p.add_argument("--lr-finetune", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--image-size", type=int, default=64)
    p.add_argument("--join", choices=["subtract", "concat"], default="subtract")
    p.add_argument("--split-ratio", type=float, default=0.7)
    p.add_argument("--channels", type=_int_tuple, default=(16, 32, 64), metavar="C1,C2,...")
    p.add_argument("--feature-dim", type=int, default=128)

    p = add_data(sub.add_parser("evaluate", help="evaluate a model on its held-out pairs"))
    p.add_argument("--model", required=True)
    p.add_argument("--split-seed", type=int, default=0)

    add_data(sub.add_parser("report", help="aggregate evaluations into the accuracy/significance report"))

    p = sub.add_parser("predict", help="score one image pair with a trained model")
    p.add_argument("model")
    p.add_argument("image_a")
    p.add_argument("image_b")

    return parser


def _cmd_predict(args) -> int:
    from .raster import load_png
    from .siamese import load_model, predict

    model = load_model(args.model)
    img_a = load_png(args.image_a)
    img_b = load_png(args.image_b)
    score, label = predict(model, img_a, img_b)
    first = "first" if label == 0 else "second"
    print(f"score={score:.6f} label={label} ({first} image preferred)")
    return EXIT_OK


def _cmd_serve(args) -> int:
    from .pipeline import IMAGES_DIR, VOTES_DIR
    from .service import AnnotationService, make_server, pair_universe_from_image_dir

    image_dir = os.path.join(args.data, IMAGES_DIR)
    if not os.path.isdir(image_dir):
        raise StageInputError(f"missing input artifact: {image_dir} (run rasterize first)")
    universe = pair_universe_from_image_dir(image_dir)
    votes_dir = os.path.join(args.data, VOTES_DIR)
    os.makedirs(votes_dir, exist_ok=True)
    service = AnnotationService(universe, os.path.join(votes_dir, "votes.jsonl"), seed=args.seed)
    httpd = make_server(service, image_dir, port=args.port, static_dir=args.static)
    host, port = httpd.server_address[:2]
    print(f"annotation service on http://{host}:{port}/ ({len(universe)} pairs)")
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()
    return EXIT_OK


def run(argv) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    from . import pipeline
    from .siamese import JoinMode, Regime, TrainConfig

    if args.command == "gen-graphs":
        paths = pipeline.stage_gen_graphs(
            args.data, args.count_per_family, args.seed, args.small_range, args.large_range
        )
        print(f"wrote {len(paths)} graphs under {args.data}/graphs")
    elif args.command == "layout":
        paths = pipeline.stage_layout(args.data, args.seed, args.workers)
        print(f"wrote {len(paths)} layouts under {args.data}/layouts")
    elif args.command == "metrics":
        path = pipeline.stage_metrics(args.data, args.workers)
        print(f"wrote {path}")
    elif args.command == "label-metric":
        path = pipeline.stage_label_metric(args.data)
        print(f"wrote {path}")
    elif args.command == "synth-votes":
        path = pipeline.stage_synth_votes(args.data, args.seed, args.flip_probability, args.votes_per_pair)
        print(f"wrote {path}")
    elif args.command == "label-hp":
        path = pipeline.stage_label_hp(args.data)
        print(f"wrote {path}")
    elif args.command == "rasterize":
        paths = pipeline.stage_rasterize(args.data, args.size, args.workers)
        print(f"wrote {len(paths)} images under {args.data}/images")
    elif args.command == "serve":
        return _cmd_serve(args)
    elif args.command == "train":
        cfg = TrainConfig(
            regime=Regime(args.regime),
            epochs_pretrain=args.epochs_pretrain,
            epochs_finetune=args.epochs_finetune,
            lr_pretrain=args.lr_pretrain,
            lr_finetune=args.lr_finetune,
            batch_size=args.batch_size,
            image_size=args.image_size,
            seed=args.train_seed,
            join=JoinMode(args.join),
            split_ratio=args.split_ratio,
            channels=args.channels,
            feature_dim=args.feature_dim,
        )
        path = pipeline.stage_train(args.data, cfg, args.split_seed)
        print(f"wrote {path}")
    elif args.command == "evaluate":
        path = pipeline.stage_evaluate(args.data, args.model, args.split_seed)
        print(f"wrote {path}")
    elif args.command == "report":
        path = pipeline.stage_report(args.data)
        print(f"wrote {path}")
        with open(path, "r", encoding="utf-8") as fh:
            print(fh.read())
    elif args.command == "predict":
        return _cmd_predict(args)
    return EXIT_OK


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        return run(argv)
    except _UsageExit as exc:
        return exc.code
    except (ParameterError, ValidationError, ParseError, StageInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (LayoutPrefError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
