# Copyright (C) 2022 EdgeFace Lite contributors
#
# SPDX-License-Identifier: BSD-3-Clause

import argparse
import logging
import os
import sys
import numpy as np
from . import __version__
from .accounting import count, gamma_sweep, sweep_to_csv, plot_sweep, \
    DEFAULT_GAMMAS
from .backbone import VariantSpec, build, skeleton
from .container import save_file, load_file
from .errors import EdgeFaceError, NumericError
from .image import read_image, write_raw
from .losses import gradient_suite, GRAD_TOLERANCE
from .train import load_config, toy_train
from .verification import PairList, score_pairs, evaluate, \
    cosine_similarity, image_loader, DEFAULT_FAR_TARGETS

__author__ = "EdgeFace Lite developers"
__copyright__ = "Copyright 2022, EdgeFace Lite contributors"
__email__ = "edgeface-lite@users.noreply.github.com"


logger = logging.getLogger(__name__)

EXIT_USAGE = 1


class _ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with status 1 instead of argparse's 2"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, "{}: error: {}\n".format(self.prog, message))


def _gamma(value: str) -> float:
    gamma = float(value)
    if not 0.0 < gamma <= 1.0:
        raise argparse.ArgumentTypeError("gamma must be in (0, 1], got {}"
                                         .format(value))
    return gamma


def _variant(value: str) -> VariantSpec:
    try:
        return VariantSpec.from_name(value)
    except ValueError as err:
        raise argparse.ArgumentTypeError(str(err))


def _float_list(value: str) -> list:
    try:
        return [float(v) for v in value.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma separated numbers, "
                                         "got {}".format(value))


def _cmd_count(args) -> int:
    print(count(skeleton(args.variant, args.gamma)).to_json())
    return 0


def _cmd_sweep(args) -> int:
    spec = args.variant
    rows = gamma_sweep(spec, args.gammas)
    sys.stdout.write(sweep_to_csv(rows))
    if args.plot:
        plot_sweep(rows, args.plot, title=spec.name)
    return 0


def _cmd_init(args) -> int:
    model = build(args.variant, args.gamma, args.seed)
    save_file(model, args.out)
    logger.info("Wrote %s to %s", model, args.out)
    return 0


def _cmd_embed(args) -> int:
    model = load_file(args.weights)
    embedding = model.embed(read_image(args.input)[None])[0]
    write_raw(args.out, embedding)
    return 0


def _cmd_verify(args) -> int:
    model = load_file(args.weights)
    emb = model.embed(np.stack([read_image(args.a), read_image(args.b)]))
    print("{:.6f}".format(cosine_similarity(emb[0], emb[1])))
    return 0


def _cmd_evaluate(args) -> int:
    model = load_file(args.weights)
    pairs = PairList.read(args.pairs)
    root = args.root or os.path.dirname(os.path.abspath(args.pairs))
    score_set = score_pairs(model, pairs, image_loader(root, read_image))
    if args.scores:
        score_set.write(args.scores)
    report = evaluate(score_set, args.folds, args.far)
    report.write(args.report)
    for ref_a, ref_b, reason in score_set.rejects:
        logger.warning("Rejected pair %s %s: %s", ref_a, ref_b, reason)
    logger.info("Accuracy %.4f over %d pairs", report.accuracy,
                len(score_set.scored))
    return 0


def _cmd_factorize(args) -> int:
    model, errors = load_file(args.weights).factorize(args.gamma)
    save_file(model, args.out)
    for name, error in errors.items():
        print("{} {:.6g}".format(name, error))
    return 0


def _cmd_gradcheck(args) -> int:
    worst = gradient_suite(args.points, args.seed)
    failed = [name for name, error in worst.items() if error >= args.tol]
    for name, error in worst.items():
        print("{:<20} {:.3e} {}".format(name, error,
                                        "FAIL" if name in failed else "ok"))
    if failed:
        raise NumericError("Gradient check failed for {}"
                           .format(", ".join(failed)))
    return 0


def _cmd_train_toy(args) -> int:
    config, loss_config = load_config(args.config)
    history = toy_train(config, loss_config)
    with open(args.out, "w") as file:
        file.write(history.to_csv())
    print("final accuracy {:.4f}".format(history.final_accuracy))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="edgeface",
        description="Face embedding backbone with low-rank linear layers"
    )
    parser.add_argument("--version", action="version",
                        version="%(prog)s {}".format(__version__))
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug logging on standard error")
    commands = parser.add_subparsers(dest="command", metavar="command",
                                     parser_class=_ArgumentParser)
    commands.required = True

    sub = commands.add_parser("count", help="parameter and FLOP census")
    sub.add_argument("--variant", type=_variant, required=True,
                     help="s, xs or xxs")
    sub.add_argument("--gamma", type=_gamma, default=None)
    sub.set_defaults(func=_cmd_count)

    sub = commands.add_parser("sweep", help="cost against rank ratio")
    sub.add_argument("--variant", type=_variant, required=True,
                     help="s, xs or xxs")
    sub.add_argument("--gammas", type=_float_list,
                     default=list(DEFAULT_GAMMAS))
    sub.add_argument("--plot", help="save the sweep figure to this file")
    sub.set_defaults(func=_cmd_sweep)

    sub = commands.add_parser("init", help="write a seeded weight container")
    sub.add_argument("--variant", type=_variant, required=True,
                     help="s, xs or xxs")
    sub.add_argument("--gamma", type=_gamma, default=None)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", required=True)
    sub.set_defaults(func=_cmd_init)

    sub = commands.add_parser("embed", help="embed one image")
    sub.add_argument("--weights", required=True)
    sub.add_argument("--input", required=True)
    sub.add_argument("--out", required=True)
    sub.set_defaults(func=_cmd_embed)

    sub = commands.add_parser("verify", help="cosine score of two images")
    sub.add_argument("--weights", required=True)
    sub.add_argument("--a", required=True)
    sub.add_argument("--b", required=True)
    sub.set_defaults(func=_cmd_verify)

    sub = commands.add_parser("evaluate", help="verification protocol")
    sub.add_argument("--weights", required=True)
    sub.add_argument("--pairs", required=True)
    sub.add_argument("--report", required=True)
    sub.add_argument("--root", help="directory references are relative to")
    sub.add_argument("--scores", help="also write the score file")
    sub.add_argument("--folds", type=int, default=10)
    sub.add_argument("--far", type=_float_list,
                     default=list(DEFAULT_FAR_TARGETS))
    sub.set_defaults(func=_cmd_evaluate)

    sub = commands.add_parser("factorize", help="SVD every linear layer")
    sub.add_argument("--weights", required=True)
    sub.add_argument("--gamma", type=_gamma, required=True)
    sub.add_argument("--out", required=True)
    sub.set_defaults(func=_cmd_factorize)

    sub = commands.add_parser("gradcheck", help="analytic gradient checks")
    sub.add_argument("--points", type=int, default=20)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--tol", type=float, default=GRAD_TOLERANCE)
    sub.set_defaults(func=_cmd_gradcheck)

    sub = commands.add_parser("train-toy", help="train on synthetic blobs")
    sub.add_argument("--config", required=True)
    sub.add_argument("--out", required=True)
    sub.set_defaults(func=_cmd_train_toy)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else
                        logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except EdgeFaceError as err:
        print("edgeface: {}".format(err), file=sys.stderr)
        return err.exit_code
    except (OSError, ValueError) as err:
        print("edgeface: {}".format(err), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
