import argparse
import logging
import sys
from typing import Dict, List, Optional, Sequence

from pythonjsonlogger import jsonlogger

import config  # Import config module
from models.train_config import TrainConfig
from services.curve_service import CurveService
from services.experiment_service import VARIANTS, AblationService
from services.phantom_service import PhantomService
from services.training_service import TrainingService
from utils.errors import TextSemiSegError

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


class UsageError(Exception):
    pass


class CommandParser(argparse.ArgumentParser):
    """argparse with errors raised instead of printed, so main() owns the exit path"""

    def error(self, message):
        raise UsageError(message)


def configure_logging(level: str = None, fmt: str = None) -> None:
    level = (level or config.LOG_LEVEL).upper()
    handler = logging.StreamHandler(sys.stderr)
    if (fmt or config.LOG_FORMAT) == 'json':
        handler.setFormatter(jsonlogger.JsonFormatter('%(asctime)s %(name)s %(levelname)s %(message)s'))
    else:
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logging.basicConfig(level=level, handlers=[handler], force=True)


def parse_overrides(pairs: Optional[Sequence[str]]) -> Dict[str, str]:
    overrides = {}
    for pair in pairs or []:
        key, sep, value = pair.partition('=')
        if not sep or not key.strip():
            raise UsageError(f"--set expects key=value, got '{pair}'")
        overrides[key.strip()] = value.strip()
    return overrides


def parse_int_list(text: str, name: str) -> List[int]:
    try:
        return [int(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise UsageError(f"{name} expects comma-separated integers, got '{text}'")


def build_parser() -> CommandParser:
    parser = CommandParser(prog='text-semiseg', description='Text-driven semi-supervised 3D segmentation')
    parser.add_argument('--log-level', default=None, type=str.upper,
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    commands = parser.add_subparsers(dest='command', required=True, parser_class=CommandParser)

    gen = commands.add_parser('gen-data', help='write a synthetic phantom dataset')
    gen.add_argument('--seed', type=int, default=1)
    gen.add_argument('--out', default='data')
    gen.add_argument('--labeled', type=int, default=4)
    gen.add_argument('--unlabeled', type=int, default=16)
    gen.add_argument('--test', type=int, default=4)
    gen.add_argument('--val', type=int, default=0)
    gen.add_argument('--size', default='32,32,32', help='H,W,D')
    gen.add_argument('--classes', type=int, default=2)

    train = commands.add_parser('train', help='train from a key = value config file')
    train.add_argument('--config', required=True)
    train.add_argument('--set', action='append', metavar='KEY=VALUE', help='override a config value')

    evaluate = commands.add_parser('eval', help='score a checkpoint on a manifest split')
    evaluate.add_argument('--checkpoint', required=True)
    evaluate.add_argument('--manifest', default=None, help='defaults to the manifest the model was trained on')
    evaluate.add_argument('--out', required=True)
    evaluate.add_argument('--split', default='test', choices=['test', 'val', 'labeled'])

    infer = commands.add_parser('infer', help='segment one volume')
    infer.add_argument('--checkpoint', required=True)
    infer.add_argument('--volume', required=True)
    infer.add_argument('--out', required=True)

    curves = commands.add_parser('export-curves', help='plot loss and warm-up curves from a trace')
    curves.add_argument('--trace', required=True)
    curves.add_argument('--out', required=True, help='.svg or .png')

    ablate = commands.add_parser('ablate', help='train and test ablation variants over several seeds')
    ablate.add_argument('--config', required=True)
    ablate.add_argument('--seeds', default='1,2,3')
    ablate.add_argument('--variants', default=','.join(VARIANTS))
    ablate.add_argument('--out', required=True)
    ablate.add_argument('--set', action='append', metavar='KEY=VALUE')
    return parser


def run(args: argparse.Namespace) -> None:
    if args.command == 'gen-data':
        size = parse_int_list(args.size, '--size')
        _, manifest_path = PhantomService().generate_phantom_dataset(
            seed=args.seed, n_labeled=args.labeled, n_unlabeled=args.unlabeled, n_test=args.test,
            size=size, num_classes=args.classes, out_dir=args.out, n_val=args.val,
        )
        print(manifest_path)

    elif args.command == 'train':
        train_config = TrainConfig.from_file(args.config, parse_overrides(args.set))
        summary = TrainingService().train(train_config)
        print(summary.final_checkpoint)

    elif args.command == 'eval':
        TrainingService().evaluate(args.checkpoint, args.manifest, args.out, args.split)
        print(args.out)

    elif args.command == 'infer':
        TrainingService().infer(args.checkpoint, args.volume, args.out)
        print(args.out)

    elif args.command == 'export-curves':
        print(CurveService().export_curves(args.trace, args.out))

    elif args.command == 'ablate':
        base = TrainConfig.from_file(args.config, parse_overrides(args.set))
        variants = [v.strip() for v in args.variants.split(',') if v.strip()]
        seeds = parse_int_list(args.seeds, '--seeds')
        AblationService().run_ablation(base, variants, seeds, args.out)
        print(args.out)


def _one_line(error: Exception) -> str:
    return ' '.join(str(error).split())


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Exit codes: 0 ok, 1 domain error, 2 usage error, 3 unexpected failure"""
    try:
        args = build_parser().parse_args(argv)
        configure_logging(args.log_level)
        run(args)
    except UsageError as e:
        print(f"E_USAGE: {_one_line(e)}", file=sys.stderr)
        return 2
    except TextSemiSegError as e:
        print(f"{e.code}: {_one_line(e)}", file=sys.stderr)
        return 1
    except Exception as e:
        logger.debug("Unexpected failure", exc_info=True)
        print(f"E_INTERNAL: {type(e).__name__}: {_one_line(e)}", file=sys.stderr)
        return 3
    return 0


if __name__ == '__main__':
    sys.exit(main())
