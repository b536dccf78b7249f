"""
Shared helpers for the command modules: common flags, config resolution, data loading
"""
import argparse
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Type, Union

from config import LOG_LEVELS, build_config, flag_name
from errors import DataError, DataParseError
from services.data import PartialDataset, parse_dataset

logger = logging.getLogger(__name__)


def common_parser() -> argparse.ArgumentParser:
    """Parent parser with the flags every subcommand accepts"""
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", help="flat key = value config file; flags override it")
    parent.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    parent.add_argument("--log-level", type=str.upper, choices=LOG_LEVELS, default=None)
    return parent


def add_model_flags(parser: argparse.ArgumentParser, model_cls: Type, exclude: Iterable[str] = ("seed",)) -> None:
    """
    One `--kebab-case` flag per config field

    Values are passed through as strings and converted by the model itself, so
    a bad value surfaces as a ConfigError naming the flag.
    """
    skip = set(exclude)
    group = parser.add_argument_group(f"{model_cls.__name__} parameters")
    for name, field in model_cls.model_fields.items():
        if name in skip:
            continue
        if field.annotation is bool:
            group.add_argument(flag_name(name), dest=name, action=argparse.BooleanOptionalAction,
                               default=None, help=f"default: {str(field.default).lower()}")
        else:
            group.add_argument(flag_name(name), dest=name, default=None, metavar=name.upper(),
                               help=f"default: {field.default}")


def overrides_from(args: argparse.Namespace, model_cls: Type) -> Dict[str, Any]:
    return {
        name: getattr(args, name)
        for name in model_cls.model_fields
        if getattr(args, name, None) is not None
    }


def resolve_config(args: argparse.Namespace, model_cls: Type, base: Optional[Dict[str, Any]] = None):
    return build_config(model_cls, overrides_from(args, model_cls), getattr(args, "config", None), base=base)


def load_dataset(path: Union[str, Path]) -> PartialDataset:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"dataset not found: {path}")
    try:
        data = parse_dataset(path)
    except DataParseError as e:
        err = DataParseError(f"{path}: {e}")
        err.line = e.line
        raise err from e
    logger.info("loaded %s: N=%d d=%d Q=%d", path, data.n, data.d, data.q)
    return data


def output_dir(path: Union[str, Path]) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path
