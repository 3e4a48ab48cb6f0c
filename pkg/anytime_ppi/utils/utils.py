import collections.abc
import importlib
import os
import time
from datetime import datetime
from enum import Enum
from typing import Any, Callable, Mapping

import yaml

from anytime_ppi.utils.errors import ConfigError


FLOAT_FORMAT = "%.17g"


class StrEnum(str, Enum):
    def __str__(self) -> str:
        return self.value


def load_yaml(file_path):
    try:
        with open(file_path, "r") as yaml_file:
            data = yaml.safe_load(yaml_file.read())
            return data if data is not None else {}
    except FileNotFoundError as e:
        raise ConfigError(f"File '{file_path}' not found.") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"Error parsing YAML file {file_path}: {e}") from e


def write_yaml(data: dict, file_path: str = None, file=None):
    """ Write a dictionary to a YAML file.

    Args:
        data (dict): the data to write
        file_path (str): the path to the file
        file: the file object to write to (esclusive with file_path)
    """
    if file is not None:
        file.write(yaml.safe_dump(data, sort_keys=False))
        return
    if file_path is None:
        raise ValueError("file_path or file must be specified")
    with open(file_path, "w") as yaml_file:
        yaml.safe_dump(data, yaml_file, sort_keys=False)


def _parse_scalar(text: str) -> Any:
    # key=value files share YAML's scalar rules (numbers, booleans, null)
    value = yaml.safe_load(text)
    return text if isinstance(value, (dict, list)) else value


def load_key_value(file_path) -> dict:
    """
    Read a ``key=value`` configuration file. Blank lines and lines starting
    with ``#`` are ignored.
    :param file_path: path of the file
    :return: dict of parsed values
    """
    config = {}
    try:
        with open(file_path, "r", encoding="utf-8") as stream:
            lines = stream.read().splitlines()
    except FileNotFoundError as e:
        raise ConfigError(f"File '{file_path}' not found.") from e
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{file_path}:{lineno}: expected key=value, got '{line}'")
        key, value = line.split("=", 1)
        config[key.strip().replace("-", "_")] = _parse_scalar(value.strip())
    return config


def load_config(file_path) -> dict:
    """Load a run configuration, YAML when the suffix says so, key=value otherwise."""
    if str(file_path).endswith((".yaml", ".yml")):
        data = load_yaml(file_path)
        if not isinstance(data, Mapping):
            raise ConfigError(f"{file_path} must contain a mapping")
        return {str(k).replace("-", "_"): v for k, v in data.items()}
    return load_key_value(file_path)


def nested_dict_update(d, u):
    if u is not None:
        for k, v in u.items():
            if isinstance(v, collections.abc.Mapping):
                d[k] = nested_dict_update(d.get(k) or {}, v)
            else:
                d[k] = v
    return d


def load_callable(path: str) -> Callable:
    """
    Import an attribute given as ``package.module:attribute`` (or the dotted
    ``package.module.attribute`` form).
    """
    if ":" in path:
        module, attr = path.split(":", 1)
    else:
        module, _, attr = path.rpartition(".")
    if not module or not attr:
        raise ConfigError(f"Cannot import '{path}', use 'module:attribute'")
    try:
        imp_module = importlib.import_module(module)
    except ImportError as e:
        raise ConfigError(f"Cannot import module '{module}': {e}") from e
    try:
        fn = getattr(imp_module, attr)
    except AttributeError as e:
        raise ConfigError(f"Module '{module}' has no attribute '{attr}'") from e
    if not callable(fn):
        raise ConfigError(f"'{path}' is not callable")
    return fn


def format_float(value) -> str:
    return FLOAT_FORMAT % value


def get_timestamp():
    # Format the current time as a folder-friendly string
    dt_object = datetime.fromtimestamp(time.time())
    return dt_object.strftime("%Y%m%d_%H%M%S")


def ensure_parent_dir(file_path):
    parent = os.path.dirname(os.path.abspath(file_path))
    os.makedirs(parent, exist_ok=True)
