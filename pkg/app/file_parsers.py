from pathlib import Path
from typing import Union

from app.core.errors import ConfigError
from app.core.scenario import Scenario, parse_scenario


def read_txt_file(file_bytes: bytes) -> str:
    try:
        return file_bytes.decode("utf-8").lstrip("﻿")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"scenario file is not valid UTF-8 (byte {exc.start})") from None


def read_config_file(path: Union[str, Path]) -> str:
    path = Path(path)
    try:
        return read_txt_file(path.read_bytes())
    except FileNotFoundError:
        raise ConfigError(f"scenario file not found: {path}") from None
    except IsADirectoryError:
        raise ConfigError(f"scenario path is a directory: {path}") from None


def load_scenario_file(path: Union[str, Path]) -> Scenario:
    return parse_scenario(read_config_file(path), source=str(path))
