"""
Configuration management for the corner-ladder laboratory.
This module loads environment defaults and parses experiment configs.
"""

import configparser
import logging
import os
from pathlib import Path
from typing import Optional, Union

from dotenv import load_dotenv
from pydantic import ValidationError

from .errors import ConfigurationError
from .schemas import ExperimentConfig

# Load environment variables from .env file
load_dotenv()

logger = logging.getLogger(__name__)

# ============================================================================
# OPTIONAL ENVIRONMENT VARIABLES
# These have default values if not set
# ============================================================================

OPTIONAL_ENV_VARS = {
    "LADDER_THREADS": "1",  # worker threads for per-rung solves
    "LADDER_LOG_LEVEL": "INFO",  # DEBUG, INFO, WARNING, ERROR
    "LADDER_OUTPUT_DIR": "results",  # used when neither --out nor [output] dir is set
}

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


def validate_environment():
    """
    Validate the optional environment variables that are set.

    Raises:
        ConfigurationError: If a variable holds a value outside its range
    """
    problems = []

    threads = os.getenv("LADDER_THREADS", OPTIONAL_ENV_VARS["LADDER_THREADS"])
    if not threads.isdigit() or int(threads) < 1:
        problems.append(f"  - LADDER_THREADS: expected a positive integer, got {threads!r}")

    level = os.getenv("LADDER_LOG_LEVEL", OPTIONAL_ENV_VARS["LADDER_LOG_LEVEL"]).upper()
    if level not in LOG_LEVELS:
        problems.append(f"  - LADDER_LOG_LEVEL: expected one of {', '.join(LOG_LEVELS)}, got {level!r}")

    if problems:
        raise ConfigurationError(
            "Invalid environment variables:\n" + "\n".join(problems) +
            "\n\nFix these in your .env file or unset them to use the defaults."
        )


def get_config() -> dict:
    """
    Get the environment configuration.

    Returns:
        dict: LADDER_THREADS (int), LADDER_LOG_LEVEL and LADDER_OUTPUT_DIR

    Raises:
        ConfigurationError: If an environment variable is invalid
    """
    validate_environment()

    return {
        "LADDER_THREADS": int(os.getenv("LADDER_THREADS", OPTIONAL_ENV_VARS["LADDER_THREADS"])),
        "LADDER_LOG_LEVEL": os.getenv("LADDER_LOG_LEVEL", OPTIONAL_ENV_VARS["LADDER_LOG_LEVEL"]).upper(),
        "LADDER_OUTPUT_DIR": os.getenv("LADDER_OUTPUT_DIR", OPTIONAL_ENV_VARS["LADDER_OUTPUT_DIR"]),
    }


# ============================================================================
# EXPERIMENT CONFIGS
# One INI file per experiment; sections map onto ExperimentConfig fields
# ============================================================================

def parse_experiment_config(text: str, source: str = "<string>") -> ExperimentConfig:
    """
    Parse INI text into a validated ExperimentConfig.

    Args:
        text: INI content
        source: Name used in error messages

    Returns:
        ExperimentConfig

    Raises:
        ConfigurationError: On syntax errors, unknown sections or keys, and
            values outside their documented ranges
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigurationError(f"Cannot parse {source}: {e}") from e

    raw = {section: dict(parser.items(section)) for section in parser.sections()}
    try:
        config = ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        details = "; ".join(
            f"[{'.'.join(str(p) for p in err['loc'])}] {err['msg']}" for err in e.errors()
        )
        raise ConfigurationError(f"Invalid config {source}: {details}") from e

    logger.debug(f"Loaded config {source}: mode={config.run.mode}")
    return config


def load_experiment_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Read and validate an experiment config file.

    Raises:
        ConfigurationError: If the file is missing or invalid
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"Cannot read config {path}: {e}") from e
    return parse_experiment_config(text, source=str(path))


def resolve_output_dir(config: ExperimentConfig, override: Optional[str] = None) -> Path:
    """
    Output directory from --out, then [output] dir, then LADDER_OUTPUT_DIR.
    Created if missing.

    Raises:
        ConfigurationError: If the directory cannot be created or written
    """
    chosen = override or config.output.dir or get_config()["LADDER_OUTPUT_DIR"]
    path = Path(chosen)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigurationError(f"Cannot create output directory {path}: {e}") from e
    if not os.access(path, os.W_OK):
        raise ConfigurationError(f"Output directory {path} is not writable")
    return path


# ============================================================================
# Usage Example:
# ============================================================================
# from .config import get_config, load_experiment_config
#
# try:
#     env = get_config()
#     config = load_experiment_config("configs/roots_stokes.ini")
#     print(f"Running {config.run.mode} with {env['LADDER_THREADS']} threads")
# except ConfigurationError as e:
#     print(f"Configuration error: {e}")
#     exit(2)
