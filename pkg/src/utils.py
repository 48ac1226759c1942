
import copy
import os
import sys
import time
import csv
import yaml
import logging
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# -----------------------------
# load the configuration from a YAML file, with environment variable expansion
# -----------------------------
def load_config(p):
    """
    Load YAML configuration file and expand environment variables in values.
    Unset variables expand to an empty string so they fall back to defaults.
    """
    with open(p) as f:
        cfg = yaml.safe_load(f) or {}

    def exp(v):
        if isinstance(v, str):
            expanded = os.path.expandvars(v)
            # ${VAR} left verbatim means VAR is unset
            return "" if expanded.startswith("${") else expanded
        elif isinstance(v, dict):
            return {k: exp(x) for k, x in v.items()}
        elif isinstance(v, list):
            return [exp(x) for x in v]
        else:
            return v

    return exp(cfg)

# -----------------------------
# Write a resolved configuration snapshot next to the run outputs
# -----------------------------
def dump_config(cfg: dict, p: Path):
    with open(p, "w") as f:
        yaml.safe_dump(cfg, f, sort_keys=True, default_flow_style=False)

# -----------------------------
# Setup the logger for terminal and file output with UTC timestamps
# -----------------------------
def setup_logger(name = "", level = logging.INFO, logfile = None):
    """
    Set up a logger with UTC timestamps, stderr output, and optional file logging.
    logfile: If provided, logs will also be written to this file.
    The default name configures the root logger, which every module logger propagates to.
    Calling it twice for the same name does not stack handlers.
    """
    logger = logging.getLogger(name)
    logger.setLevel(level)
    formatter = logging.Formatter("%(asctime)sZ [%(levelname)s] %(name)s: %(message)s", datefmt="%Y-%m-%dT%H:%M:%S")

    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    # Console handler; stdout stays free for nothing but results
    stream_handler = logging.StreamHandler(sys.stderr)
    stream_handler.setFormatter(formatter)
    logger.addHandler(stream_handler)

    # File handler
    if logfile:
        file_handler = logging.FileHandler(logfile)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    logging.Formatter.converter = time.gmtime

    return logger

# -----------------------------
# Check if directory is there, otherwise create it
# -----------------------------
def ensure_dir(p: Path):
    """
    Ensure a directory exists, creating it if necessary.
    """
    p.mkdir(parents=True, exist_ok=True)
    return p

# -----------------------------
# Create a csv writer for the given artifact and header, returning file handle, writer, and path
# -----------------------------
def csv_writer(root: Path, name: str, header):
    """
    Open `<root>/<name>.csv` for writing (truncating any previous run), write the header,
    and return file handle, writer, and path.
    """
    fpath = root / f"{name}.csv"
    f = open(fpath, "w", newline="")
    w = csv.writer(f)
    w.writerow(header)
    f.flush()
    os.fsync(f.fileno())

    return f, w, fpath

# -----------------------------
# Merge command-line overrides into the loaded configuration
# -----------------------------
def apply_overrides(cfg: dict, overrides: dict | None):
    """
    Apply dotted-key overrides ("rolling.n": 1000) on a copy of the configuration.
    Overrides with None values are left out, so unset CLI flags keep file values.
    """
    if not overrides:
        return cfg
    out = copy.deepcopy(cfg)
    for key, value in overrides.items():
        if value is None:
            continue
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            child = node.get(part)
            if not isinstance(child, dict):
                child = {}
                node[part] = child
            node = child
        node[parts[-1]] = value
    return out
