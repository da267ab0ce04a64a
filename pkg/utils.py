import json
import logging
import os
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)


def ensure_dir(path):
    """Create `path` (and parents) if missing and return it as a Path."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def read_json(path):
    """Parse a JSON document; an empty or whitespace-only file reads as {}."""
    text = Path(path).read_text(encoding="utf-8")
    if not text.strip():
        return {}
    return json.loads(text)


def write_json(path, doc):
    """Write `doc` with stable key order so identical runs give identical files."""
    path = Path(path)
    ensure_dir(path.parent)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info(f"Wrote {path}")
    return path


def replicate_seed(base_seed, replicate):
    """Seed of replicate `replicate` (0-based)."""
    return int(base_seed) + int(replicate)


def spawn_generators(seed, count):
    """`count` independent numpy Generators derived from one seed."""
    children = np.random.SeedSequence(int(seed)).spawn(count)
    return [np.random.default_rng(child) for child in children]


def format_p(p):
    """File-name friendly switch probability, e.g. 0.05 -> 'p0.05'."""
    return f"p{p:.2f}"


def relative_to(path, base_dir):
    """Resolve `path` against `base_dir` unless it is already absolute."""
    path = Path(os.path.expanduser(str(path)))
    return path if path.is_absolute() else Path(base_dir) / path
