"""Shared plumbing: seed derivation, bounded parallelism, stable serialization."""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Iterable, Sequence

import numpy as np

logger = logging.getLogger("adselect")


def seed_from(*parts: Any) -> int:
    """Derive a 63-bit seed from a tuple of ints/strings.

    The derivation is a pure function of the parts, so any worker that knows
    its stable key (dataset id, detector index, chunk number, ...) regenerates
    the same stream regardless of scheduling order.
    """
    h = hashlib.sha256()
    for p in parts:
        h.update(repr(p).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest()[:8], "little") >> 1


def rng_from(*parts: Any) -> np.random.Generator:
    return np.random.default_rng(seed_from(*parts))


def pmap(fn: Callable[[Any], Any], items: Sequence[Any], jobs: int = 1) -> list:
    """Map fn over items on a bounded worker pool, preserving input order.

    Results must not depend on execution order; callers guarantee that by
    deriving per-item seeds from stable keys.
    """
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def fmt_float(x: float) -> str:
    """Shortest decimal string that round-trips to the same float64."""
    return repr(float(x))


def dump_json(obj: Any, path: str) -> None:
    """Write JSON with sorted keys and stable float formatting (byte-reproducible)."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_json(path: str) -> Any:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def log_event(event: str, **fields: Any) -> None:
    """Emit one structured JSON log line (timeouts, replacements, skips)."""
    record = {"event": event}
    record.update(fields)
    logger.info(json.dumps(record, sort_keys=True, default=str))


def chunk_ranges(n: int, chunk: int) -> Iterable[tuple[int, int]]:
    """Yield (chunk_index, size) pairs covering n items in fixed-size chunks."""
    i = 0
    start = 0
    while start < n:
        size = min(chunk, n - start)
        yield i, size
        start += size
        i += 1
