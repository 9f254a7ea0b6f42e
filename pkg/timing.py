# -*- coding: utf-8 -*-
"""Start/end banners with elapsed time for long-running commands."""
from __future__ import annotations

import contextlib
import logging
import time
from datetime import timedelta
from typing import Iterator, Optional

log = logging.getLogger(__name__)


def seconds_to_str(elapsed: Optional[float] = None) -> str:
    if elapsed is None:
        return time.strftime("%Y-%m-%d %H:%M:%S", time.localtime())
    return f"{timedelta(seconds=elapsed)} => {elapsed:.0f}s"


def banner(s: str, elapsed: Optional[str] = None) -> None:
    line = "=" * 40
    print(line)
    print(seconds_to_str(), "-", s)
    if elapsed:
        print("Elapsed time:", elapsed)
    print(line)
    print()
    log.info(f"{s}" + (f" ({elapsed})" if elapsed else ""))


@contextlib.contextmanager
def timed(label: str, quiet: bool = False) -> Iterator[None]:
    """Banner on entry and exit; the exit banner is printed even if the block raises"""
    start = time.perf_counter()
    if not quiet:
        banner(f"Start {label}")
    try:
        yield
    finally:
        elapsed = seconds_to_str(time.perf_counter() - start)
        if quiet:
            log.info(f"{label} took {elapsed}")
        else:
            banner(f"End {label}", elapsed)
