# -*- coding: utf-8 -*-
# emacs: -*- mode: python; py-indent-offset: 4; indent-tabs-mode: nil -*-
# vi: set ft=python sts=4 ts=4 sw=4 et:
"""
Small internal helpers shared by several modules.
"""
import itertools
import re
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

Interval = Tuple[float, float]

_number_rgx = r'(\d+(?:\.\d+)?)'


def _pairwise(values: Sequence) -> Iterator[Tuple]:
    """ Return an iterator over every unordered pair in `values`."""
    yield from itertools.combinations(values, 2)


def _median(values: Sequence[float]) -> float:
    return float(np.median(np.asarray(values, dtype=np.float64)))


def _intervals_intersect(a: Optional[Interval], b: Optional[Interval]) -> bool:
    """ Return True if both closed intervals exist and share at least a point."""
    if a is None or b is None:
        return False
    return a[0] <= b[1] and b[0] <= a[1]


def _normalize_text(text: str) -> str:
    return ' '.join((text or '').lower().split())


def _search_seconds(text: str, prefix_rgx: str) -> Optional[float]:
    """ Return the first number of seconds that follows `prefix_rgx` in
    `text`, or None.

    Examples
    --------
    >>> _search_seconds('the thud is heard at ~3.1s', r'heard at')
    3.1
    """
    rgx = prefix_rgx + r'\s*(?:~|about|around|approximately|roughly)?\s*' + _number_rgx + r'\s*(?:s\b|sec|second)'
    match = re.search(rgx, text)
    if match is None:
        return None
    return float(match.group(1))


def _fmt_time(seconds: float) -> str:
    """ Seconds with one decimal, the resolution used in response texts."""
    return '{:.1f}'.format(seconds)


def _fmt_offset(seconds: float) -> str:
    """ Seconds with enough digits to keep an integer-frame offset within a
    frame of its exact value."""
    return '{:.6g}'.format(seconds)
