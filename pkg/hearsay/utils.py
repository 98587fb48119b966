# -*- coding: utf-8 -*-
# emacs: -*- mode: python; py-indent-offset: 4; indent-tabs-mode: nil -*-
# vi: set ft=python sts=4 ts=4 sw=4 et:
"""
Utilities to read and write the pipeline artifacts.
"""
import hashlib
import json
import os
from typing import Any, Dict, Iterable, Iterator, List, Optional

from hearsay.exceptions import MissingPrerequisite

Record = Dict[str, Any]


def rm_dups(lst: Iterable[Any]) -> List[Any]:
    """Return a sorted lst of non-duplicated elements from `lst`.

    Parameters
    ----------
    lst: sequence of any

    Returns
    -------
    fslst:
        Filtered and sorted `lst` with non duplicated elements of `lst`.
    """
    return sorted(list(set(lst)))


def derive_seed(seed: int, *parts: Any) -> int:
    """Return a 63-bit seed derived from `seed` and `parts`.

    The derivation only depends on the values, never on the process or on
    the order in which clips are handled.

    Parameters
    ----------
    seed: int
        The global seed of the run.

    parts:
        Anything identifying the draw, e.g. a clip id and a purpose.

    Returns
    -------
    derived: int

    Examples
    --------
    >>> derive_seed(42, 'clip001', 'shift') == derive_seed(42, 'clip001', 'shift')
    True
    >>> derive_seed(42, 'clip001') == derive_seed(42, 'clip002')
    False
    """
    key = '\x1f'.join(str(part) for part in (seed,) + parts)
    digest = hashlib.sha256(key.encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'big') & (2 ** 63 - 1)


def dumps_record(record: Record) -> str:
    """Serialize `record` as one byte-stable JSON line."""
    return json.dumps(record, sort_keys=True, ensure_ascii=False)


def read_jsonl(path: str) -> List[Record]:
    """Return the records of the JSON-lines file in `path`. Blank lines are
    skipped.

    Raises
    ------
    MissingPrerequisite
        If `path` does not exist.
    ValueError
        If a line is not a JSON object.
    """
    if not os.path.exists(path):
        raise MissingPrerequisite(path)

    records = []
    with open(path, encoding='utf-8') as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if not isinstance(record, dict):
                raise ValueError('Expected a JSON object in {} line {}, got {}.'.format(
                    path, lineno, type(record).__name__))
            records.append(record)
    return records


def write_jsonl(path: str, records: Iterable[Record]) -> int:
    """Write `records` to `path` as JSON lines and return how many lines
    were written. Parent folders are created."""
    ensure_dir(os.path.dirname(path))
    n_lines = 0
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        for record in records:
            f.write(dumps_record(record) + '\n')
            n_lines += 1
    return n_lines


def write_json(path: str, document: Record):
    ensure_dir(os.path.dirname(path))
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        json.dump(document, f, sort_keys=True, indent=2, ensure_ascii=False)
        f.write('\n')


def ensure_dir(path: str) -> str:
    if path:
        os.makedirs(path, exist_ok=True)
    return path


def require_file(path: str, stage: str = '') -> str:
    """Return `path` if it exists, raise MissingPrerequisite otherwise."""
    if not os.path.exists(path):
        raise MissingPrerequisite(path, stage)
    return path


def iter_json_candidates(text: str) -> Iterator[Record]:
    """Yield every JSON object embedded in `text`, in order of appearance.
    Markdown code fences are ignored."""
    decoder = json.JSONDecoder()
    idx = text.find('{')
    while idx != -1:
        try:
            obj, end = decoder.raw_decode(text, idx)
        except ValueError:
            idx = text.find('{', idx + 1)
            continue
        if isinstance(obj, dict):
            yield obj
        idx = text.find('{', end)


def extract_json_object(text: Optional[str]) -> Optional[Record]:
    """Return the first JSON object found in `text`, or None.

    Examples
    --------
    >>> extract_json_object('```json\\n{"prediction": "muted"}\\n```')
    {'prediction': 'muted'}
    >>> extract_json_object('no json here') is None
    True
    """
    text = (text or '').strip()
    if not text:
        return None
    return next(iter_json_candidates(text), None)
