# -*- coding: utf-8 -*-
# emacs: -*- mode: python; py-indent-offset: 4; indent-tabs-mode: nil -*-
# vi: set ft=python sts=4 ts=4 sw=4 et:
"""
Evaluation harness: fan the task prompt out over the intervened clips of a
manifest, with bounded parallelism and per-query retries.
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

from hearsay.backends import ModelBackend
from hearsay.exceptions import BackendError, BackendUnavailable
from hearsay.interventions import InterventionRecord
from hearsay.prompts import INFERENCE_PROMPTS, inference_prompt, prompt_id

log = logging.getLogger(__name__)

MAX_FAILED_FRACTION = 0.5


@dataclass(frozen=True)
class ResponseRecord:
    clip_id: str
    model_id: str
    task: str
    prompt_id: str
    raw_text: Optional[str]
    latency_ms: float = 0.0
    attempt_count: int = 1
    error: Optional[str] = None

    def __post_init__(self):
        if self.attempt_count < 1:
            raise ValueError('Expected at least one attempt, got {}.'.format(self.attempt_count))
        if self.error is None and not self.raw_text:
            raise ValueError('A successful response of {} needs a text.'.format(self.clip_id))

    @property
    def failed(self) -> bool:
        return self.error is not None

    def to_dict(self) -> Dict[str, Any]:
        record = {'clip_id': self.clip_id, 'model_id': self.model_id, 'task': self.task,
                  'prompt_id': self.prompt_id, 'raw_text': self.raw_text, 'latency_ms': self.latency_ms,
                  'attempt_count': self.attempt_count}
        if self.error is not None:
            record['error'] = self.error
        return record

    @classmethod
    def from_dict(cls, record: Dict[str, Any]) -> 'ResponseRecord':
        return cls(clip_id=record['clip_id'], model_id=record['model_id'], task=record['task'],
                   prompt_id=record['prompt_id'], raw_text=record.get('raw_text'),
                   latency_ms=float(record.get('latency_ms', 0.0)), attempt_count=int(record.get('attempt_count', 1)),
                   error=record.get('error'))


@dataclass(frozen=True)
class RetryPolicy:
    """ Exponential backoff: the wait after attempt k is
    min(max_delay_s, base_delay_s * multiplier ** (k - 1))."""
    max_attempts: int = 3
    base_delay_s: float = 1.0
    max_delay_s: float = 30.0
    multiplier: float = 2.0
    sleep: Callable[[float], None] = field(default=time.sleep, compare=False, repr=False)

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError('Expected max_attempts >= 1, got {}.'.format(self.max_attempts))

    def delay(self, attempt: int) -> float:
        return min(self.max_delay_s, self.base_delay_s * self.multiplier ** (attempt - 1))


def select_entries(records: Sequence[InterventionRecord], task: str) -> List[InterventionRecord]:
    """ The clips asked about under `task`: the original controls and the
    interventions of the task's kind."""
    return [record for record in records if record.kind_name in ('original', task)]


def query_with_retry(backend: ModelBackend, record: InterventionRecord, task: str, prompt: str,
                     policy: RetryPolicy) -> ResponseRecord:
    """Return the ResponseRecord of one clip. Retryable failures are tried
    again up to `policy.max_attempts` times; the last failure is kept as the
    error marker of the record."""
    pid = prompt_id(INFERENCE_PROMPTS[task])
    for attempt in range(1, policy.max_attempts + 1):
        start = time.monotonic()
        try:
            text = backend.query(record, task, prompt)
        except (BackendError, OSError) as exc:
            retryable = getattr(exc, 'retryable', False)
            if not retryable or attempt == policy.max_attempts:
                log.warning('%s failed on %s after %d attempt(s): %s', backend.id, record.id, attempt, exc)
                return ResponseRecord(clip_id=record.id, model_id=backend.id, task=task, prompt_id=pid,
                                      raw_text=None, attempt_count=attempt,
                                      error='{}: {}'.format(type(exc).__name__, exc))
            delay = policy.delay(attempt)
            log.info('%s failed on %s (%s), retrying in %.1fs.', backend.id, record.id, exc, delay)
            policy.sleep(delay)
            continue

        latency = 0.0 if backend.deterministic else round((time.monotonic() - start) * 1000.0, 1)
        return ResponseRecord(clip_id=record.id, model_id=backend.id, task=task, prompt_id=pid, raw_text=text,
                              latency_ms=latency, attempt_count=attempt)


def run_eval(records: Sequence[InterventionRecord], backend: ModelBackend, task: str, parallelism: int = 1,
             retry_policy: Optional[RetryPolicy] = None) -> List[ResponseRecord]:
    """Query `backend` with the inference prompt of `task` on every clip of
    the task.

    Parameters
    ----------
    records: sequence of InterventionRecord
        The intervened manifest.

    backend: ModelBackend

    task: str
        `shift`, `mute` or `swap`.

    parallelism: int
        Most queries in flight at once.

    retry_policy: RetryPolicy

    Returns
    -------
    responses: list of ResponseRecord
        One per selected clip, sorted by clip id.

    Raises
    ------
    BackendUnavailable
        If more than half of the clips failed after all their retries.
    """
    if parallelism < 1:
        raise ValueError('Expected parallelism >= 1, got {}.'.format(parallelism))
    policy = retry_policy or RetryPolicy()
    prompt = inference_prompt(task)
    entries = select_entries(records, task)
    if not backend.capabilities.get('accepts_video_audio', True):
        log.warning('%s does not take audio with the video, its %s answers are vision-only.', backend.id, task)

    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        responses = list(pool.map(lambda record: query_with_retry(backend, record, task, prompt, policy), entries))
    responses.sort(key=lambda response: response.clip_id)

    failed = sum(1 for response in responses if response.failed)
    if entries and failed > MAX_FAILED_FRACTION * len(entries):
        raise BackendUnavailable('{} failed on {} of {} {} clips.'.format(backend.id, failed, len(entries), task))
    if failed:
        log.warning('%s: %d of %d %s queries failed.', backend.id, failed, len(entries), task)
    return responses
