# -*- coding: utf-8 -*-
# emacs: -*- mode: python; py-indent-offset: 4; indent-tabs-mode: nil -*-
# vi: set ft=python sts=4 ts=4 sw=4 et:
"""
Model backends queried by the evaluation harness.

A backend turns (intervened clip, task, prompt) into a raw text answer.
`StubBackend` answers from fixed templates over the ground truth, which
reifies the behaviour classes seen in real models; `HttpBackend` talks to a
remote endpoint and is also the chat client of the LLM judge.
"""
import base64
import json
import logging
import mimetypes
import threading
import time
from abc import ABC, abstractmethod
from typing import Any, Callable, Dict, List, Optional

import requests

from hearsay.config import STUB_BEHAVIORS, EndpointConfig
from hearsay.exceptions import BackendConnection, BackendError, BackendTimeout, HttpStatus, PayloadTooLarge
from hearsay.interventions import InterventionRecord
from hearsay.templates import (described_audio_answer,
                               matched_answer,
                               reference_answer,
                               sync_claim_answer,
                               synced_answer,
                               visual_only_answer,)

log = logging.getLogger(__name__)

ORACLE = 'oracle'
SYNCED_PRIOR = 'synced_prior'
HALLUCINATOR = 'hallucinator'
DODGER = 'dodger'


class ModelBackend(ABC):
    """ Anything the harness can query. Implementations must be safe to call
    from several threads at once."""

    deterministic = False

    def __init__(self, id: str, accepts_video_audio: bool = True):
        self.id = id
        self.capabilities = {'accepts_video_audio': accepts_video_audio}

    @abstractmethod
    def query(self, record: InterventionRecord, task: str, prompt: str) -> str:
        """Return the raw text answer of the model.

        Raises
        ------
        BackendError
        """

    def describe(self) -> Dict[str, Any]:
        return {'backend_id': self.id, 'type': type(self).__name__, 'capabilities': dict(self.capabilities)}


class StubBackend(ModelBackend):
    """ A model whose answers are fixed templates over the clip labels.

    oracle
        reads the ground truth and answers correctly.
    synced_prior
        always claims synchronization and describes the sound the visuals
        suggest.
    hallucinator
        describes the expected audio event, placed at the visual time.
    dodger
        only narrates what is visible.
    """

    def __init__(self, behavior: str, id: Optional[str] = None):
        if behavior not in STUB_BEHAVIORS:
            raise ValueError('Expected a stub behavior in {}, got {!r}.'.format(STUB_BEHAVIORS, behavior))
        super().__init__(id or behavior)
        self.behavior = behavior
        self.deterministic = True

    def describe(self) -> Dict[str, Any]:
        info = super().describe()
        info['behavior'] = self.behavior
        return info

    def query(self, record: InterventionRecord, task: str, prompt: str) -> str:
        if not record.visual_event or not record.audio_event:
            raise BackendError('Clip {} carries no event texts for a stub answer.'.format(record.id))
        if self.behavior == ORACLE:
            return reference_answer(task, record, precise=True)

        ev, ea = record.visual_event, record.audio_event
        gt = record.ground_truth
        if self.behavior == DODGER:
            return visual_only_answer(ev)
        if task == 'mute':
            return described_audio_answer(ev, ea)
        if task == 'swap':
            return matched_answer(ev, ea)
        if self.behavior == SYNCED_PRIOR:
            return sync_claim_answer(ev, ea)
        return synced_answer(ev, gt.visual_time, ea, gt.visual_time)


class TokenBucket:
    """Token bucket shared by every thread querying one backend.

    Parameters
    ----------
    rate: float
        Tokens added per second.

    capacity: float
        Largest burst.
    """

    def __init__(self, rate: float, capacity: float = 1.0, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        if rate <= 0 or capacity < 1:
            raise ValueError('Expected a positive rate and a capacity >= 1, got {} and {}.'.format(rate, capacity))
        self.rate = rate
        self.capacity = capacity
        self._clock = clock
        self._sleep = sleep
        self._tokens = capacity
        self._last = clock()
        self._lock = threading.Lock()

    def _refill(self):
        now = self._clock()
        self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
        self._last = now

    def acquire(self):
        """ Block until one token is available and take it."""
        while True:
            with self._lock:
                self._refill()
                if self._tokens >= 1:
                    self._tokens -= 1
                    return
                wait = (1 - self._tokens) / self.rate
            self._sleep(wait)


def _elide(value: Any) -> Any:
    """ The request body for the debug log, long strings such as inline
    media cut out."""
    if isinstance(value, dict):
        return {key: _elide(item) for key, item in value.items()}
    if isinstance(value, list):
        return [_elide(item) for item in value]
    if isinstance(value, str) and len(value) > 512:
        return '<{} chars>'.format(len(value))
    return value


class HttpBackend(ModelBackend):
    """Model behind an HTTP endpoint.

    Two wire adapters are available: `openai` posts chat-completion
    messages with a `video_url` part, `plain` posts
    `{"model", "prompt", "media"}` and reads `text` back. The media travels
    by reference (its path or URI) or inline (base64), as the endpoint
    config asks. Decoding parameters in `params` are passed through.

    Parameters
    ----------
    config: EndpointConfig

    id: str

    session: requests.Session
        Injected in tests.

    media_path: callable
        Maps a manifest `output_ref` to a readable path or URI.
    """

    def __init__(self, config: EndpointConfig, id: Optional[str] = None, session=None,
                 media_path: Callable[[str], str] = lambda ref: ref):
        super().__init__(id or config.model or config.url, accepts_video_audio=config.accepts_video_audio)
        self.config = config
        self.session = session if session is not None else requests.Session()
        self.media_path = media_path
        self.bucket = TokenBucket(config.rate_limit_per_s) if config.rate_limit_per_s else None
        self._token = config.token()

    def describe(self) -> Dict[str, Any]:
        info = super().describe()
        info.update(url=self.config.url, model=self.config.model, adapter=self.config.adapter,
                    transport=self.config.transport)
        return info

    def _media(self, ref: str) -> Dict[str, str]:
        path = self.media_path(ref)
        if self.config.transport == 'reference':
            return {'ref': path}
        with open(path, 'rb') as f:
            data = f.read()
        if len(data) > self.config.max_payload_bytes:
            raise PayloadTooLarge('Media {} has {} bytes, the endpoint takes at most {}.'.format(
                path, len(data), self.config.max_payload_bytes))
        mime = mimetypes.guess_type(path)[0] or 'application/octet-stream'
        return {'data': base64.b64encode(data).decode('ascii'), 'mime': mime}

    def _query_payload(self, media: Dict[str, str], prompt: str) -> Dict[str, Any]:
        if self.config.adapter == 'plain':
            payload = {'model': self.config.model, 'prompt': prompt, 'media': media}
        else:
            url = media['ref'] if 'ref' in media else 'data:{};base64,{}'.format(media['mime'], media['data'])
            content = [{'type': 'video_url', 'video_url': {'url': url}}, {'type': 'text', 'text': prompt}]
            payload = {'model': self.config.model, 'messages': [{'role': 'user', 'content': content}]}
        payload.update(self.config.params)
        return payload

    def _post(self, payload: Dict[str, Any]) -> str:
        if self.bucket is not None:
            self.bucket.acquire()
        headers = {'Content-Type': 'application/json'}
        if self._token:
            headers['Authorization'] = 'Bearer {}'.format(self._token)

        log.debug('POST %s %s', self.config.url, json.dumps(_elide(payload), sort_keys=True))
        try:
            response = self.session.post(self.config.url, json=payload, headers=headers,
                                         timeout=self.config.timeout_s)
        except requests.Timeout as exc:
            raise BackendTimeout('{} timed out after {}s.'.format(self.config.url, self.config.timeout_s)) from exc
        except requests.ConnectionError as exc:
            raise BackendConnection('Could not reach {}: {}.'.format(self.config.url, exc)) from exc
        except requests.RequestException as exc:
            raise BackendError('Request to {} failed: {}.'.format(self.config.url, exc)) from exc
        log.debug('%s answered %s: %s', self.config.url, response.status_code, response.text[:2000])

        if response.status_code == 413:
            raise PayloadTooLarge('{} refused the payload as too large.'.format(self.config.url))
        if response.status_code >= 400:
            raise HttpStatus(response.status_code, response.text)
        return self._read_text(response)

    @staticmethod
    def _read_text(response) -> str:
        try:
            body = response.json()
        except ValueError:
            text = response.text
        else:
            if isinstance(body, dict) and isinstance(body.get('text'), str):
                text = body['text']
            else:
                try:
                    text = body['choices'][0]['message']['content']
                except (KeyError, IndexError, TypeError):
                    raise BackendError('Unexpected response body: {}.'.format(str(body)[:200])) from None
        if not text or not text.strip():
            raise BackendError('Backend returned an empty answer.')
        return text

    def query(self, record: InterventionRecord, task: str, prompt: str) -> str:
        return self._post(self._query_payload(self._media(record.output_ref), prompt))

    def chat(self, messages: List[Dict[str, str]]) -> str:
        """ Return the answer to a text-only conversation."""
        payload = {'model': self.config.model, 'messages': messages}
        payload.update(self.config.params)
        return self._post(payload)
