# -*- coding: utf-8 -*-
# emacs: -*- mode: python; py-indent-offset: 4; indent-tabs-mode: nil -*-
# vi: set ft=python sts=4 ts=4 sw=4 et:
"""
Turn free-form model responses into structured predictions.

Two judge backends are available: `LlmJudge` sends the judge system prompt
of the task to a chat model and validates the JSON it returns, `RulesJudge`
applies a fixed keyword decision list and is fully deterministic.

Whatever the backend answers, `judge_parse` only ever produces values of
the task enumerations, and for shift answers the synced flag wins over the
direction, which wins over the offset.
"""
import logging
import re
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Sequence

from hearsay.exceptions import BackendError, JudgeUnparseable
from hearsay.prompts import judge_prompt
from hearsay.utils import extract_json_object
from hearsay._utils import _normalize_text, _search_seconds

log = logging.getLogger(__name__)

SYNCED = 'synced'
DELAY = 'delay'
EARLY = 'early'
NONE = 'none'
MUTED = 'muted'
MISMATCHED = 'mismatched'

PREDICTIONS = {
    'mute': (SYNCED, DELAY, EARLY, MUTED),
    'swap': (SYNCED, DELAY, EARLY, MISMATCHED),
}
DIRECTIONS = (NONE, DELAY, EARLY)

AUDIO_DESCRIBED = 'audio_described'
VISUAL_ONLY = 'visual_only'
SILENCE_CLAIMED = 'silence_claimed'
ENGAGEMENTS = (AUDIO_DESCRIBED, VISUAL_ONLY, SILENCE_CLAIMED)

REPAIR_PROMPT = 'Return only the JSON object'


def _cue_rgx(cues: Sequence[str]):
    return re.compile(r'\b(?:' + '|'.join(re.escape(cue) for cue in cues) + r')\b')


SILENCE_CUES = _cue_rgx([
    'silent', 'silence', 'silenced', 'muted', 'no audio', 'no sound', 'no sounds', 'nothing is audible',
    'nothing audible', 'no audible', 'inaudible', 'audio is absent', 'without any sound', 'without sound',
])
MISMATCH_CUES = _cue_rgx([
    'mismatch', 'mismatched', 'does not match', "doesn't match", 'do not match', "don't match", 'not matching',
    'unrelated', 'does not correspond', "doesn't correspond", 'do not correspond', "don't correspond",
    'inconsistent', 'does not fit', "doesn't fit", 'does not belong', "doesn't belong",
])
SYNC_CUES = _cue_rgx([
    'synchronized', 'synchronised', 'in sync', 'synced', 'aligned', 'lines up', 'line up',
])
DESYNC_CUES = _cue_rgx([
    'not synchronized', 'not synchronised', "isn't synchronized", "aren't synchronized", 'not synced',
    'not in sync', "isn't in sync", "aren't in sync", 'out of sync', 'out-of-sync', 'unsynchronized',
    'desynchronized', 'desync', 'desynced', 'synchronization mismatch', 'misaligned', 'not aligned',
    'lags', 'lag', 'lagging', 'delayed', 'comes early', 'is early', 'too early', 'ahead of', 'precedes',
    'arrives late', 'comes late', 'too late',
])
DELAY_CUES = _cue_rgx([
    'delayed', 'delay', 'lags', 'lag', 'lagging', 'behind', 'after the visual', 'arrives late', 'comes late',
    'too late',
])
EARLY_CUES = _cue_rgx([
    'early', 'ahead', 'precedes', 'before the visual', 'leads', 'too soon',
])
MATCH_CUES = _cue_rgx([
    'fits', 'matches', 'consistent with', 'corresponds to', 'belongs to',
])


@dataclass(frozen=True)
class ParsedPrediction:
    """ A judge-normalized answer of one model on one clip.

    Mute and swap answers fill `prediction` (mute answers also
    `engagement`); shift answers fill `synced`, `direction`, `offset_s`,
    `t_v` and `t_a`. `unparseable` flags a judge reply that could not be
    read, `error` a response record that carried no text.
    """
    task: str
    clip_id: str = ''
    model_id: str = ''
    prediction: Optional[str] = None
    engagement: Optional[str] = None
    synced: Optional[bool] = None
    direction: Optional[str] = None
    offset_s: Optional[float] = None
    t_v: Optional[float] = None
    t_a: Optional[float] = None
    explanation: str = ''
    unparseable: bool = False
    error: Optional[str] = None

    def __post_init__(self):
        if self.task == 'shift':
            if not isinstance(self.synced, bool) or self.direction not in DIRECTIONS:
                raise ValueError('Invalid shift prediction: synced={!r}, direction={!r}.'.format(
                    self.synced, self.direction))
            if self.offset_s is None or self.offset_s < 0:
                raise ValueError('Expected a non-negative offset, got {!r}.'.format(self.offset_s))
            if self.synced and (self.direction != NONE or self.offset_s != 0.0):
                raise ValueError('A synced prediction has direction none and offset 0.')
        elif self.task in PREDICTIONS:
            if self.prediction not in PREDICTIONS[self.task]:
                raise ValueError('Expected a {} prediction in {}, got {!r}.'.format(
                    self.task, PREDICTIONS[self.task], self.prediction))
            if self.engagement is not None and self.engagement not in ENGAGEMENTS:
                raise ValueError('Unknown engagement {!r}.'.format(self.engagement))
        else:
            raise ValueError('Unknown task {!r}.'.format(self.task))

    @property
    def label(self) -> str:
        """ synced, delay, early, none (desync without direction), muted or
        mismatched."""
        if self.task == 'shift':
            return SYNCED if self.synced else self.direction
        return self.prediction

    @property
    def signed_offset(self) -> float:
        if self.task != 'shift' or self.synced or self.direction == NONE:
            return 0.0
        return self.offset_s if self.direction == DELAY else -self.offset_s

    def to_dict(self) -> Dict[str, Any]:
        record = {'task': self.task, 'clip_id': self.clip_id, 'model_id': self.model_id,
                  'explanation': self.explanation, 'unparseable': self.unparseable}
        if self.task == 'shift':
            record.update(synced=self.synced, direction=self.direction, offset_s=self.offset_s,
                          t_v=self.t_v, t_a=self.t_a)
        else:
            record['prediction'] = self.prediction
            if self.engagement is not None:
                record['engagement'] = self.engagement
        if self.error is not None:
            record['error'] = self.error
        return record

    @classmethod
    def from_dict(cls, record: Dict[str, Any]) -> 'ParsedPrediction':
        names = ('task', 'clip_id', 'model_id', 'prediction', 'engagement', 'synced', 'direction', 'offset_s',
                 't_v', 't_a', 'explanation', 'unparseable', 'error')
        return cls(**{name: record[name] for name in names if name in record})


def _as_bool(value: Any, default: bool) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str):
        text = value.strip().lower()
        if text in ('true', 'yes', '1'):
            return True
        if text in ('false', 'no', '0'):
            return False
    return default


def _as_float(value: Any) -> Optional[float]:
    if isinstance(value, bool) or value is None:
        return None
    try:
        number = float(value)
    except (TypeError, ValueError):
        return None
    if number != number or number in (float('inf'), float('-inf')):
        return None
    return number


def _as_time(value: Any) -> Optional[float]:
    number = _as_float(value)
    return number if number is not None and number >= 0 else None


def default_fields(task: str) -> Dict[str, Any]:
    """ The fields of an ambiguous or missing answer."""
    if task == 'shift':
        return {'synced': True, 'direction': NONE, 'offset_sec': 0.0, 't_v': None, 't_a': None, 'explanation': ''}
    return {'prediction': SYNCED, 'explanation': ''}


def normalize_fields(task: str, fields: Dict[str, Any]) -> Dict[str, Any]:
    """Return `fields` restricted to the enumerations of `task`.

    Unknown categorical values fall back to the defaults. For shift, a
    synced answer forces direction `none` and offset 0.0.
    """
    explanation = fields.get('explanation')
    explanation = explanation if isinstance(explanation, str) else ''
    if task != 'shift':
        prediction = str(fields.get('prediction') or '').strip().lower()
        if prediction not in PREDICTIONS[task]:
            prediction = SYNCED
        return {'prediction': prediction, 'explanation': explanation}

    synced = _as_bool(fields.get('synced'), True)
    direction = str(fields.get('direction') or NONE).strip().lower()
    if direction not in DIRECTIONS:
        direction = NONE
    offset = _as_float(fields.get('offset_sec', fields.get('offset_s')))
    offset = abs(offset) if offset is not None else 0.0
    if synced:
        direction, offset = NONE, 0.0
    return {'synced': synced, 'direction': direction, 'offset_s': offset, 't_v': _as_time(fields.get('t_v')),
            't_a': _as_time(fields.get('t_a')), 'explanation': explanation}


# Statements that the answer actually hears something.
AUDIO_CLAIM_RGX = re.compile(
    r"\b(?:i|we|you|one)\s+(?:can\s+|could\s+)?(?:clearly\s+)?hears?\b"
    r"|\b(?:is|are|was|were|can be|could be)\s+(?:clearly\s+|faintly\s+|distinctly\s+)?(?:heard|audible)\b"
    r"|\bheard\s+(?:as|at|when|while|during|in)\b"
    r"|\b(?:audio|sound|soundtrack|track|recording)\s+(?:contains|features|includes|has|carries|plays)\b"
    r"|\b(?:sound|sounds|noise|noises)\s+(?:of|like)\b"
)
NEGATIONS = {'no', 'not', 'cannot', "can't", "couldn't", 'nothing', 'without', 'never', 'neither', 'nor',
             "isn't", "aren't", "wasn't", "weren't", "don't", "doesn't", "didn't"}
EMPTY_OBJECTS = {'no', 'nothing', 'silence', 'none'}
_NEGATION_WINDOW = 4


def mask_events(text: str, events: Sequence[str] = ()) -> str:
    """Return the normalized `text` with every known event text replaced by
    `event`, so that words inside an event name are never read as cues.

    Examples
    --------
    >>> mask_events('The ball rolls behind the sofa early', ['ball rolls behind the sofa'])
    'the event early'
    """
    text = _normalize_text(text).replace('’', "'")
    names = sorted({_normalize_text(event) for event in events if event and event.strip()}, key=len, reverse=True)
    for name in names:
        text = re.sub(r'(?<!\w)' + re.escape(name) + r'(?!\w)', 'event', text)
    return text


def _is_negated(text: str, match) -> bool:
    before = re.findall(r"[\w']+", text[:match.start()])[-_NEGATION_WINDOW:]
    after = re.findall(r"[\w']+", text[match.end():])[:2]
    return any(word in NEGATIONS for word in before) or any(word in EMPTY_OBJECTS for word in after)


def describes_audio(text: str) -> bool:
    """True if `text`, already normalized, states that some sound is heard.
    A bare mention of the audio, or a negated statement, is not enough.

    Examples
    --------
    >>> describes_audio('a loud thud is heard as he falls')
    True
    >>> describes_audio('i cannot say anything about the audio')
    False
    >>> describes_audio('the audio contains nothing')
    False
    """
    return any(not _is_negated(text, match) for match in AUDIO_CLAIM_RGX.finditer(text))


def classify_engagement(raw_text: Optional[str], prediction: str, events: Sequence[str] = ()) -> str:
    """Return how a mute-task answer engages with the audio question.

    A silence claim gives `silence_claimed`. A timing verdict, or a concrete
    statement that a sound is heard, gives `audio_described`. Anything else,
    including a refusal to talk about the audio, is `visual_only`.

    Examples
    --------
    >>> classify_engagement('the video is silent', 'muted')
    'silence_claimed'
    >>> classify_engagement('a loud thud is heard as he falls', 'synced')
    'audio_described'
    >>> classify_engagement('a man falls off a ladder', 'synced')
    'visual_only'
    """
    if prediction == MUTED:
        return SILENCE_CLAIMED
    if prediction in (DELAY, EARLY):
        return AUDIO_DESCRIBED
    if describes_audio(mask_events(raw_text or '', events)):
        return AUDIO_DESCRIBED
    return VISUAL_ONLY


class JudgeBackend(ABC):
    """ Reads a raw response into the judge fields of a task."""
    mode = ''

    def __init__(self, id: str):
        self.id = id

    @abstractmethod
    def extract(self, task: str, raw_text: str, events: Sequence[str] = ()) -> Dict[str, Any]:
        """Return the judge fields for `raw_text`, as the judge prompt
        schema names them. `events` are the event texts of the clip, when
        known.

        Raises
        ------
        JudgeUnparseable
            If no judge fields could be read.
        """


def _first_direction(text: str) -> str:
    delay = DELAY_CUES.search(text)
    early = EARLY_CUES.search(text)
    if delay and early:
        return DELAY if delay.start() <= early.start() else EARLY
    if delay:
        return DELAY
    if early:
        return EARLY
    return NONE


def _first_verdict(text: str, positive, negative):
    """ Return the first match of `negative` when it comes before any match
    of `positive`, else None."""
    neg = negative.search(text)
    if neg is None:
        return None
    pos = positive.search(text)
    if pos is not None and pos.start() < neg.start():
        return None
    return neg


class RulesJudge(JudgeBackend):
    """ Deterministic keyword judge.

    The response is lowercased, the event texts of the clip are masked out,
    and the rest is matched on whole words. The first verdict stated wins:

    shift
        1. a desync cue ("out of sync", "synchronization mismatch", "lags",
           "delayed", "comes early", ...) that no sync claim
           ("synchronized", "in sync", "lines up", ...) precedes makes the
           answer not synced, otherwise it is synced;
        2. the direction is the first delay cue ("delayed", "lags",
           "behind", ...) or early cue ("early", "ahead", "precedes", ...)
           from the desync cue on, else anywhere, `none` without any;
        3. the offset is the number of seconds after "by" or "offset of";
        4. t_v is the time after "occurs at", t_a the time after
           "heard at".
    mute
        a silence cue ("silent", "no audio", "muted", ...) gives `muted`;
        else a desync verdict gives its direction; else `synced`.
    swap
        a mismatch cue ("mismatch", "does not match", "unrelated", ...)
        that no match claim ("fits", "matches", ...) precedes gives
        `mismatched`; else a desync verdict gives its direction; else
        `synced`.
    """
    mode = 'rules'

    def __init__(self, id: str = 'rules'):
        super().__init__(id)

    def extract(self, task: str, raw_text: str, events: Sequence[str] = ()) -> Dict[str, Any]:
        text = mask_events(raw_text, events)
        if task == 'shift':
            return self._extract_shift(text)

        if task == 'mute':
            match = SILENCE_CUES.search(text)
            if match:
                return {'prediction': MUTED, 'explanation': 'silence cue "{}"'.format(match.group())}
        elif task == 'swap':
            match = _first_verdict(text, MATCH_CUES, MISMATCH_CUES)
            if match:
                return {'prediction': MISMATCHED, 'explanation': 'mismatch cue "{}"'.format(match.group())}
        else:
            raise ValueError('Unknown task {!r}.'.format(task))

        match = _first_verdict(text, SYNC_CUES, DESYNC_CUES)
        direction = self._direction(text, match) if match else NONE
        if direction != NONE:
            return {'prediction': direction, 'explanation': 'desync cue "{}"'.format(match.group())}
        return {'prediction': SYNCED, 'explanation': 'no silence, mismatch or desync cue'}

    @staticmethod
    def _direction(text: str, match) -> str:
        direction = _first_direction(text[match.start():])
        return direction if direction != NONE else _first_direction(text)

    @classmethod
    def _extract_shift(cls, text: str) -> Dict[str, Any]:
        fields = {'t_v': _search_seconds(text, r'occurs at'), 't_a': _search_seconds(text, r'heard at')}
        match = _first_verdict(text, SYNC_CUES, DESYNC_CUES)
        if match is None:
            fields.update(synced=True, direction=NONE, offset_sec=0.0, explanation='no desync verdict')
            return fields

        offset = None
        for span in (text[match.start():], text):
            offset = _search_seconds(span, r'\bby')
            if offset is None:
                offset = _search_seconds(span, r'offset of')
            if offset is not None:
                break
        fields.update(synced=False, direction=cls._direction(text, match), offset_sec=offset or 0.0,
                      explanation='desync cue "{}"'.format(match.group()))
        return fields


class LlmJudge(JudgeBackend):
    """ Judge backed by a chat model.

    Parameters
    ----------
    client:
        Anything with a `chat(messages) -> str` method, e.g.
        `hearsay.backends.HttpBackend`.
    """
    mode = 'llm'

    def __init__(self, client, id: str = 'llm'):
        super().__init__(id)
        self.client = client

    def extract(self, task: str, raw_text: str, events: Sequence[str] = ()) -> Dict[str, Any]:
        messages = [{'role': 'system', 'content': judge_prompt(task)},
                    {'role': 'user', 'content': raw_text}]
        reply = self.client.chat(messages)
        fields = extract_json_object(reply)
        if fields is not None:
            return fields

        log.info('Judge reply is not JSON, asking once more.')
        messages += [{'role': 'assistant', 'content': reply or ''},
                     {'role': 'user', 'content': REPAIR_PROMPT}]
        fields = extract_json_object(self.client.chat(messages))
        if fields is None:
            raise JudgeUnparseable('Judge {} returned no JSON object after one repair.'.format(self.id))
        return fields


def judge_parse(task: str, raw_text: Optional[str], backend: JudgeBackend, clip_id: str = '',
                model_id: str = '', error: Optional[str] = None, events: Sequence[str] = ()) -> ParsedPrediction:
    """Return the ParsedPrediction of one raw response.

    A response without text (an error-marked record) and a judge reply that
    stays unreadable both map to the task default; the latter is flagged
    `unparseable`. The engagement of a mute answer is the one the judge
    reports, if any, else it is classified from the response.

    Parameters
    ----------
    task: str

    raw_text: str

    backend: JudgeBackend

    clip_id: str

    model_id: str

    error: str
        The error marker of the response record, if any.

    events: sequence of str
        The event texts of the clip, never read as cues.
    """
    unparseable = False
    if error is not None or not (raw_text or '').strip():
        fields = default_fields(task)
    else:
        try:
            fields = backend.extract(task, raw_text, events)
        except (JudgeUnparseable, BackendError) as exc:
            log.warning('Judge could not parse %s/%s (%s), using the %s default.', model_id, clip_id, exc, task)
            fields = default_fields(task)
            unparseable = True

    normalized = normalize_fields(task, fields)
    if task == 'mute':
        reported = str(fields.get('engagement') or '').strip().lower()
        if normalized['prediction'] != MUTED and reported in (AUDIO_DESCRIBED, VISUAL_ONLY):
            normalized['engagement'] = reported
        else:
            normalized['engagement'] = classify_engagement(raw_text, normalized['prediction'], events)
    return ParsedPrediction(task=task, clip_id=clip_id, model_id=model_id, unparseable=unparseable, error=error,
                            **normalized)


def judge_records(responses: Sequence, backend: JudgeBackend, parallelism: int = 1,
                  events: Optional[Mapping[str, Sequence[str]]] = None) -> List[ParsedPrediction]:
    """Return the parsed predictions of `responses`, a sequence of
    ResponseRecord, sorted by (clip id, task). `events` maps a clip id to
    the event texts of the clip."""
    events = events or {}

    def _parse(response):
        return judge_parse(response.task, response.raw_text, backend, clip_id=response.clip_id,
                           model_id=response.model_id, error=response.error, events=events.get(response.clip_id, ()))

    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        parsed = list(pool.map(_parse, responses))
    return sorted(parsed, key=lambda pred: (pred.clip_id, pred.task))
