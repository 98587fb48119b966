# -*- coding: utf-8 -*-
# emacs: -*- mode: python; py-indent-offset: 4; indent-tabs-mode: nil -*-
# vi: set ft=python sts=4 ts=4 sw=4 et:
"""
Event-time labels and their verification.

Each clip gets one label per annotator. Visual annotators localize the
visible event (directly or by picking a frame unit), audio annotators the
sound. A label set is retained when all annotators agree within the
tolerances, nobody is uncertain and nobody reports low confidence;
otherwise it goes to manual review.
"""
import logging
import re
from dataclasses import dataclass, replace
from typing import Any, Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

from hearsay.exceptions import InvalidCount, InvalidLabel, MissingAnnotator
from hearsay.media import SourceClip
from hearsay.prompts import ANNOTATION_PROMPT, FRAMEUNIT_PROMPT, load_prompt
from hearsay.utils import extract_json_object, rm_dups
from hearsay._utils import Interval, _intervals_intersect, _median, _pairwise

log = logging.getLogger(__name__)

UNCERTAIN = 'uncertain'

HIGH = 'high'
MEDIUM = 'medium'
LOW = 'low'
CONFIDENCES = (HIGH, MEDIUM, LOW)

RETAINED = 'retained'
MANUAL_REVIEW = 'manual_review'
DISCARDED = 'discarded'

CONSENSUS_ID = 'consensus'

DEFAULT_EPS_V = 0.8
DEFAULT_EPS_A = 0.5

TimeValue = Union[float, str, None]


def is_time(value: TimeValue) -> bool:
    """ True for an actual timestamp, False for Uncertain or absent."""
    return value is not None and value != UNCERTAIN


def _parse_time(value: Any) -> TimeValue:
    if value is None:
        return None
    if isinstance(value, str):
        text = value.strip().lower()
        if not text:
            return None
        if text == UNCERTAIN:
            return UNCERTAIN
        text = text.rstrip('s').strip()
        try:
            return float(text)
        except ValueError:
            raise InvalidLabel('Expected a timestamp in seconds, got {!r}.'.format(value)) from None
    return float(value)


@dataclass(frozen=True)
class EventTimeLabel:
    """ One annotator's view of the salient audio-visual event of a clip.

    Times are seconds from the clip start, `UNCERTAIN`, or None when the
    annotator did not label that modality. `clarity_ok` and `salience_ok`
    carry the event-clarity and acoustic-salience judgments.
    """
    clip_id: str
    annotator_id: str
    visual_event: Optional[str] = None
    visual_time: TimeValue = None
    audio_event: Optional[str] = None
    audio_time: TimeValue = None
    confidence: str = MEDIUM
    clarity_ok: bool = True
    salience_ok: bool = True
    visual_unit: Optional[Interval] = None

    def __post_init__(self):
        if self.confidence not in CONFIDENCES:
            raise InvalidLabel('Expected confidence in {}, got {!r}.'.format(CONFIDENCES, self.confidence))
        has_visual = self._check_pair('visual', self.visual_event, self.visual_time)
        has_audio = self._check_pair('audio', self.audio_event, self.audio_time)
        if not (has_visual or has_audio):
            raise InvalidLabel('Label of {} by {} has neither a visual nor an audio pair.'.format(
                self.clip_id, self.annotator_id))
        for name in ('visual_time', 'audio_time'):
            value = getattr(self, name)
            if is_time(value) and value < 0:
                raise InvalidLabel('Expected a non-negative {}, got {}.'.format(name, value))

    def _check_pair(self, modality: str, event: Optional[str], time: TimeValue) -> bool:
        if event is None and time is None:
            return False
        if time is None or (event is None and time != UNCERTAIN):
            raise InvalidLabel('A {} pair needs both the event text and its time, got {!r} and {!r}.'.format(
                modality, event, time))
        return True

    @property
    def is_uncertain(self) -> bool:
        return UNCERTAIN in (self.visual_time, self.audio_time)

    def to_dict(self) -> Dict[str, Any]:
        record = {
            'clip_id': self.clip_id,
            'annotator_id': self.annotator_id,
            'visual_event': self.visual_event,
            'visual_time_s': self.visual_time,
            'audio_event': self.audio_event,
            'audio_time_s': self.audio_time,
            'confidence': self.confidence,
            'clarity_ok': self.clarity_ok,
            'salience_ok': self.salience_ok,
        }
        if self.visual_unit is not None:
            record['visual_unit'] = list(self.visual_unit)
        return record

    @classmethod
    def from_dict(cls, record: Dict[str, Any]) -> 'EventTimeLabel':
        unit = record.get('visual_unit')
        return cls(clip_id=str(record['clip_id']),
                   annotator_id=str(record['annotator_id']),
                   visual_event=record.get('visual_event'),
                   visual_time=_parse_time(record.get('visual_time_s')),
                   audio_event=record.get('audio_event'),
                   audio_time=_parse_time(record.get('audio_time_s')),
                   confidence=str(record.get('confidence', MEDIUM)).lower(),
                   clarity_ok=bool(record.get('clarity_ok', True)),
                   salience_ok=bool(record.get('salience_ok', True)),
                   visual_unit=tuple(unit) if unit is not None else None)


@dataclass(frozen=True)
class AnnotatorSets:
    visual_annotators: Set[str]
    audio_annotators: Set[str]

    def __post_init__(self):
        if not self.visual_annotators or not self.audio_annotators:
            raise ValueError('Expected non-empty visual and audio annotator sets.')
        object.__setattr__(self, 'visual_annotators', frozenset(self.visual_annotators))
        object.__setattr__(self, 'audio_annotators', frozenset(self.audio_annotators))
        if len(self.visual_annotators) < 2:
            log.warning('Only one visual annotator: visual agreement is trivially met.')

    @property
    def everyone(self) -> List[str]:
        return rm_dups(list(self.visual_annotators) + list(self.audio_annotators))

    def reference(self) -> str:
        """ The annotator whose event texts become the consensus texts."""
        both = rm_dups(self.visual_annotators & self.audio_annotators)
        return both[0] if both else rm_dups(self.audio_annotators)[0]


@dataclass(frozen=True)
class FrameUnit:
    index: int
    start_s: float
    end_s: float

    @property
    def interval(self) -> Interval:
        return self.start_s, self.end_s

    @property
    def midpoint(self) -> float:
        return (self.start_s + self.end_s) / 2.0


@dataclass(frozen=True)
class VerificationVerdict:
    clip_id: str
    status: str
    reasons: Tuple[str, ...] = ()
    consensus_label: Optional[EventTimeLabel] = None

    def __post_init__(self):
        if self.status not in (RETAINED, MANUAL_REVIEW, DISCARDED):
            raise ValueError('Unknown verdict status {!r}.'.format(self.status))
        if self.status == RETAINED and self.consensus_label is None:
            raise ValueError('A retained clip needs a consensus label.')
        object.__setattr__(self, 'reasons', tuple(self.reasons))

    @property
    def retained(self) -> bool:
        return self.status == RETAINED

    def to_dict(self) -> Dict[str, Any]:
        return {
            'clip_id': self.clip_id,
            'status': self.status,
            'reasons': list(self.reasons),
            'consensus': self.consensus_label.to_dict() if self.consensus_label is not None else None,
        }

    @classmethod
    def from_dict(cls, record: Dict[str, Any]) -> 'VerificationVerdict':
        consensus = record.get('consensus')
        return cls(clip_id=record['clip_id'], status=record['status'], reasons=tuple(record.get('reasons', ())),
                   consensus_label=EventTimeLabel.from_dict(consensus) if consensus else None)


def build_frame_units(duration_s: float, n_units: int) -> List[FrameUnit]:
    """Return `n_units` equal-width contiguous frame units covering
    [0, duration_s]. Unit indices start at 1.

    Raises
    ------
    InvalidCount
        If n_units < 1.

    Examples
    --------
    >>> [unit.interval for unit in build_frame_units(10, 5)]
    [(0.0, 2.0), (2.0, 4.0), (4.0, 6.0), (6.0, 8.0), (8.0, 10.0)]
    """
    if n_units < 1:
        raise InvalidCount('Expected at least one frame unit, got {}.'.format(n_units))
    if duration_s <= 0:
        raise ValueError('Expected a positive duration, got {}.'.format(duration_s))

    units = []
    start = 0.0
    for j in range(1, n_units + 1):
        end = float(duration_s) if j == n_units else duration_s * j / n_units
        units.append(FrameUnit(j, start, end))
        start = end
    return units


def find_unit(units: Sequence[FrameUnit], time_s: float) -> Optional[FrameUnit]:
    """ Return the unit holding `time_s`, the last unit being closed."""
    for unit in units:
        if unit.start_s <= time_s < unit.end_s:
            return unit
    if units and time_s == units[-1].end_s:
        return units[-1]
    return None


def _time_interval(time: float, unit: Optional[Interval]) -> Interval:
    return unit if unit is not None else (time, time)


def _agree(entries: Sequence[Tuple[float, Optional[Interval]]], eps: float) -> bool:
    """ True if every pair of (time, unit) entries lies within `eps` or has
    intersecting units. A bare time counts as a zero-width unit."""
    for (t1, u1), (t2, u2) in _pairwise(entries):
        if abs(t1 - t2) <= eps:
            continue
        if (u1 is not None or u2 is not None) and _intervals_intersect(_time_interval(t1, u1),
                                                                       _time_interval(t2, u2)):
            continue
        return False
    return True


def _index_labels(labels: Iterable[EventTimeLabel]) -> Dict[str, EventTimeLabel]:
    by_annotator = {}
    clip_ids = set()
    for label in sorted(labels, key=lambda lbl: lbl.annotator_id):
        if label.annotator_id in by_annotator:
            raise ValueError('Annotator {} labelled clip {} twice.'.format(label.annotator_id, label.clip_id))
        by_annotator[label.annotator_id] = label
        clip_ids.add(label.clip_id)
    if len(clip_ids) > 1:
        raise ValueError('Expected labels of a single clip, got {}.'.format(sorted(clip_ids)))
    return by_annotator


def _first_text(labels: Sequence[EventTimeLabel], name: str) -> Optional[str]:
    return next((getattr(label, name) for label in labels if getattr(label, name)), None)


def check_agreement(labels: Sequence[EventTimeLabel], sets: AnnotatorSets, eps_v: float = DEFAULT_EPS_V,
                    eps_a: float = DEFAULT_EPS_A, reference_annotator: Optional[str] = None) -> VerificationVerdict:
    """Return the verification verdict of one clip's labels.

    Parameters
    ----------
    labels: sequence of EventTimeLabel
        One label per annotator, all of the same clip.

    sets: AnnotatorSets

    eps_v: float
        Tolerance on the visual times, in seconds.

    eps_a: float
        Tolerance on the audio times, in seconds.

    reference_annotator: str
        Whose event texts the consensus keeps. By default the first
        annotator, by id, that labelled both modalities.

    Returns
    -------
    verdict: VerificationVerdict
        Retained with the consensus label, or ManualReview with one reason
        per violated criterion: `uncertain`, `low-confidence`,
        `visual-disagreement`, `audio-disagreement`.

    Raises
    ------
    MissingAnnotator
        If a member of `sets` has no label.
    """
    by_annotator = _index_labels(labels)
    missing = [ann for ann in sets.everyone if ann not in by_annotator]
    if missing:
        raise MissingAnnotator('No label from annotator(s) {}.'.format(', '.join(missing)))

    clip_id = next(iter(by_annotator.values())).clip_id
    visual = [by_annotator[ann] for ann in rm_dups(sets.visual_annotators)]
    audio = [by_annotator[ann] for ann in rm_dups(sets.audio_annotators)]
    involved = [by_annotator[ann] for ann in sets.everyone]

    reasons = []
    if any(not is_time(lbl.visual_time) for lbl in visual) or any(not is_time(lbl.audio_time) for lbl in audio):
        reasons.append('uncertain')
    if any(lbl.confidence == LOW for lbl in involved):
        reasons.append('low-confidence')

    visual_entries = [(lbl.visual_time, lbl.visual_unit) for lbl in visual if is_time(lbl.visual_time)]
    audio_entries = [(lbl.audio_time, None) for lbl in audio if is_time(lbl.audio_time)]
    if not _agree(visual_entries, eps_v):
        reasons.append('visual-disagreement')
    if not _agree(audio_entries, eps_a):
        reasons.append('audio-disagreement')

    consensus = None
    if visual_entries and audio_entries:
        reference = by_annotator[reference_annotator or sets.reference()]
        consensus = EventTimeLabel(
            clip_id=clip_id,
            annotator_id=CONSENSUS_ID,
            visual_event=reference.visual_event or _first_text(visual, 'visual_event'),
            visual_time=_median([time for time, _ in visual_entries]),
            audio_event=reference.audio_event or _first_text(audio, 'audio_event'),
            audio_time=_median([time for time, _ in audio_entries]),
            confidence=reference.confidence,
            clarity_ok=all(lbl.clarity_ok for lbl in involved),
            salience_ok=all(lbl.salience_ok for lbl in involved),
        )

    if reasons:
        return VerificationVerdict(clip_id, MANUAL_REVIEW, tuple(reasons), consensus)
    return VerificationVerdict(clip_id, RETAINED, (), consensus)


def apply_retention_filters(verdict: VerificationVerdict, label: Optional[EventTimeLabel] = None,
                            clip: Optional[SourceClip] = None) -> VerificationVerdict:
    """Return `verdict` downgraded by the event-clarity and acoustic-salience
    filters.

    A retained clip whose label fails either flag is discarded; one whose
    consensus times fall outside the clip goes to manual review. A clip
    already in manual review only collects the new reasons and a discarded
    one passes through, so verdicts never move up.

    Parameters
    ----------
    verdict: VerificationVerdict

    label: EventTimeLabel
        Defaults to the verdict's consensus label.

    clip: SourceClip
        When given, consensus times are checked against its duration.
    """
    if verdict.status == DISCARDED:
        return verdict

    label = label or verdict.consensus_label
    discard = []
    review = []
    if label is not None:
        if not label.clarity_ok:
            discard.append('event-clarity')
        if not label.salience_ok:
            discard.append('acoustic-salience')
        if clip is not None:
            times = [t for t in (label.visual_time, label.audio_time) if is_time(t)]
            if any(t > clip.duration_s for t in times):
                review.append('timestamp-out-of-range')

    if verdict.status == RETAINED:
        if discard:
            return VerificationVerdict(verdict.clip_id, DISCARDED, tuple(discard), verdict.consensus_label)
        if review:
            return VerificationVerdict(verdict.clip_id, MANUAL_REVIEW, tuple(review), verdict.consensus_label)
        return verdict

    reasons = list(verdict.reasons)
    reasons.extend(reason for reason in discard + review if reason not in reasons)
    return replace(verdict, reasons=tuple(reasons))


def apply_review_decision(verdict: VerificationVerdict, decision: Dict[str, Any]) -> VerificationVerdict:
    """Return the verdict after a human review `decision`.

    `decision['decision']` is `correct`, retaining the clip with the
    corrected times (and optionally texts) of the decision, or `discard`
    with an optional `reason`.

    Raises
    ------
    InvalidLabel
        If a correction leaves the label without both times.
    ValueError
        For an unknown decision.
    """
    action = decision.get('decision')
    if action == 'discard':
        reason = decision.get('reason') or 'manual-review'
        return VerificationVerdict(verdict.clip_id, DISCARDED, (reason,), verdict.consensus_label)
    if action != 'correct':
        raise ValueError('Expected decision `correct` or `discard`, got {!r}.'.format(action))

    base = verdict.consensus_label
    fields = {
        'visual_event': decision.get('visual_event', base.visual_event if base else None),
        'visual_time': _parse_time(decision.get('visual_time_s', base.visual_time if base else None)),
        'audio_event': decision.get('audio_event', base.audio_event if base else None),
        'audio_time': _parse_time(decision.get('audio_time_s', base.audio_time if base else None)),
    }
    if not (is_time(fields['visual_time']) and is_time(fields['audio_time'])):
        raise InvalidLabel('A corrected label of {} needs both times.'.format(verdict.clip_id))

    if base is None:
        corrected = EventTimeLabel(clip_id=verdict.clip_id, annotator_id=CONSENSUS_ID, confidence=HIGH, **fields)
    else:
        corrected = replace(base, confidence=HIGH, **fields)
    return VerificationVerdict(verdict.clip_id, RETAINED, (), corrected)


def render_annotation_prompt(clip: Optional[SourceClip] = None) -> str:
    """Return the event annotation prompt. The prompt has no clip-specific
    slot, the clip media is sent next to it."""
    return load_prompt(ANNOTATION_PROMPT)


def unit_range_text(unit: FrameUnit) -> str:
    return '{:.2f}s-{:.2f}s'.format(unit.start_s, unit.end_s)


def render_frameunit_prompt(units: Sequence[FrameUnit], candidate_event: str) -> str:
    """Return the frame-unit verification prompt for `candidate_event`,
    followed by the timestamp range of every unit."""
    text = load_prompt(FRAMEUNIT_PROMPT).replace('{visual_event}', candidate_event)
    lines = ['unit {}: {}'.format(unit.index, unit_range_text(unit)) for unit in units]
    return text + '\n\nFrame units:\n' + '\n'.join(lines)


def _is_uncertain_reply(text: str) -> bool:
    return re.search(r'\buncertain\b', text or '', re.IGNORECASE) is not None


def parse_annotation_response(text: str, clip_id: str, annotator_id: str) -> EventTimeLabel:
    """Return the label held in an annotator reply to the annotation prompt.

    Raises
    ------
    InvalidLabel
        If the reply is neither a JSON label nor an `uncertain` answer.
    """
    obj = extract_json_object(text)
    if obj is None:
        if _is_uncertain_reply(text):
            return EventTimeLabel(clip_id, annotator_id, visual_time=UNCERTAIN, audio_time=UNCERTAIN,
                                  confidence=LOW)
        raise InvalidLabel('Could not find a label in the reply of {} for clip {}.'.format(annotator_id, clip_id))

    confidence = str(obj.get('confidence') or LOW).strip().lower()
    if confidence not in CONFIDENCES:
        confidence = LOW
    return EventTimeLabel(clip_id=clip_id,
                          annotator_id=annotator_id,
                          visual_event=obj.get('visual_event') or None,
                          visual_time=_parse_time(obj.get('visual_time', UNCERTAIN)),
                          audio_event=obj.get('audio_event') or None,
                          audio_time=_parse_time(obj.get('audio_time', UNCERTAIN)),
                          confidence=confidence)


def parse_frameunit_response(text: str, units: Sequence[FrameUnit], clip_id: str, annotator_id: str,
                             visual_event: str) -> EventTimeLabel:
    """Return the visual label held in a verifier reply to the frame-unit
    prompt. The visual time is the midpoint of the chosen unit, which is
    kept as `visual_unit`.

    Raises
    ------
    InvalidLabel
        If no known unit id can be read from the reply.
    """
    obj = extract_json_object(text)
    unit_id = None
    if obj is not None and obj.get('unit_id') is not None:
        if str(obj['unit_id']).strip().lower() == UNCERTAIN:
            unit_id = UNCERTAIN
        else:
            match = re.search(r'\d+', str(obj['unit_id']))
            unit_id = int(match.group()) if match else None
    elif obj is None:
        match = re.search(r'unit(?:[ _]?id)?\s*[:=#]?\s*(\d+)', text or '', re.IGNORECASE)
        if match:
            unit_id = int(match.group(1))
        elif _is_uncertain_reply(text):
            unit_id = UNCERTAIN

    if unit_id == UNCERTAIN:
        return EventTimeLabel(clip_id, annotator_id, visual_event=visual_event, visual_time=UNCERTAIN)

    unit = next((u for u in units if u.index == unit_id), None)
    if unit is None:
        raise InvalidLabel('Reply of {} for clip {} names no known frame unit.'.format(annotator_id, clip_id))
    return EventTimeLabel(clip_id, annotator_id, visual_event=visual_event, visual_time=unit.midpoint,
                          visual_unit=unit.interval)


def candidate_visual_event(labels: Sequence[EventTimeLabel],
                           reference_annotator: Optional[str] = None) -> Optional[str]:
    """ The visual event text the frame-unit verifiers localize: that of
    `reference_annotator`, else the first one by annotator id."""
    ordered = sorted(labels, key=lambda lbl: (lbl.annotator_id != reference_annotator, lbl.annotator_id))
    return _first_text(ordered, 'visual_event')


def merge_frameunit_label(labels: Sequence[EventTimeLabel], unit_label: EventTimeLabel) -> List[EventTimeLabel]:
    """Return `labels` with the visual pair of the annotator of `unit_label`
    taken from its frame-unit answer. An annotator without a label gets the
    frame-unit label itself."""
    merged = []
    found = False
    for label in labels:
        if label.annotator_id == unit_label.annotator_id:
            label = replace(label, visual_event=label.visual_event or unit_label.visual_event,
                            visual_time=unit_label.visual_time, visual_unit=unit_label.visual_unit)
            found = True
        merged.append(label)
    if not found:
        merged.append(unit_label)
    return merged


def group_labels(labels: Iterable[EventTimeLabel]) -> Dict[str, List[EventTimeLabel]]:
    """ Return the labels grouped by clip id, in clip id order."""
    groups = {}
    for label in labels:
        groups.setdefault(label.clip_id, []).append(label)
    return {clip_id: groups[clip_id] for clip_id in sorted(groups)}
