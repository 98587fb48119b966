# -*- coding: utf-8 -*-
# emacs: -*- mode: python; py-indent-offset: 4; indent-tabs-mode: nil -*-
# vi: set ft=python sts=4 ts=4 sw=4 et:
"""
The three counterfactual operators over a clip audio track (Shift, Mute and
Swap), the ground truth each one implies, and the validity and difficulty
bookkeeping around them.

Sign convention: a positive Shift offset delays the audio (the sound is
heard after its visual cause), a negative one makes it early.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from hearsay.exceptions import (DonorSilent,
                                InvalidLabel,
                                InvalidOffset,
                                InvalidRange,
                                OffsetTooLarge,
                                OutOfBandRange,
                                SameClip,)
from hearsay.media import AudioTrack, SourceClip, resample
from hearsay._utils import _normalize_text

log = logging.getLogger(__name__)

DEFAULT_DELTA_MIN = 0.5
DEFAULT_DELTA_MAX = 2.0
DEFAULT_BANDS = ((0.5, 1.0), (1.0, 1.5), (1.5, 2.0))
DEFAULT_AMBIGUITY_WINDOW_S = 0.25

# ground truth conditions
SYNCED = 'synced'
DESYNCED = 'desynced'
SILENT = 'silent'
MISMATCHED = 'mismatched'

# directions
DELAY = 'delay'
EARLY = 'early'


@dataclass(frozen=True)
class Shift:
    offset_s: float
    delta_max: float = field(default=DEFAULT_DELTA_MAX, compare=False, repr=False)
    name = 'shift'

    def __post_init__(self):
        if self.offset_s == 0:
            raise InvalidOffset('Expected a non-zero shift offset.')
        if abs(self.offset_s) > self.delta_max:
            raise InvalidOffset('Expected |offset| <= {}, got {}.'.format(self.delta_max, self.offset_s))

    @property
    def direction(self) -> str:
        return DELAY if self.offset_s > 0 else EARLY


@dataclass(frozen=True)
class Mute:
    name = 'mute'


@dataclass(frozen=True)
class Swap:
    source_clip_id: str
    name = 'swap'

    def __post_init__(self):
        if not self.source_clip_id:
            raise ValueError('Expected a donor clip id.')


@dataclass(frozen=True)
class Original:
    name = 'original'


InterventionKind = Union[Shift, Mute, Swap, Original]


@dataclass(frozen=True)
class GroundTruth:
    """ What a perfect audio-grounded answer says about an (intervened) clip.

    `offset_s` is the magnitude of the shift, the sign lives in `direction`.
    `audio_time` is the audio event time after the intervention, None when
    the clip is silent.
    """
    condition: str
    visual_time: Optional[float] = None
    audio_time: Optional[float] = None
    direction: Optional[str] = None
    offset_s: Optional[float] = None
    band: Optional[str] = None

    def __post_init__(self):
        if self.condition not in (SYNCED, DESYNCED, SILENT, MISMATCHED):
            raise ValueError('Unknown condition {!r}.'.format(self.condition))
        if self.condition == DESYNCED:
            if self.direction not in (DELAY, EARLY) or not self.offset_s:
                raise ValueError('Expected a direction and a positive offset for a desynced clip.')
        elif self.direction is not None:
            raise ValueError('Only desynced clips have a direction, got {}.'.format(self.direction))
        if self.condition == SILENT and self.audio_time is not None:
            raise ValueError('A silent clip has no audio event time.')

    @property
    def signed_offset(self) -> float:
        """ +offset for delayed audio, -offset for early audio, 0 otherwise."""
        if self.condition != DESYNCED:
            return 0.0
        return self.offset_s if self.direction == DELAY else -self.offset_s

    @property
    def is_original(self) -> bool:
        return self.condition == SYNCED


@dataclass(frozen=True)
class InterventionRecord:
    """ One row of the intervened-clip manifest.

    `id` names the intervened clip (the unit models are evaluated on) and
    `base_id` the source clip it was derived from.
    """
    id: str
    base_id: str
    kind: InterventionKind
    ground_truth: GroundTruth
    output_ref: str
    seed: Optional[int] = None
    visual_event: Optional[str] = None
    audio_event: Optional[str] = None
    donor_audio_event: Optional[str] = None

    def __post_init__(self):
        expected = {Original: SYNCED, Shift: DESYNCED, Mute: SILENT, Swap: MISMATCHED}[type(self.kind)]
        if self.ground_truth.condition != expected:
            raise ValueError('Ground truth {} does not match a {} intervention.'.format(
                self.ground_truth.condition, self.kind.name))
        if isinstance(self.kind, Shift) and self.ground_truth.direction != self.kind.direction:
            raise ValueError('Ground truth direction does not match the shift sign.')
        if isinstance(self.kind, Swap) and self.kind.source_clip_id == self.base_id:
            raise SameClip('Clip {} cannot donate its own audio.'.format(self.base_id))

    @property
    def kind_name(self) -> str:
        return self.kind.name

    def to_dict(self) -> Dict[str, Any]:
        gt = self.ground_truth
        record = {
            'id': self.id,
            'base_id': self.base_id,
            'kind': self.kind.name,
            'condition': gt.condition,
            'output_ref': self.output_ref,
        }
        optional = {
            'offset_s': self.kind.offset_s if isinstance(self.kind, Shift) else None,
            'donor_id': self.kind.source_clip_id if isinstance(self.kind, Swap) else None,
            'direction': gt.direction,
            'visual_time_s': gt.visual_time,
            'audio_time_s': gt.audio_time,
            'band': gt.band,
            'seed': self.seed,
            'visual_event': self.visual_event,
            'audio_event': self.audio_event,
            'donor_audio_event': self.donor_audio_event,
        }
        record.update({key: value for key, value in optional.items() if value is not None})
        return record

    @classmethod
    def from_dict(cls, record: Dict[str, Any]) -> 'InterventionRecord':
        kind_name = record['kind']
        if kind_name == 'shift':
            kind = Shift(record['offset_s'], delta_max=math.inf)
        elif kind_name == 'mute':
            kind = Mute()
        elif kind_name == 'swap':
            kind = Swap(record['donor_id'])
        elif kind_name == 'original':
            kind = Original()
        else:
            raise ValueError('Unknown intervention kind {!r}.'.format(kind_name))

        offset = abs(record['offset_s']) if kind_name == 'shift' else None
        gt = GroundTruth(condition=record['condition'],
                         visual_time=record.get('visual_time_s'),
                         audio_time=record.get('audio_time_s'),
                         direction=record.get('direction'),
                         offset_s=offset,
                         band=record.get('band'))
        return cls(id=record['id'], base_id=record['base_id'], kind=kind, ground_truth=gt,
                   output_ref=record['output_ref'], seed=record.get('seed'),
                   visual_event=record.get('visual_event'), audio_event=record.get('audio_event'),
                   donor_audio_event=record.get('donor_audio_event'))


def quantize_offset(offset_s: float, sample_rate: int) -> Tuple[int, float]:
    """ Return the offset rounded to whole frames, as (frames, seconds)."""
    frames = int(round(offset_s * sample_rate))
    return frames, frames / sample_rate


def apply_shift(track: AudioTrack, offset_s: float) -> AudioTrack:
    """Return `track` displaced in time by `offset_s` seconds.

    The offset is rounded to whole frames. Vacated samples are digital
    silence and samples pushed past either end are discarded, so the frame
    count never changes.

    Parameters
    ----------
    track: AudioTrack

    offset_s: float
        Positive delays the audio, negative makes it early.

    Returns
    -------
    shifted: AudioTrack

    Raises
    ------
    OffsetTooLarge
        If |offset_s| >= track.duration_s.
    """
    if abs(offset_s) >= track.duration_s:
        raise OffsetTooLarge('Expected |offset| < {}s, got {}s.'.format(track.duration_s, offset_s))

    frames, _ = quantize_offset(offset_s, track.sample_rate)
    if frames == 0:
        return track

    out = np.zeros_like(track.samples)
    if frames > 0:
        out[frames:] = track.samples[:-frames]
    else:
        out[:frames] = track.samples[-frames:]
    return AudioTrack(track.sample_rate, out)


def apply_mute(track: AudioTrack) -> AudioTrack:
    """Return a track of the same shape as `track` holding only zeros."""
    return AudioTrack(track.sample_rate, np.zeros_like(track.samples))


def _match_channels(samples: np.ndarray, channels: int) -> np.ndarray:
    if samples.shape[1] == channels:
        return samples
    mono = samples.mean(axis=1, keepdims=True)
    return np.repeat(mono, channels, axis=1)


def apply_swap(target: SourceClip, donor: SourceClip) -> AudioTrack:
    """Return the audio of `donor` fitted to `target`.

    The donor audio is resampled to the target rate, its channel count
    adapted (mono is duplicated, otherwise channels are averaged to mono
    first), then trimmed or padded with trailing silence to the target
    duration.

    Raises
    ------
    SameClip
        If both clips share their id.
    DonorSilent
        If `donor` has no audio.
    """
    if donor.id == target.id:
        raise SameClip('Clip {} cannot donate its own audio.'.format(target.id))
    if donor.audio is None:
        raise DonorSilent('Donor clip {} has no audio.'.format(donor.id))

    if target.audio is not None:
        rate, channels = target.audio.sample_rate, target.audio.channels
        n_frames = target.audio.frame_count
    else:
        rate, channels = donor.audio.sample_rate, donor.audio.channels
        n_frames = int(round(target.duration_s * rate))

    fitted = resample(donor.audio, rate)
    samples = _match_channels(fitted.samples, channels)
    if samples.shape[0] >= n_frames:
        out = samples[:n_frames]
    else:
        out = np.zeros((n_frames, channels))
        out[:samples.shape[0]] = samples
    return AudioTrack(rate, out)


def sample_shift_offset(rng_seed: int, delta_max: float = DEFAULT_DELTA_MAX,
                        delta_min: float = DEFAULT_DELTA_MIN) -> float:
    """Return a signed offset drawn uniformly from
    [-delta_max, -delta_min] U [delta_min, delta_max].

    Raises
    ------
    InvalidRange
        Unless 0 < delta_min < delta_max.

    Examples
    --------
    >>> sample_shift_offset(7) == sample_shift_offset(7)
    True
    """
    if not 0 < delta_min < delta_max:
        raise InvalidRange('Expected 0 < delta_min < delta_max, got {} and {}.'.format(delta_min, delta_max))
    rng = np.random.default_rng(rng_seed)
    magnitude = rng.uniform(delta_min, delta_max)
    sign = 1.0 if rng.random() < 0.5 else -1.0
    return float(sign * magnitude)


def clamp_frames(frames: int, sample_rate: int, delta_min: float, delta_max: float) -> int:
    """ Keep a quantized offset inside the [delta_min, delta_max] magnitude range."""
    lo = int(math.ceil(delta_min * sample_rate))
    hi = int(math.floor(delta_max * sample_rate))
    magnitude = min(max(abs(frames), lo), hi)
    return magnitude if frames > 0 else -magnitude


def band_label(lo: float, hi: float) -> str:
    return '{:.1f}-{:.1f}'.format(lo, hi)


def band_of(offset_s: float, bands: Sequence[Sequence[float]] = DEFAULT_BANDS) -> str:
    """Return the label of the difficulty band holding |offset_s|.

    Bands are left-closed, the last one is closed on both ends.

    Raises
    ------
    OutOfBandRange
        If offset_s is 0 or |offset_s| falls outside every band.

    Examples
    --------
    >>> band_of(0.7)
    '0.5-1.0'
    >>> band_of(-1.0)
    '1.0-1.5'
    >>> band_of(2.0)
    '1.5-2.0'
    """
    magnitude = abs(offset_s)
    if magnitude == 0:
        raise OutOfBandRange('A zero offset has no difficulty band.')
    last = len(bands) - 1
    for idx, (lo, hi) in enumerate(bands):
        if lo <= magnitude < hi or (idx == last and magnitude == hi):
            return band_label(lo, hi)
    raise OutOfBandRange('Offset {} lies outside the bands {}.'.format(offset_s, list(bands)))


@dataclass(frozen=True)
class Accept:

    def __bool__(self):
        return True


@dataclass(frozen=True)
class Reject:
    reason: str

    def __bool__(self):
        return False


def validate_intervention(clip: SourceClip, label, kind: InterventionKind, donor_label=None,
                          ambiguity_window_s: float = DEFAULT_AMBIGUITY_WINDOW_S) -> Union[Accept, Reject]:
    """Return whether applying `kind` to `clip` keeps a single correct answer.

    Parameters
    ----------
    clip: SourceClip

    label: EventTimeLabel
        The verified label of `clip`.

    kind: InterventionKind

    donor_label: EventTimeLabel
        The label of the donor clip, for Swap.

    ambiguity_window_s: float
        A shifted sound this close to the visual event makes the direction
        ambiguous.

    Returns
    -------
    verdict: Accept or Reject
        Reject reasons are `out-of-range`, `ambiguous-direction`,
        `missing-donor-label` and `too-similar`.

    Raises
    ------
    InvalidLabel
        If a Shift is validated against a label without an audio time.
    """
    if isinstance(kind, Shift):
        if not isinstance(label.audio_time, (int, float)):
            raise InvalidLabel('Expected an audio time to shift for clip {}, got {!r}.'.format(
                clip.id, label.audio_time))
        shifted = label.audio_time + kind.offset_s
        if not 0.0 <= shifted <= clip.duration_s:
            return Reject('out-of-range')
        if label.visual_time is not None and abs(shifted - label.visual_time) <= ambiguity_window_s:
            return Reject('ambiguous-direction')
        return Accept()

    if isinstance(kind, Swap):
        if donor_label is None or not donor_label.audio_event:
            return Reject('missing-donor-label')
        if _normalize_text(donor_label.audio_event) == _normalize_text(label.audio_event):
            return Reject('too-similar')
        return Accept()

    return Accept()


def shift_ground_truth(label, offset_s: float, bands=DEFAULT_BANDS) -> GroundTruth:
    """ Ground truth of a clip with the audio of `label` shifted by `offset_s`."""
    return GroundTruth(condition=DESYNCED,
                       visual_time=label.visual_time,
                       audio_time=label.audio_time + offset_s,
                       direction=DELAY if offset_s > 0 else EARLY,
                       offset_s=abs(offset_s),
                       band=band_of(offset_s, bands))


def select_donor(target_id: str, target_audio_event: str, candidates: Sequence[Tuple[str, str]],
                 seed: int) -> Optional[str]:
    """Return the id of a donor clip for swapping the audio of `target_id`.

    The donor is drawn uniformly among `candidates`, pairs of
    (clip id, audio event), whose audio event differs from
    `target_audio_event`. Returns None when no candidate qualifies.
    """
    target_event = _normalize_text(target_audio_event)
    eligible = sorted(clip_id for clip_id, event in candidates
                      if clip_id != target_id and _normalize_text(event) != target_event)
    if not eligible:
        return None
    rng = np.random.default_rng(seed)
    return eligible[int(rng.integers(len(eligible)))]


def load_manifest(records: List[Dict[str, Any]]) -> List[InterventionRecord]:
    return [InterventionRecord.from_dict(record) for record in records]
