# -*- coding: utf-8 -*-
# emacs: -*- mode: python; py-indent-offset: 4; indent-tabs-mode: nil -*-
# vi: set ft=python sts=4 ts=4 sw=4 et:
"""
Response templates.

The same sentences serve as chosen/rejected texts of preference pairs and as
stub model answers, and they are phrased so that the rules judge reads them
back into the condition they describe: the verdict comes first, before any
event text.
"""
from hearsay.interventions import DELAY, DESYNCED, MISMATCHED, SILENT, InterventionRecord
from hearsay._utils import _fmt_offset, _fmt_time


def synced_answer(visual_event: str, visual_time: float, audio_event: str, audio_time: float) -> str:
    return 'The sound is synchronized with the {ev}: the visible {ev} occurs at ~{tv}s and the {ea} is heard ' \
           'at ~{ta}s.'.format(ev=visual_event, tv=_fmt_time(visual_time), ea=audio_event, ta=_fmt_time(audio_time))


def desynced_answer(visual_event: str, visual_time: float, audio_event: str, audio_time: float,
                    direction: str, offset_s: float, precise: bool = False) -> str:
    """ A sentence stating the direction and size of the offset first, then
    both event times. `precise` keeps the offset digits down to the frame."""
    offset = _fmt_offset(offset_s) if precise else '{:.1f}'.format(offset_s)
    if direction == DELAY:
        verdict = 'is delayed by about {} s'.format(offset)
    else:
        verdict = 'comes early by about {} s'.format(offset)
    return 'The audio {verdict}, a synchronization mismatch: the visible {ev} occurs at ~{tv}s, while the {ea} ' \
           'is heard at ~{ta}s.'.format(verdict=verdict, ev=visual_event, tv=_fmt_time(visual_time),
                                        ea=audio_event, ta=_fmt_time(audio_time))


def sync_claim_answer(visual_event: str, audio_event: str) -> str:
    return 'The audio and video are synchronized; the {} lines up with the {}.'.format(audio_event, visual_event)


def silent_answer() -> str:
    return 'The audio track is silent throughout the clip; no sound of any kind is detected.'


def described_audio_answer(visual_event: str, audio_event: str) -> str:
    return 'The audio contains {}, heard as the {} happens on screen.'.format(audio_event, visual_event)


def visual_only_answer(visual_event: str) -> str:
    return 'The video shows the {}.'.format(visual_event)


def mismatch_answer(visual_event: str, audio_event: str) -> str:
    return 'The audio does not match the visuals, an audio-source mismatch: the visuals show {}, but the audio ' \
           'contains {}.'.format(visual_event, audio_event)


def matched_answer(visual_event: str, audio_event: str) -> str:
    return 'The audio fits what is shown: the visuals show {}, and the audio contains {}.'.format(
        visual_event, audio_event)


def reference_answer(task: str, record: InterventionRecord, precise: bool = False) -> str:
    """Return the answer a fully audio-grounded model gives for `record`
    under `task`.

    Parameters
    ----------
    task: str
        One of `shift`, `mute` or `swap`.

    record: InterventionRecord
        A clip of the task: an original control or an intervention of the
        task's kind.

    precise: bool
        Keep shift offsets to the frame.
    """
    gt = record.ground_truth
    ev, ea = record.visual_event, record.audio_event
    if task == 'shift':
        if gt.condition == DESYNCED:
            return desynced_answer(ev, gt.visual_time, ea, gt.audio_time, gt.direction, gt.offset_s, precise)
        return synced_answer(ev, gt.visual_time, ea, gt.audio_time)
    if task == 'mute':
        if gt.condition == SILENT:
            return silent_answer()
        return described_audio_answer(ev, ea)
    if task == 'swap':
        if gt.condition == MISMATCHED:
            return mismatch_answer(ev, record.donor_audio_event)
        return matched_answer(ev, ea)
    raise ValueError('Expected task shift, mute or swap, got {!r}.'.format(task))
