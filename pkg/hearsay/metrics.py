# -*- coding: utf-8 -*-
# emacs: -*- mode: python; py-indent-offset: 4; indent-tabs-mode: nil -*-
# vi: set ft=python sts=4 ts=4 sw=4 et:
"""
Diagnostic statistics over parsed predictions joined with the intervened
manifest.

Every statistic is a ratio of additive counters (`Tally`), so reports over
shards of a log can be merged by adding their tallies. A ratio with an
empty denominator is None, never 0.
"""
import logging
import math
from collections import Counter, OrderedDict
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from hearsay.exceptions import EmptySubset, MissingDimension
from hearsay.interventions import (DEFAULT_BANDS, DELAY, DESYNCED, MISMATCHED, SILENT, SYNCED, GroundTruth,
                                   InterventionRecord, band_label)
from hearsay.judge import AUDIO_DESCRIBED, MUTED, VISUAL_ONLY, ParsedPrediction
from hearsay.utils import dumps_record

log = logging.getLogger(__name__)

DIMENSIONS = OrderedDict([('sync', 'shift'), ('existence', 'mute'), ('consistency', 'swap')])
INTERVENED = {'shift': DESYNCED, 'mute': SILENT, 'swap': MISMATCHED}

FAILURE_RATES = (
    'mute_hallucination',
    'false_silence',
    'audio_dodge',
    'swap_false_match',
    'swap_false_mismatch',
    'offset_blindness',
    'direction_confusion',
    'false_sync_alarm',
)

DEFAULT_TAU_S = 0.5
DEFAULT_TAUS = (0.25, 0.5, 1.0)


@dataclass(frozen=True)
class Sample:
    """ A parsed prediction with the ground truth of the clip it answers."""
    prediction: ParsedPrediction
    ground_truth: GroundTruth

    @property
    def task(self) -> str:
        return self.prediction.task

    @property
    def condition(self) -> str:
        return self.ground_truth.condition


@dataclass(frozen=True)
class Tally:
    hits: int = 0
    total: int = 0

    def __add__(self, other: 'Tally') -> 'Tally':
        return Tally(self.hits + other.hits, self.total + other.total)

    @property
    def rate(self) -> Optional[float]:
        return self.hits / self.total if self.total else None

    @classmethod
    def of(cls, flags: Iterable[bool]) -> 'Tally':
        flags = list(flags)
        return cls(sum(1 for flag in flags if flag), len(flags))


@dataclass(frozen=True)
class PairedAccuracy:
    orig: Tally
    interv: Tally

    @property
    def orig_acc(self) -> float:
        return self.orig.rate

    @property
    def interv_acc(self) -> float:
        return self.interv.rate

    def to_dict(self) -> Dict[str, Any]:
        return {'orig_acc': self.orig_acc, 'interv_acc': self.interv_acc,
                'n_orig': self.orig.total, 'n_interv': self.interv.total}


@dataclass(frozen=True)
class Tradeoff:
    false_alarm_rate: float
    detection_rate: float
    combined_accuracy: float

    def to_dict(self) -> Dict[str, float]:
        return {'false_alarm_rate': self.false_alarm_rate, 'detection_rate': self.detection_rate,
                'combined_accuracy': self.combined_accuracy}


def join_predictions(predictions: Iterable[ParsedPrediction],
                     records: Iterable[InterventionRecord]) -> List[Sample]:
    """Return one Sample per prediction whose clip is in `records` and whose
    task matches the clip's intervention (original controls match every
    task). Unmatched predictions are logged and left out."""
    truth = {record.id: record for record in records}
    samples = []
    for pred in predictions:
        record = truth.get(pred.clip_id)
        if record is None:
            log.warning('Prediction for unknown clip %s skipped.', pred.clip_id)
            continue
        if record.kind_name not in ('original', pred.task):
            log.warning('Prediction for %s under task %s does not match a %s clip, skipped.',
                        pred.clip_id, pred.task, record.kind_name)
            continue
        samples.append(Sample(pred, record.ground_truth))
    return samples


def is_correct(prediction: ParsedPrediction, ground_truth: GroundTruth) -> bool:
    """Return True if `prediction` answers the clip of `ground_truth`
    correctly. A shifted clip needs both the desync flag and the right
    direction."""
    condition = ground_truth.condition
    if prediction.task == 'shift':
        if condition == SYNCED:
            return prediction.synced
        return not prediction.synced and prediction.direction == ground_truth.direction
    if condition == SYNCED:
        return prediction.prediction == SYNCED
    return prediction.prediction == {SILENT: MUTED, MISMATCHED: MISMATCHED}.get(condition)


def _subset(samples: Iterable[Sample], task: str, condition: str) -> List[Sample]:
    return [sample for sample in samples if sample.task == task and sample.condition == condition]


def _accuracy_tally(samples: Iterable[Sample]) -> Tally:
    return Tally.of(is_correct(sample.prediction, sample.ground_truth) for sample in samples)


def paired_accuracy(samples: Sequence[Sample], dimension: str) -> PairedAccuracy:
    """Return the accuracies on the original controls and on the intervened
    clips of one grounding dimension: `sync`, `existence` or `consistency`.

    Raises
    ------
    EmptySubset
        If either subset has no sample.
    """
    try:
        task = DIMENSIONS[dimension]
    except KeyError:
        raise ValueError('Expected a dimension in {}, got {!r}.'.format(list(DIMENSIONS), dimension)) from None

    paired = PairedAccuracy(orig=_accuracy_tally(_subset(samples, task, SYNCED)),
                            interv=_accuracy_tally(_subset(samples, task, INTERVENED[task])))
    if not paired.orig.total or not paired.interv.total:
        raise EmptySubset('Dimension {} needs both original and intervened samples, got {} and {}.'.format(
            dimension, paired.orig.total, paired.interv.total))
    return paired


def _as_pair(value: Any) -> Tuple[float, float]:
    if isinstance(value, PairedAccuracy):
        return value.orig_acc, value.interv_acc
    orig, interv = value
    return orig, interv


def avg_gap(paired: Mapping[str, Any]) -> float:
    """Return the mean accuracy drop from original to intervened clips over
    the three dimensions, in percentage points.

    Parameters
    ----------
    paired: mapping
        dimension name -> PairedAccuracy or (orig_acc, interv_acc), with the
        accuracies as fractions.

    Raises
    ------
    MissingDimension
        If any of the three dimensions is missing.

    Examples
    --------
    >>> round(avg_gap({'sync': (1.0, 0.0), 'existence': (1.0, 0.5), 'consistency': (0.5, 0.5)}), 1)
    50.0
    """
    missing = [dim for dim in DIMENSIONS if dim not in paired]
    if missing:
        raise MissingDimension('Avg gap needs all three dimensions, missing {}.'.format(missing))
    drops = []
    for dim in DIMENSIONS:
        orig, interv = _as_pair(paired[dim])
        drops.append(orig - interv)
    return 100.0 * sum(drops) / len(drops)


def fmt_points(value: Optional[float]) -> str:
    """ Display form of a percentage-point value, one decimal."""
    return '-' if value is None else '{:.1f}'.format(value)


def _mean_present(values: Iterable[Optional[float]]) -> Optional[float]:
    present = [value for value in values if value is not None]
    return float(np.mean(present)) if present else None


def failure_tallies(samples: Sequence[Sample]) -> Dict[str, Any]:
    mute_silent = _subset(samples, 'mute', SILENT)
    mute_control = _subset(samples, 'mute', SYNCED)
    swap_swapped = _subset(samples, 'swap', MISMATCHED)
    swap_control = _subset(samples, 'swap', SYNCED)
    shift_shifted = _subset(samples, 'shift', DESYNCED)
    shift_control = _subset(samples, 'shift', SYNCED)
    flagged = [sample for sample in shift_shifted if not sample.prediction.synced]

    return {
        'mute_hallucination': Tally.of(s.prediction.engagement == AUDIO_DESCRIBED for s in mute_silent),
        'false_silence': Tally.of(s.prediction.prediction == MUTED for s in mute_control),
        'audio_dodge': (Tally.of(s.prediction.engagement == VISUAL_ONLY for s in mute_silent),
                        Tally.of(s.prediction.engagement == VISUAL_ONLY for s in mute_control)),
        'swap_false_match': Tally.of(s.prediction.prediction != MISMATCHED for s in swap_swapped),
        'swap_false_mismatch': Tally.of(s.prediction.prediction == MISMATCHED for s in swap_control),
        'offset_blindness': Tally.of(s.prediction.synced for s in shift_shifted),
        'direction_confusion': Tally.of(s.prediction.direction != s.ground_truth.direction for s in flagged),
        'false_sync_alarm': Tally.of(not s.prediction.synced for s in shift_control),
    }


def failure_rates(samples: Sequence[Sample]) -> Dict[str, Optional[float]]:
    """Return the eight failure rates, None where the condition a rate
    needs is absent.

    mute_hallucination
        muted clips whose answer describes concrete audio content.
    false_silence
        original controls (mute prompt) claimed silent.
    audio_dodge
        answers that never engage with the audio question, averaged over
        the muted and the control conditions.
    swap_false_match
        swapped clips not flagged as mismatched.
    swap_false_mismatch
        original controls (swap prompt) flagged as mismatched.
    offset_blindness
        shifted clips judged synced.
    direction_confusion
        shifted clips flagged as desynced with a wrong or missing direction,
        over the flagged ones.
    false_sync_alarm
        original controls (shift prompt) judged desynced.
    """
    tallies = failure_tallies(samples)
    rates = OrderedDict()
    for name in FAILURE_RATES:
        tally = tallies[name]
        if name == 'audio_dodge':
            rates[name] = _mean_present(part.rate for part in tally)
        else:
            rates[name] = tally.rate
    return rates


def prediction_breakdown(samples: Sequence[Sample]) -> Dict[str, Dict[str, Dict[str, int]]]:
    """Return task -> ground-truth condition -> predicted label -> count.
    Shift labels are synced, delay, early or none."""
    breakdown = {}
    for sample in samples:
        conditions = breakdown.setdefault(sample.task, {})
        conditions.setdefault(sample.condition, Counter())[sample.prediction.label] += 1
    return {task: {cond: dict(sorted(counts.items())) for cond, counts in sorted(conditions.items())}
            for task, conditions in sorted(breakdown.items())}


def band_accuracy(samples: Sequence[Sample],
                  bands: Sequence[Sequence[float]] = DEFAULT_BANDS) -> Dict[str, Optional[float]]:
    """Return band label -> fraction of shifted clips in the band judged
    desynced with the right direction, None for an empty band."""
    shifted = _subset(samples, 'shift', DESYNCED)
    result = OrderedDict()
    for lo, hi in bands:
        label = band_label(lo, hi)
        result[label] = _accuracy_tally(s for s in shifted if s.ground_truth.band == label).rate
    return result


def sync_metrics(samples: Sequence[Sample]) -> Dict[str, Optional[float]]:
    """Return the binary synchronization accuracy, the three-way
    (synced/delay/early) accuracy, and the direction accuracy over the
    shifted clips flagged as desynced."""
    shift = [sample for sample in samples if sample.task == 'shift']
    binary = Tally.of(s.prediction.synced == (s.condition == SYNCED) for s in shift)
    three_way = Tally.of(s.prediction.label == (SYNCED if s.condition == SYNCED else s.ground_truth.direction)
                         for s in shift)
    flagged = [s for s in shift if s.condition == DESYNCED and not s.prediction.synced]
    direction = Tally.of(s.prediction.direction == s.ground_truth.direction for s in flagged)
    return OrderedDict([('binary_sync_acc', binary.rate),
                        ('three_way_acc', three_way.rate),
                        ('direction_acc_on_desync', direction.rate)])


def _signed_truth(gt: GroundTruth) -> float:
    if gt.condition != DESYNCED:
        return 0.0
    return gt.offset_s if gt.direction == DELAY else -gt.offset_s


def localization_coverage(samples: Sequence[Sample], tau_s: float = DEFAULT_TAU_S) -> Optional[float]:
    """Return the fraction of shift-task samples whose signed offset
    estimate lies within `tau_s` of the signed true offset. Positive
    offsets are delays, synced predictions count as 0.

    None when there is no shift sample.
    """
    if tau_s < 0:
        raise ValueError('Expected a non-negative tolerance, got {}.'.format(tau_s))
    shift = [sample for sample in samples if sample.task == 'shift']
    return Tally.of(math.isinf(tau_s) or
                    abs(s.prediction.signed_offset - _signed_truth(s.ground_truth)) <= tau_s
                    for s in shift).rate


def tradeoff_and_combined(samples: Sequence[Sample], task: str) -> Tradeoff:
    """Return the false-alarm rate on original controls, the detection rate
    on intervened clips and the sample-weighted accuracy over both, for the
    mute or swap task.

    Raises
    ------
    EmptySubset
        If either subset has no sample.
    """
    if task not in ('mute', 'swap'):
        raise ValueError('Expected task mute or swap, got {!r}.'.format(task))
    orig = _accuracy_tally(_subset(samples, task, SYNCED))
    interv = _accuracy_tally(_subset(samples, task, INTERVENED[task]))
    if not orig.total or not interv.total:
        raise EmptySubset('Task {} needs both original and intervened samples.'.format(task))
    return Tradeoff(false_alarm_rate=1.0 - orig.rate, detection_rate=interv.rate,
                    combined_accuracy=(orig + interv).rate)


def dedup_records(predictions: Iterable[ParsedPrediction]) -> List[ParsedPrediction]:
    """Return `predictions` with one entry per (model, clip, task), in a
    canonical order. Among differing duplicates the first in canonical
    order is kept."""
    kept = {}
    for pred in sorted(predictions, key=lambda pred: dumps_record(pred.to_dict())):
        key = (pred.model_id, pred.clip_id, pred.task)
        if key in kept:
            if kept[key] != pred:
                log.warning('Conflicting duplicate predictions for %s, keeping one.', key)
            continue
        kept[key] = pred
    return [kept[key] for key in sorted(kept)]


@dataclass
class MetricsReport:
    model_id: str
    paired: Dict[str, PairedAccuracy] = field(default_factory=dict)
    avg_gap: Optional[float] = None
    failure_rates: Dict[str, Optional[float]] = field(default_factory=dict)
    breakdown: Dict[str, Any] = field(default_factory=dict)
    band_accuracy: Dict[str, Optional[float]] = field(default_factory=dict)
    localization_coverage: Dict[str, Optional[float]] = field(default_factory=dict)
    sync_metrics: Dict[str, Optional[float]] = field(default_factory=dict)
    tradeoff: Dict[str, Tradeoff] = field(default_factory=dict)
    n_samples: int = 0
    n_unparseable: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'model_id': self.model_id,
            'paired_accuracy': {dim: paired.to_dict() for dim, paired in self.paired.items()},
            'avg_gap': self.avg_gap,
            'failure_rates': dict(self.failure_rates),
            'breakdown': self.breakdown,
            'band_accuracy': dict(self.band_accuracy),
            'localization_coverage': dict(self.localization_coverage),
            'sync_metrics': dict(self.sync_metrics),
            'tradeoff': {task: tradeoff.to_dict() for task, tradeoff in self.tradeoff.items()},
            'n_samples': self.n_samples,
            'n_unparseable': self.n_unparseable,
        }


def build_report(model_id: str, predictions: Iterable[ParsedPrediction], records: Iterable[InterventionRecord],
                 bands: Sequence[Sequence[float]] = DEFAULT_BANDS, taus: Sequence[float] = DEFAULT_TAUS,
                 tau_s: float = DEFAULT_TAU_S) -> MetricsReport:
    """Return the MetricsReport of one model.

    Dimensions or tasks without both subsets are left out of the paired
    accuracies and the tradeoffs; the avg gap is None unless all three
    dimensions are present.
    """
    samples = join_predictions(dedup_records(predictions), records)
    report = MetricsReport(model_id=model_id, n_samples=len(samples),
                           n_unparseable=sum(1 for s in samples if s.prediction.unparseable))

    for dim in DIMENSIONS:
        try:
            report.paired[dim] = paired_accuracy(samples, dim)
        except EmptySubset as exc:
            log.info('%s: %s', model_id, exc)
    try:
        report.avg_gap = avg_gap(report.paired)
    except MissingDimension:
        log.info('%s: avg gap not reported, only %s available.', model_id, list(report.paired))

    report.failure_rates = failure_rates(samples)
    report.breakdown = prediction_breakdown(samples)
    report.band_accuracy = band_accuracy(samples, bands)
    report.sync_metrics = sync_metrics(samples)
    report.localization_coverage = OrderedDict(
        ('{:g}'.format(tau), localization_coverage(samples, tau)) for tau in sorted(set(taus) | {tau_s}))
    for task in ('mute', 'swap'):
        try:
            report.tradeoff[task] = tradeoff_and_combined(samples, task)
        except EmptySubset as exc:
            log.info('%s: %s', model_id, exc)
    return report
