import random

import pytest

from hearsay.exceptions import EmptySubset, MissingDimension
from hearsay.interventions import GroundTruth, InterventionRecord, Mute, Original, Shift, Swap, band_of
from hearsay.judge import ParsedPrediction
from hearsay.metrics import (
    Sample,
    Tally,
    PairedAccuracy,
    avg_gap,
    fmt_points,
    paired_accuracy,
    failure_rates,
    prediction_breakdown,
    band_accuracy,
    sync_metrics,
    localization_coverage,
    tradeoff_and_combined,
    dedup_records,
    join_predictions,
    build_report,
    is_correct,
)

# (model, avg gap, ((orig, interv) per sync, existence, consistency)), accuracies in percent
PUBLISHED = [
    ('Gemini', 56.8, ((54.9, 46.5), (100.0, 13.4), (93.6, 18.3))),
    ('MiniCPM', 80.7, ((83.8, 13.7), (100.0, 19.0), (95.8, 4.9))),
    ('Nemotron', 46.6, ((35.9, 26.8), (66.2, 4.2), (88.7, 19.9))),
    ('Qwen3-Omni', 77.3, ((100.0, 1.4), (95.1, 0.0), (75.4, 37.3))),
    ('Ming', 49.8, ((54.2, 20.1), (95.7, 54.9), (90.1, 15.5))),
    ('MiMo', 78.4, ((73.9, 9.9), (99.3, 2.1), (89.4, 15.3))),
]

SYNCED_GT = GroundTruth('synced', 3.0, 3.0)


def shifted_gt(offset):
    return GroundTruth('desynced', 3.0, 3.0 + offset, 'delay' if offset > 0 else 'early', abs(offset),
                       band_of(offset))


def shift_pred(label, offset=0.0, clip_id='c', model_id='m', unparseable=False):
    if label == 'synced':
        return ParsedPrediction('shift', clip_id, model_id, synced=True, direction='none', offset_s=0.0,
                                unparseable=unparseable)
    return ParsedPrediction('shift', clip_id, model_id, synced=False, direction=label, offset_s=offset,
                            unparseable=unparseable)


def choice_pred(task, prediction, engagement=None, clip_id='c', model_id='m'):
    return ParsedPrediction(task, clip_id, model_id, prediction=prediction, engagement=engagement)


def samples_of(task, condition, n_correct, n_wrong):
    gt = {'synced': SYNCED_GT, 'silent': GroundTruth('silent', 3.0),
          'mismatched': GroundTruth('mismatched', 3.0, 3.0)}[condition]
    right = {'synced': 'synced', 'silent': 'muted', 'mismatched': 'mismatched'}[condition]
    wrong = 'mismatched' if (task, condition) == ('swap', 'synced') else 'synced'
    if task == 'mute' and condition == 'synced':
        wrong = 'muted'
    return [Sample(choice_pred(task, right), gt)] * n_correct + [Sample(choice_pred(task, wrong), gt)] * n_wrong


@pytest.mark.parametrize('model, expected, table', PUBLISHED)
def test_avg_gap_published_values(model, expected, table):
    paired = {dim: (orig / 100.0, interv / 100.0)
              for dim, (orig, interv) in zip(('sync', 'existence', 'consistency'), table)}
    assert avg_gap(paired) == pytest.approx(expected, abs=0.05)
    assert fmt_points(avg_gap(paired)) == '{:.1f}'.format(expected)


def test_avg_gap_missing_dimension():
    pytest.raises(MissingDimension, avg_gap, {'sync': (1.0, 0.0), 'existence': (1.0, 0.0)})


def test_avg_gap_accepts_paired_accuracy():
    paired = PairedAccuracy(Tally(9, 10), Tally(1, 10))
    gap = avg_gap({'sync': paired, 'existence': paired, 'consistency': paired})
    assert gap == pytest.approx(80.0)


def test_tally():
    assert Tally().rate is None
    assert (Tally(1, 2) + Tally(3, 4)) == Tally(4, 6)
    assert Tally.of([True, False, True]).rate == pytest.approx(2 / 3)


def test_is_correct_shift_needs_direction():
    gt = shifted_gt(1.2)
    assert is_correct(shift_pred('delay', 1.2), gt)
    assert not is_correct(shift_pred('early', 1.2), gt)
    assert not is_correct(shift_pred('none'), gt)
    assert not is_correct(shift_pred('synced'), gt)
    assert is_correct(shift_pred('synced'), SYNCED_GT)


def test_paired_accuracy_matches_counts():
    rng = random.Random(7)
    for _ in range(50):
        samples = []
        expected = {}
        for task, condition in [('mute', 'synced'), ('mute', 'silent'), ('swap', 'synced'),
                                ('swap', 'mismatched')]:
            n_correct, n_wrong = rng.randint(0, 6), rng.randint(1, 6)
            samples += samples_of(task, condition, n_correct, n_wrong)
            expected[task, condition] = n_correct / (n_correct + n_wrong)
        rng.shuffle(samples)

        existence = paired_accuracy(samples, 'existence')
        consistency = paired_accuracy(samples, 'consistency')
        assert existence.orig_acc == pytest.approx(expected['mute', 'synced'])
        assert existence.interv_acc == pytest.approx(expected['mute', 'silent'])
        assert consistency.orig_acc == pytest.approx(expected['swap', 'synced'])
        assert consistency.interv_acc == pytest.approx(expected['swap', 'mismatched'])


def test_paired_accuracy_empty_subset():
    samples = samples_of('mute', 'synced', 3, 1)
    pytest.raises(EmptySubset, paired_accuracy, samples, 'existence')
    pytest.raises(ValueError, paired_accuracy, samples, 'loudness')


def test_tradeoff_and_combined():
    samples = samples_of('swap', 'synced', 8, 2) + samples_of('swap', 'mismatched', 6, 4)
    tradeoff = tradeoff_and_combined(samples, 'swap')
    assert tradeoff.false_alarm_rate == pytest.approx(0.2)
    assert tradeoff.detection_rate == pytest.approx(0.6)
    assert tradeoff.combined_accuracy == pytest.approx(0.7)

    pytest.raises(EmptySubset, tradeoff_and_combined, samples_of('mute', 'synced', 1, 1), 'mute')
    pytest.raises(ValueError, tradeoff_and_combined, samples, 'shift')


def test_shift_failure_rates():
    gt = shifted_gt(1.2)
    preds = (['synced'] * 5 + ['delay'] * 3 + ['early'] * 2)
    samples = [Sample(shift_pred(label, 1.2), gt) for label in preds]
    samples += [Sample(shift_pred('synced'), SYNCED_GT)] * 3 + [Sample(shift_pred('early', 1.0), SYNCED_GT)]

    rates = failure_rates(samples)
    assert rates['offset_blindness'] == pytest.approx(0.5)
    assert rates['direction_confusion'] == pytest.approx(0.4)
    assert rates['false_sync_alarm'] == pytest.approx(0.25)
    assert rates['mute_hallucination'] is None
    assert rates['swap_false_match'] is None


def test_mute_failure_rates():
    silent = GroundTruth('silent', 3.0)
    samples = [
        Sample(choice_pred('mute', 'muted', 'silence_claimed'), silent),
        Sample(choice_pred('mute', 'synced', 'audio_described'), silent),
        Sample(choice_pred('mute', 'synced', 'visual_only'), silent),
        Sample(choice_pred('mute', 'synced', 'visual_only'), silent),
        Sample(choice_pred('mute', 'synced', 'audio_described'), SYNCED_GT),
        Sample(choice_pred('mute', 'muted', 'silence_claimed'), SYNCED_GT),
    ]
    rates = failure_rates(samples)
    assert rates['mute_hallucination'] == pytest.approx(0.25)
    assert rates['false_silence'] == pytest.approx(0.5)
    # mean of 2/4 on muted clips and 0/2 on controls
    assert rates['audio_dodge'] == pytest.approx(0.25)


def test_swap_failure_rates():
    samples = samples_of('swap', 'synced', 8, 2) + samples_of('swap', 'mismatched', 6, 4)
    rates = failure_rates(samples)
    assert rates['swap_false_match'] == pytest.approx(0.4)
    assert rates['swap_false_mismatch'] == pytest.approx(0.2)


def test_localization_coverage():
    samples = [
        Sample(shift_pred('delay', 1.0), shifted_gt(1.2)),
        Sample(shift_pred('synced'), SYNCED_GT),
        Sample(shift_pred('delay', 1.5), shifted_gt(-1.5)),
    ]
    assert localization_coverage(samples, 0.5) == pytest.approx(2 / 3)
    assert localization_coverage(samples, 0.1) == pytest.approx(1 / 3)
    assert localization_coverage(samples, float('inf')) == 1.0
    assert localization_coverage([], 0.5) is None
    pytest.raises(ValueError, localization_coverage, samples, -0.1)


def test_localization_coverage_monotone_in_tau():
    rng = random.Random(2)
    samples = []
    for _ in range(100):
        offset = rng.choice([-1, 1]) * rng.uniform(0.5, 2.0)
        label = rng.choice(['synced', 'delay', 'early'])
        samples.append(Sample(shift_pred(label, round(rng.uniform(0.0, 2.5), 2)), shifted_gt(offset)))
    coverages = [localization_coverage(samples, tau) for tau in (0.0, 0.25, 0.5, 1.0, 2.0, 5.0)]
    assert coverages == sorted(coverages)
    assert coverages[-1] == 1.0


def test_band_accuracy():
    samples = [
        Sample(shift_pred('delay', 0.7), shifted_gt(0.7)),
        Sample(shift_pred('synced'), shifted_gt(0.8)),
        Sample(shift_pred('early', 1.8), shifted_gt(-1.8)),
    ]
    assert band_accuracy(samples) == {'0.5-1.0': 0.5, '1.0-1.5': None, '1.5-2.0': 1.0}


def test_sync_metrics():
    samples = [
        Sample(shift_pred('delay', 1.0), shifted_gt(1.2)),
        Sample(shift_pred('early', 1.0), shifted_gt(1.2)),
        Sample(shift_pred('synced'), shifted_gt(1.2)),
        Sample(shift_pred('synced'), SYNCED_GT),
    ]
    metrics = sync_metrics(samples)
    assert metrics['binary_sync_acc'] == pytest.approx(0.75)
    assert metrics['three_way_acc'] == pytest.approx(0.5)
    assert metrics['direction_acc_on_desync'] == pytest.approx(0.5)


def test_prediction_breakdown():
    samples = samples_of('swap', 'mismatched', 2, 1) + [Sample(shift_pred('none'), shifted_gt(1.0))]
    assert prediction_breakdown(samples) == {
        'shift': {'desynced': {'none': 1}},
        'swap': {'mismatched': {'mismatched': 2, 'synced': 1}},
    }


def test_dedup_records():
    a = choice_pred('mute', 'muted', 'silence_claimed', clip_id='c1')
    b = choice_pred('mute', 'synced', 'visual_only', clip_id='c1')
    c = choice_pred('swap', 'synced', clip_id='c1')
    kept = dedup_records([b, c, a, c])
    assert len(kept) == 2
    assert dedup_records([a, b, c]) == dedup_records([c, b, a])


def _records():
    shift_gt = shifted_gt(1.2)
    return [
        InterventionRecord('c1.orig', 'c1', Original(), SYNCED_GT, 'c1.wav'),
        InterventionRecord('c1.shift0', 'c1', Shift(1.2), shift_gt, 'c1.shift0.wav'),
        InterventionRecord('c1.mute', 'c1', Mute(), GroundTruth('silent', 3.0), 'c1.mute.wav'),
        InterventionRecord('c1.swap', 'c1', Swap('c2'), GroundTruth('mismatched', 3.0, 3.0), 'c1.swap.wav'),
    ]


def test_join_predictions_skips_unknown():
    preds = [
        shift_pred('synced', clip_id='c1.orig'),
        choice_pred('mute', 'synced', 'visual_only', clip_id='c1.orig'),
        choice_pred('mute', 'muted', 'silence_claimed', clip_id='c1.mute'),
        choice_pred('swap', 'synced', clip_id='c1.mute'),
        choice_pred('swap', 'synced', clip_id='c9.swap'),
    ]
    samples = join_predictions(preds, _records())
    assert [(s.task, s.condition) for s in samples] == [('shift', 'synced'), ('mute', 'synced'),
                                                        ('mute', 'silent')]


def test_build_report():
    preds = [
        shift_pred('synced', clip_id='c1.orig'),
        shift_pred('delay', 1.2, clip_id='c1.shift0'),
        choice_pred('mute', 'synced', 'audio_described', clip_id='c1.orig'),
        choice_pred('mute', 'synced', 'audio_described', clip_id='c1.mute'),
        choice_pred('swap', 'synced', clip_id='c1.orig'),
        choice_pred('swap', 'mismatched', clip_id='c1.swap'),
    ]
    report = build_report('m', preds, _records())
    assert report.n_samples == 6
    assert report.paired['sync'].interv_acc == 1.0
    assert report.paired['existence'].interv_acc == 0.0
    assert report.avg_gap == pytest.approx(100.0 / 3)
    assert report.failure_rates['mute_hallucination'] == 1.0
    assert report.localization_coverage == {'0.25': 1.0, '0.5': 1.0, '1': 1.0}
    assert report.tradeoff['swap'].combined_accuracy == 1.0

    data = report.to_dict()
    assert data['paired_accuracy']['existence'] == {'orig_acc': 1.0, 'interv_acc': 0.0, 'n_orig': 1, 'n_interv': 1}


def test_build_report_partial():
    preds = [shift_pred('synced', clip_id='c1.orig'), shift_pred('synced', clip_id='c1.shift0')]
    report = build_report('m', preds, _records())
    assert list(report.paired) == ['sync']
    assert report.avg_gap is None
    assert report.tradeoff == {}
