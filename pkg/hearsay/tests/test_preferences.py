import json
from collections import Counter

import pytest

from hearsay.annotation import EventTimeLabel
from hearsay.exceptions import (
    BackendTimeout,
    EmptyDataset,
    InconsistentPair,
    MismatchedBase,
    MissingDonorLabel,
    PoolExhausted,
)
from hearsay.interventions import GroundTruth, InterventionRecord, Mute, Original, Shift, Swap, band_of
from hearsay.judge import ParsedPrediction, RulesJudge, judge_parse
from hearsay.preferences import (
    PreferencePair,
    InstructionRecord,
    LlmTextGenerator,
    RecipeMix,
    apply_text_generator,
    build_ctp_pairs,
    build_mute_pairs,
    build_swap_pairs,
    build_op_pairs,
    build_sp_pairs,
    perturb_label,
    check_pair_consistency,
    ensure_consistent,
    instruction_to_pair,
    filter_avqa,
    recipe_of,
    mix_recipes,
    emit_training_files,
)
from hearsay.templates import reference_answer

EVENTS = dict(visual_event='fall', audio_event='thud')


@pytest.fixture
def fall_label():
    return EventTimeLabel('c1', 'consensus', visual_event='fall', visual_time=5.0, audio_event='thud',
                          audio_time=5.0, confidence='high')


@pytest.fixture
def original():
    return InterventionRecord('c1.orig', 'c1', Original(), GroundTruth('synced', 5.0, 5.0), 'media/c1.orig.wav',
                              **EVENTS)


@pytest.fixture
def shifted():
    gt = GroundTruth('desynced', 5.0, 3.1, 'early', 1.9, band_of(-1.9))
    return InterventionRecord('c1.shift0', 'c1', Shift(-1.9), gt, 'media/c1.shift0.wav', **EVENTS)


def test_ctp_pairs(original, shifted, fall_label):
    pair_a, pair_b = build_ctp_pairs(original, shifted, fall_label)

    assert pair_a.video_ref == 'media/c1.orig.wav'
    assert pair_b.video_ref == 'media/c1.shift0.wav'
    assert 'synchronized with the fall' in pair_a.chosen
    assert 'synchronization mismatch' in pair_a.rejected
    assert pair_a.chosen == pair_b.rejected
    assert pair_a.rejected == pair_b.chosen

    assert 'visible fall occurs at ~5.0s' in pair_b.chosen
    assert 'heard at ~3.1s' in pair_b.chosen
    assert 'comes early by about 1.9 s' in pair_b.chosen
    assert pair_b.meta['direction'] == 'early'
    assert pair_a.pair_id == 'CTP:c1.shift0:orig'
    assert all(check_pair_consistency(pair) for pair in (pair_a, pair_b))


def test_ctp_pairs_mismatched_base(original, shifted):
    pytest.raises(MismatchedBase, build_ctp_pairs, shifted, original)
    other = InterventionRecord('c2.shift0', 'c2', Shift(-1.9), shifted.ground_truth, 'x.wav', **EVENTS)
    pytest.raises(MismatchedBase, build_ctp_pairs, original, other)


def test_mute_pair():
    record = InterventionRecord('c1.mute', 'c1', Mute(), GroundTruth('silent', 5.0), 'media/c1.mute.wav',
                                visual_event='glass drop', audio_event='glass shattering')
    pair = build_mute_pairs(record)
    assert 'silent throughout' in pair.chosen
    assert 'glass shattering' in pair.rejected
    assert 'glass' not in pair.chosen
    assert pair.recipe == 'MutePref'
    assert check_pair_consistency(pair)


def test_swap_pair():
    record = InterventionRecord('c1.swap', 'c1', Swap('c2'), GroundTruth('mismatched', 5.0, 2.0),
                                'media/c1.swap.wav', visual_event='optics bench', audio_event='laser click')
    donor = EventTimeLabel('c2', 'consensus', visual_event='centrifuge', visual_time=2.0,
                           audio_event='centrifuge whirring', audio_time=2.0)
    pair = build_swap_pairs(record, donor)
    assert 'audio-source mismatch' in pair.chosen
    assert 'optics bench' in pair.chosen and 'centrifuge whirring' in pair.chosen
    assert 'centrifuge whirring' in pair.rejected
    assert pair.meta['donor_id'] == 'c2'
    assert check_pair_consistency(pair)

    pytest.raises(MissingDonorLabel, build_swap_pairs, record)


def test_op_pair_perturbs_one_component(fall_label):
    pool = [('door slam', 'wooden bang'), ('bell swing', 'bell ring')]
    seen = set()
    signs = set()
    for seed in range(60):
        fields, note = perturb_label(fall_label, seed, pool)
        changed = [name for name in ('visual_event', 'visual_time', 'audio_event', 'audio_time')
                   if fields[name] != getattr(fall_label, name)]
        if note['perturbation'] == 'sync_claim':
            assert changed == []
            assert note['claimed_direction'] in ('delay', 'early')
            assert 1.0 <= note['claimed_offset_s'] <= 3.0
        else:
            assert changed == [note['perturbation']]
        if note['perturbation'].endswith('_time'):
            assert 1.0 <= abs(note['delta_s']) <= 3.0
            signs.add(note['delta_s'] > 0)
        seen.add(note['perturbation'])
    assert seen == {'visual_event', 'visual_time', 'audio_event', 'audio_time', 'sync_claim'}
    assert signs == {True, False}


def test_op_pair_timestamps_stay_in_clip():
    for visual_time, audio_time in [(0.5, 0.6), (5.5, 5.4)]:
        label = EventTimeLabel('c4', 'consensus', visual_event='fall', visual_time=visual_time, audio_event='thud',
                               audio_time=audio_time)
        for seed in range(40):
            fields, note = perturb_label(label, seed, duration_s=6.0)
            if note['perturbation'] == 'sync_claim':
                continue
            moved = fields[note['perturbation']]
            assert 0.0 <= moved <= 6.0
            assert abs(note['delta_s']) >= 1.0
            assert moved == pytest.approx(getattr(label, note['perturbation']) + note['delta_s'])


def test_op_pair_timestamp_perturbation():
    label = EventTimeLabel('c3', 'consensus', visual_event='fall', visual_time=3.0, audio_event='thud',
                           audio_time=3.1)
    # without replacement texts every draw ends up on a timestamp or the sync claim
    for seed in range(20):
        pair = build_op_pairs(label, seed, 'media/c3.orig.wav', duration_s=8.0)
        note = pair.meta
        assert note['perturbation'] in ('visual_time', 'audio_time', 'sync_claim')
        if note['perturbation'] == 'audio_time':
            assert 'heard at ~{:.1f}s'.format(3.1 + note['delta_s']) in pair.rejected
        assert pair.chosen != pair.rejected
        assert check_pair_consistency(pair)

    assert build_op_pairs(label, 4, 'v').rejected == build_op_pairs(label, 4, 'v').rejected


def test_op_pair_sync_claim(fall_label):
    seed = next(seed for seed in range(100) if perturb_label(fall_label, seed)[1]['perturbation'] == 'sync_claim')
    pair = build_op_pairs(fall_label, seed, 'media/c1.orig.wav')
    assert 'synchronized with the fall' in pair.chosen
    assert 'synchronization mismatch' in pair.rejected
    assert 'visible fall occurs at ~5.0s' in pair.rejected
    assert judge_parse('shift', pair.rejected, RulesJudge()).direction == pair.meta['claimed_direction']
    assert check_pair_consistency(pair)


def test_sp_pairs(shifted):
    reference = reference_answer('shift', shifted)
    wrong = ParsedPrediction('shift', shifted.id, 'synced_prior', synced=True, direction='none', offset_s=0.0)
    pair = build_sp_pairs(reference, wrong, 'They look synchronized to me.', shifted)
    assert pair.rejected == 'They look synchronized to me.'
    assert pair.chosen == reference
    assert pair.pair_id == 'SP:synced_prior:c1.shift0:shift'
    assert check_pair_consistency(pair)

    right = ParsedPrediction('shift', shifted.id, 'oracle', synced=False, direction='early', offset_s=1.9)
    assert build_sp_pairs(reference, right, 'The audio comes early.', shifted) is None


def test_pair_requires_distinct_texts():
    pytest.raises(ValueError, PreferencePair, 'p', 'v', 'q', 'same', 'same', 'OP', 'shift')
    pytest.raises(ValueError, PreferencePair, 'p', 'v', 'q', 'a', 'b', 'XX', 'shift')


def test_inconsistent_pair_detected(original, shifted):
    pair_a, pair_b = build_ctp_pairs(original, shifted)
    flipped = PreferencePair(pair_b.pair_id, pair_b.video_ref, pair_b.prompt, pair_b.rejected, pair_b.chosen,
                             'CTP', 'shift', pair_b.meta)
    assert not check_pair_consistency(flipped)
    with pytest.raises(InconsistentPair):
        ensure_consistent([pair_a, flipped])
    assert ensure_consistent([pair_a, pair_b]) == [pair_a, pair_b]


def test_text_generator_rewrites_template_pairs(original, shifted):
    pair_a, pair_b = build_ctp_pairs(original, shifted)
    general = _general_pair('FV-D', 0)

    def rewrite(pair):
        return 'In short: ' + pair.chosen, 'In short: ' + pair.rejected

    rewritten = apply_text_generator([pair_a, pair_b, general], rewrite)
    assert rewritten[0].chosen == 'In short: ' + pair_a.chosen
    assert rewritten[1].rejected == 'In short: ' + pair_b.rejected
    assert rewritten[0].meta == pair_a.meta
    assert rewritten[2] == general


def test_text_generator_output_is_checked(original, shifted):
    pair_a, pair_b = build_ctp_pairs(original, shifted)
    mute = build_mute_pairs(InterventionRecord('c1.mute', 'c1', Mute(), GroundTruth('silent', 5.0),
                                               'media/c1.mute.wav', **EVENTS))

    def flip(pair):
        return pair.rejected, pair.chosen

    assert apply_text_generator([pair_a, pair_b, mute], flip) == [pair_a, pair_b, mute]
    assert apply_text_generator([mute], lambda pair: ('same', 'same')) == [mute]
    assert apply_text_generator([mute], lambda pair: None) == [mute]


def test_llm_text_generator():
    class Client:
        def __init__(self, *replies):
            self.replies = list(replies)
            self.calls = []

        def chat(self, messages):
            self.calls.append(messages)
            reply = self.replies.pop(0)
            if isinstance(reply, Exception):
                raise reply
            return reply

    mute = build_mute_pairs(InterventionRecord('c1.mute', 'c1', Mute(), GroundTruth('silent', 5.0),
                                               'media/c1.mute.wav', **EVENTS))
    client = Client('{"chosen": "The clip is completely silent.", "rejected": "A thud is heard as he falls."}')
    generator = LlmTextGenerator(client)
    assert generator(mute) == ('The clip is completely silent.', 'A thud is heard as he falls.')
    assert mute.chosen in client.calls[0][1]['content']

    reply = '{"chosen": "Total silence, nothing is audible.", "rejected": "A thud."}'
    (pair,) = apply_text_generator([mute], LlmTextGenerator(Client(reply)))
    assert pair.chosen == 'Total silence, nothing is audible.'

    assert LlmTextGenerator(Client('no json here'))(mute) is None
    assert LlmTextGenerator(Client(BackendTimeout('slow')))(mute) is None


def _general_pair(recipe, idx):
    return PreferencePair('{}:{}'.format(recipe, idx), 'v{}'.format(idx), 'q', 'good {}'.format(idx),
                          'bad {}'.format(idx), recipe, 'general')


def test_mix_recipes_counts():
    pools = {'CTP': [_general_pair('CTP', i) for i in range(5)], 'FV-D': [_general_pair('FV-D', i) for i in range(3)]}
    dataset = mix_recipes(pools, RecipeMix((('CTP', 2), ('FV-D', 1)), seed=3))
    assert Counter(pair.recipe for pair in dataset) == Counter({'CTP': 2, 'FV-D': 1})
    assert len({pair.pair_id for pair in dataset}) == 3

    with pytest.raises(PoolExhausted):
        mix_recipes(pools, RecipeMix((('FV-D', 4),), seed=3))


def test_mix_recipes_ignores_pool_order():
    pools = {'CTP': [_general_pair('CTP', i) for i in range(20)], 'FV-D': [_general_pair('FV-D', i) for i in range(9)]}
    reversed_pools = {tag: list(reversed(pairs)) for tag, pairs in reversed(list(pools.items()))}
    mix = RecipeMix((('CTP', 7), ('FV-D', 4)), seed=11)
    assert mix_recipes(pools, mix) == mix_recipes(reversed_pools, mix)
    assert mix.total == 11


def test_recipe_mix_validation():
    pytest.raises(ValueError, RecipeMix, (('CTP', 1), ('CTP', 2)), 0)
    pytest.raises(ValueError, RecipeMix, (('XX', 1),), 0)
    pytest.raises(ValueError, RecipeMix, (('CTP', 0),), 0)


def test_instruction_records():
    qa = InstructionRecord.from_dict({'record_id': 7, 'video': 'v7.mp4', 'instruction_type': 'AudioDependentQA',
                                      'answer': 'A kettle whistles.', 'audio_cue': 'whistle',
                                      'rejected': 'Someone is cooking.', 'long_form': True})
    assert qa.prompt == 'Answer questions that require audio evidence.'
    assert recipe_of(qa) == 'FV-AVQA-L'
    pair = instruction_to_pair(qa)
    assert pair.pair_id == 'FV-AVQA-L:7'
    assert pair.task == 'general'
    assert check_pair_consistency(pair)

    mcqa = InstructionRecord('8', 'v8.mp4', 'MultipleChoiceQA', answer='B')
    assert mcqa.recipe == 'LV-MCQA'
    assert instruction_to_pair(mcqa) is None
    assert InstructionRecord('9', 'v9.mp4', 'Description', answer='x').recipe == 'FV-D'

    pytest.raises(ValueError, InstructionRecord, '1', 'v', 'AudioDependentQA', answer='yes')
    pytest.raises(ValueError, InstructionRecord, '1', 'v', 'Dancing', answer='yes')


def test_filter_avqa():
    records = [
        InstructionRecord('a', 'v', 'AudioDependentQA', answer='x', audio_cue='bark'),
        InstructionRecord('b', 'v', 'AudioDependentQA', answer='y', audio_cue='bell'),
        InstructionRecord('c', 'v', 'Description', answer='z'),
    ]
    kept = filter_avqa(records, {'a': True, 'b': False, 'c': True})
    assert [r.record_id for r in kept] == ['b', 'c']


def test_emit_training_files(tmp_path, original, shifted):
    pairs = list(build_ctp_pairs(original, shifted))
    dpo_path = str(tmp_path / 'dpo.jsonl')
    assert emit_training_files(pairs, 'dpo', dpo_path) == 2
    with open(dpo_path) as f:
        lines = [json.loads(line) for line in f]
    assert set(lines[0]) == {'video', 'prompt', 'chosen', 'rejected'}

    sft_path = str(tmp_path / 'sft.jsonl')
    emit_training_files(pairs, 'sft', sft_path)
    with open(sft_path) as f:
        first = json.loads(f.readline())
    assert first == {'video': pairs[0].video_ref, 'prompt': pairs[0].prompt, 'response': pairs[0].chosen}

    pytest.raises(EmptyDataset, emit_training_files, [], 'dpo', dpo_path)
    pytest.raises(ValueError, emit_training_files, pairs, 'rlhf', str(tmp_path / 'x.jsonl'))
    assert not (tmp_path / 'x.jsonl').exists()
