import pytest

from hearsay.exceptions import BackendTimeout, JudgeUnparseable
from hearsay.harness import ResponseRecord
from hearsay.judge import (
    ParsedPrediction,
    RulesJudge,
    LlmJudge,
    judge_parse,
    judge_records,
    normalize_fields,
    classify_engagement,
    describes_audio,
    mask_events,
    REPAIR_PROMPT,
)
from hearsay.templates import (
    desynced_answer,
    described_audio_answer,
    matched_answer,
    mismatch_answer,
    silent_answer,
    sync_claim_answer,
    synced_answer,
    visual_only_answer,
)


class ScriptedClient:
    """ A chat client answering from a list of replies."""

    def __init__(self, *replies):
        self.replies = list(replies)
        self.calls = []

    def chat(self, messages):
        self.calls.append([dict(m) for m in messages])
        reply = self.replies.pop(0)
        if isinstance(reply, Exception):
            raise reply
        return reply


@pytest.fixture
def rules():
    return RulesJudge()


def test_rules_shift_desync(rules):
    text = ('The visible hammer strike occurs at ~3.0s, while the clang is heard at ~5.0s, '
            'indicating a synchronization mismatch: the audio is delayed by about 2.0 s.')
    pred = judge_parse('shift', text, rules)
    assert (pred.synced, pred.direction, pred.offset_s) == (False, 'delay', 2.0)
    assert (pred.t_v, pred.t_a) == (3.0, 5.0)
    assert pred.signed_offset == 2.0
    assert pred.label == 'delay'


def test_rules_shift_early_and_synced(rules):
    text = desynced_answer('door slam', 3.2, 'wooden bang', 2.0, 'early', 1.25, precise=True)
    pred = judge_parse('shift', text, rules)
    assert (pred.synced, pred.direction, pred.offset_s) == (False, 'early', 1.25)
    assert pred.signed_offset == -1.25

    pred = judge_parse('shift', synced_answer('door slam', 3.2, 'wooden bang', 3.3), rules)
    assert pred.synced
    assert (pred.direction, pred.offset_s) == ('none', 0.0)
    assert pred.t_a == 3.3

    pred = judge_parse('shift', 'The sound is out of sync.', rules)
    assert (pred.synced, pred.direction, pred.offset_s) == (False, 'none', 0.0)
    assert pred.label == 'none'


def test_rules_first_direction_cue_wins(rules):
    pred = judge_parse('shift', 'The audio lags behind; it is not early at all.', rules)
    assert pred.direction == 'delay'
    pred = judge_parse('shift', 'The sound comes early, it is not delayed.', rules)
    assert pred.direction == 'early'


def test_rules_event_texts_hold_cue_words(rules):
    text = desynced_answer('ball rolls behind the sofa', 5.0, 'thud', 3.1, 'early', 1.9)
    pred = judge_parse('shift', text, rules)
    assert (pred.synced, pred.direction, pred.offset_s) == (False, 'early', 1.9)
    assert (pred.t_v, pred.t_a) == (5.0, 3.1)

    pred = judge_parse('shift', synced_answer('door slam', 5.0, 'delayed echo', 5.0), rules)
    assert pred.synced
    pred = judge_parse('shift', desynced_answer('flag lags in the wind', 2.0, 'flap', 4.0, 'delay', 2.0), rules)
    assert (pred.direction, pred.offset_s) == ('delay', 2.0)
    pred = judge_parse('shift', desynced_answer('car leads the race', 4.0, 'engine roar', 2.5, 'delay', 1.5), rules)
    assert pred.direction == 'delay'


def test_rules_mask_known_event_texts(rules):
    events = ['door slam', 'delayed echo']
    text = ('The visible door slam occurs at ~5.0s, while the delayed echo is heard at ~3.1s, '
            'indicating a synchronization mismatch: the audio comes early by about 1.9 s.')
    pred = judge_parse('shift', text, rules, events=events)
    assert (pred.synced, pred.direction, pred.offset_s) == (False, 'early', 1.9)

    text = described_audio_answer('drum hit', 'muted trumpet')
    assert judge_parse('mute', text, rules).prediction == 'muted'
    pred = judge_parse('mute', text, rules, events=['drum hit', 'muted trumpet'])
    assert (pred.prediction, pred.engagement) == ('synced', 'audio_described')

    assert judge_parse('swap', matched_answer('dog jump', 'unrelated chatter'), rules).prediction == 'synced'
    assert mask_events('The Ball rolls behind the sofa, early.', ['ball rolls behind the sofa']) == 'the event, early.'
    assert mask_events('a slammed door', ['door slam']) == 'a slammed door'


def test_rules_sync_claim_before_desync_cue(rules):
    assert judge_parse('shift', 'They are in sync; nothing lags.', rules).synced
    pred = judge_parse('shift', "The audio isn't synchronized: the bang lags the slam by 0.8 s.", rules)
    assert (pred.synced, pred.direction, pred.offset_s) == (False, 'delay', 0.8)
    assert judge_parse('swap', 'The sound fits the video and is not unrelated.', rules).prediction == 'synced'


@pytest.mark.parametrize('text, prediction', [
    (silent_answer(), 'muted'),
    ('There is no audio in this clip.', 'muted'),
    (described_audio_answer('dog jump', 'dog bark'), 'synced'),
    ('The bark is delayed relative to the jump.', 'delay'),
    (visual_only_answer('dog jump'), 'synced'),
])
def test_rules_mute(rules, text, prediction):
    assert judge_parse('mute', text, rules).prediction == prediction


@pytest.mark.parametrize('text, prediction', [
    (mismatch_answer('dog jump', 'bell ring'), 'mismatched'),
    ("The sound doesn’t match the video.", 'mismatched'),
    (matched_answer('dog jump', 'dog bark'), 'synced'),
    ('The bark comes early.', 'early'),
    (sync_claim_answer('dog jump', 'dog bark'), 'synced'),
])
def test_rules_swap(rules, text, prediction):
    assert judge_parse('swap', text, rules).prediction == prediction


def test_rules_whole_words(rules):
    # "flagpole" holds "lag" but is not a desync cue
    pred = judge_parse('shift', 'A flagpole sways while the bell rings.', rules)
    assert pred.synced


def test_engagement():
    assert classify_engagement(silent_answer(), 'muted') == 'silence_claimed'
    assert classify_engagement(described_audio_answer('dog jump', 'dog bark'), 'synced') == 'audio_described'
    assert classify_engagement(visual_only_answer('dog jump'), 'synced') == 'visual_only'

    pred = judge_parse('mute', visual_only_answer('dog jump'), RulesJudge())
    assert pred.engagement == 'visual_only'


@pytest.mark.parametrize('text', [
    'The video shows a man talking; I cannot say anything about the audio.',
    "I can't hear anything in this clip.",
    'I hear nothing at all.',
    'The audio contains no sound of any kind.',
    'A man swings a hammer at a nail.',
])
def test_engagement_needs_a_heard_sound(rules, text):
    assert not describes_audio(text.lower())
    assert classify_engagement(text, 'synced') == 'visual_only'
    pred = judge_parse('mute', text, rules)
    assert pred.engagement in ('visual_only', 'silence_claimed')


@pytest.mark.parametrize('text', [
    'You can hear a dog barking.',
    'The sound of breaking glass fills the room.',
    'The soundtrack features a slow piano.',
    'A loud clang is clearly heard when the hammer lands.',
])
def test_engagement_audio_described(text):
    assert classify_engagement(text, 'synced') == 'audio_described'


def test_engagement_from_timing_verdict():
    assert classify_engagement('It comes a bit late.', 'delay') == 'audio_described'
    assert classify_engagement('It is early.', 'early') == 'audio_described'


def test_normalize_fields():
    fields = normalize_fields('shift', {'synced': True, 'direction': 'delay', 'offset_sec': 1.5})
    assert (fields['synced'], fields['direction'], fields['offset_s']) == (True, 'none', 0.0)

    fields = normalize_fields('shift', {'synced': 'false', 'direction': 'sideways', 'offset_sec': -1.5,
                                        't_v': 'n/a', 't_a': 2.5})
    assert (fields['synced'], fields['direction'], fields['offset_s']) == (False, 'none', 1.5)
    assert (fields['t_v'], fields['t_a']) == (None, 2.5)

    assert normalize_fields('swap', {'prediction': 'Mismatched'})['prediction'] == 'mismatched'
    assert normalize_fields('mute', {'prediction': 'mismatched'})['prediction'] == 'synced'
    assert normalize_fields('swap', {})['prediction'] == 'synced'


def test_llm_judge_reads_json():
    client = ScriptedClient('```json\n{"synced": false, "direction": "early", "offset_sec": 1.1, '
                            '"t_v": 3.0, "t_a": 1.9, "explanation": "sound first"}\n```')
    pred = judge_parse('shift', 'whatever the model said', LlmJudge(client))
    assert (pred.synced, pred.direction, pred.offset_s) == (False, 'early', 1.1)
    assert not pred.unparseable
    assert len(client.calls) == 1
    assert client.calls[0][0]['role'] == 'system'
    assert client.calls[0][1]['content'] == 'whatever the model said'


def test_llm_judge_repairs_once():
    client = ScriptedClient('I think it is muted.', '{"prediction": "muted", "explanation": "silent"}')
    pred = judge_parse('mute', 'no sound at all', LlmJudge(client))
    assert pred.prediction == 'muted'
    assert len(client.calls) == 2
    assert client.calls[1][-1]['content'] == REPAIR_PROMPT


def test_llm_judge_engagement():
    client = ScriptedClient('{"prediction": "synced", "engagement": "audio_described", "explanation": "a bark"}')
    pred = judge_parse('mute', 'A dog jumps and barks at the camera.', LlmJudge(client))
    assert (pred.prediction, pred.engagement) == ('synced', 'audio_described')

    client = ScriptedClient('{"prediction": "muted", "engagement": "audio_described"}')
    assert judge_parse('mute', 'Nothing to hear.', LlmJudge(client)).engagement == 'silence_claimed'

    client = ScriptedClient('{"prediction": "synced", "engagement": "loud"}')
    pred = judge_parse('mute', 'The video shows a dog jump.', LlmJudge(client))
    assert pred.engagement == 'visual_only'


def test_llm_judge_unparseable():
    client = ScriptedClient('not json', 'still not json')
    judge = LlmJudge(client)
    pytest.raises(JudgeUnparseable, judge.extract, 'swap', 'text')

    client = ScriptedClient('not json', 'still not json')
    pred = judge_parse('swap', 'text', LlmJudge(client), clip_id='c1', model_id='m')
    assert pred.unparseable
    assert pred.prediction == 'synced'

    client = ScriptedClient(BackendTimeout('judge timed out'))
    pred = judge_parse('shift', 'text', LlmJudge(client))
    assert pred.unparseable
    assert pred.synced


def test_error_records_use_defaults(rules):
    pred = judge_parse('mute', None, rules, clip_id='c1', model_id='m', error='timeout')
    assert pred.prediction == 'synced'
    assert pred.engagement == 'visual_only'
    assert pred.error == 'timeout'
    assert not pred.unparseable

    pred = judge_parse('shift', '   ', rules)
    assert pred.synced


def test_parsed_prediction_validation():
    pytest.raises(ValueError, ParsedPrediction, task='shift', synced=True, direction='delay', offset_s=0.0)
    pytest.raises(ValueError, ParsedPrediction, task='shift', synced=False, direction='delay', offset_s=-1.0)
    pytest.raises(ValueError, ParsedPrediction, task='mute', prediction='mismatched')
    pytest.raises(ValueError, ParsedPrediction, task='dance', prediction='synced')

    pred = ParsedPrediction(task='shift', clip_id='c', model_id='m', synced=False, direction='early',
                            offset_s=1.0, t_v=3.0, t_a=2.0)
    assert ParsedPrediction.from_dict(pred.to_dict()) == pred


def test_judge_records_sorted(rules):
    responses = [
        ResponseRecord('c2', 'm', 'swap', 'infer_swap/v1', mismatch_answer('a', 'b'), 0.0, 1),
        ResponseRecord('c1', 'm', 'swap', 'infer_swap/v1', matched_answer('a', 'b'), 0.0, 1),
        ResponseRecord('c3', 'm', 'swap', 'infer_swap/v1', None, 0.0, 3, 'http-503'),
    ]
    preds = judge_records(responses, rules, parallelism=4)
    assert [p.clip_id for p in preds] == ['c1', 'c2', 'c3']
    assert [p.prediction for p in preds] == ['synced', 'mismatched', 'synced']
    assert preds[2].error == 'http-503'


def test_judge_records_mask_events(rules):
    text = ('The visible door slam occurs at ~5.0s, while the delayed echo is heard at ~3.1s, '
            'indicating a synchronization mismatch: the audio comes early by about 1.9 s.')
    responses = [ResponseRecord('c1.shift0', 'm', 'shift', 'infer_shift/v1', text, 0.0, 1)]
    (pred,) = judge_records(responses, rules, events={'c1.shift0': ['door slam', 'delayed echo']})
    assert pred.direction == 'early'
    (pred,) = judge_records(responses, rules)
    assert pred.direction == 'delay'
