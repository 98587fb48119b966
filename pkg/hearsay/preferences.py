# -*- coding: utf-8 -*-
# emacs: -*- mode: python; py-indent-offset: 4; indent-tabs-mode: nil -*-
# vi: set ft=python sts=4 ts=4 sw=4 et:
"""
Preference pairs: the chosen answer verifies the audio evidence, the
rejected one follows the visual shortcut.

Recipe tags
-----------
OP          original-sync pairs whose rejected answer perturbs one label component.
SP          self-sampled pairs whose rejected answer is a model's own wrong output.
CTP         counterfactual temporal pairs over an original and a shifted video.
MutePref    silence versus a hallucinated sound, on a muted video.
SwapPref    mismatch versus a narrated match, on a swapped video.
FV-D        general description instructions.
FV-AVQA     audio-dependent questions, short answers.
FV-AVQA-L   audio-dependent questions, long-form answers.
LV-MCQA     multiple-choice video questions.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from hearsay.exceptions import (BackendError,
                                EmptyDataset,
                                InconsistentPair,
                                MismatchedBase,
                                MissingDonorLabel,
                                PoolExhausted,)
from hearsay.interventions import DELAY, DESYNCED, EARLY, Mute, Original, Shift, Swap, InterventionRecord
from hearsay.judge import MISMATCHED, MUTED, SYNCED, RulesJudge, judge_parse
from hearsay.metrics import is_correct
from hearsay.prompts import inference_prompt
from hearsay.templates import (described_audio_answer,
                               desynced_answer,
                               matched_answer,
                               mismatch_answer,
                               silent_answer,
                               synced_answer,)
from hearsay.utils import derive_seed, extract_json_object, write_jsonl
from hearsay._utils import _normalize_text

log = logging.getLogger(__name__)

RECIPES = ('OP', 'SP', 'CTP', 'MutePref', 'SwapPref', 'FV-D', 'FV-AVQA', 'FV-AVQA-L', 'LV-MCQA')
PAIR_TASKS = ('shift', 'mute', 'swap', 'general')

DESCRIPTION = 'Description'
LOCALIZATION = 'Localization'
ATTRIBUTION = 'Attribution'
AUDIO_DEPENDENT_QA = 'AudioDependentQA'
MULTIPLE_CHOICE_QA = 'MultipleChoiceQA'

INSTRUCTION_PROMPTS = {
    DESCRIPTION: 'Describe visible events and audible cues.',
    LOCALIZATION: 'Locate visual/audio events in time.',
    ATTRIBUTION: 'Infer the source or material of a cue.',
    AUDIO_DEPENDENT_QA: 'Answer questions that require audio evidence.',
    MULTIPLE_CHOICE_QA: 'Answer the multiple-choice question about the video.',
}

OP_DELTA_RANGE = (1.0, 3.0)
OP_COMPONENTS = ('visual_time', 'audio_time', 'visual_event', 'audio_event', 'sync_claim')


@dataclass(frozen=True)
class PreferencePair:
    pair_id: str
    video_ref: str
    prompt: str
    chosen: str
    rejected: str
    recipe: str
    task: str
    meta: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.recipe not in RECIPES:
            raise ValueError('Expected a recipe in {}, got {!r}.'.format(RECIPES, self.recipe))
        if self.task not in PAIR_TASKS:
            raise ValueError('Expected a task in {}, got {!r}.'.format(PAIR_TASKS, self.task))
        if self.chosen == self.rejected:
            raise ValueError('Pair {} has identical chosen and rejected texts.'.format(self.pair_id))

    def to_dict(self) -> Dict[str, Any]:
        return {'pair_id': self.pair_id, 'video': self.video_ref, 'prompt': self.prompt, 'chosen': self.chosen,
                'rejected': self.rejected, 'recipe': self.recipe, 'task': self.task, 'meta': dict(self.meta)}

    @classmethod
    def from_dict(cls, record: Dict[str, Any]) -> 'PreferencePair':
        return cls(pair_id=record['pair_id'], video_ref=record['video'], prompt=record['prompt'],
                   chosen=record['chosen'], rejected=record['rejected'], recipe=record['recipe'],
                   task=record['task'], meta=dict(record.get('meta') or {}))


@dataclass(frozen=True)
class InstructionRecord:
    """ One general instruction-following sample ingested from an external
    instruction file. Only records with a `rejected` answer can become
    preference pairs."""
    record_id: str
    video_ref: str
    instruction_type: str
    prompt: str = ''
    answer: str = ''
    long_form: bool = False
    audio_cue: Optional[str] = None
    rejected: Optional[str] = None

    def __post_init__(self):
        if self.instruction_type not in INSTRUCTION_PROMPTS:
            raise ValueError('Expected an instruction type in {}, got {!r}.'.format(
                list(INSTRUCTION_PROMPTS), self.instruction_type))
        if not self.answer:
            raise ValueError('Instruction record {} has no answer.'.format(self.record_id))
        if self.instruction_type == AUDIO_DEPENDENT_QA and not self.audio_cue:
            raise ValueError('Audio-dependent record {} needs an `audio_cue`.'.format(self.record_id))
        if not self.prompt:
            object.__setattr__(self, 'prompt', INSTRUCTION_PROMPTS[self.instruction_type])

    @property
    def recipe(self) -> str:
        return recipe_of(self)

    @classmethod
    def from_dict(cls, record: Dict[str, Any]) -> 'InstructionRecord':
        return cls(record_id=str(record['record_id']), video_ref=record['video'],
                   instruction_type=record['instruction_type'], prompt=record.get('prompt') or '',
                   answer=record.get('answer') or '', long_form=bool(record.get('long_form', False)),
                   audio_cue=record.get('audio_cue'), rejected=record.get('rejected'))


def recipe_of(record: InstructionRecord) -> str:
    """ The recipe tag an instruction record belongs to."""
    if record.instruction_type == MULTIPLE_CHOICE_QA:
        return 'LV-MCQA'
    if record.instruction_type == AUDIO_DEPENDENT_QA:
        return 'FV-AVQA-L' if record.long_form else 'FV-AVQA'
    return 'FV-D'


def instruction_to_pair(record: InstructionRecord) -> Optional[PreferencePair]:
    if not record.rejected:
        log.warning('Instruction record %s has no rejected answer, skipped.', record.record_id)
        return None
    if record.rejected == record.answer:
        log.warning('Instruction record %s rejects its own answer, skipped.', record.record_id)
        return None
    recipe = recipe_of(record)
    return PreferencePair(pair_id='{}:{}'.format(recipe, record.record_id), video_ref=record.video_ref,
                          prompt=record.prompt, chosen=record.answer, rejected=record.rejected, recipe=recipe,
                          task='general', meta={'instruction_type': record.instruction_type})


def filter_avqa(records: Iterable[InstructionRecord], text_only_correct: Mapping[str, bool]) -> List[InstructionRecord]:
    """Drop the audio-dependent records that a text-only model answered
    correctly, since they do not actually need the audio.

    Parameters
    ----------
    records: iterable of InstructionRecord

    text_only_correct: mapping
        record id -> whether the external text-only model got it right.
        Records without a verdict are kept.
    """
    kept = []
    for record in records:
        if record.instruction_type == AUDIO_DEPENDENT_QA and text_only_correct.get(record.record_id, False):
            log.info('Dropping %s: answerable without audio.', record.record_id)
            continue
        kept.append(record)
    return kept


def _texts(record: InterventionRecord, label=None) -> Tuple[str, str]:
    visual_event = record.visual_event or (label.visual_event if label is not None else None)
    audio_event = record.audio_event or (label.audio_event if label is not None else None)
    if not visual_event or not audio_event:
        raise ValueError('Clip {} has no event texts to fill the templates with.'.format(record.id))
    return visual_event, audio_event


def build_ctp_pairs(original: InterventionRecord, shifted: InterventionRecord,
                    label=None) -> Tuple[PreferencePair, PreferencePair]:
    """Return the two counterfactual temporal pairs of a clip and one of its
    shifted copies.

    On the original video the synchronized description is chosen over the
    shifted one; on the shifted video the choice is reversed, and the chosen
    answer names the true direction and offset.

    Parameters
    ----------
    original: InterventionRecord
        The Original record of the base clip.

    shifted: InterventionRecord
        A Shift record of the same base clip.

    label: EventTimeLabel
        The consensus label of the base clip, used for missing event texts.

    Raises
    ------
    MismatchedBase
        If the records are not an Original and a Shift of the same clip.
    """
    if not isinstance(original.kind, Original) or not isinstance(shifted.kind, Shift):
        raise MismatchedBase('Expected an original and a shifted record, got {} and {}.'.format(
            original.kind_name, shifted.kind_name))
    if original.base_id != shifted.base_id or (label is not None and label.clip_id != original.base_id):
        raise MismatchedBase('Records {} and {} do not share their base clip.'.format(original.id, shifted.id))

    ev, ea = _texts(original, label)
    orig_gt, shift_gt = original.ground_truth, shifted.ground_truth
    synced = synced_answer(ev, orig_gt.visual_time, ea, orig_gt.audio_time)
    desynced = desynced_answer(ev, shift_gt.visual_time, ea, shift_gt.audio_time, shift_gt.direction,
                               shift_gt.offset_s)
    prompt = inference_prompt('shift')
    pair_a = PreferencePair(pair_id='CTP:{}:orig'.format(shifted.id), video_ref=original.output_ref,
                            prompt=prompt, chosen=synced, rejected=desynced, recipe='CTP', task='shift',
                            meta={'clip_id': original.id, 'condition': orig_gt.condition})
    pair_b = PreferencePair(pair_id='CTP:{}:shift'.format(shifted.id), video_ref=shifted.output_ref,
                            prompt=prompt, chosen=desynced, rejected=synced, recipe='CTP', task='shift',
                            meta={'clip_id': shifted.id, 'condition': shift_gt.condition,
                                  'direction': shift_gt.direction, 'offset_s': shift_gt.offset_s})
    return pair_a, pair_b


def build_mute_pairs(record: InterventionRecord, label=None) -> PreferencePair:
    """ Silence is chosen over a description of the sound the visuals
    suggest."""
    if not isinstance(record.kind, Mute):
        raise ValueError('Expected a mute record, got {}.'.format(record.kind_name))
    ev, ea = _texts(record, label)
    return PreferencePair(pair_id='MutePref:{}'.format(record.id), video_ref=record.output_ref,
                          prompt=inference_prompt('mute'), chosen=silent_answer(),
                          rejected=described_audio_answer(ev, ea), recipe='MutePref', task='mute',
                          meta={'clip_id': record.id, 'condition': record.ground_truth.condition})


def build_swap_pairs(record: InterventionRecord, donor_label=None, label=None) -> PreferencePair:
    """ Naming the audio-source mismatch is chosen over narrating the donor
    audio as if it belonged to the visuals.

    Raises
    ------
    MissingDonorLabel
        If the audio event of the donor clip is unknown.
    """
    if not isinstance(record.kind, Swap):
        raise ValueError('Expected a swap record, got {}.'.format(record.kind_name))
    donor_event = donor_label.audio_event if donor_label is not None else record.donor_audio_event
    if not donor_event:
        raise MissingDonorLabel('No audio event label for donor {} of {}.'.format(
            record.kind.source_clip_id, record.id))
    ev, _ = _texts(record, label)
    return PreferencePair(pair_id='SwapPref:{}'.format(record.id), video_ref=record.output_ref,
                          prompt=inference_prompt('swap'), chosen=mismatch_answer(ev, donor_event),
                          rejected=matched_answer(ev, donor_event), recipe='SwapPref', task='swap',
                          meta={'clip_id': record.id, 'condition': record.ground_truth.condition,
                                'donor_id': record.kind.source_clip_id})


def _clamp_time(value: float, duration_s: Optional[float]) -> float:
    value = max(0.0, value)
    return min(value, float(duration_s)) if duration_s is not None else value


def perturb_label(label, perturbation_seed: int, event_pool: Sequence[Tuple[str, str]] = (),
                  duration_s: Optional[float] = None) -> Tuple[dict, dict]:
    """Return the perturbed label fields and a note of the perturbation.

    One component is drawn:

    - a timestamp moves by a signed δ, |δ| drawn uniformly in [1.0, 3.0] s,
      and stays within [0, `duration_s`];
    - an event text is replaced by another clip's text of the same
      modality;
    - the sync claim is flipped: the label is kept and the note carries the
      direction and offset the rejected answer wrongly claims.

    When `event_pool`, a sequence of (visual event, audio event) of other
    clips, holds no different text, the audio timestamp is perturbed
    instead.
    """
    rng = np.random.default_rng(perturbation_seed)
    component = OP_COMPONENTS[int(rng.integers(len(OP_COMPONENTS)))]
    delta = float(rng.uniform(*OP_DELTA_RANGE))
    if rng.integers(2):
        delta = -delta
    fields = {'visual_event': label.visual_event, 'visual_time': label.visual_time,
              'audio_event': label.audio_event, 'audio_time': label.audio_time}

    if component == 'sync_claim':
        return fields, {'perturbation': component, 'claimed_direction': DELAY if delta > 0 else EARLY,
                        'claimed_offset_s': abs(delta)}

    if component.endswith('_event'):
        column = 0 if component == 'visual_event' else 1
        current = _normalize_text(fields[component])
        candidates = sorted({pair[column] for pair in event_pool
                             if pair[column] and _normalize_text(pair[column]) != current})
        if candidates:
            replacement = candidates[int(rng.integers(len(candidates)))]
            fields[component] = replacement
            return fields, {'perturbation': component, 'replacement': replacement}
        log.debug('No replacement text for %s of %s, perturbing the audio time.', component, label.clip_id)
        component = 'audio_time'

    original = fields[component]
    moved = _clamp_time(original + delta, duration_s)
    if abs(moved - original) < OP_DELTA_RANGE[0]:
        moved = _clamp_time(original - delta, duration_s)
    fields[component] = moved
    return fields, {'perturbation': component, 'delta_s': moved - original}


def build_op_pairs(label, perturbation_seed: int, video_ref: str, event_pool: Sequence[Tuple[str, str]] = (),
                   duration_s: Optional[float] = None) -> PreferencePair:
    """Return the original-sync pair of a retained clip: its annotated
    synchronized answer against a copy with one perturbed component.

    Parameters
    ----------
    label: EventTimeLabel
        Consensus label of a retained clip.

    perturbation_seed: int

    video_ref: str
        The original video.

    event_pool: sequence of (str, str)
        (visual event, audio event) texts of other clips.

    duration_s: float
        Length of the clip, the bound of a perturbed timestamp.
    """
    fields, note = perturb_label(label, perturbation_seed, event_pool, duration_s)
    chosen = synced_answer(label.visual_event, label.visual_time, label.audio_event, label.audio_time)
    if note['perturbation'] == 'sync_claim':
        rejected = desynced_answer(label.visual_event, label.visual_time, label.audio_event, label.audio_time,
                                   note['claimed_direction'], note['claimed_offset_s'])
    else:
        rejected = synced_answer(fields['visual_event'], fields['visual_time'], fields['audio_event'],
                                 fields['audio_time'])
    meta = {'clip_id': label.clip_id, 'condition': SYNCED, 'seed': perturbation_seed}
    meta.update(note)
    return PreferencePair(pair_id='OP:{}'.format(label.clip_id), video_ref=video_ref, prompt=inference_prompt('shift'),
                          chosen=chosen, rejected=rejected, recipe='OP', task='shift', meta=meta)


def build_sp_pairs(reference: str, prediction, raw_text: str, record: InterventionRecord,
                   prompt: Optional[str] = None) -> Optional[PreferencePair]:
    """Return a pair rejecting a model's own answer when it contradicts the
    ground truth of `record`, None when the model was right.

    Parameters
    ----------
    reference: str
        The reference answer, always the chosen text.

    prediction: ParsedPrediction
        The judged model answer.

    raw_text: str
        The model answer as it was produced.

    record: InterventionRecord
    """
    if is_correct(prediction, record.ground_truth):
        return None
    if not raw_text or raw_text == reference:
        return None
    return PreferencePair(pair_id='SP:{}:{}:{}'.format(prediction.model_id, record.id, prediction.task),
                          video_ref=record.output_ref, prompt=prompt or inference_prompt(prediction.task),
                          chosen=reference, rejected=raw_text, recipe='SP', task=prediction.task,
                          meta={'clip_id': record.id, 'condition': record.ground_truth.condition,
                                'direction': record.ground_truth.direction, 'model_id': prediction.model_id,
                                'predicted': prediction.label})


_EXPECTED_LABEL = {'synced': SYNCED, 'silent': MUTED, 'mismatched': MISMATCHED}


def check_pair_consistency(pair: PreferencePair, judge: Optional[RulesJudge] = None) -> bool:
    """Return True if the rules judge reads the chosen text of `pair` as the
    ground-truth condition of its video. General pairs carry no condition
    and always pass."""
    if pair.task == 'general':
        return True
    condition = pair.meta.get('condition')
    expected = pair.meta.get('direction') if condition == DESYNCED else _EXPECTED_LABEL.get(condition)
    if expected is None:
        return False
    parsed = judge_parse(pair.task, pair.chosen, judge or RulesJudge())
    return parsed.label == expected


def ensure_consistent(pairs: Iterable[PreferencePair]) -> List[PreferencePair]:
    """ Return `pairs` as a list, raising InconsistentPair on the first one
    failing `check_pair_consistency`."""
    judge = RulesJudge()
    pairs = list(pairs)
    for pair in pairs:
        if not check_pair_consistency(pair, judge):
            raise InconsistentPair('Chosen answer of {} contradicts its ground truth.'.format(pair.pair_id))
    return pairs


# Chosen and rejected texts of these recipes come from the answer templates.
TEMPLATE_RECIPES = ('OP', 'CTP', 'MutePref', 'SwapPref')

# pair -> (chosen, rejected), or None to keep the template texts
TextGenerator = Callable[[PreferencePair], Optional[Tuple[str, str]]]

REWRITE_PROMPT = ('Rewrite each of the two answers below in your own words. Keep every event, timestamp, '
                  'offset and verdict of each answer. Return only a JSON object with the keys "chosen" and '
                  '"rejected".')


class LlmTextGenerator:
    """ Rewrites the template texts of a pair with a chat model.

    Parameters
    ----------
    client:
        Anything with a `chat(messages) -> str` method, e.g.
        `hearsay.backends.HttpBackend`.
    """

    def __init__(self, client):
        self.client = client

    def __call__(self, pair: PreferencePair) -> Optional[Tuple[str, str]]:
        question = 'Question: {}\n\nchosen: {}\n\nrejected: {}'.format(pair.prompt, pair.chosen, pair.rejected)
        messages = [{'role': 'system', 'content': REWRITE_PROMPT}, {'role': 'user', 'content': question}]
        try:
            reply = extract_json_object(self.client.chat(messages))
        except BackendError as exc:
            log.warning('Could not rewrite %s: %s', pair.pair_id, exc)
            return None
        if reply is None or not reply.get('chosen') or not reply.get('rejected'):
            return None
        return str(reply['chosen']).strip(), str(reply['rejected']).strip()


def apply_text_generator(pairs: Iterable[PreferencePair], generator: TextGenerator,
                         judge: Optional[RulesJudge] = None) -> List[PreferencePair]:
    """Return `pairs` with the texts of the template recipes replaced by the
    texts of `generator`.

    A pair keeps its template texts when the generator returns None, when
    both generated texts are equal, or when the generated chosen text fails
    `check_pair_consistency`.
    """
    judge = judge or RulesJudge()
    result = []
    for pair in pairs:
        texts = generator(pair) if pair.recipe in TEMPLATE_RECIPES else None
        if texts is None:
            result.append(pair)
            continue
        generated = replace(pair, chosen=texts[0], rejected=texts[1]) if texts[0] != texts[1] else None
        if generated is not None and check_pair_consistency(generated, judge):
            pair = generated
        else:
            log.warning('Generated texts of %s do not fit its ground truth, keeping the template.', pair.pair_id)
        result.append(pair)
    return result


@dataclass(frozen=True)
class RecipeMix:
    components: Tuple[Tuple[str, int], ...]
    seed: int

    def __post_init__(self):
        object.__setattr__(self, 'components', tuple((tag, count) for tag, count in self.components))
        tags = [tag for tag, _ in self.components]
        if len(tags) != len(set(tags)):
            raise ValueError('Expected each recipe once in a mix, got {}.'.format(tags))
        for tag, count in self.components:
            if tag not in RECIPES:
                raise ValueError('Unknown recipe {!r}.'.format(tag))
            if count <= 0:
                raise ValueError('Expected a positive count for {}, got {}.'.format(tag, count))

    @property
    def total(self) -> int:
        return sum(count for _, count in self.components)


def mix_recipes(pools: Mapping[str, Sequence[PreferencePair]], mix: RecipeMix) -> List[PreferencePair]:
    """Return a dataset drawn from the recipe `pools` as `mix` asks.

    Each pool is sorted by pair id and sampled without replacement with a
    generator seeded from (mix seed, recipe tag); the selection is then
    interleaved by one seeded permutation. The result only depends on the
    pool contents and the mix.

    Raises
    ------
    PoolExhausted
        If a pool holds fewer pairs than requested.
    """
    selected = []
    for tag, count in mix.components:
        pool = sorted(pools.get(tag, ()), key=lambda pair: pair.pair_id)
        if count > len(pool):
            raise PoolExhausted('Requested {} {} pairs, only {} available.'.format(count, tag, len(pool)))
        rng = np.random.default_rng(derive_seed(mix.seed, 'mix', tag))
        picks = rng.choice(len(pool), size=count, replace=False)
        selected.extend(pool[int(idx)] for idx in picks)

    order = np.random.default_rng(derive_seed(mix.seed, 'shuffle')).permutation(len(selected))
    return [selected[int(idx)] for idx in order]


def training_record(pair: PreferencePair, fmt: str) -> Dict[str, str]:
    if fmt == 'sft':
        return {'video': pair.video_ref, 'prompt': pair.prompt, 'response': pair.chosen}
    if fmt == 'dpo':
        return {'video': pair.video_ref, 'prompt': pair.prompt, 'chosen': pair.chosen, 'rejected': pair.rejected}
    raise ValueError('Expected format sft or dpo, got {!r}.'.format(fmt))


def emit_training_files(dataset: Sequence[PreferencePair], fmt: str, path: str) -> int:
    """Write `dataset` as JSON lines in the `sft` or `dpo` training format
    and return the number of lines.

    Raises
    ------
    EmptyDataset
        If `dataset` is empty.
    """
    if fmt not in ('sft', 'dpo'):
        raise ValueError('Expected format sft or dpo, got {!r}.'.format(fmt))
    if not dataset:
        raise EmptyDataset('Nothing to write to {}.'.format(path))
    return write_jsonl(path, (training_record(pair, fmt) for pair in dataset))
