# -*- coding: utf-8 -*-
# emacs: -*- mode: python; py-indent-offset: 4; indent-tabs-mode: nil -*-
# vi: set ft=python sts=4 ts=4 sw=4 et:
"""
The pipeline commands. Each one reads the artifacts of the previous stages
from the output folder, delegates to the module of its concern and writes
its own artifacts:

    verify       annotation/verdicts.jsonl, annotation/review_queue.jsonl,
                 annotation/frameunit_prompts.jsonl, annotation/annotation_requests.jsonl
    intervene    interventions/manifest.jsonl, interventions/media/
    build-prefs  preferences/pairs.jsonl, preferences/train_<format>.jsonl
    run-eval     eval/<model>/responses.jsonl, eval/<model>/run.json
    judge        eval/<model>/parsed.jsonl
    report       report/report.json, report/tables/*.csv, report/plots/*.svg

With `dry_run` set, commands compute and log what they would write but
leave the output folder untouched.
"""
import logging
import os
from collections import Counter, OrderedDict
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

from hearsay.annotation import (MANUAL_REVIEW,
                                AnnotatorSets,
                                EventTimeLabel,
                                VerificationVerdict,
                                apply_retention_filters,
                                apply_review_decision,
                                build_frame_units,
                                candidate_visual_event,
                                check_agreement,
                                group_labels,
                                merge_frameunit_label,
                                parse_frameunit_response,
                                render_annotation_prompt,
                                render_frameunit_prompt,)
from hearsay.backends import HttpBackend, ModelBackend, StubBackend
from hearsay.config import ModelConfig, PipelineConfig
from hearsay.exceptions import (ConfigError,
                                InvalidLabel,
                                MissingAnnotator,
                                MissingDonorLabel,
                                MissingPrerequisite,
                                MuxerFailure,
                                OutOfBandRange,)
from hearsay.harness import ResponseRecord, RetryPolicy, run_eval
from hearsay.interventions import (MISMATCHED, SILENT, SYNCED,
                                   GroundTruth,
                                   InterventionRecord,
                                   Mute,
                                   Original,
                                   Shift,
                                   Swap,
                                   apply_mute,
                                   apply_shift,
                                   apply_swap,
                                   clamp_frames,
                                   load_manifest,
                                   quantize_offset,
                                   sample_shift_offset,
                                   select_donor,
                                   shift_ground_truth,
                                   validate_intervention,)
from hearsay.judge import JudgeBackend, LlmJudge, ParsedPrediction, RulesJudge, judge_records
from hearsay.media import Muxer, SourceClip, is_wav, load_audio, load_source_manifest, write_wav
from hearsay.metrics import MetricsReport, build_report
from hearsay.plots import write_plots
from hearsay.preferences import (InstructionRecord,
                                 LlmTextGenerator,
                                 PreferencePair,
                                 RecipeMix,
                                 TextGenerator,
                                 apply_text_generator,
                                 build_ctp_pairs,
                                 build_mute_pairs,
                                 build_op_pairs,
                                 build_sp_pairs,
                                 build_swap_pairs,
                                 emit_training_files,
                                 ensure_consistent,
                                 filter_avqa,
                                 instruction_to_pair,
                                 mix_recipes,
                                 recipe_of,)
from hearsay.prompts import ANNOTATION_PROMPT, FRAMEUNIT_PROMPT, INFERENCE_PROMPTS, PROMPTS_VERSION, prompt_id
from hearsay.tables import report_tables, write_tables
from hearsay.templates import reference_answer
from hearsay.utils import derive_seed, read_jsonl, require_file, write_json, write_jsonl

log = logging.getLogger(__name__)

VERDICTS = ('annotation', 'verdicts.jsonl')
REVIEW_QUEUE = ('annotation', 'review_queue.jsonl')
FRAMEUNIT_PROMPTS = ('annotation', 'frameunit_prompts.jsonl')
ANNOTATION_REQUESTS = ('annotation', 'annotation_requests.jsonl')
MANIFEST = ('interventions', 'manifest.jsonl')
MEDIA = ('interventions', 'media')
PAIRS = ('preferences', 'pairs.jsonl')
EVAL = 'eval'
REPORT = 'report'


def _write_jsonl(config: PipelineConfig, path: str, records: Iterable[Dict[str, Any]]) -> int:
    if config.dry_run:
        n_records = sum(1 for _ in records)
        log.info('Dry run: would write %d records to %s.', n_records, path)
        return n_records
    n_records = write_jsonl(path, records)
    log.info('Wrote %d records to %s.', n_records, path)
    return n_records


def _read_verdicts(config: PipelineConfig) -> List[VerificationVerdict]:
    path = require_file(config.out(*VERDICTS), 'verify')
    return [VerificationVerdict.from_dict(record) for record in read_jsonl(path)]


def _read_manifest(config: PipelineConfig) -> List[InterventionRecord]:
    return load_manifest(read_jsonl(require_file(config.out(*MANIFEST), 'intervene')))


def _source_clips(config: PipelineConfig) -> Dict[str, SourceClip]:
    if not os.path.exists(config.paths.source_manifest):
        return {}
    return {clip.id: clip for clip in load_source_manifest(config.paths.source_manifest)}


def _retained_labels(config: PipelineConfig) -> Dict[str, EventTimeLabel]:
    return {verdict.clip_id: verdict.consensus_label for verdict in _read_verdicts(config) if verdict.retained}


# -- verify -----------------------------------------------------------------
def _frameunit_replies(config: PipelineConfig) -> Dict[str, List[Dict[str, Any]]]:
    """ Clip id -> frame-unit verifier replies, records of clip_id,
    annotator_id and response."""
    replies = {}
    if config.paths.frameunit_responses:
        for record in read_jsonl(require_file(config.paths.frameunit_responses, 'frame-unit verification')):
            replies.setdefault(str(record['clip_id']), []).append(record)
    return replies


def _verify_units(clip_id: str, clip_labels: List[EventTimeLabel], clip: Optional[SourceClip], candidate: str,
                  n_units: int, replies: Sequence[Dict[str, Any]]) -> Tuple[Dict[str, Any], List[EventTimeLabel]]:
    """ The frame-unit prompt record of a clip, and its labels with the
    verifier replies merged in."""
    units = build_frame_units(clip.duration_s, n_units)
    prompt = {'clip_id': clip_id, 'media_ref': clip.media_ref, 'visual_event': candidate,
              'prompt_id': prompt_id(FRAMEUNIT_PROMPT), 'units': [list(unit.interval) for unit in units],
              'prompt': render_frameunit_prompt(units, candidate)}
    for reply in replies:
        try:
            unit_label = parse_frameunit_response(reply.get('response'), units, clip_id, str(reply['annotator_id']),
                                                  candidate)
        except InvalidLabel as exc:
            log.warning('Clip %s: %s', clip_id, exc)
            continue
        clip_labels = merge_frameunit_label(clip_labels, unit_label)
    return prompt, clip_labels


def cmd_verify(config: PipelineConfig) -> Counter:
    """Check annotator agreement on every clip of the annotation store and
    write the verdicts and the manual review queue.

    The frame-unit verification prompt of every labelled clip of the source
    manifest goes to `annotation/frameunit_prompts.jsonl`; the replies listed
    in `paths.frameunit_responses` replace the visual pair of their
    annotator before the agreement check. Source clips without any label get
    an annotation request in `annotation/annotation_requests.jsonl`.

    Returns
    -------
    statuses: Counter
        Number of clips per verdict status.
    """
    annotations = require_file(config.paths.annotations, 'annotation')
    labels = [EventTimeLabel.from_dict(record) for record in read_jsonl(annotations)]
    clips = _source_clips(config)
    decisions = {}
    if config.paths.review_decisions:
        decisions = {str(record['clip_id']): record
                     for record in read_jsonl(require_file(config.paths.review_decisions, 'manual review'))}
    replies = _frameunit_replies(config)

    ann = config.annotation
    sets = AnnotatorSets(set(ann.visual_annotators), set(ann.audio_annotators))
    grouped = group_labels(labels)
    verdicts = []
    unit_prompts = []
    for clip_id, clip_labels in sorted(grouped.items()):
        candidate = candidate_visual_event(clip_labels, ann.reference_annotator or sets.reference())
        if clip_id in clips and candidate:
            prompt, clip_labels = _verify_units(clip_id, clip_labels, clips[clip_id], candidate, ann.n_units,
                                                replies.get(clip_id, ()))
            unit_prompts.append(prompt)
        elif clip_id in replies:
            log.warning('Clip %s: frame-unit replies ignored, the clip has no duration or visual event.', clip_id)
        try:
            verdict = check_agreement(clip_labels, sets, ann.eps_v, ann.eps_a, ann.reference_annotator)
        except MissingAnnotator as exc:
            log.warning('Clip %s: %s', clip_id, exc)
            verdict = VerificationVerdict(clip_id, MANUAL_REVIEW, ('missing-annotator',))
        verdict = apply_retention_filters(verdict, clip=clips.get(clip_id))
        if verdict.status == MANUAL_REVIEW and clip_id in decisions:
            verdict = apply_review_decision(verdict, decisions[clip_id])
        verdicts.append(verdict)

    statuses = Counter(verdict.status for verdict in verdicts)
    log.info('Verdicts: %s', dict(statuses))
    _write_jsonl(config, config.out(*VERDICTS), (verdict.to_dict() for verdict in verdicts))
    _write_jsonl(config, config.out(*REVIEW_QUEUE),
                 (verdict.to_dict() for verdict in verdicts if verdict.status == MANUAL_REVIEW))
    _write_jsonl(config, config.out(*FRAMEUNIT_PROMPTS), unit_prompts)
    _write_jsonl(config, config.out(*ANNOTATION_REQUESTS),
                 ({'clip_id': clip.id, 'media_ref': clip.media_ref, 'prompt_id': prompt_id(ANNOTATION_PROMPT),
                   'prompt': render_annotation_prompt(clip)}
                  for clip_id, clip in sorted(clips.items()) if clip_id not in grouped))
    return statuses


# -- intervene --------------------------------------------------------------
class _MediaWriter:
    """ Writes intervened audio, remuxed into the source container when a
    muxer is configured."""

    def __init__(self, config: PipelineConfig, muxer: Optional[Muxer]):
        self.config = config
        self.muxer = muxer
        self.media_dir = os.path.abspath(config.out(*MEDIA))

    def write(self, record_id: str, source_ref: str, track) -> str:
        wav_path = os.path.join(self.media_dir, '{}.wav'.format(record_id))
        container = None
        if self.muxer is not None and not is_wav(source_ref):
            container = os.path.join(self.media_dir, record_id + os.path.splitext(source_ref)[1])
        if self.config.dry_run:
            return container or wav_path
        os.makedirs(self.media_dir, exist_ok=True)
        write_wav(wav_path, track)
        if container is not None:
            return self.muxer.remux(self.config.media_path(source_ref), wav_path, container)
        return wav_path


def _shift_offsets(config: PipelineConfig, clip_id: str) -> List[Optional[float]]:
    icfg = config.intervene
    if icfg.shift_offsets:
        return list(icfg.shift_offsets)
    return [sample_shift_offset(derive_seed(config.require_seed(), clip_id, 'shift'), icfg.delta_max,
                                icfg.delta_min)]


def cmd_intervene(config: PipelineConfig) -> List[InterventionRecord]:
    """Apply the configured interventions to every retained clip and write
    the intervened manifest with its media.

    Each retained clip yields an Original record plus one record per
    accepted variant. Clips whose audio cannot be loaded and variants that
    fail validation are logged and skipped.

    Returns
    -------
    records: list of InterventionRecord
        Sorted by id.
    """
    icfg = config.intervene
    labels = _retained_labels(config)
    if 'swap' in icfg.variants or ('shift' in icfg.variants and not icfg.shift_offsets):
        seed = config.require_seed()
    else:
        seed = config.seed

    sources = {clip.id: clip for clip in load_source_manifest(require_file(config.paths.source_manifest))}
    muxer = Muxer(icfg.muxer) if icfg.muxer else None
    work_dir = config.out('interventions', 'demuxed')
    clips = OrderedDict()
    for clip_id in sorted(labels):
        if clip_id not in sources:
            log.warning('Retained clip %s is not in the source manifest, skipped.', clip_id)
            continue
        try:
            if muxer is not None:
                os.makedirs(work_dir, exist_ok=True)
            clip = load_audio(sources[clip_id], config.media_path, muxer, work_dir)
        except (MuxerFailure, OSError, ValueError) as exc:
            log.warning('Could not load the audio of %s, skipped: %s', clip_id, exc)
            continue
        if not clip.has_audio:
            log.warning('Clip %s has no audio, skipped.', clip_id)
            continue
        clips[clip_id] = clip

    writer = _MediaWriter(config, muxer)
    candidates = [(clip_id, labels[clip_id].audio_event) for clip_id in clips]
    records = []
    for clip_id, clip in clips.items():
        label = labels[clip_id]
        texts = {'visual_event': label.visual_event, 'audio_event': label.audio_event}
        records.append(InterventionRecord(
            id='{}.orig'.format(clip_id), base_id=clip_id, kind=Original(),
            ground_truth=GroundTruth(SYNCED, visual_time=label.visual_time, audio_time=label.audio_time),
            output_ref=config.media_path(clip.media_ref), **texts))

        if 'shift' in icfg.variants:
            for idx, offset in enumerate(_shift_offsets(config, clip_id)):
                rate = clip.audio.sample_rate
                frames, _ = quantize_offset(offset, rate)
                if not icfg.shift_offsets:
                    frames = clamp_frames(frames, rate, icfg.delta_min, icfg.delta_max)
                kind = Shift(frames / rate, delta_max=icfg.delta_max)
                verdict = validate_intervention(clip, label, kind, ambiguity_window_s=icfg.ambiguity_window_s)
                if not verdict:
                    log.warning('Shift %+.3fs of %s rejected: %s.', kind.offset_s, clip_id, verdict.reason)
                    continue
                try:
                    truth = shift_ground_truth(label, kind.offset_s, icfg.bands)
                    shifted = apply_shift(clip.audio, kind.offset_s)
                except (OutOfBandRange, ValueError) as exc:
                    log.warning('Shift %+.3fs of %s skipped: %s', kind.offset_s, clip_id, exc)
                    continue
                record_id = '{}.shift{}'.format(clip_id, idx)
                records.append(InterventionRecord(
                    id=record_id, base_id=clip_id, kind=kind, ground_truth=truth,
                    output_ref=writer.write(record_id, clip.media_ref, shifted),
                    seed=None if icfg.shift_offsets else derive_seed(seed, clip_id, 'shift'), **texts))

        if 'mute' in icfg.variants:
            record_id = '{}.mute'.format(clip_id)
            records.append(InterventionRecord(
                id=record_id, base_id=clip_id, kind=Mute(),
                ground_truth=GroundTruth(SILENT, visual_time=label.visual_time),
                output_ref=writer.write(record_id, clip.media_ref, apply_mute(clip.audio)), **texts))

        if 'swap' in icfg.variants:
            swap_seed = derive_seed(seed, clip_id, 'swap')
            donor_id = select_donor(clip_id, label.audio_event, candidates, swap_seed)
            if donor_id is None:
                log.warning('No donor with a different sound for %s, swap skipped.', clip_id)
                continue
            kind = Swap(donor_id)
            verdict = validate_intervention(clip, label, kind, labels.get(donor_id))
            if not verdict:
                log.warning('Swap of %s with %s rejected: %s.', clip_id, donor_id, verdict.reason)
                continue
            record_id = '{}.swap'.format(clip_id)
            records.append(InterventionRecord(
                id=record_id, base_id=clip_id, kind=kind,
                ground_truth=GroundTruth(MISMATCHED, visual_time=label.visual_time),
                output_ref=writer.write(record_id, clip.media_ref, apply_swap(clip, clips[donor_id])),
                seed=swap_seed, donor_audio_event=labels[donor_id].audio_event, **texts))

    records.sort(key=lambda record: record.id)
    _write_jsonl(config, config.out(*MANIFEST), (record.to_dict() for record in records))
    return records


# -- build-prefs ------------------------------------------------------------
def _model_dir(config: PipelineConfig, model_id: str) -> str:
    return config.out(EVAL, model_id)


def _sp_pairs(config: PipelineConfig, records: Dict[str, InterventionRecord]) -> List[PreferencePair]:
    model_id = config.prefs.sp_model
    if not model_id:
        raise ConfigError('Recipe SP needs `prefs.sp_model`, the model whose answers are rejected.')
    model_dir = _model_dir(config, model_id)
    parsed = [ParsedPrediction.from_dict(r)
              for r in read_jsonl(require_file(os.path.join(model_dir, 'parsed.jsonl'), 'judge'))]
    raw = {(r['clip_id'], r['task']): r.get('raw_text')
           for r in read_jsonl(require_file(os.path.join(model_dir, 'responses.jsonl'), 'run-eval'))}

    pairs = []
    for pred in parsed:
        record = records.get(pred.clip_id)
        if record is None or pred.error is not None:
            continue
        reference = reference_answer(pred.task, record)
        pair = build_sp_pairs(reference, pred, raw.get((pred.clip_id, pred.task)), record)
        if pair is not None:
            pairs.append(pair)
    return pairs


def _instruction_pairs(config: PipelineConfig) -> List[PreferencePair]:
    verdicts = {}
    if config.prefs.avqa_verdicts:
        verdicts = {str(r['record_id']): bool(r['text_only_correct'])
                    for r in read_jsonl(require_file(config.prefs.avqa_verdicts, 'text-only filtering'))}
    pairs = []
    for tag, path in sorted(config.prefs.instructions.items()):
        instructions = [InstructionRecord.from_dict(r) for r in read_jsonl(require_file(path, 'instruction export'))]
        for record in filter_avqa(instructions, verdicts):
            if recipe_of(record) != tag:
                log.warning('Instruction %s belongs to %s, not %s, skipped.', record.record_id, recipe_of(record), tag)
                continue
            pair = instruction_to_pair(record)
            if pair is not None:
                pairs.append(pair)
    return pairs


def cmd_build_prefs(config: PipelineConfig, generator: Optional[TextGenerator] = None) -> List[PreferencePair]:
    """Build the preference pairs of the configured recipes, check them
    against the ground truth and write them, with a training file of the
    configured mix (or of every pair without a mix).

    Parameters
    ----------
    config: PipelineConfig

    generator: TextGenerator
        Rewrites the template texts of the pairs. By default the chat model
        of `prefs.generator`, if any, else the templates are kept.

    Returns
    -------
    dataset: list of PreferencePair
        The training dataset, in training order.
    """
    pcfg = config.prefs
    labels = _retained_labels(config)
    durations = {clip_id: clip.duration_s for clip_id, clip in _source_clips(config).items()}
    records = {record.id: record for record in _read_manifest(config) if record.base_id in labels}
    originals = {record.base_id: record for record in records.values() if isinstance(record.kind, Original)}
    recipes = set(pcfg.recipes) | set(pcfg.mix)

    pools = {}  # type: Dict[str, List[PreferencePair]]
    if 'OP' in recipes:
        seed = config.require_seed()
        pool = [(label.visual_event, label.audio_event) for label in labels.values()]
        pools['OP'] = [build_op_pairs(labels[base_id], derive_seed(seed, 'OP', base_id), original.output_ref,
                                      [texts for texts in pool if texts != (labels[base_id].visual_event,
                                                                            labels[base_id].audio_event)],
                                      durations.get(base_id))
                       for base_id, original in sorted(originals.items())]
    if 'CTP' in recipes:
        pools['CTP'] = []
        for record in sorted(records.values(), key=lambda rec: rec.id):
            if isinstance(record.kind, Shift) and record.base_id in originals:
                pools['CTP'].extend(build_ctp_pairs(originals[record.base_id], record, labels[record.base_id]))
    if 'MutePref' in recipes:
        pools['MutePref'] = [build_mute_pairs(record, labels[record.base_id])
                             for record in sorted(records.values(), key=lambda rec: rec.id)
                             if isinstance(record.kind, Mute)]
    if 'SwapPref' in recipes:
        pools['SwapPref'] = []
        for record in sorted(records.values(), key=lambda rec: rec.id):
            if not isinstance(record.kind, Swap):
                continue
            try:
                pools['SwapPref'].append(build_swap_pairs(record, labels.get(record.kind.source_clip_id),
                                                          labels[record.base_id]))
            except MissingDonorLabel as exc:
                log.warning('Swap pair of %s skipped: %s', record.id, exc)
    if 'SP' in recipes:
        pools['SP'] = _sp_pairs(config, records)
    for pair in _instruction_pairs(config):
        pools.setdefault(pair.recipe, []).append(pair)

    if generator is None and pcfg.generator is not None:
        generator = LlmTextGenerator(HttpBackend(pcfg.generator, id='generator'))
    if generator is not None:
        pools = {tag: apply_text_generator(pool, generator) for tag, pool in pools.items()}

    all_pairs = ensure_consistent(sorted((pair for pool in pools.values() for pair in pool),
                                         key=lambda pair: pair.pair_id))
    log.info('Built %s', {tag: len(pool) for tag, pool in sorted(pools.items())})
    _write_jsonl(config, config.out(*PAIRS), (pair.to_dict() for pair in all_pairs))

    if pcfg.mix:
        dataset = mix_recipes(pools, RecipeMix(tuple(sorted(pcfg.mix.items())), config.require_seed()))
    else:
        dataset = all_pairs
    train_path = config.out('preferences', 'train_{}.jsonl'.format(pcfg.format))
    if config.dry_run:
        log.info('Dry run: would write %d %s records to %s.', len(dataset), pcfg.format, train_path)
    else:
        emit_training_files(dataset, pcfg.format, train_path)
    return dataset


# -- run-eval ---------------------------------------------------------------
def make_backend(model: ModelConfig) -> ModelBackend:
    if model.behavior is not None:
        return StubBackend(model.behavior, id=model.id)
    return HttpBackend(model.endpoint, id=model.id)


def cmd_run_eval(config: PipelineConfig, backends: Optional[Sequence[ModelBackend]] = None) -> Dict[str, int]:
    """Query every configured model on every configured task and write the
    response logs with their run metadata.

    Parameters
    ----------
    config: PipelineConfig

    backends: sequence of ModelBackend
        Use these instead of the models of `config.eval`.

    Returns
    -------
    n_responses: dict
        model id -> number of responses.
    """
    records = _read_manifest(config)
    ecfg = config.eval
    if backends is None:
        if not ecfg.models:
            raise ConfigError('No model to evaluate: list them under `eval.models`.')
        backends = [make_backend(model) for model in ecfg.models]
    policy = RetryPolicy(max_attempts=ecfg.max_attempts, base_delay_s=ecfg.base_delay_s,
                         max_delay_s=ecfg.max_delay_s)

    counts = OrderedDict()
    for backend in backends:
        if config.dry_run:
            n_queries = sum(1 for task in ecfg.tasks for record in records
                            if record.kind_name in ('original', task))
            log.info('Dry run: would send %d queries to %s.', n_queries, backend.id)
            counts[backend.id] = n_queries
            continue

        responses = []  # type: List[ResponseRecord]
        for task in ecfg.tasks:
            log.info('Querying %s on the %s task.', backend.id, task)
            responses.extend(run_eval(records, backend, task, config.parallelism, policy))
        responses.sort(key=lambda response: (response.clip_id, response.task))

        model_dir = _model_dir(config, backend.id)
        counts[backend.id] = _write_jsonl(config, os.path.join(model_dir, 'responses.jsonl'),
                                          (response.to_dict() for response in responses))
        run = backend.describe()
        run.update(tasks=list(ecfg.tasks), prompts_version=PROMPTS_VERSION,
                   prompt_ids={task: prompt_id(INFERENCE_PROMPTS[task]) for task in ecfg.tasks},
                   n_responses=len(responses), n_failed=sum(1 for response in responses if response.failed),
                   max_attempts=policy.max_attempts)
        write_json(os.path.join(model_dir, 'run.json'), run)
    return counts


# -- judge ------------------------------------------------------------------
def _model_ids(config: PipelineConfig, selected: Optional[Sequence[str]], artifact: str) -> List[str]:
    """ The models a command works on: the selected ones, else the evaluated
    ones, else every model folder holding `artifact`."""
    if selected:
        return list(selected)
    if config.eval.models:
        return [model.id for model in config.eval.models]
    eval_dir = config.out(EVAL)
    if not os.path.isdir(eval_dir):
        raise MissingPrerequisite(eval_dir, 'run-eval')
    return sorted(name for name in os.listdir(eval_dir) if os.path.exists(os.path.join(eval_dir, name, artifact)))


def _event_texts(config: PipelineConfig) -> Dict[str, List[str]]:
    """ Record id -> event texts of the intervened manifest, empty without
    a manifest."""
    if not os.path.exists(config.out(*MANIFEST)):
        return {}
    return {record.id: [text for text in (record.visual_event, record.audio_event, record.donor_audio_event) if text]
            for record in _read_manifest(config)}


def make_judge(config: PipelineConfig) -> JudgeBackend:
    jcfg = config.judge
    if jcfg.mode == 'rules':
        return RulesJudge()
    return LlmJudge(HttpBackend(jcfg.endpoint, id='judge'), id=jcfg.endpoint.model or 'llm')


def cmd_judge(config: PipelineConfig, judge: Optional[JudgeBackend] = None) -> Dict[str, int]:
    """Parse the response log of every model into structured predictions.

    Returns
    -------
    n_parsed: dict
        model id -> number of parsed predictions.
    """
    judge = judge or make_judge(config)
    events = _event_texts(config)
    counts = OrderedDict()
    for model_id in _model_ids(config, config.judge.models, 'responses.jsonl'):
        model_dir = _model_dir(config, model_id)
        responses = [ResponseRecord.from_dict(r)
                     for r in read_jsonl(require_file(os.path.join(model_dir, 'responses.jsonl'), 'run-eval'))]
        if config.dry_run and judge.mode == 'llm':
            log.info('Dry run: would send %d responses of %s to the judge.', len(responses), model_id)
            counts[model_id] = len(responses)
            continue
        parsed = judge_records(responses, judge, config.parallelism, events)
        unparseable = sum(1 for pred in parsed if pred.unparseable)
        if unparseable:
            log.warning('%s: %d answers could not be parsed and got the task default.', model_id, unparseable)
        counts[model_id] = _write_jsonl(config, os.path.join(model_dir, 'parsed.jsonl'),
                                        (pred.to_dict() for pred in parsed))
    return counts


# -- report -----------------------------------------------------------------
def cmd_report(config: PipelineConfig) -> List[MetricsReport]:
    """Compute the metrics of every judged model and write the JSON report,
    the CSV tables and the SVG plots."""
    records = _read_manifest(config)
    rcfg = config.report
    reports = []
    for model_id in _model_ids(config, rcfg.models, 'parsed.jsonl'):
        path = require_file(os.path.join(_model_dir(config, model_id), 'parsed.jsonl'), 'judge')
        predictions = [ParsedPrediction.from_dict(r) for r in read_jsonl(path)]
        reports.append(build_report(model_id, predictions, records, config.intervene.bands, rcfg.taus, rcfg.tau_s))

    if config.dry_run:
        log.info('Dry run: report of %d models not written.', len(reports))
        return reports
    write_json(config.out(REPORT, 'report.json'), {'models': [report.to_dict() for report in reports],
                                                   'tau_s': rcfg.tau_s})
    write_tables(report_tables(reports), config.out(REPORT, 'tables'))
    write_plots(reports, config.out(REPORT, 'plots'))
    log.info('Report of %d models written to %s.', len(reports), config.out(REPORT))
    return reports
