# -*- coding: utf-8 -*-
# emacs: -*- mode: python; py-indent-offset: 4; indent-tabs-mode: nil -*-
# vi: set ft=python sts=4 ts=4 sw=4 et:
"""
Pipeline configuration: one declarative YAML document with a section per
command. Command line flags override the document.
"""
import dataclasses
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import yaml

from hearsay.exceptions import ConfigError

log = logging.getLogger(__name__)

TASKS = ('shift', 'mute', 'swap')
VARIANTS = ('shift', 'mute', 'swap')
STUB_BEHAVIORS = ('oracle', 'synced_prior', 'hallucinator', 'dodger')
JUDGE_MODES = ('rules', 'llm')
TRANSPORTS = ('reference', 'inline')
ADAPTERS = ('openai', 'plain')
TRAINING_FORMATS = ('sft', 'dpo')


class _Section:
    """ Mixin building a dataclass from a mapping, rejecting unknown keys.

    `_nested` maps a field name to the section class of its value, or to a
    one-item list holding the class for lists of sections.
    """
    _nested = {}  # type: Dict[str, Any]

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]], where: str = ''):
        data = dict(data or {})
        where = where or cls.__name__
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError('Unknown keys in `{}`: {}.'.format(where, ', '.join(unknown)))

        for name, section in cls._nested.items():
            if name not in data or data[name] is None:
                continue
            if isinstance(section, list):
                data[name] = [section[0].from_dict(item, '{}.{}[{}]'.format(where, name, idx))
                              for idx, item in enumerate(data[name])]
            else:
                data[name] = section.from_dict(data[name], '{}.{}'.format(where, name))
        try:
            section = cls(**data)
        except TypeError as exc:
            raise ConfigError('Invalid `{}` section: {}.'.format(where, exc)) from exc
        section.validate()
        return section

    def validate(self):
        pass


def _check_choice(value, choices, name):
    if value not in choices:
        raise ConfigError('Expected `{}` to be one of {}, got {!r}.'.format(name, ', '.join(choices), value))


def _check_positive(value, name):
    if value is None or value <= 0:
        raise ConfigError('Expected `{}` to be positive, got {!r}.'.format(name, value))


@dataclass
class PathsConfig(_Section):
    source_manifest: str = 'clips.jsonl'
    annotations: str = 'annotations.jsonl'
    review_decisions: Optional[str] = None
    frameunit_responses: Optional[str] = None
    media_root: Optional[str] = None
    out_dir: str = 'hearsay_out'


@dataclass
class InterventionConfig(_Section):
    variants: List[str] = field(default_factory=lambda: list(VARIANTS))
    delta_min: float = 0.5
    delta_max: float = 2.0
    shift_offsets: List[float] = field(default_factory=list)
    bands: List[List[float]] = field(default_factory=lambda: [[0.5, 1.0], [1.0, 1.5], [1.5, 2.0]])
    ambiguity_window_s: float = 0.25
    muxer: Optional[str] = None

    def validate(self):
        for variant in self.variants:
            _check_choice(variant, VARIANTS, 'intervene.variants')
        if not 0 < self.delta_min < self.delta_max:
            raise ConfigError('Expected 0 < delta_min < delta_max, got {} and {}.'.format(
                self.delta_min, self.delta_max))
        for offset in self.shift_offsets:
            if offset == 0 or abs(offset) > self.delta_max:
                raise ConfigError('Expected fixed shift offsets within 0 < |offset| <= {}, got {}.'.format(
                    self.delta_max, offset))
        _check_positive(self.ambiguity_window_s, 'intervene.ambiguity_window_s')
        previous_hi = None
        for band in self.bands:
            if len(band) != 2 or not 0 <= band[0] < band[1]:
                raise ConfigError('Expected bands as increasing [lo, hi] pairs, got {}.'.format(band))
            if previous_hi is not None and band[0] != previous_hi:
                raise ConfigError('Expected contiguous bands, got a gap before {}.'.format(band))
            previous_hi = band[1]


@dataclass
class AnnotationConfig(_Section):
    eps_v: float = 0.8
    eps_a: float = 0.5
    visual_annotators: List[str] = field(default_factory=lambda: ['claude', 'gemini', 'gpt'])
    audio_annotators: List[str] = field(default_factory=lambda: ['gemini', 'human'])
    reference_annotator: Optional[str] = None
    n_units: int = 8

    def validate(self):
        _check_positive(self.eps_v, 'annotation.eps_v')
        _check_positive(self.eps_a, 'annotation.eps_a')
        _check_positive(self.n_units, 'annotation.n_units')
        if not self.visual_annotators or not self.audio_annotators:
            raise ConfigError('Expected non-empty visual and audio annotator sets.')


@dataclass
class EndpointConfig(_Section):
    """ How to reach one remote model. The token itself is never stored here,
    only the name of the environment variable holding it."""
    url: str = ''
    model: str = ''
    token_env: Optional[str] = None
    rate_limit_per_s: Optional[float] = 1.0
    transport: str = 'reference'
    adapter: str = 'openai'
    timeout_s: float = 120.0
    max_payload_bytes: int = 20 * 1024 * 1024
    accepts_video_audio: bool = True
    params: Dict[str, Any] = field(default_factory=dict)

    def validate(self):
        if not self.url:
            raise ConfigError('Expected an endpoint `url`.')
        _check_choice(self.transport, TRANSPORTS, 'endpoint.transport')
        _check_choice(self.adapter, ADAPTERS, 'endpoint.adapter')
        _check_positive(self.timeout_s, 'endpoint.timeout_s')
        if self.rate_limit_per_s is not None:
            _check_positive(self.rate_limit_per_s, 'endpoint.rate_limit_per_s')

    def token(self) -> Optional[str]:
        if not self.token_env:
            return None
        token = os.environ.get(self.token_env)
        if token is None:
            log.warning('Environment variable %s is not set, querying %s without a token.',
                        self.token_env, self.url)
        return token


@dataclass
class ModelConfig(_Section):
    id: str = ''
    behavior: Optional[str] = None
    endpoint: Optional[EndpointConfig] = None

    _nested = {'endpoint': EndpointConfig}

    def validate(self):
        if not self.id:
            raise ConfigError('Expected a model `id`.')
        if (self.behavior is None) == (self.endpoint is None):
            raise ConfigError('Expected model {} to set exactly one of `behavior` and `endpoint`.'.format(self.id))
        if self.behavior is not None:
            _check_choice(self.behavior, STUB_BEHAVIORS, 'eval.models.behavior')


@dataclass
class EvalConfig(_Section):
    models: List[ModelConfig] = field(default_factory=list)
    tasks: List[str] = field(default_factory=lambda: list(TASKS))
    max_attempts: int = 3
    base_delay_s: float = 1.0
    max_delay_s: float = 30.0

    _nested = {'models': [ModelConfig]}

    def validate(self):
        for task in self.tasks:
            _check_choice(task, TASKS, 'eval.tasks')
        _check_positive(self.max_attempts, 'eval.max_attempts')
        ids = [model.id for model in self.models]
        if len(ids) != len(set(ids)):
            raise ConfigError('Expected unique model ids, got {}.'.format(ids))


@dataclass
class JudgeConfig(_Section):
    mode: str = 'rules'
    endpoint: Optional[EndpointConfig] = None
    models: Optional[List[str]] = None

    _nested = {'endpoint': EndpointConfig}

    def validate(self):
        _check_choice(self.mode, JUDGE_MODES, 'judge.mode')
        if self.mode == 'llm' and self.endpoint is None:
            raise ConfigError('Expected a `judge.endpoint` in llm mode.')


@dataclass
class PrefsConfig(_Section):
    recipes: List[str] = field(default_factory=lambda: ['OP', 'CTP', 'MutePref', 'SwapPref'])
    mix: Dict[str, int] = field(default_factory=dict)
    format: str = 'dpo'
    sp_model: Optional[str] = None
    instructions: Dict[str, str] = field(default_factory=dict)
    avqa_verdicts: Optional[str] = None
    generator: Optional[EndpointConfig] = None

    _nested = {'generator': EndpointConfig}

    def validate(self):
        _check_choice(self.format, TRAINING_FORMATS, 'prefs.format')
        for tag, count in self.mix.items():
            if not isinstance(count, int) or count <= 0:
                raise ConfigError('Expected a positive count for recipe {}, got {!r}.'.format(tag, count))


@dataclass
class ReportConfig(_Section):
    tau_s: float = 0.5
    taus: List[float] = field(default_factory=lambda: [0.25, 0.5, 1.0])
    models: Optional[List[str]] = None

    def validate(self):
        _check_positive(self.tau_s, 'report.tau_s')
        for tau in self.taus:
            _check_positive(tau, 'report.taus')


@dataclass
class PipelineConfig(_Section):
    seed: Optional[int] = None
    parallelism: int = 1
    dry_run: bool = False
    paths: PathsConfig = field(default_factory=PathsConfig)
    intervene: InterventionConfig = field(default_factory=InterventionConfig)
    annotation: AnnotationConfig = field(default_factory=AnnotationConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    judge: JudgeConfig = field(default_factory=JudgeConfig)
    prefs: PrefsConfig = field(default_factory=PrefsConfig)
    report: ReportConfig = field(default_factory=ReportConfig)

    _nested = {
        'paths': PathsConfig,
        'intervene': InterventionConfig,
        'annotation': AnnotationConfig,
        'eval': EvalConfig,
        'judge': JudgeConfig,
        'prefs': PrefsConfig,
        'report': ReportConfig,
    }

    def validate(self):
        if self.parallelism < 1:
            raise ConfigError('Expected parallelism >= 1, got {}.'.format(self.parallelism))
        if self.seed is not None and self.seed < 0:
            raise ConfigError('Expected a non-negative seed, got {}.'.format(self.seed))

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError('This command samples at random: set `seed` in the config or pass --seed.')
        return self.seed

    def out(self, *parts: str) -> str:
        """ Return a path inside the output folder."""
        return os.path.join(self.paths.out_dir, *parts)

    def media_path(self, ref: str) -> str:
        """ Resolve a media reference of the source manifest."""
        if os.path.isabs(ref) or '://' in ref:
            return ref
        root = self.paths.media_root
        if root is None:
            root = os.path.dirname(os.path.abspath(self.paths.source_manifest))
        return os.path.join(root, ref)

    def override(self, seed: Optional[int] = None, out_dir: Optional[str] = None,
                 parallelism: Optional[int] = None, dry_run: Optional[bool] = None) -> 'PipelineConfig':
        """ Return a copy of the config with the given flags applied."""
        config = dataclasses.replace(self)
        if seed is not None:
            config.seed = seed
        if out_dir is not None:
            config.paths = dataclasses.replace(self.paths, out_dir=out_dir)
        if parallelism is not None:
            config.parallelism = parallelism
        if dry_run:
            config.dry_run = True
        config.validate()
        return config


def load_config(path: Optional[str] = None) -> PipelineConfig:
    """Return the PipelineConfig read from the YAML file in `path`. Relative
    paths in the `paths` section are resolved against the config folder.

    Parameters
    ----------
    path: str
        Path to the YAML document. If None, the defaults are used.

    Returns
    -------
    config: PipelineConfig

    Raises
    ------
    ConfigError
        If the document is not a mapping, holds unknown keys or invalid values.
    """
    if path is None:
        return PipelineConfig()

    with open(path, encoding='utf-8') as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise ConfigError('Expected a mapping at the top of {}, got {}.'.format(path, type(data).__name__))

    config = PipelineConfig.from_dict(data, 'config')
    base_dir = os.path.dirname(os.path.abspath(path))
    paths = config.paths
    for name in ('source_manifest', 'annotations', 'review_decisions', 'frameunit_responses', 'media_root',
                 'out_dir'):
        value = getattr(paths, name)
        if value is not None and not os.path.isabs(value):
            setattr(paths, name, os.path.join(base_dir, value))
    config.prefs.instructions = {tag: _resolve(base_dir, ref) for tag, ref in config.prefs.instructions.items()}
    if config.prefs.avqa_verdicts is not None:
        config.prefs.avqa_verdicts = _resolve(base_dir, config.prefs.avqa_verdicts)
    log.debug('Loaded configuration from %s.', path)
    return config


def _resolve(base_dir: str, ref: str) -> str:
    return ref if os.path.isabs(ref) else os.path.join(base_dir, ref)
