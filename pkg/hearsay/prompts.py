# -*- coding: utf-8 -*-
# emacs: -*- mode: python; py-indent-offset: 4; indent-tabs-mode: nil -*-
# vi: set ft=python sts=4 ts=4 sw=4 et:
"""
Access to the versioned prompt resources shipped in
`hearsay/resources/prompts/<version>/`.
"""
import functools
import os

PROMPTS_VERSION = 'v1'

_prompts_dir = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'resources', 'prompts')

INFERENCE_PROMPTS = {
    'mute': 'infer_mute',
    'swap': 'infer_swap',
    'shift': 'infer_shift',
}

JUDGE_PROMPTS = {
    'mute': 'judge_mute',
    'swap': 'judge_swap',
    'shift': 'judge_shift',
}

ANNOTATION_PROMPT = 'annotate_event'
FRAMEUNIT_PROMPT = 'annotate_frameunit'


def prompt_path(name: str, version: str = PROMPTS_VERSION) -> str:
    return os.path.join(_prompts_dir, version, '{}.txt'.format(name))


@functools.lru_cache(maxsize=None)
def load_prompt(name: str, version: str = PROMPTS_VERSION) -> str:
    """Return the text of the prompt resource `name`, without the final
    newline of the file.

    Raises
    ------
    FileNotFoundError
        If there is no such resource.
    """
    with open(prompt_path(name, version), encoding='utf-8') as f:
        return f.read().rstrip('\n')


def prompt_id(name: str, version: str = PROMPTS_VERSION) -> str:
    return '{}/{}'.format(name, version)


def inference_prompt(task: str) -> str:
    """Return the inference prompt asked to models for `task`.

    Examples
    --------
    >>> inference_prompt('mute')
    'Describe the audio you hear in this video.'
    """
    try:
        name = INFERENCE_PROMPTS[task]
    except KeyError:
        raise KeyError('Expected a task in {}, got {!r}.'.format(sorted(INFERENCE_PROMPTS), task)) from None
    return load_prompt(name)


def judge_prompt(task: str) -> str:
    """Return the judge system prompt for `task`."""
    try:
        name = JUDGE_PROMPTS[task]
    except KeyError:
        raise KeyError('Expected a task in {}, got {!r}.'.format(sorted(JUDGE_PROMPTS), task)) from None
    return load_prompt(name)
