import json
import os

import numpy as np
import pytest
import yaml

from hearsay.annotation import EventTimeLabel
from hearsay.media import AudioTrack, SourceClip, write_wav

SAMPLE_RATE = 8000
CLIP_DURATION_S = 8.0

# (visual event, audio event) texts of the synthetic clips
EVENTS = [
    ('hammer strike', 'metallic clang'),
    ('door slam', 'wooden bang'),
    ('glass drop', 'glass shattering'),
    ('dog jump', 'dog bark'),
    ('hand clap', 'sharp clap'),
    ('ball bounce', 'rubber thump'),
    ('bell swing', 'bell ring'),
    ('drum hit', 'drum boom'),
    ('book fall', 'paper thud'),
    ('cup placement', 'ceramic clink'),
]

VISUAL_ANNOTATORS = ['claude', 'gemini', 'gpt']
AUDIO_ANNOTATORS = ['gemini', 'human']


def tone_burst(duration_s=CLIP_DURATION_S, burst_s=3.0, sample_rate=SAMPLE_RATE, channels=1, length_s=0.05,
               freq=440.0, amplitude=0.5):
    """ Silence with one short sine burst starting at `burst_s`."""
    n_frames = int(round(duration_s * sample_rate))
    samples = np.zeros((n_frames, channels))
    start = int(round(burst_s * sample_rate))
    n_burst = int(round(length_s * sample_rate))
    t = np.arange(n_burst) / sample_rate
    samples[start:start + n_burst, :] = (amplitude * np.sin(2 * np.pi * freq * t))[:, np.newaxis]
    return AudioTrack(sample_rate, samples)


def impulse_track(n_frames, positions, sample_rate=SAMPLE_RATE, channels=1):
    samples = np.zeros((n_frames, channels))
    for pos in positions:
        samples[pos, :] = 0.5
    return AudioTrack(sample_rate, samples)


def clip_times(idx):
    """ (visual time, audio time) of synthetic clip `idx`."""
    visual_time = 3.0 + (idx % 5) * 0.2
    return visual_time, visual_time + 0.05


def clip_labels(clip_id, idx):
    """ One label per annotator, all within tolerance of each other."""
    visual_event, audio_event = EVENTS[idx % len(EVENTS)]
    visual_time, audio_time = clip_times(idx)
    jitter = {'claude': 0.0, 'gemini': 0.1, 'gpt': -0.1}
    labels = []
    for annotator in sorted(set(VISUAL_ANNOTATORS) | set(AUDIO_ANNOTATORS)):
        fields = {}
        if annotator in VISUAL_ANNOTATORS:
            fields.update(visual_event=visual_event, visual_time=round(visual_time + jitter[annotator], 3))
        if annotator in AUDIO_ANNOTATORS:
            fields.update(audio_event=audio_event, audio_time=audio_time)
        labels.append(EventTimeLabel(clip_id=clip_id, annotator_id=annotator, confidence='high', **fields))
    return labels


def write_dataset(base_dir, n_clips=50):
    """Write `n_clips` tone-burst clips, their source manifest and their
    annotations under `base_dir`. Return the paths section of a config."""
    media_dir = os.path.join(base_dir, 'media')
    os.makedirs(media_dir, exist_ok=True)
    manifest_path = os.path.join(base_dir, 'clips.jsonl')
    annotations_path = os.path.join(base_dir, 'annotations.jsonl')
    with open(manifest_path, 'w') as manifest, open(annotations_path, 'w') as annotations:
        for idx in range(n_clips):
            clip_id = 'clip{:03d}'.format(idx)
            _, audio_time = clip_times(idx)
            write_wav(os.path.join(media_dir, clip_id + '.wav'), tone_burst(burst_s=audio_time))
            manifest.write(json.dumps({'id': clip_id, 'media_ref': 'media/{}.wav'.format(clip_id),
                                       'duration_s': CLIP_DURATION_S}) + '\n')
            for label in clip_labels(clip_id, idx):
                annotations.write(json.dumps(label.to_dict()) + '\n')
    return {'source_manifest': manifest_path, 'annotations': annotations_path,
            'out_dir': os.path.join(base_dir, 'out')}


def write_config(base_dir, paths, **sections):
    document = {'seed': 42, 'paths': paths,
                'eval': {'models': [{'id': behavior, 'behavior': behavior}
                                    for behavior in ('oracle', 'synced_prior', 'hallucinator', 'dodger')]}}
    document.update(sections)
    path = os.path.join(base_dir, 'hearsay.yaml')
    with open(path, 'w') as f:
        yaml.safe_dump(document, f)
    return path


@pytest.fixture
def tone_clip():
    return SourceClip(id='clip000', media_ref='clip000.wav', duration_s=CLIP_DURATION_S,
                      audio=tone_burst(burst_s=3.05))


@pytest.fixture
def consensus_label():
    return EventTimeLabel(clip_id='clip000', annotator_id='consensus', visual_event='hammer strike',
                          visual_time=3.0, audio_event='metallic clang', audio_time=3.05, confidence='high')


@pytest.fixture
def donor_label():
    return EventTimeLabel(clip_id='clip001', annotator_id='consensus', visual_event='door slam',
                          visual_time=3.2, audio_event='wooden bang', audio_time=3.25, confidence='high')


@pytest.fixture
def dataset_dir(tmp_path):
    base_dir = str(tmp_path)
    paths = write_dataset(base_dir)
    return base_dir, paths
