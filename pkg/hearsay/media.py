# -*- coding: utf-8 -*-
# emacs: -*- mode: python; py-indent-offset: 4; indent-tabs-mode: nil -*-
# vi: set ft=python sts=4 ts=4 sw=4 et:
"""
Decoded PCM audio, source clips and the WAV codec.

Visual streams are never decoded: a clip only keeps a reference to its
container. Extracting audio from a container and putting intervened audio
back is delegated to an external muxer binary, see `Muxer`.
"""
import logging
import os
import struct
import subprocess
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from hearsay.exceptions import (InvalidTimestamp,
                                InvalidTrack,
                                MalformedHeader,
                                MuxerFailure,
                                TruncatedData,
                                UnsupportedEncoding,)
from hearsay.utils import read_jsonl

log = logging.getLogger(__name__)

# a Timestamp is a number of seconds from the clip start
Timestamp = float

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

PCM16_SCALE = 32768

DURATION_TOLERANCE_S = 0.1


@dataclass(frozen=True, eq=False)
class AudioTrack:
    """ Decoded audio.

    Parameters
    ----------
    sample_rate: int
        Samples per second, positive.

    samples: numpy.ndarray
        Float amplitudes in [-1.0, 1.0] with shape (frames, channels). The
        array is copied and made read-only.
    """
    sample_rate: int
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        if isinstance(self.sample_rate, bool) or int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise InvalidTrack('Expected a positive integer sample rate, got {}.'.format(self.sample_rate))

        samples = np.array(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[:, np.newaxis]
        if samples.ndim != 2 or samples.shape[1] < 1:
            raise InvalidTrack('Expected samples with shape (frames, channels), got {}.'.format(samples.shape))
        if not np.all(np.isfinite(samples)):
            raise InvalidTrack('Expected finite amplitudes.')
        if samples.size and (samples.min() < -1.0 or samples.max() > 1.0):
            raise InvalidTrack('Expected amplitudes in [-1.0, 1.0], got range [{}, {}].'.format(
                samples.min(), samples.max()))

        samples.setflags(write=False)
        object.__setattr__(self, 'sample_rate', int(self.sample_rate))
        object.__setattr__(self, 'samples', samples)

    @property
    def channels(self) -> int:
        return self.samples.shape[1]

    @property
    def frame_count(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return self.frame_count / self.sample_rate

    def energy(self) -> float:
        return float(np.sum(self.samples ** 2))

    def __repr__(self):
        return 'AudioTrack(sample_rate={}, channels={}, frames={})'.format(
            self.sample_rate, self.channels, self.frame_count)


@dataclass(frozen=True)
class SourceClip:
    """ A sounded video clip.

    `media_ref` points to the whole audio-video container, the visual stream
    is the same container seen as video, so `visual_ref` is an alias.
    """
    id: str
    media_ref: str
    duration_s: float
    audio: Optional[AudioTrack] = field(default=None, compare=False, repr=False)
    audio_ref: Optional[str] = None

    def __post_init__(self):
        if not self.id:
            raise ValueError('Expected a non-empty clip id.')
        if self.duration_s <= 0:
            raise ValueError('Expected a positive duration for clip {}, got {}.'.format(self.id, self.duration_s))
        if self.audio is not None and abs(self.audio.duration_s - self.duration_s) > DURATION_TOLERANCE_S:
            raise InvalidTrack('Audio of clip {} lasts {:.3f}s, expected {:.3f}s.'.format(
                self.id, self.audio.duration_s, self.duration_s))

    @property
    def visual_ref(self) -> str:
        return self.media_ref

    @property
    def has_audio(self) -> bool:
        return self.audio is not None


def check_timestamp(value: float, duration_s: float) -> Timestamp:
    """ Return `value` as a Timestamp if it lies in [0, duration_s].

    Raises
    ------
    InvalidTimestamp
    """
    value = float(value)
    if not 0.0 <= value <= duration_s:
        raise InvalidTimestamp('Expected a timestamp in [0, {}], got {}.'.format(duration_s, value))
    return value


def _parse_fmt(body: bytes):
    if len(body) < 16:
        raise MalformedHeader('Expected a fmt chunk of at least 16 bytes, got {}.'.format(len(body)))

    format_tag, channels, sample_rate, _, block_align, bits = struct.unpack('<HHIIHH', body[:16])
    if format_tag == WAVE_FORMAT_EXTENSIBLE:
        if len(body) < 40:
            raise MalformedHeader('Extensible fmt chunk too short: {} bytes.'.format(len(body)))
        # the sub-format GUID starts with the plain format tag
        format_tag = struct.unpack('<H', body[24:26])[0]

    if channels < 1 or sample_rate < 1:
        raise MalformedHeader('Expected channels >= 1 and a positive rate, got {} and {}.'.format(
            channels, sample_rate))

    supported = (format_tag == WAVE_FORMAT_PCM and bits in (8, 16, 24, 32)) or \
                (format_tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32)
    if not supported:
        raise UnsupportedEncoding('Unsupported WAV encoding: format tag {:#06x} with {} bits.'.format(
            format_tag, bits))

    if block_align != channels * bits // 8:
        block_align = channels * bits // 8
    return format_tag, channels, sample_rate, block_align, bits


def _pcm_to_float(payload: bytes, format_tag: int, bits: int) -> np.ndarray:
    if format_tag == WAVE_FORMAT_IEEE_FLOAT:
        return np.clip(np.frombuffer(payload, dtype='<f4').astype(np.float64), -1.0, 1.0)
    if bits == 8:
        return (np.frombuffer(payload, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    if bits == 16:
        return np.frombuffer(payload, dtype='<i2') / float(PCM16_SCALE)
    if bits == 24:
        raw = np.frombuffer(payload, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        values = raw[:, 0] | (raw[:, 1] << 8) | (raw[:, 2] << 16)
        values = np.where(values & 0x800000, values - 0x1000000, values)
        return values / float(2 ** 23)
    return np.frombuffer(payload, dtype='<i4') / float(2 ** 31)


def decode_wav(data: bytes) -> AudioTrack:
    """Return the AudioTrack held by the RIFF/WAVE byte stream `data`.

    Chunks other than `fmt ` and `data` are skipped.

    Parameters
    ----------
    data: bytes

    Returns
    -------
    track: AudioTrack

    Raises
    ------
    MalformedHeader
        If the stream is not RIFF/WAVE or misses the fmt or data chunk.
    UnsupportedEncoding
        If the samples are compressed or of an unsupported width.
    TruncatedData
        If the data chunk is shorter than declared.
    """
    if len(data) < 12 or data[:4] != b'RIFF' or data[8:12] != b'WAVE':
        raise MalformedHeader('Expected a RIFF/WAVE stream, got magic {!r}.'.format(bytes(data[:4])))

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        size = struct.unpack('<I', data[pos + 4:pos + 8])[0]
        start = pos + 8
        if chunk_id == b'fmt ':
            if start + size > len(data):
                raise MalformedHeader('The fmt chunk runs past the end of the stream.')
            fmt = _parse_fmt(data[start:start + size])
        elif chunk_id == b'data':
            if fmt is None:
                raise MalformedHeader('Found the data chunk before the fmt chunk.')
            if start + size > len(data):
                raise TruncatedData('The data chunk declares {} bytes, only {} present.'.format(
                    size, len(data) - start))
            payload = data[start:start + size]
            break
        pos = start + size + (size & 1)

    if fmt is None:
        raise MalformedHeader('Missing fmt chunk.')
    if payload is None:
        raise MalformedHeader('Missing data chunk.')

    format_tag, channels, sample_rate, block_align, bits = fmt
    n_frames = len(payload) // block_align
    values = _pcm_to_float(payload[:n_frames * block_align], format_tag, bits)
    return AudioTrack(sample_rate, values.reshape(n_frames, channels))


def encode_wav(track: AudioTrack) -> bytes:
    """Return `track` as a PCM-16 little-endian RIFF/WAVE byte stream.
    Amplitudes are scaled by 32768, rounded and clipped to the int16 range."""
    ints = np.clip(np.round(track.samples * PCM16_SCALE), -PCM16_SCALE, PCM16_SCALE - 1).astype('<i2')
    payload = ints.tobytes()
    block_align = track.channels * 2
    header = struct.pack('<4sI4s', b'RIFF', 36 + len(payload), b'WAVE')
    fmt = struct.pack('<4sIHHIIHH', b'fmt ', 16, WAVE_FORMAT_PCM, track.channels, track.sample_rate,
                      track.sample_rate * block_align, block_align, 16)
    data = struct.pack('<4sI', b'data', len(payload))
    return header + fmt + data + payload


def read_wav(path: str) -> AudioTrack:
    with open(path, 'rb') as f:
        return decode_wav(f.read())


def write_wav(path: str, track: AudioTrack) -> str:
    folder = os.path.dirname(path)
    if folder:
        os.makedirs(folder, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(encode_wav(track))
    return path


def resample(track: AudioTrack, target_rate: int) -> AudioTrack:
    """Return `track` linearly interpolated at `target_rate`.

    The output holds round(frames * target_rate / sample_rate) frames, so the
    duration is kept within one output frame. Equal rates return `track`.

    Examples
    --------
    >>> track = AudioTrack(4, [0.0, 0.5, 1.0, 0.5])
    >>> resample(track, 8).frame_count
    8
    """
    if target_rate <= 0:
        raise ValueError('Expected a positive target rate, got {}.'.format(target_rate))
    if target_rate == track.sample_rate:
        return track

    n_in = track.frame_count
    n_out = int(round(n_in * target_rate / track.sample_rate))
    if n_in == 0 or n_out == 0:
        return AudioTrack(target_rate, np.zeros((n_out, track.channels)))

    t_in = np.arange(n_in) / track.sample_rate
    t_out = np.arange(n_out) / target_rate
    out = np.column_stack([np.interp(t_out, t_in, track.samples[:, ch]) for ch in range(track.channels)])
    return AudioTrack(target_rate, out)


def load_source_manifest(path: str) -> List[SourceClip]:
    """Return the clips listed in the JSON-lines source manifest `path`.

    Each record holds `id`, `media_ref`, `duration_s` and optionally
    `audio_ref`, the path of a WAV file with the clip audio. Audio is not
    loaded here, see `load_audio`.

    Raises
    ------
    ValueError
        If a clip id appears twice.
    """
    clips = []
    seen = set()
    for record in read_jsonl(path):
        clip = SourceClip(id=str(record['id']),
                          media_ref=record['media_ref'],
                          duration_s=float(record['duration_s']),
                          audio_ref=record.get('audio_ref'))
        if clip.id in seen:
            raise ValueError('Duplicated clip id {} in {}.'.format(clip.id, path))
        seen.add(clip.id)
        clips.append(clip)
    return clips


class Muxer:
    """ Wrapper around the external muxer binary.

    The binary must accept `demux <in_container> <out_wav>` and
    `remux <in_container> <in_wav> <out_container>` and exit with status 0
    on success.
    """

    def __init__(self, binary: str, timeout_s: Optional[float] = None):
        self.binary = binary
        self.timeout_s = timeout_s

    def demux(self, in_container: str, out_wav: str) -> str:
        self._run('demux', in_container, out_wav)
        return out_wav

    def remux(self, in_container: str, in_wav: str, out_container: str) -> str:
        self._run('remux', in_container, in_wav, out_container)
        return out_container

    def _run(self, *args: str):
        command = [self.binary] + list(args)
        log.debug('Running %s', ' '.join(command))
        try:
            proc = subprocess.run(command, stdout=subprocess.PIPE, stderr=subprocess.PIPE,
                                  universal_newlines=True, timeout=self.timeout_s)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise MuxerFailure(command, -1, str(exc)) from exc
        if proc.returncode != 0:
            raise MuxerFailure(command, proc.returncode, proc.stderr)


def is_wav(ref: str) -> bool:
    return ref.lower().endswith('.wav')


def load_audio(clip: SourceClip, media_path, muxer: Optional[Muxer] = None,
               work_dir: Optional[str] = None) -> SourceClip:
    """Return a copy of `clip` with its audio decoded.

    The audio comes from `clip.audio_ref` when set, from the container itself
    when it is a WAV file, or from demuxing the container with `muxer` into
    `work_dir`. Clips without any of these keep `audio` empty.

    Parameters
    ----------
    clip: SourceClip

    media_path: callable
        Resolves a manifest reference into a filesystem path.

    muxer: Muxer

    work_dir: str
        Where demuxed WAV files are written.
    """
    if clip.audio_ref:
        wav_path = media_path(clip.audio_ref)
    elif is_wav(clip.media_ref):
        wav_path = media_path(clip.media_ref)
    elif muxer is not None and work_dir is not None:
        wav_path = muxer.demux(media_path(clip.media_ref), os.path.join(work_dir, '{}.wav'.format(clip.id)))
    else:
        log.info('Clip %s has no audio source and no muxer is configured.', clip.id)
        return clip

    return SourceClip(id=clip.id, media_ref=clip.media_ref, duration_s=clip.duration_s,
                      audio=read_wav(wav_path), audio_ref=clip.audio_ref)
