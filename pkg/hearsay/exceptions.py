# -*- coding: utf-8 -*-
# emacs: -*- mode: python; py-indent-offset: 4; indent-tabs-mode: nil -*-
# vi: set ft=python sts=4 ts=4 sw=4 et:
"""
Exceptions raised by hearsay.

Every error derives from `HearsayError` and from the builtin exception
closest to its meaning, so callers can catch either.
"""


class HearsayError(Exception):
    """Base class of all hearsay errors."""


# media
class MalformedHeader(HearsayError, ValueError):
    pass


class UnsupportedEncoding(HearsayError, ValueError):
    pass


class TruncatedData(HearsayError, ValueError):
    pass


class InvalidTrack(HearsayError, ValueError):
    pass


class InvalidTimestamp(HearsayError, ValueError):
    pass


class MuxerFailure(HearsayError, RuntimeError):
    """The external muxer exited with a nonzero status."""

    def __init__(self, command, returncode, stderr):
        self.command = list(command)
        self.returncode = returncode
        self.stderr = stderr
        super().__init__('Muxer command {} exited with status {}: {}'.format(
            ' '.join(self.command), returncode, (stderr or '').strip()))


# interventions
class InvalidOffset(HearsayError, ValueError):
    pass


class OffsetTooLarge(HearsayError, ValueError):
    pass


class SameClip(HearsayError, ValueError):
    pass


class DonorSilent(HearsayError, ValueError):
    pass


class InvalidRange(HearsayError, ValueError):
    pass


class OutOfBandRange(HearsayError, ValueError):
    pass


# annotation
class InvalidLabel(HearsayError, ValueError):
    pass


class InvalidCount(HearsayError, ValueError):
    pass


class MissingAnnotator(HearsayError, KeyError):
    pass


# preference_builder
class MismatchedBase(HearsayError, ValueError):
    pass


class MissingDonorLabel(HearsayError, KeyError):
    pass


class PoolExhausted(HearsayError, ValueError):
    pass


class EmptyDataset(HearsayError, ValueError):
    pass


class InconsistentPair(HearsayError, ValueError):
    pass


# eval_harness
class BackendError(HearsayError, RuntimeError):
    """A single backend query failed. `retryable` tells the retry policy
    whether another attempt may succeed."""
    retryable = False


class BackendTimeout(BackendError, TimeoutError):
    retryable = True


class BackendConnection(BackendError, ConnectionError):
    retryable = True


class HttpStatus(BackendError):

    def __init__(self, code: int, body: str = ''):
        self.code = code
        self.body = body
        super().__init__('Backend answered with HTTP status {}.'.format(code))

    @property
    def retryable(self):
        return self.code == 429 or self.code >= 500


class PayloadTooLarge(BackendError):
    pass


class BackendUnavailable(HearsayError, RuntimeError):
    pass


# response_parsing
class JudgeUnparseable(HearsayError, ValueError):
    pass


# metrics
class EmptySubset(HearsayError, ValueError):
    pass


class MissingDimension(HearsayError, KeyError):
    pass


# cli_report
class ConfigError(HearsayError, ValueError):
    pass


class MissingPrerequisite(HearsayError, FileNotFoundError):
    """A pipeline stage could not find the artifact it depends on."""

    def __init__(self, path: str, stage: str = ''):
        self.path = str(path)
        self.stage = stage
        msg = 'Missing prerequisite {}'.format(self.path)
        if stage:
            msg += ' (produced by `{}`)'.format(stage)
        super().__init__(msg + '.')
