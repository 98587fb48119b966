from hearsay.version import __version__
from hearsay.media import AudioTrack, SourceClip, decode_wav, encode_wav, read_wav, write_wav
from hearsay.interventions import (
    apply_shift,
    apply_mute,
    apply_swap,
    sample_shift_offset,
    band_of,
    validate_intervention,
)
from hearsay.annotation import check_agreement, build_frame_units, apply_retention_filters
from hearsay.judge import judge_parse, classify_engagement
from hearsay.metrics import paired_accuracy, avg_gap, failure_rates
