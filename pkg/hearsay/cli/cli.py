#!python
import click

from .utils import (CONTEXT_SETTINGS,
                    echo_counts,
                    pipeline_options,)


# declare the CLI group
@click.group(context_settings=CONTEXT_SETTINGS)
def cli():
    pass


@cli.command(context_settings=CONTEXT_SETTINGS)
@pipeline_options
def verify(config):
    """Check annotator agreement and write the clip verdicts.

    Examples: \n
    hearsay verify -c hearsay.yaml\n
    """
    from ..pipeline import cmd_verify

    echo_counts('Verdicts:', cmd_verify(config))


@cli.command(context_settings=CONTEXT_SETTINGS)
@pipeline_options
def intervene(config):
    """Shift, mute and swap the audio of the retained clips and write the
    intervened manifest.

    Examples: \n
    hearsay intervene -c hearsay.yaml --seed 42\n
    """
    from ..pipeline import cmd_intervene

    records = cmd_intervene(config)
    counts = {}
    for record in records:
        counts[record.kind_name] = counts.get(record.kind_name, 0) + 1
    echo_counts('Manifest rows:', dict(sorted(counts.items())))


@cli.command('build-prefs', context_settings=CONTEXT_SETTINGS)
@pipeline_options
def build_prefs(config):
    """Build the preference pairs and the training file.

    Examples: \n
    hearsay build-prefs -c hearsay.yaml --seed 42\n
    """
    from ..pipeline import cmd_build_prefs

    dataset = cmd_build_prefs(config)
    counts = {}
    for pair in dataset:
        counts[pair.recipe] = counts.get(pair.recipe, 0) + 1
    echo_counts('Training pairs:', dict(sorted(counts.items())))


@cli.command('run-eval', context_settings=CONTEXT_SETTINGS)
@pipeline_options
def run_eval(config):
    """Query the configured models on the intervened clips.

    Examples: \n
    hearsay run-eval -c hearsay.yaml -p 8\n
    """
    from ..pipeline import cmd_run_eval

    echo_counts('Responses:', cmd_run_eval(config))


@cli.command(context_settings=CONTEXT_SETTINGS)
@pipeline_options
def judge(config):
    """Parse the model responses into structured predictions.

    Examples: \n
    hearsay judge -c hearsay.yaml\n
    """
    from ..pipeline import cmd_judge

    echo_counts('Parsed predictions:', cmd_judge(config))


@cli.command(context_settings=CONTEXT_SETTINGS)
@pipeline_options
def report(config):
    """Compute the metrics and write the report, tables and plots.

    Examples: \n
    hearsay report -c hearsay.yaml -o results\n
    """
    from ..pipeline import cmd_report
    from ..tables import summary_text

    reports = cmd_report(config)
    if not reports:
        raise click.ClickException('No judged model to report on.')
    click.echo(summary_text(reports))
