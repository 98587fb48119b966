# -*- coding: utf-8 -*-
"""
Utilities for the CLI functions.
"""
import functools
import logging

import click

from hearsay.config import load_config
from hearsay.exceptions import HearsayError

# different context options
CONTEXT_SETTINGS = dict(help_option_names=['-h', '--help'])

ExistingFilePath = click.Path(exists=True, dir_okay=False, resolve_path=True)
UnexistingDirPath = click.Path(file_okay=False, resolve_path=True)

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'


def check_positive(ctx, param, value):
    if value is not None and value < 1:
        raise click.BadParameter('expected a positive number, got {}.'.format(value))
    return value


def setup_logging(verbose: int):
    """ WARNING by default, INFO with -v, DEBUG with -vv."""
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbose, logging.DEBUG)
    logging.basicConfig(level=level, format=LOG_FORMAT)


def pipeline_options(func):
    """ Add the options shared by every pipeline command and hand the
    decorated command a ready PipelineConfig as its first argument."""
    @click.option('-c', '--config', 'config_path', type=ExistingFilePath,
                  help='YAML configuration file. Defaults apply without it.')
    @click.option('--seed', type=click.IntRange(0, 2 ** 64 - 1),
                  help='Seed of every random draw, overrides `seed`.')
    @click.option('-o', '--out', 'out_dir', type=UnexistingDirPath,
                  help='Output folder, overrides `paths.out_dir`.')
    @click.option('-p', '--parallelism', type=int, callback=check_positive,
                  help='Most backend queries in flight at once, overrides `parallelism`.')
    @click.option('--dry-run', is_flag=True, flag_value=True,
                  help='Compute and log, but write nothing.')
    @click.option('-v', '--verbose', count=True,
                  help='-v for progress, -vv for debug output including HTTP bodies.')
    @functools.wraps(func)
    def wrapper(config_path, seed, out_dir, parallelism, dry_run, verbose, **kwargs):
        setup_logging(verbose)
        try:
            config = load_config(config_path).override(seed=seed, out_dir=out_dir, parallelism=parallelism,
                                                       dry_run=dry_run)
            return func(config, **kwargs)
        except HearsayError as exc:
            raise click.ClickException(str(exc)) from exc
    return wrapper


def echo_list(alist):
    for i in alist:
        click.echo(i)


def echo_counts(title: str, counts):
    click.echo(title)
    echo_list('  {}: {}'.format(key, value) for key, value in counts.items())
