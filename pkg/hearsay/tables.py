# -*- coding: utf-8 -*-
# emacs: -*- mode: python; py-indent-offset: 4; indent-tabs-mode: nil -*-
# vi: set ft=python sts=4 ts=4 sw=4 et:
"""
Flatten metrics reports into pandas DataFrames, one per metric family.
"""
import os
from collections import OrderedDict
from typing import Dict, List, Sequence

import pandas as pd

from hearsay.metrics import DIMENSIONS, FAILURE_RATES, MetricsReport, fmt_points

SUMMARY_COLUMNS = {
    'sync_orig': 'Sync orig',
    'sync_interv': 'Sync interv',
    'existence_orig': 'Exist orig',
    'existence_interv': 'Exist interv',
    'consistency_orig': 'Consist orig',
    'consistency_interv': 'Consist interv',
    'avg_gap': 'Avg Gap',
}


def _rename_cols(df: pd.DataFrame, col_map: Dict[str, str]) -> pd.DataFrame:
    """ Return a copy of `df` with the columns renamed as in `col_map`."""
    renamed = df.copy()
    renamed.columns = [col_map.get(col_name, col_name) for col_name in df.columns]
    return renamed


def _percent(value):
    return None if value is None else 100.0 * value


def summary_table(reports: Sequence[MetricsReport]) -> pd.DataFrame:
    """ One row per model: paired accuracies and avg gap, in points."""
    rows = []
    for report in reports:
        row = OrderedDict([('model', report.model_id)])
        for dim in DIMENSIONS:
            paired = report.paired.get(dim)
            row['{}_orig'.format(dim)] = _percent(paired.orig_acc) if paired else None
            row['{}_interv'.format(dim)] = _percent(paired.interv_acc) if paired else None
        row['avg_gap'] = report.avg_gap
        rows.append(row)
    return pd.DataFrame(rows, columns=['model'] + list(SUMMARY_COLUMNS))


def report_tables(reports: Sequence[MetricsReport]) -> Dict[str, pd.DataFrame]:
    """Return the flat tables of `reports`, by metric family name.

    Accuracies and rates stay fractions, except in `summary` where they are
    percentage points like the avg gap.
    """
    paired, failures, breakdown, bands, coverage, sync, tradeoff = [], [], [], [], [], [], []
    for report in reports:
        model = report.model_id
        for dim, acc in report.paired.items():
            paired.append(OrderedDict([('model', model), ('dimension', dim)] + list(acc.to_dict().items())))
        failures.append(OrderedDict([('model', model)] + [(name, report.failure_rates.get(name))
                                                          for name in FAILURE_RATES]))
        for task, conditions in report.breakdown.items():
            for condition, counts in conditions.items():
                for label, count in counts.items():
                    breakdown.append({'model': model, 'task': task, 'condition': condition,
                                      'prediction': label, 'count': count})
        for band, accuracy in report.band_accuracy.items():
            bands.append({'model': model, 'band': band, 'accuracy': accuracy})
        for tau, value in report.localization_coverage.items():
            coverage.append({'model': model, 'tau_s': float(tau), 'coverage': value})
        sync.append(OrderedDict([('model', model)] + list(report.sync_metrics.items())))
        for task, trade in report.tradeoff.items():
            tradeoff.append(OrderedDict([('model', model), ('task', task)] + list(trade.to_dict().items())))

    return OrderedDict([
        ('summary', summary_table(reports)),
        ('paired_accuracy', pd.DataFrame(paired, columns=['model', 'dimension', 'orig_acc', 'interv_acc',
                                                          'n_orig', 'n_interv'])),
        ('failure_rates', pd.DataFrame(failures, columns=['model'] + list(FAILURE_RATES))),
        ('breakdown', pd.DataFrame(breakdown, columns=['model', 'task', 'condition', 'prediction', 'count'])),
        ('band_accuracy', pd.DataFrame(bands, columns=['model', 'band', 'accuracy'])),
        ('localization_coverage', pd.DataFrame(coverage, columns=['model', 'tau_s', 'coverage'])),
        ('sync_metrics', pd.DataFrame(sync, columns=['model', 'binary_sync_acc', 'three_way_acc',
                                                     'direction_acc_on_desync'])),
        ('tradeoff', pd.DataFrame(tradeoff, columns=['model', 'task', 'false_alarm_rate', 'detection_rate',
                                                     'combined_accuracy'])),
    ])


def write_tables(tables: Dict[str, pd.DataFrame], out_dir: str) -> List[str]:
    """ Write every table as `<out_dir>/<name>.csv`, return the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name, df in tables.items():
        path = os.path.join(out_dir, '{}.csv'.format(name))
        df.to_csv(path, index=False, float_format='%.6g')
        paths.append(path)
    return paths


def summary_text(reports: Sequence[MetricsReport]) -> str:
    """Return the summary table as aligned text, values in percentage
    points with one decimal, `-` where absent."""
    df = summary_table(reports)
    for col in SUMMARY_COLUMNS:
        df[col] = [fmt_points(value) if value is not None and value == value else '-' for value in df[col]]
    return _rename_cols(df, SUMMARY_COLUMNS).to_string(index=False)
