# -*- coding: utf-8 -*-
# emacs: -*- mode: python; py-indent-offset: 4; indent-tabs-mode: nil -*-
# vi: set ft=python sts=4 ts=4 sw=4 et:
"""
SVG figures of the report, drawn as plain rectangles, paths and labels so
the output is deterministic text.
"""
import os
from typing import Dict, List, Optional, Sequence, Tuple
from xml.sax.saxutils import escape, quoteattr

from hearsay.metrics import FAILURE_RATES, MetricsReport

FONT = 'font-family="sans-serif" font-size="11"'
PALETTE = ('#4c72b0', '#dd8452', '#55a868', '#c44e52', '#8172b3', '#937860', '#da8bc3', '#8c8c8c')
LABEL_COLORS = {'synced': '#4c72b0', 'delay': '#dd8452', 'early': '#55a868', 'none': '#8c8c8c',
                'muted': '#8172b3', 'mismatched': '#c44e52'}


def _num(value: float) -> str:
    return '{:.2f}'.format(value)


class _Svg:

    def __init__(self, width: float, height: float):
        self.width = width
        self.height = height
        self.items = []  # type: List[str]

    def rect(self, x, y, w, h, fill, stroke='none'):
        self.items.append('<rect x="{}" y="{}" width="{}" height="{}" fill="{}" stroke="{}"/>'.format(
            _num(x), _num(y), _num(w), _num(h), fill, stroke))

    def line(self, x1, y1, x2, y2, stroke='#333333'):
        self.items.append('<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{}"/>'.format(
            _num(x1), _num(y1), _num(x2), _num(y2), stroke))

    def polyline(self, points: Sequence[Tuple[float, float]], stroke):
        coords = ' '.join('{},{}'.format(_num(x), _num(y)) for x, y in points)
        self.items.append('<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>'.format(coords, stroke))

    def circle(self, x, y, r, fill):
        self.items.append('<circle cx="{}" cy="{}" r="{}" fill="{}"/>'.format(_num(x), _num(y), _num(r), fill))

    def text(self, x, y, content, anchor='start', rotate=None):
        transform = ''
        if rotate is not None:
            transform = ' transform={}'.format(quoteattr('rotate({} {} {})'.format(rotate, _num(x), _num(y))))
        self.items.append('<text x="{}" y="{}" text-anchor="{}" {}{}>{}</text>'.format(
            _num(x), _num(y), anchor, FONT, transform, escape(str(content))))

    def render(self) -> str:
        head = '<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">'.format(
            w=int(self.width), h=int(self.height))
        body = '\n'.join('  ' + item for item in self.items)
        return '{}\n  <rect width="100%" height="100%" fill="white"/>\n{}\n</svg>\n'.format(head, body)


def _heat_color(rate: Optional[float]) -> str:
    """ White for 0, red for 1, grey when absent."""
    if rate is None:
        return '#d9d9d9'
    level = int(round(255 * (1.0 - min(max(rate, 0.0), 1.0))))
    return '#ff{0:02x}{0:02x}'.format(level)


def failure_heatmap(reports: Sequence[MetricsReport]) -> str:
    """ Models by the eight failure rates; absent rates are grey."""
    cell_w, cell_h, left, top = 90, 26, 140, 120
    svg = _Svg(left + cell_w * len(FAILURE_RATES) + 20, top + cell_h * len(reports) + 20)
    for col, name in enumerate(FAILURE_RATES):
        svg.text(left + col * cell_w + cell_w / 2, top - 8, name.replace('_', ' '), rotate=-35)
    for row, report in enumerate(reports):
        y = top + row * cell_h
        svg.text(left - 8, y + cell_h / 2 + 4, report.model_id, anchor='end')
        for col, name in enumerate(FAILURE_RATES):
            rate = report.failure_rates.get(name)
            x = left + col * cell_w
            svg.rect(x, y, cell_w, cell_h, _heat_color(rate), stroke='#ffffff')
            svg.text(x + cell_w / 2, y + cell_h / 2 + 4, '-' if rate is None else '{:.2f}'.format(rate),
                     anchor='middle')
    return svg.render()


def breakdown_bars(reports: Sequence[MetricsReport]) -> str:
    """ One stacked bar per (model, task, condition), split by predicted
    label and scaled to the share of each label."""
    bars = []
    for report in reports:
        for task, conditions in report.breakdown.items():
            for condition, counts in conditions.items():
                bars.append(('{} {} {}'.format(report.model_id, task, condition), counts))
    labels = sorted({label for _, counts in bars for label in counts})

    bar_h, left, width, top = 18, 220, 400, 40
    svg = _Svg(left + width + 40, top + (bar_h + 6) * len(bars) + 20)
    for idx, label in enumerate(labels):
        x = left + idx * 90
        svg.rect(x, 12, 10, 10, LABEL_COLORS.get(label, PALETTE[idx % len(PALETTE)]))
        svg.text(x + 14, 21, label)
    for row, (name, counts) in enumerate(bars):
        y = top + row * (bar_h + 6)
        svg.text(left - 8, y + bar_h - 5, name, anchor='end')
        total = float(sum(counts.values()))
        x = left
        for idx, label in enumerate(labels):
            share = counts.get(label, 0) / total if total else 0.0
            if share <= 0:
                continue
            svg.rect(x, y, width * share, bar_h, LABEL_COLORS.get(label, PALETTE[idx % len(PALETTE)]))
            x += width * share
        svg.text(left + width + 6, y + bar_h - 5, int(total))
    return svg.render()


def band_line_chart(reports: Sequence[MetricsReport]) -> str:
    """ Band accuracy per model, one line each, bands in order."""
    bands = []
    for report in reports:
        for band in report.band_accuracy:
            if band not in bands:
                bands.append(band)

    left, top, width, height = 60, 30, 360, 220
    svg = _Svg(left + width + 160, top + height + 50)
    svg.line(left, top + height, left + width, top + height)
    svg.line(left, top, left, top + height)
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = top + height * (1.0 - tick)
        svg.line(left - 4, y, left, y)
        svg.text(left - 8, y + 4, '{:.2f}'.format(tick), anchor='end')
    step = width / max(len(bands) - 1, 1)
    for idx, band in enumerate(bands):
        svg.text(left + idx * step, top + height + 18, band, anchor='middle')
    svg.text(left + width / 2, top + height + 40, 'offset band (s)', anchor='middle')

    for idx, report in enumerate(reports):
        color = PALETTE[idx % len(PALETTE)]
        points = [(left + pos * step, top + height * (1.0 - report.band_accuracy[band]))
                  for pos, band in enumerate(bands) if report.band_accuracy.get(band) is not None]
        if len(points) > 1:
            svg.polyline(points, color)
        for x, y in points:
            svg.circle(x, y, 3, color)
        svg.rect(left + width + 20, top + idx * 18, 10, 10, color)
        svg.text(left + width + 34, top + idx * 18 + 9, report.model_id)
    return svg.render()


def tradeoff_scatter(reports: Sequence[MetricsReport]) -> str:
    """ False-alarm rate against detection rate, one point per model and
    task (circle for mute, square for swap)."""
    left, top, size = 60, 30, 260
    svg = _Svg(left + size + 200, top + size + 50)
    svg.line(left, top + size, left + size, top + size)
    svg.line(left, top, left, top + size)
    for tick in (0.0, 0.5, 1.0):
        svg.text(left + size * tick, top + size + 16, '{:.1f}'.format(tick), anchor='middle')
        svg.text(left - 8, top + size * (1.0 - tick) + 4, '{:.1f}'.format(tick), anchor='end')
    svg.text(left + size / 2, top + size + 36, 'false alarm rate', anchor='middle')
    svg.text(16, top + size / 2, 'detection rate', anchor='middle', rotate=-90)

    for idx, report in enumerate(reports):
        color = PALETTE[idx % len(PALETTE)]
        for task, trade in sorted(report.tradeoff.items()):
            x = left + size * trade.false_alarm_rate
            y = top + size * (1.0 - trade.detection_rate)
            if task == 'mute':
                svg.circle(x, y, 5, color)
            else:
                svg.rect(x - 4, y - 4, 8, 8, color)
        svg.rect(left + size + 20, top + idx * 18, 10, 10, color)
        svg.text(left + size + 34, top + idx * 18 + 9, report.model_id)
    svg.text(left + size + 20, top + len(reports) * 18 + 14, 'circle: mute, square: swap')
    return svg.render()


PLOTS = (
    ('failure_heatmap', failure_heatmap),
    ('prediction_breakdown', breakdown_bars),
    ('band_accuracy', band_line_chart),
    ('tradeoff', tradeoff_scatter),
)


def write_plots(reports: Sequence[MetricsReport], out_dir: str) -> Dict[str, str]:
    """ Render every plot to `<out_dir>/<name>.svg`, return name -> path."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for name, draw in PLOTS:
        path = os.path.join(out_dir, '{}.svg'.format(name))
        with open(path, 'w', encoding='utf-8') as f:
            f.write(draw(reports))
        paths[name] = path
    return paths
