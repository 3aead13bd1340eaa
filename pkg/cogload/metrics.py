'''
Thresholded binary metrics, F1-maximising threshold selection and the fold
report (plain-text table, CSV rows and an HTML page with threshold curves).

The positive class is "high workload" (label 1); a window is predicted
positive when its score is at least the threshold.
'''

import logging
import os
from dataclasses import dataclass

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
from sklearn.metrics import confusion_matrix, precision_recall_fscore_support

from .vis.plotThresholdCurve import plotThresholdCurve
from .vis.plt2base64 import plt2html

logger = logging.getLogger(__name__)

DEFAULT_GRID = np.round(np.linspace(0.0, 1.0, 101), 2)
METRICS = ('precision', 'recall', 'f1')
CSV_COLUMNS = ['model', 't_w', 'fold', 'precision', 'recall', 'f1', 'threshold']


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn


def _check(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=int)
    if scores.shape != labels.shape:
        raise ValueError('{} scores but {} labels'.format(scores.size, labels.size))
    if scores.size == 0:
        raise ValueError('no scores to evaluate')
    return scores, labels


def _scores(labels, pred):
    # every zero denominator reads as 0
    p, r, f1, _ = precision_recall_fscore_support(labels, pred, pos_label=1, average='binary', zero_division=0)
    return float(p), float(r), float(f1)


def prf1(scores, labels, tau=0.5):
    '''
    Confusion counts and (precision, recall, F1) at threshold tau.

    Return
    ------
    counts : ConfusionCounts
    (precision, recall, f1)
    '''
    scores, labels = _check(scores, labels)
    pred = (scores >= tau).astype(int)
    tn, fp, fn, tp = confusion_matrix(labels, pred, labels=[0, 1]).ravel()
    counts = ConfusionCounts(int(tp), int(fp), int(tn), int(fn))
    return counts, _scores(labels, pred)


def threshold_curve(scores, labels, grid=DEFAULT_GRID):
    '''
    Precision, recall and F1 at every threshold of `grid` (ascending).

    Return
    ------
    DataFrame with columns tau, precision, recall, f1
    '''
    scores, labels = _check(scores, labels)
    grid = np.asarray(grid, dtype=np.float64)
    rows = [_scores(labels, (scores >= tau).astype(int)) for tau in grid]
    curve = pd.DataFrame(rows, columns=list(METRICS))
    curve.insert(0, 'tau', grid)
    return curve


def select_threshold(scores, labels, grid=DEFAULT_GRID):
    '''
    The grid threshold with the highest F1; ties go to the smallest threshold.
    '''
    grid = np.sort(np.asarray(grid, dtype=np.float64))
    if grid.size == 0 or grid.min() < 0 or grid.max() > 1:
        raise ValueError('threshold grid must be non-empty and inside [0, 1]')
    curve = threshold_curve(scores, labels, grid)
    best = int(np.argmax(curve['f1'].to_numpy()))
    return float(grid[best])


########## Section: report ##########


class MetricsReport:
    '''
    Per-fold test metrics of one or more (model, t_w) runs. Failed folds are
    kept with status "failed" and left out of the aggregates.
    '''

    def __init__(self):
        self.rows = []
        self.curves = {}

    def add_fold(self, model, t_w, fold, metrics=None, threshold=np.nan, error=None):
        row = {'model': model, 't_w': int(t_w), 'fold': int(fold), 'threshold': threshold}
        for i, name in enumerate(METRICS):
            row[name] = metrics[i] if metrics is not None else np.nan
        row['status'] = 'ok' if error is None else 'failed'
        row['error'] = '' if error is None else str(error)
        self.rows.append(row)

    def add_curve(self, label, curve):
        self.curves[label] = curve

    def extend(self, other):
        self.rows += other.rows
        self.curves.update(other.curves)
        return self

    @property
    def folds(self):
        return pd.DataFrame(self.rows, columns=CSV_COLUMNS + ['status', 'error'])

    def summary(self):
        '''
        Mean and population standard deviation of every metric over the
        successful folds of each (model, t_w).
        '''
        df = self.folds
        ok = df[df['status'] == 'ok']
        failed = df[df['status'] != 'ok']
        for (m, t), n in failed.groupby(['model', 't_w']).size().items():
            logger.warning('%s t_w=%s: %d failed fold(s) excluded from the summary', m, t, n)
        agg = ok.groupby(['model', 't_w'], sort=False)[list(METRICS)].agg(['mean', lambda s: s.std(ddof=0)])
        agg.columns = ['{}_{}'.format(metric, 'mean' if stat == 'mean' else 'std') for metric, stat in agg.columns]
        agg['folds'] = ok.groupby(['model', 't_w'], sort=False).size()
        return agg.reset_index()

    def to_csv(self, path):
        self.folds[CSV_COLUMNS].to_csv(path, index=False, float_format='%.6f', lineterminator='\n')
        return path

    def table(self):
        '''
        Table shaped by model (rows) and window length (column groups of
        F1, precision, recall as mean+-std).
        '''
        s = self.summary()
        out = pd.DataFrame(index=pd.unique(s['model']))
        for _, r in s.iterrows():
            for metric, short in zip(('f1', 'precision', 'recall'), ('F1', 'Pr', 'Re')):
                out.loc[r['model'], '{}s {}'.format(r['t_w'], short)] = '{:.3f}+-{:.3f}'.format(
                    r[metric + '_mean'], r[metric + '_std'])
        return out.to_string()

    def write_curves(self, out_dir):
        paths = []
        for label, curve in self.curves.items():
            path = os.path.join(out_dir, 'curve_{}.csv'.format(label))
            curve.to_csv(path, index=False, float_format='%.6f', lineterminator='\n')
            paths.append(path)
        return paths


def get_html(report, title='Cognitive workload classification'):
    '''
    Generate a summary report in HTML format: the summary table, the fold
    rows and one embedded F1-against-threshold plot per window length.
    '''
    html = '<html><head><meta charset="utf-8"><title>' + title + '</title></head><body>'
    html += '<h2>' + title + '</h2>'
    html += '<table class="table table-striped">'
    html += '<tr><th> Summary (mean +- std over test folds) </th><tr>'
    html += '<tr><td><pre>' + report.table() + '</pre></td><tr>'
    html += '<tr><td>' + report.folds.to_html(index=False, float_format='{:.4f}'.format) + '</td><tr>'

    by_window = {}
    for label, curve in report.curves.items():
        model, t_w = label.rsplit('_tw', 1)
        by_window.setdefault(t_w, {})[model] = curve
    for t_w, curves in sorted(by_window.items(), key=lambda kv: int(kv[0])):
        fig, ax = plt.subplots(figsize=(6, 4))
        plotThresholdCurve(curves, ax=ax, title='t_w = {} s'.format(t_w))
        html += '<tr><td>' + plt2html(fig) + '</td><tr>'
        plt.close(fig)
    logger.debug('rendered %d threshold plots', len(by_window))

    html += '</table></body></html>'
    return html
