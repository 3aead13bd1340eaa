'''
Command line entry point.

    cogload gen       synthetic raw gaze files
    cogload featurize raw gaze files -> processed window dataset
    cogload train     one train/validation/test split -> checkpoint
    cogload eval      the k-fold protocol over models and window lengths
    cogload sweep     precision / recall / F1 against threshold for a checkpoint
    cogload infer     streaming inference from a file or standard input

Every command takes `--config FILE` and any number of `key=value` overrides.
'''

import functools
import logging
import os
import sys

import click
import matplotlib.pyplot as plt

from . import __version__
from .checkpoint import load, save
from .config import parse_config
from .errors import CogloadError, ConfigError
from .features import WindowSet, build_windows, load_trials
from .metrics import MetricsReport, get_html, prf1, threshold_curve
from .model import predict_scores
from .protocol import evaluate_protocol, make_splits, run_fold
from .stream import parse_events, stream_infer
from .synthgaze import generate_dataset
from .vis.plotGaze2D import plotGaze2D
from .vis.plotThresholdCurve import plotThresholdCurve

logger = logging.getLogger(__name__)

LOG_LEVELS = (logging.WARNING, logging.INFO, logging.DEBUG)


def _command(fn):
    '''
    Shared `--config` option and `key=value` overrides; resolves the
    configuration, echoes it to stderr and maps CogloadError to an exit code.
    '''
    @click.option('--config', 'config_path', type=click.Path(), default=None, help='key = value configuration file')
    @click.argument('overrides', nargs=-1)
    @click.pass_context
    @functools.wraps(fn)
    def wrapper(ctx, config_path, overrides):
        try:
            cfg = parse_config(config_path, overrides)
            click.echo('# resolved configuration\n' + cfg.render(), err=True)
            fn(cfg, verbose=ctx.obj.get('verbose', 0) > 0)
        except CogloadError as err:
            click.echo('error: {}: {}'.format(type(err).__name__, err), err=True)
            ctx.exit(2 if isinstance(err, ConfigError) else 1)
    return wrapper


@click.group()
@click.version_option(__version__)
@click.option('-v', '--verbose', count=True, help='-v for progress and info, -vv for debug')
@click.pass_context
def main(ctx, verbose):
    '''Cognitive workload classification from eye-gaze sequences.'''
    ctx.ensure_object(dict)
    ctx.obj['verbose'] = verbose
    logging.basicConfig(level=LOG_LEVELS[min(verbose, 2)], format='%(levelname)s %(name)s: %(message)s')


def _dataset(cfg, t_w=None):
    '''The processed dataset if one is configured and matches t_w, else featurize data_dir.'''
    t_w = t_w or cfg.t_w
    if cfg.dataset and os.path.exists(cfg.dataset):
        ws = WindowSet.load(cfg.dataset)
        if ws.t_w == t_w:
            return ws
        if not cfg.data_dir:
            raise ConfigError('t_w', 'dataset {} holds t_w={}, asked for {}'.format(cfg.dataset, ws.t_w, t_w))
    cfg.require('data_dir', exists=True)
    return build_windows(load_trials(cfg.data_dir), t_w)


def _gaze_overview(out_dir, paths, limit=4):
    import pandas as pd
    frames = [pd.read_csv(p) for p in paths]
    participants = sorted({int(f['participant'].iloc[0]) for f in frames})[:limit]
    fig, axes = plt.subplots(1, len(participants), figsize=(4.5 * len(participants), 3), squeeze=False)
    for ax, p in zip(axes[0], participants):
        mine = pd.concat([f for f in frames if int(f['participant'].iloc[0]) == p])
        plotGaze2D(mine[['x', 'y']].to_numpy(), mine['scenario'].to_numpy(), ax=ax,
                   legends=['low workload', 'high workload'], title='participant {}'.format(p))
    path = os.path.join(out_dir, 'gaze_overview.png')
    fig.savefig(path, bbox_inches='tight')
    plt.close(fig)
    return path


@main.command()
@_command
def gen(cfg, verbose=False):
    '''Generate synthetic gaze trials into data_dir.'''
    cfg.require('data_dir')
    paths = generate_dataset(cfg.data_dir, cfg.participants, cfg.trials_per_condition, cfg.seed,
                             cfg.knobs(), cfg.scenario(), cfg.n_jobs, verbose)
    if cfg.plot:
        _gaze_overview(cfg.data_dir, paths)
    click.echo('{} trials written to {}'.format(len(paths), cfg.data_dir))


@main.command()
@_command
def featurize(cfg, verbose=False):
    '''Turn the raw gaze files of data_dir into a window dataset.'''
    cfg.require('data_dir', exists=True)
    cfg.require('dataset')
    ws = build_windows(load_trials(cfg.data_dir), cfg.t_w)
    ws.save(cfg.dataset)
    click.echo('{} windows of {} s ({} high workload) written to {}'.format(
        len(ws), ws.t_w, int(ws.labels.sum()), cfg.dataset))


@main.command()
@_command
def train(cfg, verbose=False):
    '''Train one model on a single split and save its checkpoint.'''
    cfg.require('checkpoint')
    ws = _dataset(cfg)
    split = make_splits(ws, 1, cfg.seed, cfg.split_mode)[0]
    res = run_fold(ws, cfg.model, split, 0, cfg.train_config(verbose), cfg.size_config())
    save(res.checkpoint, cfg.checkpoint)
    precision, recall, f1 = res.metrics
    click.echo('{} t_w={}: epoch {:.0f}, threshold {:.2f}, test F1 {:.3f} precision {:.3f} recall {:.3f}'.format(
        cfg.model, ws.t_w, res.checkpoint.meta['epoch'], res.threshold, f1, precision, recall))


@main.command('eval')
@_command
def evaluate(cfg, verbose=False):
    '''Run the k-fold protocol for every model in eval_models and window in eval_windows.'''
    cfg.require('output_dir')
    os.makedirs(cfg.output_dir, exist_ok=True)
    report = MetricsReport()
    for t_w in cfg.windows:
        ws = _dataset(cfg, t_w)
        for model in cfg.models:
            report.extend(evaluate_protocol(ws, model, cfg.folds, cfg.seed, cfg.train_config(verbose),
                                            cfg.split_mode, cfg.size_config(model), cfg.n_jobs, verbose))
    report.to_csv(os.path.join(cfg.output_dir, 'report.csv'))
    report.write_curves(cfg.output_dir)
    table = report.table()
    with open(os.path.join(cfg.output_dir, 'report.txt'), 'w') as fh:
        fh.write(table + '\n')
    with open(os.path.join(cfg.output_dir, 'report.html'), 'w') as fh:
        fh.write(get_html(report))
    click.echo(table)


@main.command()
@_command
def sweep(cfg, verbose=False):
    '''Threshold curve of a checkpoint over a window dataset.'''
    cfg.require('checkpoint', exists=True)
    cfg.require('output_dir')
    ckpt = load(cfg.checkpoint)
    t_w = int(ckpt.meta.get('t_w', cfg.t_w))
    ws = _dataset(cfg, t_w)
    x = ws.flat if ckpt.variant == 'logreg' else ws.features
    scores = predict_scores(ckpt.model(), ckpt.scaler().transform(x))
    curve = threshold_curve(scores, ws.labels)

    os.makedirs(cfg.output_dir, exist_ok=True)
    stem = os.path.join(cfg.output_dir, 'sweep_{}_tw{}'.format(ckpt.variant, t_w))
    curve.to_csv(stem + '.csv', index=False, float_format='%.6f', lineterminator='\n')
    fig, ax = plt.subplots(figsize=(6, 4))
    plotThresholdCurve({ckpt.variant: curve}, ax=ax, title='t_w = {} s'.format(t_w))
    fig.savefig(stem + '.png', bbox_inches='tight')
    plt.close(fig)

    best = curve.loc[curve['f1'].idxmax()]
    tau = ckpt.meta.get('threshold', cfg.threshold)
    _, (p, r, f1) = prf1(scores, ws.labels, tau)
    click.echo('best F1 {:.3f} at tau {:.2f}; at the stored tau {:.2f}: F1 {:.3f} precision {:.3f} recall {:.3f}'.format(
        best['f1'], best['tau'], tau, f1, p, r))


@main.command()
@_command
def infer(cfg, verbose=False):
    '''Stream `timestamp,x,y` lines (input file or stdin) to `timestamp,probability,label_at_tau`.'''
    cfg.require('checkpoint', exists=True)
    ckpt = load(cfg.checkpoint)
    if 't_w' in ckpt.meta:
        t_w = int(ckpt.meta['t_w'])
    else:
        t_w = cfg.t_w
        logger.warning('%s records no window length; using t_w=%d from the configuration', cfg.checkpoint, t_w)
    tau = ckpt.meta.get('threshold', cfg.threshold)
    if cfg.input and cfg.input != '-':
        cfg.require('input', exists=True)
        source = open(cfg.input)
    else:
        source = sys.stdin
    try:
        for emission in stream_infer(ckpt, parse_events(source), t_w, tau):
            click.echo(emission.line())
    finally:
        if source is not sys.stdin:
            source.close()
