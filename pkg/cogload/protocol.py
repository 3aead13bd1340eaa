'''
Evaluation protocol: k disjoint test folds, a fresh model per fold trained
with validation-loss model selection, a validation-chosen decision
threshold and test metrics aggregated as mean and standard deviation.
'''

import logging
from dataclasses import dataclass, replace

import numpy as np
from joblib import Parallel, delayed
from tqdm import tqdm

from .checkpoint import Checkpoint
from .errors import CogloadError, DataError, LeakageError
from .features import fit_scaler, split_dataset
from .metrics import MetricsReport, prf1, select_threshold, threshold_curve
from .model import TrainConfig, build_model, predict_scores, train

logger = logging.getLogger(__name__)

SPLIT_MODES = ('window', 'participant')


@dataclass
class FoldResult:
    fold: int
    metrics: tuple
    threshold: float
    counts: object
    test_scores: np.ndarray
    test_labels: np.ndarray
    checkpoint: Checkpoint


def _inputs(dataset, variant):
    return dataset.flat if variant == 'logreg' else dataset.features


def _check_disjoint(split):
    for a, b in (('train', 'val'), ('train', 'test'), ('val', 'test')):
        shared = np.intersect1d(getattr(split, a), getattr(split, b))
        if shared.size:
            raise LeakageError('{} windows shared by the {} and {} splits (first: {})'.format(
                shared.size, a, b, shared[0]))


def run_fold(dataset, variant, split, fold, cfg, size=None):
    '''
    Train and evaluate one fold.

    The feature scaler is fitted on the fold's training windows only; the
    threshold is chosen on its validation windows.
    '''
    x = _inputs(dataset, variant)
    y = dataset.labels
    _check_disjoint(split)
    scaler = fit_scaler(x[split.train])
    x_tr, x_va, x_te = (scaler.transform(x[idx]) for idx in (split.train, split.val, split.test))

    fold_cfg = replace(cfg, seed=cfg.seed + fold)
    model = build_model(variant, size, seed=fold_cfg.seed)
    result = train(model, (x_tr, y[split.train]), (x_va, y[split.val]), fold_cfg)

    tau = select_threshold(predict_scores(result.model, x_va), y[split.val])
    scores = predict_scores(result.model, x_te)
    counts, metrics = prf1(scores, y[split.test], tau)
    logger.info('%s t_w=%d fold %d: F1 %.3f (precision %.3f, recall %.3f) at tau %.2f, epoch %d',
                variant, dataset.t_w, fold, metrics[2], metrics[0], metrics[1], tau, result.epoch)

    meta = dict(result.meta, threshold=tau, t_w=dataset.t_w, fold=fold)
    ckpt = Checkpoint.from_model(result.model, scaler, meta)
    return FoldResult(fold, metrics, tau, counts, scores, y[split.test], ckpt)


def _safe_fold(dataset, variant, split, fold, cfg, size):
    try:
        return run_fold(dataset, variant, split, fold, cfg, size)
    except (CogloadError, ValueError, FloatingPointError) as err:
        return err


def make_splits(dataset, folds, seed, split_mode='window'):
    if split_mode not in SPLIT_MODES:
        raise DataError('unknown split mode {!r}, expected one of {}'.format(split_mode, SPLIT_MODES))
    groups = dataset.participant if split_mode == 'participant' else None
    return split_dataset(len(dataset), folds, seed, groups=groups)


def evaluate_protocol(dataset, variant, folds=5, seed=0, cfg=None, split_mode='window', size=None,
                      n_jobs=1, verbose=False):
    '''
    Full protocol for one model on one window length.

    Parameters
    ----------
    dataset : WindowSet (unscaled)
    variant : 'lstm', 'hyperlstm', 'mhyperlstm' or 'logreg'
    folds : number of disjoint test folds
    split_mode : 'window' (random windows) or 'participant' (held-out participants)
    n_jobs : folds trained in parallel with joblib

    Return
    ------
    MetricsReport with one row per fold and the F1-threshold curve over the
    pooled test windows of the successful folds
    '''
    cfg = cfg or TrainConfig(seed=seed)
    splits = make_splits(dataset, folds, seed, split_mode)
    results = Parallel(n_jobs=n_jobs)(
        delayed(_safe_fold)(dataset, variant, split, i, cfg, size)
        for i, split in enumerate(tqdm(splits, desc='{} t_w={}'.format(variant, dataset.t_w),
                                       disable=not verbose)))

    report = MetricsReport()
    ok = []
    for i, res in enumerate(results):
        if isinstance(res, Exception):
            logger.warning('%s t_w=%d fold %d failed: %s: %s', variant, dataset.t_w, i, type(res).__name__, res)
            report.add_fold(variant, dataset.t_w, i, error='{}: {}'.format(type(res).__name__, res))
            continue
        report.add_fold(variant, dataset.t_w, i, res.metrics, res.threshold)
        ok.append(res)
    if ok:
        scores = np.concatenate([r.test_scores for r in ok])
        labels = np.concatenate([r.test_labels for r in ok])
        report.add_curve('{}_tw{}'.format(variant, dataset.t_w), threshold_curve(scores, labels))
    return report
