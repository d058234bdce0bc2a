"""
Dataset validation and the log transformation of sample and area frame.

The guards encode when every full conditional of the Gibbs sampler is proper:
m >= 3 (the random-effect precision has Gamma shape m/2 - 1) and n >= q + 3.
"""
import logging
from dataclasses import replace
from typing import Optional, Sequence, Tuple

import numpy as np

from preprocess.data_types import AreaFrame, Dataset, ModelSpec, UnitRecord, make_dataset
from preprocess.errors import AreaMismatch, EmptyData, NonFiniteValue, NonPositiveValue, \
    RankDeficientDesign, TooFewAreas, TooFewUnits

logger = logging.getLogger(__name__)

MIN_AREAS = 3
EXTRA_UNITS = 3


def _full_column_rank(X: np.ndarray) -> bool:
    """Rank check through a Cholesky factorization of the scaled cross-product."""
    scale = np.sqrt(np.sum(X * X, axis=0))
    if np.any(scale == 0):
        return False
    Xs = X / scale
    gram = Xs.T @ Xs
    try:
        L = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        return False
    # a numerically singular Gram matrix can still factor; reject tiny pivots
    return bool(np.min(np.diag(L)) > 1e-7)


def validate_dataset(records: Sequence[UnitRecord], area_frame: AreaFrame,
                     spec: Optional[ModelSpec] = None, covariate_names: Sequence[str] = (),
                     allow_unsampled: bool = False) -> Tuple[Dataset, AreaFrame]:
    """Check raw records against the area frame and index them.

    Args:
        records: sampled units, in input order.
        area_frame: population information; must cover exactly the sampled areas unless
            ``allow_unsampled`` is set, in which case extra frame areas enter with n_i = 0.
        spec: model settings, validated as well when given.
        covariate_names: labels of the q covariate columns.

    Returns:
        (Dataset, AreaFrame reordered to the dataset's area order).
    """
    if spec is not None:
        spec.validate()
    records = list(records)
    if not records:
        raise EmptyData('no unit records')
    q = len(records[0].x)
    for k, rec in enumerate(records):
        if len(rec.x) != q:
            raise RankDeficientDesign(f'record {k} has {len(rec.x)} covariates, expected {q}')
        if not (np.isfinite(rec.y) and np.all(np.isfinite(rec.x))):
            raise NonFiniteValue(f'record {k} (area {rec.area_id}) has a non-finite value')
    if area_frame.q != q:
        raise AreaMismatch(f'area frame has {area_frame.q} covariate means, units have {q}')

    sampled = list(dict.fromkeys(rec.area_id for rec in records))
    frame_ids = set(area_frame.area_ids)
    missing = [a for a in sampled if a not in frame_ids]
    if missing:
        raise AreaMismatch(f'areas {missing} have sampled units but no area frame entry')
    extra = [a for a in area_frame.area_ids if a not in set(sampled)]
    if extra and not allow_unsampled:
        raise AreaMismatch(f'area frame lists areas {extra} without sampled units')
    area_ids = sampled + extra

    if len(area_ids) < MIN_AREAS:
        raise TooFewAreas(f'{len(area_ids)} areas, at least {MIN_AREAS} are required')
    if len(records) < q + EXTRA_UNITS:
        raise TooFewUnits(f'{len(records)} units for {q} covariates, '
                          f'at least {q + EXTRA_UNITS} are required')

    dataset = make_dataset(records, area_ids, covariate_names=covariate_names)
    if not _full_column_rank(dataset.X):
        raise RankDeficientDesign(f'the {dataset.n}x{q} design matrix is rank deficient')

    frame = area_frame.reindex(area_ids)
    too_small = [a for a, N, n in zip(area_ids, frame.N, dataset.n_i) if N < n]
    if too_small:
        raise AreaMismatch(f'areas {too_small} have more sampled units than population units')
    if dataset.m < q + 3:
        logger.warning(f'Only {dataset.m} areas for {q} covariates: the posterior of the random '
                       f'effect variance has no finite mean and may be improper')
    if extra:
        logger.info(f'{len(extra)} areas without sampled units are predicted from the prior')
    return dataset, frame


def log_transform_dataset(dataset: Dataset, area_frame: AreaFrame,
                          intercept: bool = True) -> Tuple[Dataset, AreaFrame]:
    """Log response and log covariates (the intercept column is left alone).

    Area covariate means are logged unless the frame already carries means of logs.
    """
    if dataset.log_transformed:
        raise NonPositiveValue('dataset is already on the log scale')
    start = 1 if intercept else 0
    if np.any(dataset.y <= 0):
        raise NonPositiveValue('log transform needs every response > 0')
    if np.any(dataset.X[:, start:] <= 0):
        raise NonPositiveValue('log transform needs every covariate > 0')
    records = []
    for rec in dataset.records:
        x = tuple(rec.x[:start]) + tuple(float(np.log(v)) for v in rec.x[start:])
        records.append(UnitRecord(area_id=rec.area_id, y=float(np.log(rec.y)), x=x))
    names = list(dataset.covariate_names)
    names = names[:start] + [f'log_{c}' for c in names[start:]]
    transformed = make_dataset(records, dataset.area_ids, covariate_names=names,
                               log_transformed=True)

    if area_frame.xbar_log_scale:
        frame = area_frame
    else:
        if np.any(area_frame.xbar[:, start:] <= 0):
            raise NonPositiveValue('log transform needs positive area covariate means')
        logger.warning('Area covariate means are arithmetic means; using log(mean) in place of '
                       'the mean of logs')
        xbar = area_frame.xbar.copy()
        xbar[:, start:] = np.log(xbar[:, start:])
        frame = replace(area_frame, xbar=xbar, xbar_log_scale=True)
    return transformed, frame
