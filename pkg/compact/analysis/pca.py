"""
以未蒸馏学生的探针激活构造 PCA 基, 度量蒸馏前后激活质心在该基上的漂移
"""
import logging
from dataclasses import dataclass

import numpy as np
import torch

from compact.exceptions import DatasetError, ShapeError
from compact.utils import derive_seed

logger = logging.getLogger(__name__)

PCA_ITERS = 200
PCA_TOL = 1e-10


@dataclass
class PcaBasis:
    """
    :param mean: [d_model]
    :param components: [2, d_model], 行正交归一
    :param explained_variance: [2]
    :param total_variance: 协方差的迹
    """
    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    total_variance: float
    layer: int
    d_model: int
    n_layers: int

    @property
    def explained_ratio(self):
        if self.total_variance <= 0:
            return np.zeros_like(self.explained_variance)
        return self.explained_variance / self.total_variance

    def project(self, acts):
        acts = np.asarray(acts, dtype=np.float64)
        if acts.ndim != 2 or acts.shape[1] != self.d_model:
            raise ShapeError('project: activations {} do not match d_model {}'.format(acts.shape, self.d_model))
        return (acts - self.mean) @ self.components.T


@dataclass
class ShiftReport:
    layer: int
    shift: float
    centroid_before: np.ndarray
    centroid_after: np.ndarray


def power_iteration(cov, n_components=2, iters=PCA_ITERS, tol=PCA_TOL, seed=0):
    """
    带 deflation 的幂迭代, 求对称半正定矩阵的前 n 个特征对
    :return: (eigenvalues [n], eigenvectors [n, d])
    """
    cov = np.array(cov, dtype=np.float64)
    d = cov.shape[0]
    if cov.ndim != 2 or cov.shape[1] != d:
        raise ShapeError('power_iteration: expected a square matrix, got {}'.format(cov.shape))
    if n_components > d:
        raise ShapeError('power_iteration: {} components requested from dimension {}'.format(n_components, d))
    rng = np.random.default_rng(derive_seed(seed, 'pca'))
    values, vectors = [], []
    work = cov.copy()
    for _ in range(n_components):
        v = rng.standard_normal(d)
        for u in vectors:
            v -= (v @ u) * u
        v /= np.linalg.norm(v)
        for _ in range(iters):
            w = work @ v
            for u in vectors:
                w -= (w @ u) * u
            norm = np.linalg.norm(w)
            if norm < 1e-300:
                # remaining spectrum is zero, v is already orthogonal to previous components
                break
            w /= norm
            if np.linalg.norm(w - v) < tol:
                v = w
                break
            v = w
        lam = float(v @ cov @ v)
        values.append(max(lam, 0.))
        vectors.append(v)
        work = work - lam * np.outer(v, v)
    return np.asarray(values), np.stack(vectors)


def basis_from_activations(acts, layer=0, n_layers=1, iters=PCA_ITERS, tol=PCA_TOL):
    acts = np.asarray(acts, dtype=np.float64)
    if acts.ndim != 2:
        raise ShapeError('pca_basis: expected [N, d_model] activations, got {}'.format(acts.shape))
    if acts.shape[0] < 3:
        raise DatasetError('pca_basis needs at least 3 probe sequences, got {}'.format(acts.shape[0]))
    mean = acts.mean(axis=0)
    centered = acts - mean
    cov = centered.T @ centered / acts.shape[0]
    values, vectors = power_iteration(cov, 2, iters, tol)
    return PcaBasis(mean=mean, components=vectors, explained_variance=values, total_variance=float(np.trace(cov)),
                    layer=layer, d_model=acts.shape[1], n_layers=n_layers)


@torch.no_grad()
def final_token_activations(model, corpus, layer):
    """
    每条探针序列最后一个 token 在第 ``layer`` 个 block 输出处的激活
    :return: [N, d_model]
    """
    n_layers = model.config.n_layers
    if not 0 <= layer < n_layers:
        raise ShapeError('layer {} outside [0, {})'.format(layer, n_layers))
    rows = [model(seq, capture_all_layers=True).all_layer_states[layer, -1].numpy() for seq in corpus]
    return np.stack(rows) if rows else np.zeros((0, model.config.d_model))


def pca_basis(model, probe_corpus, layer, iters=PCA_ITERS, tol=PCA_TOL):
    corpus = list(probe_corpus)
    if len(corpus) < 3:
        raise DatasetError('pca_basis needs at least 3 probe sequences, got {}'.format(len(corpus)))
    acts = final_token_activations(model, corpus, layer)
    basis = basis_from_activations(acts, layer, model.config.n_layers, iters, tol)
    logger.debug('layer %d basis explains %s of the variance', layer, np.round(basis.explained_ratio, 4))
    return basis


def shift_from_activations(basis: PcaBasis, before, after, full_space=False):
    """
    质心在 2 维投影空间中的欧氏距离, ``full_space`` 时在 d_model 空间中计算
    """
    c0 = basis.project(before).mean(axis=0)
    c1 = basis.project(after).mean(axis=0)
    if full_space:
        shift = float(np.linalg.norm(np.asarray(after).mean(axis=0) - np.asarray(before).mean(axis=0)))
    else:
        shift = float(np.linalg.norm(c1 - c0))
    return ShiftReport(layer=basis.layer, shift=shift, centroid_before=c0, centroid_after=c1)


def _check_model(basis, model, which):
    cfg = model.config
    if cfg.d_model != basis.d_model or cfg.n_layers != basis.n_layers:
        raise ShapeError('{}: model has d_model={} n_layers={}, basis expects d_model={} n_layers={}'.format(
            which, cfg.d_model, cfg.n_layers, basis.d_model, basis.n_layers))


def pca_shift(basis: PcaBasis, model_before, model_after, probe_corpus, layer=None, full_space=False):
    layer = basis.layer if layer is None else layer
    _check_model(basis, model_before, 'model_before')
    _check_model(basis, model_after, 'model_after')
    corpus = list(probe_corpus)
    before = final_token_activations(model_before, corpus, layer)
    after = final_token_activations(model_after, corpus, layer)
    return shift_from_activations(basis, before, after, full_space)


def pca_shift_sweep(model_before, model_after, probe_corpus, layers=None, basis_corpus=None, full_space=False):
    """
    逐层构造 PCA 基并计算漂移
    :return: ShiftReport 列表, 每层一个
    """
    corpus = list(probe_corpus)
    basis_corpus = corpus if basis_corpus is None else list(basis_corpus)
    layers = range(model_before.config.n_layers) if layers is None else layers
    reports = []
    for layer in layers:
        basis = pca_basis(model_before, basis_corpus, layer)
        reports.append(pca_shift(basis, model_before, model_after, corpus, layer, full_space))
        logger.info('layer %d shift %.6g', layer, reports[-1].shift)
    return reports


def mean_shift(reports):
    return float(np.mean([r.shift for r in reports])) if reports else 0.
