# 图表统一保存为 svg, 与 CSV 同名
import logging

import numpy as np
import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt
import seaborn as sns

logger = logging.getLogger(__name__)


def _style():
    sns.set_style('darkgrid')
    sns.set_palette('muted')
    sns.set_context("notebook", font_scale=1., rc={"lines.linewidth": 2.})


def _save(fig, output_dir):
    fig.savefig(output_dir, format='svg', bbox_inches='tight')
    plt.close(fig)
    logger.info('%s saved', output_dir)
    return output_dir


def plot_mi_trajectory(series, output_dir, title=''):
    """
    绘制每个教师的 I_proxy 随 rationale 位置的变化, 并标注思考词上的正增益
    :param series: (teacher_id, tokens, i_proxy, peaks) 列表
    :param output_dir: 输出路径, 包括文件名以及后缀
    """
    _style()
    longest = max(len(s[1]) for s in series)
    fig, axes = plt.subplots(len(series), 1, figsize=(max(8, 0.22 * longest), 2.6 * len(series)), squeeze=False)
    for ax, (tid, tokens, i_proxy, peaks) in zip(axes[:, 0], series):
        t = np.arange(len(i_proxy))
        ax.plot(t, i_proxy, marker='.')
        for p in peaks:
            ax.annotate(tokens[p], (p, i_proxy[p]), textcoords='offset points', xytext=(0, 6),
                        ha='center', color='crimson')
            ax.axvline(p, color='crimson', alpha=0.3)
        ax.set_ylabel(tid)
        ax.set_xticks(t)
        ax.set_xticklabels(tokens, rotation=90, fontsize=6)
    if title:
        axes[0, 0].set_title(title)
    return _save(fig, output_dir)


def plot_weight_trajectory(epochs, means, teacher_ids, output_dir):
    """
    每个教师按 epoch 的平均 alpha
    :param means: [n_epochs, K]
    """
    _style()
    fig = plt.figure(figsize=(8, 5))
    ax = fig.add_subplot(111)
    means = np.asarray(means)
    for k, tid in enumerate(teacher_ids):
        ax.plot(epochs, means[:, k], marker='o', label=tid)
    ax.set_xlabel('epoch')
    ax.set_ylabel('mean alpha')
    ax.legend()
    return _save(fig, output_dir)


def plot_pca_scatter(before, after, output_dir, centroids=None):
    """
    蒸馏前后探针激活在 PCA 平面上的投影
    :param before: [N, 2]
    :param after: [N, 2]
    """
    _style()
    fig = plt.figure(figsize=(7, 7))
    ax = fig.add_subplot(111, aspect='equal')
    ax.scatter(before[:, 0], before[:, 1], s=18, alpha=0.7, label='before')
    ax.scatter(after[:, 0], after[:, 1], s=18, alpha=0.7, label='after')
    if centroids is not None:
        c0, c1 = centroids
        ax.plot([c0[0], c1[0]], [c0[1], c1[1]], color='k', marker='x')
    ax.axis('tight')
    ax.legend()
    return _save(fig, output_dir)


def plot_attention_graph(attention, teacher_ids, output_dir):
    """
    rationale 之间注意力图的热力图
    """
    _style()
    fig = plt.figure(figsize=(5, 5))
    ax = fig.add_subplot(111)
    sns.heatmap(np.asarray(attention), annot=True, cmap='Blues', xticklabels=teacher_ids,
                yticklabels=teacher_ids, ax=ax)
    return _save(fig, output_dir)
