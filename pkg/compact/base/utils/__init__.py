from .criterions import LossConfig, BranchLossReport, FusedDistillLoss, sft_loss, answer_distribution, \
    answer_log_distribution, answer_divergence, mcon_loss, branch_terms, branch_loss, fused_loss
from .visualization import plot_mi_trajectory, plot_weight_trajectory, plot_pca_scatter, plot_attention_graph


__all__ = [
    'LossConfig', 'BranchLossReport', 'FusedDistillLoss', 'sft_loss', 'answer_distribution',
    'answer_log_distribution', 'answer_divergence', 'mcon_loss', 'branch_terms', 'branch_loss', 'fused_loss',
    'plot_mi_trajectory', 'plot_weight_trajectory', 'plot_pca_scatter', 'plot_attention_graph',
]
