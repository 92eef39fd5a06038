from .pca import PcaBasis, ShiftReport, power_iteration, basis_from_activations, final_token_activations, \
    pca_basis, shift_from_activations, pca_shift, pca_shift_sweep, mean_shift
from .trajectories import MI_COLUMNS, find_instance, fresh_traces, count_masked_gains, mi_trace_rows, \
    mi_trajectory_export, load_mi_csv, weight_trajectory_summary, save_weight_trajectory, ablation_summary

__all__ = [
    'PcaBasis', 'ShiftReport', 'power_iteration', 'basis_from_activations', 'final_token_activations',
    'pca_basis', 'shift_from_activations', 'pca_shift', 'pca_shift_sweep', 'mean_shift',
    'MI_COLUMNS', 'find_instance', 'fresh_traces', 'count_masked_gains', 'mi_trace_rows',
    'mi_trajectory_export', 'load_mi_csv', 'weight_trajectory_summary', 'save_weight_trajectory',
    'ablation_summary',
]
