from .pure_cdt import TruncatedOperator, u_entry, u_tilde_entry, lambda_pure, principal_root, eigenvectors_pure
from .pure_cdt import row_sum_closed, row_sum_tail, build_truncated_U, z_n_truncated, z_n_enumerated
from .pure_cdt import free_energy_pure, spectral_report_pure, trace_ratio, hilbert_schmidt_sum, eigen_residuals
from .pure_cdt import gibbs_probability
from .ising_matrices import SmallMatrix, CmParams, QFamily, matrix_T, t_eigenvalues, t_region_holds, matrix_M
from .ising_matrices import cm_params, build_Q_family, q_spectrum, spectral_radius_Q, lambda_condition
from .ising_matrices import lambda_closed_forms, adjudicate_lambda, trace_KKT_closed, trace_KKT_printed
from .coupled import CoupledState, CoupledOperator, CoupledSpectralReport, InterfaceTransfer, enumerate_states
from .coupled import k_entry, interface_transfer, build_coupled_operator, xi_n_truncated, trace_KKT_direct
from .coupled import xi_lower_bound, xi_upper_bound, principal_eigenvalue_K, strip_marginal, limiting_marginal
