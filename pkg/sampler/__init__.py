from .chain import ChainConfig, ChainSummary, transition_row, transition_entry, kernel_matrix
from .chain import stationary_pi, stationary_tail, mean_width, tv_distance, run_chain
