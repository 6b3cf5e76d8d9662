from .critical_region import CURVE_IDS, CSV_COLUMNS, CriticalCurve, solve_boundary_mu, region_classify
from .critical_region import t_boundary_mu, beta_grid, bound_lines, curve_crossings, write_curves_csv
