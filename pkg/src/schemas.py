# CSV column layouts for every file the runners write or read

CURVE_COLUMNS = ["T", "discount_factor", "zero_yield"]

PATH_DUMP_COLUMNS = ["path_id", "date", "r", "int_r"]

PORTFOLIO_COLUMNS = ["sign", "notional", "fixed_rate", "maturity", "start", "frequency"]

EE_COLUMNS = ["t", "EE_exact", "EE_approx", "rel_err"]

EE_SWEEP_COLUMNS = ["N", "eps_ee", "exact_valuations_per_date"]

SENS_COLUMNS = ["t", "i", "d", "psi_exact", "psi_full", "psi_low"]

REL_ERR_COLUMNS = ["t", "i", "method", "rel_err"]

BOUND_COLUMNS = [
    "t", "i", "d", "C1", "C2_fd", "eps0", "eps_i", "delta0", "delta_i",
    "bound", "observed", "holds", "df_term_fd", "df_term_decomposition",
]

BOUNDARY_COLUMNS = ["S", "r_star"]

NODE_COLUMNS = ["node", "weight"]

CVA_COLUMNS = ["method", "value", "std_error"]

COST_COLUMNS = ["method", "d", "exact_valuations_per_date", "share_of_full_order"]
