"""Approximate linear programming for the affine value-function model."""
from .closed_form import (DualCertificate, PreconditionError, closed_form_params, dual_certificate,
                          special_case_problems)
from .colgen import VARIANTS, ColgenResult, ColumnLimitError, column_generation, max_violation
from .columns import (Column, InitialColumnError, constraint_slack, extreme_columns,
                      initial_column, make_column)
from .feasibility import FeasibilityReport, check_feasibility
from .params import AlpParams
from .pricing import PricingResult, build_subproblem, price, price_exact, price_mip
from .reductions import lift, project_to_1d
from .tuning import Evaluation, TuningResult, breakpoints, tune_epsilon

__all__ = [
    "AlpParams", "ColgenResult", "Column", "ColumnLimitError", "DualCertificate", "Evaluation",
    "FeasibilityReport", "InitialColumnError", "PreconditionError", "PricingResult",
    "TuningResult", "VARIANTS", "breakpoints", "build_subproblem", "check_feasibility",
    "closed_form_params", "column_generation", "constraint_slack", "dual_certificate",
    "extreme_columns", "initial_column", "lift", "make_column", "max_violation", "price",
    "price_exact", "price_mip", "project_to_1d", "special_case_problems", "tune_epsilon",
]
