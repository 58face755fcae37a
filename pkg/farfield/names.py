# Column and field names used throughout `farfield`. Constants since they do not change.
SCHEMA_VERSION = 1

# Per-sphere statistics
RADIUS = "r"
SUP_DEVIATION = "sup_dev"
GRAD_DEVIATION = "grad_dev"
HESS_DEVIATION = "hess_dev"
ENVELOPE = "envelope"
RATIO_PHI = "ratio_phi"
RATIO_PHI_TILDE = "ratio_phi_tilde"
SPHERE_MEAN = "mean"
SPHERE_MAX = "max"
SPHERE_MIN = "min"
HARNACK_RATIO = "harnack_ratio"
PUCCI_PLUS_DEFECT = "pucci_plus_defect"
PUCCI_MINUS_DEFECT = "pucci_minus_defect"
OFFSET = "offset"

# Exponent tables
LOWER = "lambda"
UPPER = "Lambda"
DIMENSION = "n"
ALPHA_PLUS = "alpha_plus"
ALPHA_MINUS = "alpha_minus"
ALPHA_STAR_HAT = "alpha_star_hat"
FIT_R2 = "fit_r2"

# Convergence tables
LEVEL = "level"
NODES = "nodes"
SPACING = "h"
SUP_ERROR = "sup_error"
ORDER = "order"

# Grid function export
X = "x"
Y = "y"
VALUE = "value"

# Sweep summaries
CASE = "case"
SCENARIO = "scenario"
PASSED = "passed"
CONFIG_HASH = "config_hash"
ERROR = "error"

# Solve reports
ITERATIONS = "iterations"
RESIDUAL = "residual"
POLICY_SWITCHES = "policy_switches"
WALL_MS = "wall_ms"


def ratio_column(order: int) -> str:
    """
    Args:
        order: Derivative order of the decay bound (0, 1 or 2).

    Returns:
        Name of the column containing the deviation / envelope ratio of the given order.
    """
    return f"ratio_{order}"


def envelope_column(order: int) -> str:
    """
    Returns:
        Name of the column containing the predicted envelope for the bound of the given order.
    """
    if order == 0:
        return ENVELOPE
    return f"{ENVELOPE}_{order}"


def schema_header(table: str) -> str:
    """
    Returns:
        Comment line written on top of every CSV artifact, naming the table and its schema version.
    """
    return f"# farfield {table} schema v{SCHEMA_VERSION}"
