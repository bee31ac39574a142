"""Sign-stability analysis of nonlinear networked dynamical systems.

Typical use::

    from signstab import DynamicsSpec, Region, sign_stability_verdict

    dyn = DynamicsSpec.from_strings(["-x1 - x1*x2", "x1^2 - x2 - x2*x3", "x2^2 - x3"])
    report = sign_stability_verdict(dyn, Region.box(3, -0.9, 3, t=(0, 10)))
    report.verdict  # True
"""

from signstab.delay import delay_robust_rates, interaction_bound, lti_nyquist_margin
from signstab.expr import (
    EvaluationError,
    ParseError,
    differentiate,
    evaluate,
    is_identically_zero,
    parse_expression,
    simplify,
    total_time_derivative,
)
from signstab.graph import (
    build_network,
    check_condition_i,
    decompose_chains,
    feedback_neighbors,
    find_long_cycles,
)
from signstab.kernels import BACKEND
from signstab.metric import (
    BlockMetric,
    DiagonalMetric,
    assemble_cascade_report,
    build_chain_metric,
    check_block_compatibility,
    check_block_condition_ii,
)
from signstab.model import DelaySpec, DynamicsSpec, Region, load_model
from signstab.sim import contraction_rate, fast_asymmetry_sweep, integrate, integrate_delayed
from signstab.verify import (
    averaged_jacobian_check,
    check_condition_ii,
    check_lmi,
    sign_stability_verdict,
)

__all__ = [
    "BACKEND", "BlockMetric", "DelaySpec", "DiagonalMetric", "DynamicsSpec", "EvaluationError",
    "ParseError", "Region", "assemble_cascade_report", "averaged_jacobian_check",
    "build_chain_metric", "build_network", "check_block_compatibility", "check_block_condition_ii",
    "check_condition_i", "check_condition_ii", "check_lmi", "contraction_rate", "decompose_chains",
    "delay_robust_rates", "differentiate", "evaluate", "fast_asymmetry_sweep", "feedback_neighbors",
    "find_long_cycles", "integrate", "integrate_delayed", "interaction_bound", "is_identically_zero",
    "load_model", "lti_nyquist_margin", "parse_expression", "sign_stability_verdict", "simplify",
    "total_time_derivative",
]

__version__ = "0.1.0"
