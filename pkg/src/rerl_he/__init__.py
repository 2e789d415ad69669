"""Encrypted policy synthesis for relative-entropy-regularized control.

The plaintext core lives in :mod:`rerl_he.mdp` and :mod:`rerl_he.rerl`, the
homomorphic layer in :mod:`rerl_he.he`, the encrypted iteration in
:mod:`rerl_he.encrypted` and the error bounds in :mod:`rerl_he.analysis`.
"""

from .analysis import (
    BoundParameters,
    ErrorReport,
    bound_parameters,
    compute_beta,
    err_metric,
    error_bound,
    verify_run,
)
from .encrypted import (
    EncryptedModel,
    IterationTrace,
    client_finish,
    encrypt_model,
    encrypted_step,
    run_encrypted_vi,
)
from .mdp import DeterministicMdp, GridWorldSpec, build_grid_world, validate_assumptions
from .rerl import (
    LinearSystem,
    bellman_fixed_point_oracle,
    build_linear_system,
    contractivity_check,
    desirability_to_value,
    encryption_friendly_iterate,
    reconstruct_policy,
    solve_direct,
    standard_min_vi,
    value_iterate,
)

__version__ = "0.1.0"
