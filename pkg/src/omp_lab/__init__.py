"""Optimal state discrimination over noisy channels, twirling, and simulated tomography."""

from .channels import (
    KrausChannel,
    SuperOperator,
    UnitaryDesign,
    apply,
    bit_phase_flip,
    clifford_design,
    depolarizing,
    depolarizing_parameter,
    flip_ensemble,
    mix_with_state,
    tetrahedral_design,
    twirl,
    verify_two_design,
)
from .discrimination import (
    DiscriminationSolution,
    OmpReport,
    brute_force_two_state,
    extract_povm,
    helstrom_two_state,
    min_entropy,
    omp_check,
    predicted_guess_after_twirl,
    solve_dual,
    verify_certificate,
)
from .quantum import (
    BlochVector,
    DensityMatrix,
    Ensemble,
    HermitianOperator,
    Povm,
    bloch_to_density,
    born_probability,
    density_to_bloch,
    trace_norm,
)

__version__ = "0.1.0"
