"""Brownian-bridge Monte Carlo kernels for magnetic Schrodinger semigroups.

Thin wrapper over the compiled extension; everything numerical lives in
`_fkmc`. The `run_experiment` entry point accepts the same JSON-style config
dicts the command-line tool consumes.
"""

from _fkmc import (  # noqa: F401
    ActionValue,
    BridgePath,
    GaussianFieldSpec,
    GridHamiltonian,
    ScalarPotentialSpec,
    SpectralDecomposition,
    TimeGrid,
    VectorPotentialSpec,
    __version__,
    action,
    averaged_kernel,
    build_grid_hamiltonian,
    constant_potential,
    decompose,
    diamagnetic_check,
    estimate_kernel,
    free_heat_kernel,
    harmonic_potential,
    heat_kernel,
    ito_line_integral,
    kato_kappa,
    l_t,
    landau_diagonal,
    mehler_kernel,
    poincare_gauge,
    projection_kernel,
    run_experiment,
    sample_bridge,
    sample_on_points,
    scalar_potential_from_json,
    sojourn_time,
    stratonovich_line_integral,
    time_integral,
    truncate,
    upsilon,
    zero_potential,
    zero_vector_potential,
)
