"""Exclusion-process simulation with exact small-lattice oracles.

The package has three layers.  `core`, `ensembles`, and `dynamics` hold the
lattice, the initial laws, and the two simulation engines (event-driven and
the stirring arrow log).  `oracle` evolves the exact finite-state generators
and solves the exact transport problem, so every construction can be checked
against closed-form numbers on small tori.  `metrics` turns replica batches
into decay curves, variance checks, and duality comparisons; `cli` wraps the
common runs.
"""

from .core import (
    BOTH,
    OccupancyConfig,
    ResourceLimitError,
    SignedConfig,
    TorusLattice,
    TwoSpeciesConfig,
    make_rng,
    replica_rng,
)
from .ensembles import (
    Bernoulli,
    BlockFactor,
    DiffLawSpec,
    MarkovChain1d,
    block_xor,
    exact_difference_distribution,
    exact_state_distribution,
    measure_to_dict,
    pair_occupation_matrix,
    parse_measure,
)
from .dynamics import (
    Trajectory,
    gen_stirring,
    gillespie,
    light_cone_side,
    read_snapshot_stream,
    realize_sep,
    realize_two_species_free,
    stirring_content,
    stirring_position,
    thin_snapshots,
    thin_to_annihilation,
)
from .oracle import (
    Distribution,
    GeneratorMatrix,
    build_generator,
    evolve_exact,
    exact_wasserstein,
    total_variation,
    transition_matrix,
    two_particle_exclusion,
)
from .metrics import (
    DecayFit,
    EstimateSeries,
    dbar_bound_series,
    duality_check,
    estimate_discrepancy_density,
    fit_decay_exponent,
    state_distribution_comparison,
    theoretical_exponent,
    variance_bound_check,
)

__version__ = "0.1.0"

__all__ = [
    "BOTH",
    "Bernoulli",
    "BlockFactor",
    "DecayFit",
    "DiffLawSpec",
    "Distribution",
    "EstimateSeries",
    "GeneratorMatrix",
    "MarkovChain1d",
    "OccupancyConfig",
    "ResourceLimitError",
    "SignedConfig",
    "TorusLattice",
    "Trajectory",
    "TwoSpeciesConfig",
    "block_xor",
    "build_generator",
    "dbar_bound_series",
    "duality_check",
    "estimate_discrepancy_density",
    "evolve_exact",
    "exact_difference_distribution",
    "exact_state_distribution",
    "exact_wasserstein",
    "fit_decay_exponent",
    "gen_stirring",
    "gillespie",
    "light_cone_side",
    "make_rng",
    "measure_to_dict",
    "pair_occupation_matrix",
    "parse_measure",
    "read_snapshot_stream",
    "realize_sep",
    "realize_two_species_free",
    "replica_rng",
    "state_distribution_comparison",
    "stirring_content",
    "stirring_position",
    "theoretical_exponent",
    "thin_snapshots",
    "thin_to_annihilation",
    "total_variation",
    "transition_matrix",
    "two_particle_exclusion",
    "variance_bound_check",
]
