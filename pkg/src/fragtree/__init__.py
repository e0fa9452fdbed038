"""Self-similar fragmentation processes, their genealogy trees, and height encodings."""

from .dislocation import (
    BinaryDensity,
    DiscreteAtoms,
    DislocationMeasure,
    ExponentReport,
    MeasureConstants,
    StableTree,
    Truncated,
    constants,
    grind,
    load_measure,
    measure_from_spec,
    phi_sigma,
    phi_xi,
    sample_stable_split,
    save_measure,
    tagged_exponent,
)
from .engine import (
    FragmentationTrace,
    dust_mass,
    load_trace,
    ranked_masses,
    save_trace,
    simulate_homogeneous,
    simulate_self_similar,
    simulate_tagged_death_times,
    tagged_log_masses,
    tagged_subordinator_path,
    time_change,
)
from .errors import ConfigError, FragtreeError, InvariantViolation, ParseError, ValidationError
from .genealogy import (
    EdgeTree,
    build_marginal_tree,
    merge,
    parse_newick,
    rebase_root_edge,
    spanned_subtree,
    stick_breaking_extend,
)
from .height import (
    HeightSample,
    PlanarTree,
    interval_fragmentation,
    leaf_positions,
    randomize_orders,
    ranked_lengths_equal_masses,
    reverse_orders,
)
from .partitions import (
    RankedMassSequence,
    RestrictedPartition,
    intersect,
    paintbox_restricted,
    restrict,
    size_biased_block,
)

__version__ = "0.1.0"
