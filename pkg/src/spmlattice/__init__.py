"""Stochastic porous-media lattice equations: simulation and random-attractor checks."""

from spmlattice.lattice import (
    LatticeVector,
    SiteSequence,
    apply_A,
    apply_B,
    apply_Bstar,
    inner_product,
    norm_l1,
    norm_l2,
    norm_lp,
)
from spmlattice.nonlinearity import (
    ConditionReport,
    PhiSpec,
    phi_eval,
    phi_prime,
    suggested_constants,
    verify_growth,
    verify_monotonicity,
)
from spmlattice.noise import (
    OUPath,
    WienerPath,
    ou_path,
    sample_wiener,
    shift,
    temperedness_diag,
)
from spmlattice.dynamics import (
    EnergyReport,
    ModelParams,
    Trajectory,
    check_continuous_dependence,
    cocycle,
    energy_report,
    integrate,
    rhs,
)
from spmlattice.attractor import (
    AbsorbingRadius,
    AttractorReport,
    absorbing_radius,
    absorption_experiment,
    hausdorff_semidistance,
    nullity_experiment,
    pullback_attraction,
    tail_energy,
    temperedness_of_R,
)

__version__ = "0.1.0"
