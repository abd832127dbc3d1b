"""Non-local transport distances and minimizing-movement flows for the fractional
porous medium equation on the periodic unit cube."""

__version__ = "0.1.0"

from .action import ActionValue, action, action_gradients, transport_estimate
from .estimators import FractionalKernel, JKOFlow, NonlocalTransport, SemidiscreteFlow, SpectralHeatFlow
from .grid import Grid, PairField, discrete_divergence, discrete_gradient, make_grid, mass, normalize, torus_distance
from .io import RunManifest, load_density, load_kernel, store_density, store_kernel
from .jko import JkoConfig, Trajectory, dissipation_check, jko_flow, jko_step, phi
from .kernel import (
    KernelConfig,
    KernelMatrix,
    apply_fractional_operator,
    comp_estimate_constant,
    fractional_constant,
    kernel_matrix,
    lattice_tail_bound,
    periodized_kernel,
)
from .means import (
    Nonlinearity,
    critical_exponent,
    entropy,
    fisher_information,
    theta,
    theta_partials,
    theta_second_partials,
    u_m,
    u_m_prime,
    u_m_second,
)
from .oracles import integrate_semidiscrete, semidiscrete_rhs, spectral_heat_flow, two_cell_distance
from .transport import (
    SolverConfig,
    TransportResult,
    geodesic_speed_profile,
    rescaling_check,
    restriction_check,
    solve_distance,
    speed_flatness,
    triangle_inequality_probe,
    w1_circle,
    w1_kantorovich,
)
