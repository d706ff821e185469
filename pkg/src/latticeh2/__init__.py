"""H2 performance of spatially invariant consensus and integral control on toric lattices."""

__version__ = "0.1.0"

from .densities import (Controller, Output, SystemSpec, VarianceReport, density_dapi, density_static, is_stable,
                        per_site_variance, phi)
from .errors import *  # noqa: F401,F403
from .lattice import (FeedbackArray, Kind, LatticeShape, absolute_kernel, circulant_matrix, convolve,
                      kernel_from_dict, kernel_to_dict, load_kernel, make_feedback_array, nearest_neighbor_kernel,
                      window_kernel)
from .oracle import (StateSpace, build_full_system, deflate, h2_per_site, per_theta_block_h2, per_theta_variance,
                     solve_lyapunov)
from .scaling import (ScalingFit, Strategy, SweepRow, TuneReference, comm_window, fit_exponent, lemma5_check,
                      sweep_variance, tune, tuned_spec)
from .sim import (GraphSystem, InputMode, Platoon, Trajectory, empirical_variance, load_graph, output_energy,
                  parse_graph, platoon_system, simulate_sde)
from .spectral import ThetaGrid, asymptote_bounds, dft_grid, local_error_symbol, symbol
