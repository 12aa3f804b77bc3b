"""Fourier-side homogeneous Boltzmann equation with fractional diffusion.

Maxwellian-molecule kernels (``kernel``), radial characteristic functions
(``charfn``), the Bobylev collision operator (``collision``), time stepping and
estimate monitors (``evolve``), real-space densities (``realspace``) and the
experiment harness (``cli``).
"""

from .charfn import (BKW, Delta, Gaussian, Mixture, RadialCharFn, RadialGrid, Stable,
                     constant_one, dis_metric, make_charfn, norm_kalpha, norm_malpha)
from .evolve import (SolverConfig, apriori_check, growth_monitor, holder_time_check,
                     nonexistence_probe, picard_solve_cutoff, solve_noncutoff,
                     stability_compare)
from .kernel import (c_const, constant, kernel_moments, power_law, tabulated, truncate)
from .realspace import invert_charfn, stable_density

__version__ = "0.1.0"

__all__ = [
    "BKW", "Delta", "Gaussian", "Mixture", "RadialCharFn", "RadialGrid", "SolverConfig",
    "Stable", "apriori_check", "c_const", "constant", "constant_one", "dis_metric",
    "growth_monitor", "holder_time_check", "invert_charfn", "kernel_moments", "make_charfn",
    "nonexistence_probe", "norm_kalpha", "norm_malpha", "picard_solve_cutoff", "power_law",
    "solve_noncutoff", "stability_compare", "stable_density", "tabulated", "truncate",
]
