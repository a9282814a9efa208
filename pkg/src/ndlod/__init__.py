"""Multiscale finite element solver for second-order elliptic problems in
nondivergence form with rough diffusion and drift coefficients.

The solver targets the gradient of the solution through a stabilized
symmetric formulation on a tangential-trace vector space, builds a
problem-adapted coarse basis by localized orthogonal decomposition over the
facet-flux quantities of interest, and restores higher-order convergence
rates through load-driven fine-scale corrections.
"""

from .coeffs import (CellField, CoeffSet, CordesReport, Parabola, check_cordes,
                     ellipticity_bounds, gamma, generate_field,
                     read_coeff_file, write_coeff_file)
from .lod import (Discretization, MultiscaleBasis, MultiscaleSolution,
                  build_basis, corrector_K, corrector_Q, multiscale_solve,
                  postprocess, solve_multiscale, strip_coarse_fluxes)
from .mesh import MeshHierarchy, Patch, TriMesh, build_initial_mesh, build_patch, refine_uniform
from .recovery import ScalarPoissonSpace, recover_u

__all__ = [
    "CellField", "CoeffSet", "CordesReport", "Parabola", "check_cordes",
    "ellipticity_bounds", "gamma", "generate_field", "read_coeff_file",
    "write_coeff_file", "Discretization", "MultiscaleBasis",
    "MultiscaleSolution", "build_basis", "corrector_K", "corrector_Q",
    "multiscale_solve", "postprocess", "solve_multiscale",
    "strip_coarse_fluxes", "MeshHierarchy", "Patch", "TriMesh",
    "build_initial_mesh", "build_patch", "refine_uniform",
    "ScalarPoissonSpace", "recover_u",
]

__version__ = "0.1.0"
