"""Mixed finite elements for 3D linear elasticity with weakly imposed symmetry.

Stress in P_{r+1} Lambda^2(V) (H(div)-conforming), displacement in
P_r Lambda^3(V) and rotation multiplier in P_r Lambda^3(K), both
discontinuous.  Submodules:

polyform
    Polynomial vector-valued differential forms and the algebraic operators.
mesh
    Tetrahedral meshes, box generator and file input/output.
fespace
    Finite element spaces from moment degrees of freedom.
assembly
    Block system assembly.
solver
    Saddle-point solve, rank and inf-sup estimates.
verify
    Identity, commuting, exactness and convergence suites.
cli
    Command-line front end.
"""

from .assembly import MaterialParams, assemble_system, elasticity_spaces
from .fespace import FESpace, SpaceSpec, interpolate
from .mesh import MeshError, TetMesh, build_box_mesh, read_mesh_file
from .solver import SolverError, solve_saddle

__version__ = "0.1.0"

__all__ = ["FESpace", "MaterialParams", "MeshError", "SolverError", "SpaceSpec", "TetMesh",
           "assemble_system", "build_box_mesh", "elasticity_spaces", "interpolate",
           "read_mesh_file", "solve_saddle"]
