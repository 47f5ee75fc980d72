"""Discrete inf-sup constants for a stable and an unstable stress space.

``beta`` is the smallest generalized singular value of the stacked
divergence and skew couplings, measured in the H(div) norm on stresses and
the L2 norm on displacements and rotations.  With the full linear stress
space it levels off; with Raviart-Thomas-type rows instead, too few stresses
remain to control the rotations and ``beta`` vanishes once the mesh has
interior faces.

Run with ``python3 demos/stability.py``.
"""

from elastweak.mesh import build_box_mesh
from elastweak.verify import infsup_for_mesh

print(" n   stable     rt-stress")
for n in (1, 2, 3):
    mesh = build_box_mesh(n)
    stable = infsup_for_mesh(mesh, r=0)
    weak = infsup_for_mesh(mesh, r=0, control="rt-stress")
    print(f"{n:2d}   {stable:.4f}    {weak:.2e}")
