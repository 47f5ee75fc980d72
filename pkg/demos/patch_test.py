"""Patch test: a linear stress field is reproduced exactly.

The displacement is the gradient of a cubic plus a rigid rotation, so the
stress is linear and the rotation constant.  Both lie in the lowest-order
spaces, hence the discrete solution matches them to roundoff.  The
displacement itself is quadratic and only its cellwise moments are captured.

Run with ``python3 demos/patch_test.py``.
"""

from elastweak.mesh import build_box_mesh
from elastweak.verify import manufactured_case, solve_case

case = manufactured_case("poly-linear", lam=3.0, mu=0.8)
print("u =", case.symbolic["u"].T)

for n in (1, 2, 3):
    _, report, err = solve_case(case, build_box_mesh(n), r=0)
    print(f"n={n}  stress error {err.err_sigma:.2e}  div error {err.err_div:.2e}  "
          f"rotation error {err.err_p:.2e}  displacement error {err.err_u:.2e}  "
          f"weak symmetry {report.weak_symmetry:.1e}")
