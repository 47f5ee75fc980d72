"""Convergence of the lowest-order method on a smooth solution.

Every error should shrink at least in proportion to h.  The levels stop at
n = 6 so the script finishes in about a minute; the test suite uses n = 2, 4, 8.
On meshes this coarse the stress error still carries a second-order part
and decays faster than h.

Run with ``python3 demos/convergence.py [lambda]``.
"""

import sys

from elastweak.verify import convergence_study, manufactured_case

lam = float(sys.argv[1]) if len(sys.argv) > 1 else 1.0
table = convergence_study(manufactured_case("trig", lam=lam), r=0, sizes=[2, 4, 6])
print(table.to_csv())

# stress grows with lambda for this solution (its divergence is nonzero),
# so absolute errors scale with lambda while the rates stay near one
for name, rate in table.rates().items():
    print(f"{name:>6}: rate {rate:.2f}")
