"""The algebraic operators behind the weak-symmetry construction.

Shows vect, Xi and the operator S on small exact inputs, then runs the full
identity suite in rational arithmetic.

Run with ``python3 demos/algebra.py``.
"""

from fractions import Fraction

import numpy as np

from elastweak.polyform import (V, PolyForm, S_op, cross_skew_check, matrix_from_proxy_2,
                                matrix_proxy_1, vect, xi)
from elastweak.verify import run_identity_suite

q = np.array([[0, -3, 2], [3, 0, -1], [-2, 1, 0]])
print("vect of a skew matrix:", list(vect(q)))

F = np.array([[Fraction(1), 2, 0], [0, Fraction(1, 2), 0], [3, 0, -1]], dtype=object)
print("Xi F = F^T - tr(F) I:\n", xi(F))

# S maps the 1-form proxy of F to the 2-form proxy of Xi F
image = matrix_from_proxy_2(S_op(matrix_proxy_1(F, V)))
print("S on proxies agrees with Xi:", image.entry(0, 2).evaluate([0, 0, 0]) == [xi(F)[0, 2]])

a = np.array([Fraction(1), 2, 3], dtype=object)
b = np.array([Fraction(-1), 0, 4], dtype=object)
left, right = cross_skew_check(a, b)
print("a x b =", list(left), "= -2 vect skw(a b^T) =", list(right))

report = run_identity_suite(seed=0, trials=20)
print("\n".join(report.lines()))
print(f"{report.seconds:.1f} s")
