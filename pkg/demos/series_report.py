"""
Exact series at the touch and in the deep book
==============================================

Coefficients come out as fractions when gamma is rational.
"""

from fractions import Fraction

from lobflow.exact import farfield_series, touch_coefficient_report, touch_series

g = Fraction(1)
print("touch series, gamma = 1:", touch_series(g, 4).coeffs)
# it stops after two terms: v = s (2 gamma - s) / 12 exactly

for name, row in touch_coefficient_report(g).items():
    if not isinstance(row, dict):
        continue
    print(f"{name:9s} recurrence {row['recurrence']!s:>6}  printed {row['printed']!s:>6}")

for g in (Fraction(0), Fraction(1, 2), Fraction(2)):
    print(f"deep book, gamma = {g}:", farfield_series(g, 5, v_inf=1).coeffs)
