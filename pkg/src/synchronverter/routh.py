"""Exact characteristic polynomials and Routh tables.

This is an eigenvalue-free stability test used to cross-check the
eigenvalue routine. Floats are converted to :class:`fractions.Fraction`
exactly, so no rounding enters the table.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction


def characteristic_polynomial(matrix) -> list[Fraction]:
    """Coefficients of ``det(s I - A)``, highest power first (leading 1).

    Uses the Faddeev-LeVerrier recursion in exact rational arithmetic.
    """
    A = [[Fraction(float(v)) for v in row] for row in matrix]
    n = len(A)
    if any(len(row) != n for row in A):
        raise ValueError("matrix must be square")
    coeffs = [Fraction(1)]
    M = [[Fraction(0)] * n for _ in range(n)]
    c = Fraction(1)
    for k in range(1, n + 1):
        # M_k = A M_{k-1} + c_{n-k+1} I
        AM = [[sum(A[i][l] * M[l][j] for l in range(n)) for j in range(n)] for i in range(n)]
        M = [[AM[i][j] + (c if i == j else 0) for j in range(n)] for i in range(n)]
        trace = sum(sum(A[i][l] * M[l][i] for l in range(n)) for i in range(n))
        c = -trace / k
        coeffs.append(c)
    return coeffs


@dataclass(frozen=True)
class RouthResult:
    first_column: tuple
    sign_changes: int
    degenerate: bool

    @property
    def hurwitz(self) -> bool:
        """All roots strictly in the open left half-plane."""
        return not self.degenerate and self.sign_changes == 0 and all(v > 0 for v in self.first_column)


def routh_table(coeffs) -> RouthResult:
    """Routh array of a polynomial given highest power first.

    When a zero shows up in the first column the table is flagged as
    degenerate (a root on or symmetric about the imaginary axis is
    possible) and the sign count is taken over the rows built so far.
    """
    coeffs = [Fraction(c) for c in coeffs]
    if coeffs[0] < 0:
        coeffs = [-c for c in coeffs]
    width = (len(coeffs) + 1) // 2
    rows = [coeffs[0::2], coeffs[1::2]]
    for row in rows:
        row.extend([Fraction(0)] * (width - len(row)))
    degenerate = False
    for _ in range(len(coeffs) - 2):
        upper, lower = rows[-2], rows[-1]
        if lower[0] == 0:
            degenerate = True
            break
        new = [
            (lower[0] * upper[j + 1] - upper[0] * lower[j + 1]) / lower[0]
            for j in range(width - 1)
        ] + [Fraction(0)]
        rows.append(new)
    first = tuple(row[0] for row in rows)
    if first[-1] == 0:
        degenerate = True
    nonzero = [v for v in first if v != 0]
    changes = sum(1 for a, b in zip(nonzero, nonzero[1:]) if (a > 0) != (b > 0))
    return RouthResult(first, changes, degenerate)


def routh_is_stable(matrix) -> bool:
    return routh_table(characteristic_polynomial(matrix)).hurwitz


def routh_unstable_count(matrix) -> int:
    """Number of roots in the open right half-plane for a non-degenerate table."""
    result = routh_table(characteristic_polynomial(matrix))
    if result.degenerate:
        raise ValueError("Routh table is degenerate; the count is not defined")
    return result.sign_changes
