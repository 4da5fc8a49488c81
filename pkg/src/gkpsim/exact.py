"""Exact rational and integer linear algebra.

Arithmetic here is arbitrary precision throughout: rationals are
`fractions.Fraction` (stored in lowest terms with positive denominator) and
integers are plain Python ints.  There is deliberately no fixed-width or
floating-point fast path; entries can grow during reduction and exactness is
the contract.  Rationals serialize as "p/q" strings ("p" for integers),
which `Fraction` parses and prints natively.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

Rational = Fraction


def _frac_rows(M) -> list[list[Fraction]]:
    if isinstance(M, RationalMatrix):
        return [row[:] for row in M.data]
    rows = [[x if isinstance(x, Fraction) else Fraction(x) for x in row] for row in M]
    if not rows or not rows[0]:
        raise ValueError("matrix must be nonempty")
    if any(len(row) != len(rows[0]) for row in rows):
        raise ValueError("ragged rows")
    return rows


def _int_rows(M) -> list[list[int]]:
    rows = _frac_rows(M)
    out = []
    for row in rows:
        r = []
        for x in row:
            if x.denominator != 1:
                raise ValueError(f"expected integer entries, found {x}")
            r.append(x.numerator)
        out.append(r)
    return out


def _eye(n: int) -> list[list[int]]:
    return [[1 if i == j else 0 for j in range(n)] for i in range(n)]


class RationalMatrix:
    """Dense matrix of Fractions with exact arithmetic.

    >>> m = RationalMatrix([["1/2", 0], [1, "3"]])
    >>> (m @ RationalMatrix.identity(2)).to_strings()
    [['1/2', '0'], ['1', '3']]
    """

    __slots__ = ("rows", "cols", "data")

    def __init__(self, data: Iterable[Iterable]):
        self.data = _frac_rows(data)
        self.rows = len(self.data)
        self.cols = len(self.data[0])

    @classmethod
    def identity(cls, n: int) -> "RationalMatrix":
        return cls(_eye(n))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "RationalMatrix":
        return cls([[0] * cols for _ in range(rows)])

    def __getitem__(self, key) -> Fraction:
        i, j = key
        return self.data[i][j]

    def __eq__(self, other) -> bool:
        if not isinstance(other, RationalMatrix):
            return NotImplemented
        return self.data == other.data

    def __matmul__(self, other: "RationalMatrix") -> "RationalMatrix":
        if self.cols != other.rows:
            raise ValueError("dimension mismatch")
        return RationalMatrix(matmul(self.data, other.data))

    def transpose(self) -> "RationalMatrix":
        return RationalMatrix([list(col) for col in zip(*self.data)])

    def block(self, r0: int, r1: int, c0: int, c1: int) -> "RationalMatrix":
        return RationalMatrix([row[c0:c1] for row in self.data[r0:r1]])

    def is_integer(self) -> bool:
        return all(x.denominator == 1 for row in self.data for x in row)

    def to_float(self) -> np.ndarray:
        return np.array([[float(x) for x in row] for row in self.data], dtype=float)

    def to_strings(self) -> list[list[str]]:
        return [[str(x) for x in row] for row in self.data]

    def __repr__(self) -> str:
        return f"RationalMatrix({self.to_strings()})"


def matmul(A: Sequence[Sequence], B: Sequence[Sequence]) -> list[list]:
    """Exact matrix product on nested sequences, skipping zero entries."""
    nB = len(B[0])
    out = [[0] * nB for _ in range(len(A))]
    for i, arow in enumerate(A):
        orow = out[i]
        for k, a in enumerate(arow):
            if a:
                brow = B[k]
                for j, b in enumerate(brow):
                    if b:
                        orow[j] += a * b
    return out


@dataclass
class SmithDecomposition:
    """Smith normal form M = V @ D @ U with tracked transform inverses.

    V and U are unimodular; D is diagonal-rectangular with nonnegative
    diagonal entries in a divisibility chain.  Vinv and Uinv are maintained
    during reduction so callers never need to invert the (possibly large)
    transforms afterwards.
    """

    V: list[list[int]]
    D: list[list[int]]
    U: list[list[int]]
    Vinv: list[list[int]]
    Uinv: list[list[int]]

    def diagonal(self) -> list[int]:
        return [self.D[i][i] for i in range(min(len(self.D), len(self.D[0])))]


def smith_normal_form(M) -> SmithDecomposition:
    """Decompose an integer matrix as M = V @ D @ U.

    Pivots are chosen with minimum absolute value to limit coefficient
    growth.  Total for any nonempty integer matrix.
    """
    A = _int_rows(M)
    r, c = len(A), len(A[0])
    V, Vinv = _eye(r), _eye(r)
    U, Uinv = _eye(c), _eye(c)

    def row_swap(i, j):
        A[i], A[j] = A[j], A[i]
        for row in V:
            row[i], row[j] = row[j], row[i]
        Vinv[i], Vinv[j] = Vinv[j], Vinv[i]

    def row_negate(i):
        A[i] = [-x for x in A[i]]
        for row in V:
            row[i] = -row[i]
        Vinv[i] = [-x for x in Vinv[i]]

    def row_addmul(j, i, t):
        # row j += t * row i; V picks up the inverse column operation
        Ai, Aj = A[i], A[j]
        for k, x in enumerate(Ai):
            if x:
                Aj[k] += t * x
        for row in V:
            row[i] -= t * row[j]
        Pi, Pj = Vinv[i], Vinv[j]
        for k, x in enumerate(Pi):
            if x:
                Pj[k] += t * x

    def col_swap(i, j):
        for row in A:
            row[i], row[j] = row[j], row[i]
        U[i], U[j] = U[j], U[i]
        for row in Uinv:
            row[i], row[j] = row[j], row[i]

    def col_addmul(j, i, t):
        # col j += t * col i
        for row in A:
            x = row[i]
            if x:
                row[j] += t * x
        Ui, Uj = U[i], U[j]
        for k, x in enumerate(Uj):
            if x:
                Ui[k] -= t * x
        for row in Uinv:
            x = row[i]
            if x:
                row[j] += t * x

    limit = min(r, c)
    for k in range(limit):
        # minimum-absolute-value nonzero pivot in the trailing submatrix
        best = None
        best_a = 0
        for i in range(k, r):
            row = A[i]
            for j in range(k, c):
                x = row[j]
                if x:
                    a = -x if x < 0 else x
                    if best is None or a < best_a:
                        best, best_a = (i, j), a
                        if a == 1:
                            break
            if best_a == 1:
                break
        if best is None:
            break
        pi, pj = best
        if pi != k:
            row_swap(k, pi)
        if pj != k:
            col_swap(k, pj)

        while True:
            if A[k][k] < 0:
                row_negate(k)
            # clear column k below the pivot
            restart = False
            i = k + 1
            while i < r:
                x = A[i][k]
                if x:
                    q = x // A[k][k]
                    if q:
                        row_addmul(i, k, -q)
                    if A[i][k]:
                        row_swap(k, i)  # strictly smaller pivot
                        restart = True
                        break
                i += 1
            if restart:
                continue
            # clear row k right of the pivot (column k stays zero below)
            j = k + 1
            while j < c:
                x = A[k][j]
                if x:
                    q = x // A[k][k]
                    if q:
                        col_addmul(j, k, -q)
                    if A[k][j]:
                        col_swap(k, j)
                        restart = True
                        break
                j += 1
            if restart:
                continue
            # enforce divisibility: pivot must divide the whole submatrix
            p = A[k][k]
            bad = None
            for i in range(k + 1, r):
                row = A[i]
                for j in range(k + 1, c):
                    if row[j] % p:
                        bad = i
                        break
                if bad is not None:
                    break
            if bad is None:
                break
            row_addmul(k, bad, 1)

    return SmithDecomposition(V=V, D=A, U=U, Vinv=Vinv, Uinv=Uinv)


def lcm_denominators(M) -> int:
    """Smallest v >= 1 such that v*M has integer entries."""
    rows = _frac_rows(M)
    return math.lcm(*(x.denominator for row in rows for x in row))


def is_symplectic(S) -> bool:
    """Exact check of S^T Omega S == Omega in the (q-block, p-block) ordering.

    No tolerance is involved; raises ValueError for odd-sized input.
    """
    A = _frac_rows(S)
    m = len(A)
    if len(A[0]) != m or m % 2:
        raise ValueError("symplectic check requires a square matrix of even dimension")
    n = m // 2
    # T = Omega @ S by row rearrangement: top rows p-block, bottom negated q-block
    T = A[n:] + [[-x for x in row] for row in A[:n]]
    G = [[0] * m for _ in range(m)]
    for kk in range(m):
        srow, trow = A[kk], T[kk]
        nzs = [(i, v) for i, v in enumerate(srow) if v]
        if not nzs:
            continue
        nzt = [(j, w) for j, w in enumerate(trow) if w]
        for i, v in nzs:
            Gi = G[i]
            for j, w in nzt:
                Gi[j] += v * w
    for i in range(m):
        Gi = G[i]
        for j in range(m):
            want = 1 if j == i + n else (-1 if j == i - n else 0)
            if Gi[j] != want:
                return False
    return True


def omega(n: int) -> RationalMatrix:
    """The symplectic form [[0, I], [-I, 0]] on n modes."""
    O = [[0] * (2 * n) for _ in range(2 * n)]
    for i in range(n):
        O[i][n + i] = 1
        O[n + i][i] = -1
    return RationalMatrix(O)


def unimodular_inverse(V) -> list[list[int]]:
    """Exact inverse of a unimodular integer matrix.

    Raises ValueError when |det V| != 1.
    """
    A = [[Fraction(x) for x in row] for row in _int_rows(V)]
    n = len(A)
    if len(A[0]) != n:
        raise ValueError("inverse requires a square matrix")
    aug = [A[i] + [Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    det = Fraction(1)
    for k in range(n):
        piv = next((i for i in range(k, n) if aug[i][k]), None)
        if piv is None:
            raise ValueError("matrix is not unimodular (det = 0)")
        if piv != k:
            aug[k], aug[piv] = aug[piv], aug[k]
            det = -det
        det *= aug[k][k]
        inv = 1 / aug[k][k]
        aug[k] = [x * inv for x in aug[k]]
        for i in range(n):
            if i != k and aug[i][k]:
                f = aug[i][k]
                aug[i] = [a - f * b for a, b in zip(aug[i], aug[k])]
    if det.denominator != 1 or abs(det.numerator) != 1:
        raise ValueError(f"matrix is not unimodular (det = {det})")
    out = []
    for i in range(n):
        row = []
        for x in aug[i][n:]:
            assert x.denominator == 1
            row.append(x.numerator)
        out.append(row)
    return out
