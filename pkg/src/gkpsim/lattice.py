"""Exact lattice supports of multimode position measurements.

A circuit of 0-logical grid-state qubits followed by a rational symplectic
operation and a displacement produces a position PDF supported on a shifted
lattice: uniform weight over x = sqrt(pi) * RinvT (t + 2m) + c, m in Z^n.
This module constructs (RinvT, t, c) exactly from the circuit matrix; the
PDF is symbolic throughout (delta combs have no finite density values), so
comparisons are support and spacing comparisons, never pointwise ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Tuple

import numpy as np

from .core import CircuitDescription, CircuitValidationError, IdealGKPState
from .exact import RationalMatrix, is_symplectic, lcm_denominators, smith_normal_form

__all__ = [
    "DegenerateLatticeError",
    "EmptySupportError",
    "LatticePDF",
    "SupportWitness",
    "build_pdf",
    "build_pdf_from_circuit",
    "support_contains",
    "support_points_in_window",
    "sample",
    "periodicity_equivalent",
]

SQRT_PI = math.sqrt(math.pi)

# hard cap on lattice-point enumeration (total array elements, points * modes)
_ENUM_LIMIT = 8_000_000


class DegenerateLatticeError(ValueError):
    """The support lattice generator came out singular.

    Unreachable for symplectic circuit matrices: the measured rows (A | B)
    of a symplectic matrix have full rank, so the candidate matrix always
    has rank n.  The guard protects internal misuse only.
    """


class EmptySupportError(ValueError):
    """No lattice point intersects the requested window."""


@dataclass(frozen=True, eq=False)
class SupportWitness:
    """Integer solution m for a support query, with the residual x - x(m)."""

    m: Tuple[int, ...]
    residual: np.ndarray


@dataclass(frozen=True, eq=False)
class LatticePDF:
    """Symbolic measurement PDF: uniform over sqrt(pi)*RinvT(t + 2m) + c.

    ``RinvT`` and ``RT`` are float views of the exact rational matrices also
    carried here; ``RT`` is the inverse of ``RinvT`` and solves membership
    queries.  ``t`` is reduced mod 2 at construction so equal supports built
    from the same circuit compare equal field-by-field.
    """

    n: int
    RinvT: np.ndarray
    t: Tuple[int, ...]
    c: np.ndarray
    RinvT_exact: RationalMatrix
    RT_exact: RationalMatrix
    RT: np.ndarray = field(init=False)
    ell_unit: float = field(init=False)

    def __post_init__(self):
        if any(not 0 <= ti < 2 for ti in self.t):
            raise ValueError(f"t must be reduced to [0, 2), got {self.t}")
        for name in ("RinvT", "c"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        rt = self.RT_exact.to_float()
        rt.setflags(write=False)
        object.__setattr__(self, "RT", rt)
        object.__setattr__(self, "ell_unit", SQRT_PI)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LatticePDF):
            return NotImplemented
        return (
            self.n == other.n
            and self.RinvT_exact == other.RinvT_exact
            and self.t == other.t
            and bool(np.array_equal(self.c, other.c))
        )

    def to_json_dict(self) -> dict:
        # generator column norms in sqrt(pi) units: per-m-step peak spacing
        gen = 2.0 * self.RinvT
        return {
            "modes": self.n,
            "RinvT": self.RinvT_exact.to_strings(),
            "t": list(self.t),
            "c": [float(x) for x in self.c],
            "spacing_summary": {
                "unit": "sqrt(pi)",
                "generator_column_norms": [
                    float(np.linalg.norm(gen[:, k])) for k in range(self.n)
                ],
            },
        }


def build_pdf(op) -> LatticePDF:
    """Construct the exact lattice PDF of measuring all n positions.

    Steps: stack the candidate matrix from the measured blocks (A^T over
    B^T/2), clear denominators with v = lcm, take the Smith normal form
    v*Stilde = V D U, read off RinvT = Stilde^T V^{-T} (I; 0) and the parity
    offsets t_j = diag(V11^T V21) mod 2, and attach the position components
    of the displacement.

    Raises:
        CircuitValidationError: is_symplectic fails for op.S.
        DegenerateLatticeError: singular lattice generator (internal misuse
            only; cannot occur for symplectic input).
    """
    S = op.S
    if not is_symplectic(S):
        raise CircuitValidationError("is_symplectic failed for the circuit matrix")
    n = S.rows // 2
    c_q = np.asarray(op.c, dtype=float)[:n]
    return _lattice_from_blocks(S, n, c_q)


def _lattice_from_blocks(S: RationalMatrix, n: int, c_q: np.ndarray) -> LatticePDF:
    # Stilde[r][i] = S[i, r] for r < n (A^T part) and S[i, r]/2 for r >= n
    stilde = RationalMatrix(
        [[S[j, i] if i < n else S[j, i] / 2 for j in range(n)] for i in range(2 * n)]
    )
    v = lcm_denominators(stilde)
    snf = smith_normal_form([[v * x for x in row] for row in stilde.data])
    diag = snf.diagonal()
    if any(d == 0 for d in diag):
        raise DegenerateLatticeError(
            "support lattice generator is singular: candidate matrix is rank-deficient"
        )
    # V^{-T} (I; 0) keeps the first n columns of Vinv^T
    W = [[Fraction(snf.Vinv[j][i]) for j in range(n)] for i in range(2 * n)]
    rinvt = stilde.transpose() @ RationalMatrix(W)
    # t_j = (V11^T V21)_jj mod 2
    t = tuple(
        sum(snf.V[k][j] * snf.V[n + k][j] for k in range(n)) % 2 for j in range(n)
    )
    # exact inverse from the same decomposition: RT = v diag(1/d) Uinv^T
    rt = RationalMatrix(
        [[Fraction(v * snf.Uinv[j][i], diag[i]) for j in range(n)] for i in range(n)]
    )
    return LatticePDF(
        n=n, RinvT=rinvt.to_float(), t=t, c=c_q, RinvT_exact=rinvt, RT_exact=rt
    )


def build_pdf_from_circuit(circ: CircuitDescription) -> LatticePDF:
    """Validate the circuit preconditions and build its lattice PDF.

    Requires dimension-2 ideal 0-logical inputs and position homodyne on all
    modes; anything else cannot have an exact lattice support in this form.
    """
    if circ.d != 2:
        raise CircuitValidationError(
            f"lattice PDF requires dimension 2, got {circ.d}"
        )
    for i, st in enumerate(circ.inputs):
        if not isinstance(st, IdealGKPState) or st.j != 0:
            raise CircuitValidationError(
                f"inputs[{i}]: lattice PDF requires ideal 0-logical inputs"
            )
    meas = circ.measurement
    if meas.kind != "homodyne-position" or tuple(sorted(meas.modes)) != tuple(range(circ.n)):
        raise CircuitValidationError(
            "lattice PDF requires position homodyne on all modes"
        )
    return build_pdf(circ.total_operation())


def support_contains(pdf: LatticePDF, x, tol: float) -> Optional[SupportWitness]:
    """Solve x = sqrt(pi)*RinvT(t + 2m) + c for integer m within tol.

    Rounds RT (x - c)/sqrt(pi) - t componentwise, verifies by mapping the
    candidate back, and returns the witness only when the residual passes.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    x = np.asarray(x, dtype=float).reshape(pdf.n)
    u = pdf.RT @ (x - pdf.c) / SQRT_PI - np.asarray(pdf.t, dtype=float)
    m = np.rint(u / 2.0).astype(int)
    back = SQRT_PI * pdf.RinvT @ (np.asarray(pdf.t) + 2.0 * m) + pdf.c
    residual = x - back
    if np.max(np.abs(residual)) <= tol:
        return SupportWitness(tuple(int(k) for k in m), residual)
    return None


def _window_bounds(pdf: LatticePDF, window) -> Tuple[np.ndarray, np.ndarray]:
    w = np.asarray(window, dtype=float)
    if w.shape == (2,):
        w = np.tile(w, (pdf.n, 1))
    if w.shape != (pdf.n, 2):
        raise ValueError(
            f"window must be (lo, hi) or {pdf.n} such pairs, got shape {w.shape}"
        )
    lo, hi = w[:, 0], w[:, 1]
    if not (np.all(np.isfinite(w)) and np.all(hi >= lo)):
        raise ValueError("window must be bounded and nonempty")
    return lo, hi


def support_points_in_window(pdf: LatticePDF, window) -> np.ndarray:
    """Enumerate all support points inside a closed box window.

    Bounds the integer solution box through the exact inverse, enumerates
    it, and filters to the window (boundary included, 1e-9 slack).  Raises
    EmptySupportError when nothing intersects and ValueError when the box
    holds too many points to enumerate.
    """
    lo, hi = _window_bounds(pdf, window)
    # conservative per-coordinate bounds on u = RT (x - c)/sqrt(pi)
    terms_lo = np.minimum(
        pdf.RT * (lo - pdf.c)[None, :], pdf.RT * (hi - pdf.c)[None, :]
    )
    terms_hi = np.maximum(
        pdf.RT * (lo - pdf.c)[None, :], pdf.RT * (hi - pdf.c)[None, :]
    )
    u_lo = terms_lo.sum(axis=1) / SQRT_PI
    u_hi = terms_hi.sum(axis=1) / SQRT_PI
    t = np.asarray(pdf.t, dtype=float)
    m_lo = np.ceil((u_lo - t) / 2.0 - 1e-9).astype(int)
    m_hi = np.floor((u_hi - t) / 2.0 + 1e-9).astype(int)
    counts = np.maximum(m_hi - m_lo + 1, 0)
    if np.any(counts == 0):
        raise EmptySupportError(f"no support point intersects window {window!r}")
    total = int(np.prod(counts.astype(object)))
    if total * pdf.n > _ENUM_LIMIT:
        raise ValueError(
            f"window encloses ~{total} lattice candidates; refuse to enumerate"
        )
    axes = [np.arange(a, b + 1) for a, b in zip(m_lo, m_hi)]
    M = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, pdf.n)
    X = SQRT_PI * (t + 2.0 * M) @ pdf.RinvT.T + pdf.c
    slack = 1e-9 * (1.0 + np.maximum(np.abs(lo), np.abs(hi)))
    inside = np.all((X >= lo - slack) & (X <= hi + slack), axis=1)
    pts = X[inside]
    if pts.shape[0] == 0:
        raise EmptySupportError(f"no support point intersects window {window!r}")
    return pts


def sample(pdf: LatticePDF, count: int, window, rng_seed: int) -> np.ndarray:
    """Draw count points uniformly from the support inside the window.

    Deterministic given the seed; reentrant (no global RNG state).
    """
    pts = support_points_in_window(pdf, window)
    rng = np.random.default_rng(rng_seed)
    idx = rng.integers(0, pts.shape[0], size=count)
    return pts[idx]


def periodicity_equivalent(
    pdf: LatticePDF, op, x, m: Sequence[int], m_prime: Sequence[int]
) -> np.ndarray:
    """Translate an outcome by input-comb periods: support-equivalent point.

    x'_j = x_j + sqrt(pi) * sum_k (2 A_jk m_k + B_jk m'_k), with A, B the
    measured blocks of op.S.  Membership status (on or off support) is
    preserved for every integer m, m'.
    """
    S = op.S
    n = pdf.n
    if S.rows != 2 * n:
        raise ValueError(f"operation acts on {S.rows // 2} modes, pdf has {n}")
    m = [int(k) for k in m]
    mp = [int(k) for k in m_prime]
    if len(m) != n or len(mp) != n:
        raise ValueError("m and m_prime must have one entry per mode")
    shift = [
        sum(2 * S[j, k] * m[k] + S[j, n + k] * mp[k] for k in range(n))
        for j in range(n)
    ]
    return np.asarray(x, dtype=float).reshape(n) + SQRT_PI * np.array(
        [float(s) for s in shift]
    )
