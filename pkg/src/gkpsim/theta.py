"""Jacobi/Siegel theta evaluation and the single-mode rotation analysis.

The position density of a rotated ideal grid state is proportional to
``|theta(-x*csc(t)/sqrt(pi); 2*cot(t))|^2 / sin(t)``.  When ``cot(t)`` is
rational with odd denominator the density collapses to a Dirac comb whose
spacing follows a closed-form law; irrational cotangents make the support
dense in the reals, which this module reports as a structured error rather
than a number.  Because irrationality is undecidable from floats, angles
enter in exact form (rational cotangent, or a rational multiple of pi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np
from scipy.optimize import minimize_scalar

from .exact import RationalMatrix, is_symplectic

__all__ = [
    "ConvergenceError",
    "DenseSupportError",
    "ClassMembershipError",
    "ThetaArgs",
    "RationalCotangent",
    "PiMultiple",
    "IrrationalCotangent",
    "AngleClass",
    "CombSpacing",
    "jacobi_theta",
    "siegel_theta",
    "classify_angle",
    "rotated_comb_spacing",
    "rotated_pdf_numeric",
    "comb_peak_positions",
    "empirical_comb_spacing",
    "in_Q2",
    "in_RSp",
    "in_DSp",
    "single_mode_outcome_sample",
]

SQRT_PI = math.sqrt(math.pi)


class ConvergenceError(ValueError):
    """The theta series does not converge for the supplied arguments."""


class DenseSupportError(ValueError):
    """The rotated density has support dense in the reals: no comb spacing."""


class ClassMembershipError(ValueError):
    """The operation lies outside the circuit class required by the caller."""


@dataclass(frozen=True)
class ThetaArgs:
    """Arguments for a theta evaluation.

    ``z`` is a complex scalar (or an array of them, evaluated elementwise)
    and ``tau`` a complex scalar with positive imaginary part.  For the
    genus-g lattice sum, ``z`` is a length-g complex vector and ``tau`` a
    complex symmetric g x g matrix with positive-definite imaginary part.
    """

    z: Union[complex, np.ndarray]
    tau: Union[complex, np.ndarray]
    truncation_tol: float = 1e-14


def _truncation_radius(b: float, y: float, tol: float) -> int:
    # Smallest M with exp(-pi*b*M^2 + 2*pi*y*M) < tol; b = Im tau > 0.
    L = -math.log(tol)
    return int(math.ceil((y + math.sqrt(y * y + b * L / math.pi)) / b)) + 1


def jacobi_theta(args: ThetaArgs) -> Union[complex, np.ndarray]:
    """Evaluate theta(z, tau) = sum_m exp(pi*i*m^2*tau + 2*pi*i*m*z).

    Truncates symmetrically in m once the term bound
    exp(-pi*Im(tau)*m^2 + 2*pi*|Im z|*|m|) drops below ``truncation_tol``.
    Accepts an ndarray ``z`` and returns the matching array of values.

    Raises:
        ConvergenceError: if Im(tau) <= 0.
    """
    tau = complex(args.tau)
    if not tau.imag > 0:
        raise ConvergenceError(f"theta series requires Im(tau) > 0, got {tau.imag}")
    z = np.asarray(args.z, dtype=complex)
    y = float(np.max(np.abs(z.imag))) if z.size else 0.0
    M = _truncation_radius(tau.imag, y, args.truncation_tol)
    m = np.arange(-M, M + 1)
    quad = np.exp(1j * math.pi * tau * m * m)
    if z.ndim == 0:
        return complex(np.sum(quad * np.exp(2j * math.pi * m * complex(z))))
    # chunk the outer product so huge z-grids stay within memory
    out = np.empty(z.shape, dtype=complex)
    flat = z.reshape(-1)
    step = max(1, int(5e7) // (2 * M + 1))
    for k0 in range(0, flat.size, step):
        zc = flat[k0:k0 + step]
        out.reshape(-1)[k0:k0 + step] = np.exp(
            2j * math.pi * np.multiply.outer(zc, m)
        ) @ quad
    return out


def siegel_theta(args: ThetaArgs) -> complex:
    """Evaluate the genus-g lattice sum over m in Z^g.

    theta(z, Gamma) = sum_m exp(pi*i*m^T Gamma m + 2*pi*i*m^T z), truncated
    by the positive-definite bound on the quadratic form.  Reduces to
    :func:`jacobi_theta` for g = 1.

    Raises:
        ConvergenceError: if Im(Gamma) is not positive-definite.
    """
    gamma = np.asarray(args.tau, dtype=complex)
    if gamma.ndim == 0 or gamma.size == 1:
        return complex(
            jacobi_theta(ThetaArgs(complex(np.asarray(args.z).reshape(())),
                                   complex(gamma.reshape(())),
                                   args.truncation_tol))
        )
    g = gamma.shape[0]
    if gamma.shape != (g, g):
        raise ValueError("Gamma must be square")
    lam = np.linalg.eigvalsh(gamma.imag)
    if lam[0] <= 0:
        raise ConvergenceError(
            f"lattice theta requires Im(Gamma) positive-definite; min eigenvalue {lam[0]:g}"
        )
    z = np.asarray(args.z, dtype=complex).reshape(g)
    y = float(np.linalg.norm(z.imag))
    M = _truncation_radius(float(lam[0]), y, args.truncation_tol)
    if (2 * M + 1) ** g > 5e8:
        raise ConvergenceError(
            f"truncation radius {M} in genus {g} exceeds the enumeration budget"
        )
    rng = np.arange(-M, M + 1)
    rest = np.stack(np.meshgrid(*([rng] * (g - 1)), indexing="ij"), axis=-1).reshape(-1, g - 1)
    quad_rr = np.einsum("ki,ij,kj->k", rest, gamma[1:, 1:], rest)
    lin_r = rest @ (2.0 * z[1:])
    cross = rest @ (2.0 * gamma[0, 1:])
    total = 0.0 + 0.0j
    for m0 in rng:
        expo = 1j * math.pi * (gamma[0, 0] * m0 * m0 + m0 * cross + quad_rr) \
            + 2j * math.pi * (m0 * z[0]) + 1j * math.pi * lin_r
        total += complex(np.sum(np.exp(expo)))
    return total


# ---------------------------------------------------------------------------
# angle classification and the comb-spacing law


@dataclass(frozen=True)
class RationalCotangent:
    """cot(theta) = u/v in lowest terms with v > 0."""

    u: int
    v: int

    def __post_init__(self):
        if self.v == 0:
            raise ValueError("v = 0 is a multiple of pi, not a finite cotangent")
        g = math.gcd(self.u, self.v)
        u, v = self.u // g, self.v // g
        if v < 0:
            u, v = -u, -v
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def sin_theta(self) -> float:
        # positive branch: sin > 0 picks theta in (0, pi)
        return self.v / math.hypot(self.u, self.v)

    @property
    def cot_theta(self) -> Fraction:
        return Fraction(self.u, self.v)


@dataclass(frozen=True)
class PiMultiple:
    """theta = k*pi: the untouched comb."""

    k: int


@dataclass(frozen=True)
class IrrationalCotangent:
    """Marker for angles whose cotangent is known to be irrational."""


AngleClass = Union[RationalCotangent, PiMultiple, IrrationalCotangent]


@dataclass(frozen=True)
class CombSpacing:
    """Spacing of the rotated Dirac comb: sqrt(pi)*sin(theta)/v or 2*sqrt(pi)."""

    spacing: float

    def __post_init__(self):
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")


def classify_angle(cot_spec) -> AngleClass:
    """Classify an exactly-specified rotation angle.

    Accepted forms:
      * ``Fraction``, ``int``, or ``"u/v"`` string: the exact cotangent value.
      * ``(p, q)`` tuple of integers: the angle theta = (p/q)*pi.
      * ``IrrationalCotangent()`` or the string ``"irrational"``.

    ``(p/q)*pi`` resolves to :class:`PiMultiple` when q = 1; for q in {2, 4}
    the cotangent is rational (0 or +-1) and a :class:`RationalCotangent` is
    returned; every other q has irrational cotangent (Niven's theorem).
    """
    if isinstance(cot_spec, IrrationalCotangent):
        return cot_spec
    if isinstance(cot_spec, (RationalCotangent, PiMultiple)):
        return cot_spec
    if isinstance(cot_spec, str):
        if cot_spec.strip().lower() == "irrational":
            return IrrationalCotangent()
        try:
            cot = Fraction(cot_spec)
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"unsupported symbolic angle form: {cot_spec!r}") from exc
        return RationalCotangent(cot.numerator, cot.denominator)
    if isinstance(cot_spec, (int, Fraction)):
        cot = Fraction(cot_spec)
        return RationalCotangent(cot.numerator, cot.denominator)
    if isinstance(cot_spec, tuple) and len(cot_spec) == 2:
        p, q = cot_spec
        if not (isinstance(p, int) and isinstance(q, int)):
            raise ValueError(f"unsupported symbolic angle form: {cot_spec!r}")
        frac = Fraction(p, q)
        p, q = frac.numerator, frac.denominator
        if q == 1:
            return PiMultiple(p)
        if q == 2:
            return RationalCotangent(0, 1)
        if q == 4:
            return RationalCotangent(1 if p % 4 == 1 else -1, 1)
        return IrrationalCotangent()
    raise ValueError(f"unsupported symbolic angle form: {cot_spec!r}")


def rotated_comb_spacing(cls: AngleClass) -> CombSpacing:
    """Closed-form comb spacing for an exactly-classified rotation angle.

    sqrt(pi)*sin(theta)/v for rational cotangent u/v with v odd, and
    2*sqrt(pi) for multiples of pi.

    Raises:
        DenseSupportError: for irrational cotangents (support dense in R).
        ValueError: for even v, where no closed-form law is available and
            the spacing must be measured with :func:`empirical_comb_spacing`.
    """
    if isinstance(cls, PiMultiple):
        return CombSpacing(2.0 * SQRT_PI)
    if isinstance(cls, RationalCotangent):
        if cls.v % 2 == 0:
            raise ValueError(
                "even-denominator cotangent: the closed-form spacing law covers "
                "odd denominators only; use empirical_comb_spacing instead"
            )
        return CombSpacing(SQRT_PI * cls.sin_theta / cls.v)
    raise DenseSupportError("irrational cotangent: support is dense in the reals")


def rotated_pdf_numeric(x, cls: AngleClass, eps_reg: float = 1e-3):
    """Regularized rotated position density, for peak detection only.

    Evaluates (1/sin t)*|theta(-x*csc(t)/sqrt(pi); 2*cot(t) + i*eps^2)|^2;
    the i*eps^2 offset plays the role of finite squeezing and makes the
    boundary series convergent.  For multiples of pi the unrotated comb
    |theta(x/(2*sqrt(pi)); i*eps^2)|^2 is used.  Not normalized.
    """
    if not eps_reg > 0:
        raise ValueError("eps_reg must be positive")
    alpha, tau, scale = _density_parameters(cls, eps_reg)
    vals = jacobi_theta(ThetaArgs(np.asarray(x, dtype=float) * alpha, tau))
    return scale * np.abs(vals) ** 2


def _density_parameters(cls: AngleClass, eps_reg: float):
    """(alpha, tau, scale) with density = scale*|theta(alpha*x, tau)|^2."""
    if isinstance(cls, PiMultiple):
        return 1.0 / (2.0 * SQRT_PI), 1j * eps_reg**2, 1.0
    if isinstance(cls, RationalCotangent):
        sin_t = cls.sin_theta
        tau = 2.0 * cls.u / cls.v + 1j * eps_reg**2
        return -1.0 / (sin_t * SQRT_PI), tau, 1.0 / sin_t
    raise DenseSupportError(
        "irrational cotangent carries no numeric value to evaluate"
    )


def comb_peak_positions(
    cls: AngleClass,
    window: Sequence[float],
    eps_reg: float = 1e-3,
    grid_step: Optional[float] = None,
) -> np.ndarray:
    """Locate local maxima of the regularized density inside ``window``.

    Scans one exact period of |theta(alpha*x, tau)|^2 on a uniform grid
    (step eps_reg*sqrt(pi)/10 unless overridden) using an FFT over the
    theta Fourier coefficients, refines each maximum by golden-section
    search on the direct series, then tiles the periodic peak set across
    the window.  Returns sorted peak positions.
    """
    alpha, tau, _ = _density_parameters(cls, eps_reg)
    period = 1.0 / abs(alpha)
    if grid_step is None:
        grid_step = eps_reg * SQRT_PI / 10.0
    N = int(np.ceil(period / grid_step))
    M = _truncation_radius(tau.imag, 0.0, 1e-14)
    coeff = np.zeros(max(N, 2 * M + 2), dtype=complex)
    m = np.arange(-M, M + 1)
    np.add.at(coeff, m % coeff.size, np.exp(1j * math.pi * tau * m * m))
    # theta(k/N') on the uniform z-grid is an inverse DFT of the folded coefficients
    vals = np.abs(coeff.size * np.fft.ifft(coeff)) ** 2
    Np = coeff.size
    left, right = np.roll(vals, 1), np.roll(vals, -1)
    keep = (vals >= left) & (vals > right) & (vals > vals.max() * 1e-8)
    z_peaks = np.nonzero(keep)[0] / Np

    def density_at(xv: float) -> float:
        val = jacobi_theta(ThetaArgs(alpha * xv + 0j, tau))
        return abs(val) ** 2

    h = period / Np
    refined = []
    for z0 in z_peaks:
        x0 = z0 / alpha  # one representative peak; may fall outside window
        try:
            res = minimize_scalar(
                lambda t: -density_at(t), bracket=(x0 - h, x0, x0 + h),
                method="golden", options={"xtol": 1e-12},
            )
            refined.append(res.x)
        except ValueError:
            refined.append(x0)  # grid point already at the flat top
    lo, hi = float(window[0]), float(window[1])
    edge = 1e-9 * period  # refinement noise must not drop a peak sitting on the boundary
    out = []
    for x0 in refined:
        k_lo = math.ceil((lo - edge - x0) / period)
        k_hi = math.floor((hi + edge - x0) / period)
        out.extend(x0 + k * period for k in range(k_lo, k_hi + 1))
    return np.sort(np.asarray(out))


def empirical_comb_spacing(
    cls: AngleClass, eps_reg: float = 1e-3, n_periods: int = 3
) -> float:
    """Median nearest-neighbor gap of detected peaks over a few periods."""
    alpha, _, _ = _density_parameters(cls, eps_reg)
    period = 1.0 / abs(alpha)
    peaks = comb_peak_positions(cls, (0.0, n_periods * period), eps_reg)
    if len(peaks) < 2:
        raise DenseSupportError("fewer than two peaks detected")
    return float(np.median(np.diff(peaks)))


# ---------------------------------------------------------------------------
# class-membership predicates


def in_Q2(q) -> bool:
    """True iff the rational q has odd denominator in lowest terms."""
    return Fraction(q).denominator % 2 == 1


_FLOAT_TOL = 1e-9
_MAX_DEN = 1000


def _ratio_as_small_rational(x: float) -> Optional[Fraction]:
    """Best-effort rational detection for float input.

    Floats cannot certify irrationality, so the float paths of the class
    predicates decide "rational with denominator <= 1000, to 1e-9" and treat
    everything else as irrational.  Exact inputs never go through here.
    """
    frac = Fraction(x).limit_denominator(_MAX_DEN)
    if abs(x - float(frac)) <= _FLOAT_TOL * (1.0 + abs(x)):
        return frac
    return None


def _symplectic_blocks(S):
    """Validate symplecticity and return (n, entry lookup, zero test).

    Accepts a RationalMatrix (exact arithmetic) or a real 2n x 2n ndarray
    (tolerance 1e-9).
    """
    if isinstance(S, RationalMatrix):
        if not is_symplectic(S):
            raise ValueError("matrix is not symplectic")
        return S.rows // 2, S.__getitem__, lambda x: x == 0
    A = np.asarray(S, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] % 2:
        raise ValueError(f"need a 2n x 2n matrix, got shape {A.shape}")
    n = A.shape[0] // 2
    omega = np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])
    if np.max(np.abs(A.T @ omega @ A - omega)) > _FLOAT_TOL:
        raise ValueError("matrix is not symplectic")
    scale = max(1.0, float(np.max(np.abs(A))))
    return n, lambda idx: A[idx], lambda x: abs(x) <= _FLOAT_TOL * scale


def in_RSp(S) -> bool:
    """Membership in the single-mode-measurement class.

    Requires, for each column i of the measured first row, that
    A_1i = 0, or B_1i = 0, or A_1i/B_1i is rational with odd denominator.
    Accepts exact rational matrices or (best-effort) real arrays.
    """
    n, entry, is_zero = _symplectic_blocks(S)
    for i in range(n):
        a = entry((0, i))
        b = entry((0, n + i))
        if is_zero(a) or is_zero(b):
            continue
        ratio = a / b
        if not isinstance(ratio, Fraction):
            detected = _ratio_as_small_rational(float(ratio))
            if detected is None:
                return False
            ratio = detected
        if ratio.denominator % 2 == 0:
            return False
    return True


class _ParityUnion:
    """Union-find tracking a +-1 relative sign between merged elements."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.parity = [0] * n  # parity to parent

    def find(self, i: int):
        if self.parent[i] == i:
            return i, 0
        root, par = self.find(self.parent[i])
        self.parent[i] = root
        self.parity[i] ^= par
        return root, self.parity[i]

    def union(self, i: int, j: int, rel: int) -> bool:
        ri, pi = self.find(i)
        rj, pj = self.find(j)
        if ri == rj:
            return (pi ^ pj) == rel
        self.parent[ri] = rj
        self.parity[ri] = pi ^ pj ^ rel
        return True


def in_DSp(S) -> bool:
    """Membership in the multimode-measurement class.

    Checks that S factors as a block-lower-triangular symplectic with
    symmetric invertible upper-left block, times a per-mode rotation whose
    angles all have odd-denominator rational cotangent (or are multiples of
    pi).  Column proportionality pins each cotangent; the symmetry of the
    extracted block is decided by cross-multiplied comparisons with a
    consistent choice of rotation branches (the branch signs form a
    2-coloring problem solved by union-find).  Exact for rational matrices;
    best-effort rational detection for real arrays.
    """
    n, entry, is_zero = _symplectic_blocks(S)
    exact = isinstance(S, RationalMatrix)

    def close(x, y) -> bool:
        if exact:
            return x == y
        return abs(x - y) <= _FLOAT_TOL * (1.0 + abs(x) + abs(y))

    # per column: (u, v) with cot = u/v, or (1, 0) for a pi-multiple
    uv = []
    for i in range(n):
        acol = [entry((j, i)) for j in range(n)]
        bcol = [entry((j, n + i)) for j in range(n)]
        nz = [j for j in range(n) if not is_zero(bcol[j])]
        if not nz:
            uv.append((1, 0))
            continue
        pivot = max(nz, key=lambda j: abs(bcol[j]))
        cot = acol[pivot] / bcol[pivot]
        for j in range(n):
            if is_zero(bcol[j]):
                if not is_zero(acol[j]):
                    return False
            elif not close(acol[j], cot * bcol[j]):
                return False
        if not isinstance(cot, Fraction):
            detected = _ratio_as_small_rational(float(cot))
            if detected is None:
                return False
            cot = detected
        if cot.denominator % 2 == 0:
            return False
        uv.append((cot.numerator, cot.denominator))
    # extracted block entries, up to the per-column branch sign and 1/sqrt(u^2+v^2)
    q = [
        [uv[k][0] * entry((j, k)) + uv[k][1] * entry((j, n + k)) for k in range(n)]
        for j in range(n)
    ]
    norms = [u * u + v * v for u, v in uv]
    union = _ParityUnion(n)
    for j in range(n):
        for k in range(j + 1, n):
            if not close(q[j][k] * q[j][k] * norms[j], q[k][j] * q[k][j] * norms[k]):
                return False
            if not is_zero(q[j][k]):
                rel = 0 if (q[j][k] > 0) == (q[k][j] > 0) else 1
                if not union.union(j, k, rel):
                    return False
    # invertibility of the block (branch signs and column scalings are immaterial)
    mat = [row[:] for row in q]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(mat[r][col]))
        if is_zero(mat[piv][col]):
            return False
        mat[col], mat[piv] = mat[piv], mat[col]
        for r in range(col + 1, n):
            if mat[r][col] != 0:
                f = mat[r][col] / mat[col][col]
                mat[r] = [x - f * y for x, y in zip(mat[r], mat[col])]
    return True


def single_mode_outcome_sample(
    op, count: int, seed: int, window: int = 50
) -> np.ndarray:
    """Sample position outcomes of measuring mode 1 after a class-B operation.

    The Heisenberg-evolved measurement operator is a sum of independently
    rotated quadratures, one per input mode; each contributes an integer
    multiple of its own comb spacing scaled by the row amplitude.  Draws the
    integer vector uniformly from [-window, window]^n and emits
    sum_i s_i * m_i * spacing_i + c_1.

    Raises:
        ClassMembershipError: if the operation fails :func:`in_RSp`.
    """
    S, c = op.S, np.asarray(op.c, dtype=float)
    if not in_RSp(S):
        raise ClassMembershipError("operation is not in the single-mode-measurement class")
    n = S.rows // 2
    steps = []
    for i in range(n):
        a, b = S[0, i], S[0, n + i]
        if a == 0 and b == 0:
            continue
        amp = math.hypot(float(a), float(b))
        if b == 0:
            spacing = 2.0 * SQRT_PI
        elif a == 0:
            spacing = SQRT_PI
        else:
            cls = RationalCotangent((a / b).numerator, (a / b).denominator)
            spacing = rotated_comb_spacing(cls).spacing
        steps.append(amp * spacing)
    steps = np.asarray(steps)
    rng = np.random.default_rng(seed)
    if steps.size == 0:
        return np.full(count, float(c[0]))
    m = rng.integers(-window, window + 1, size=(count, steps.size))
    return m @ steps + float(c[0])
