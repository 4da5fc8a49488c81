"""Logical-level density matrices and magic-resource analysis.

The torus Wigner machinery and the resource monotones both act on the d x d
logical payload of a code state rather than on the oscillator wavefunction,
so the validated matrix type lives here, together with the machinery that
produces it from a wavefunction: round-trip error-correction overlaps, the
stabilizer subsystem decoder, and the robustness-style monotone given by
the 1-norm of the Bloch vector for qubit codes.
"""

from __future__ import annotations

import cmath
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Sequence, Tuple

import numpy as np

from .core import GKPParameters, GaussianOperation, iwasawa_decompose, realistic_wavefunction

__all__ = [
    "LogicalDensityMatrix",
    "strange_state",
    "BlochVector",
    "SSDConfig",
    "ROMReport",
    "ROMSweepResult",
    "UnsupportedDimensionError",
    "DegenerateProjectionError",
    "CombTruncationWarning",
    "vacuum_wavefunction",
    "bloch_wavefunction",
    "t_state",
    "ec_overlap",
    "stabilizer_ssd",
    "gaussian_transform",
    "pre_unitary_map",
    "rom",
    "rom_sweep",
]

_HERM_TOL = 1e-10
_EIG_TOL = 1e-8


class UnsupportedDimensionError(ValueError):
    """The requested monotone is only defined for qubit codes."""


class DegenerateProjectionError(ValueError):
    """The decoded matrix carried no weight, so normalization is meaningless."""


class CombTruncationWarning(UserWarning):
    """The comb sum was cut while the summand still had visible tail mass."""


@dataclass(frozen=True, eq=False)
class LogicalDensityMatrix:
    """Hermitian, positive-semidefinite d x d matrix, renormalized to trace 1.

    Hermiticity is enforced within 1e-10 (relative to the largest entry),
    eigenvalues may dip to -1e-8 to absorb rounding from upstream algebra.
    The stored ``entries`` are the symmetrized, trace-normalized matrix.
    """

    d: int
    entries: np.ndarray

    def __post_init__(self):
        if self.d < 2:
            raise ValueError(f"dimension must be at least 2, got {self.d}")
        M = np.asarray(self.entries, dtype=complex)
        if M.shape != (self.d, self.d):
            raise ValueError(f"entries must be {self.d} x {self.d}, got {M.shape}")
        scale = max(1.0, float(np.max(np.abs(M))))
        if np.max(np.abs(M - M.conj().T)) > _HERM_TOL * scale:
            raise ValueError("density matrix must be Hermitian")
        tr = float(np.trace(M).real)
        if not tr > 0.0:
            raise ValueError(f"trace must be positive, got {tr:g}")
        M = (M + M.conj().T) / (2.0 * tr)
        lam = np.linalg.eigvalsh(M)
        if lam[0] < -_EIG_TOL:
            raise ValueError(f"density matrix has negative eigenvalue {lam[0]:g}")
        object.__setattr__(self, "entries", M)

    @classmethod
    def from_state_vector(cls, d: int, vec) -> "LogicalDensityMatrix":
        v = np.asarray(vec, dtype=complex).reshape(d)
        nrm = float(np.linalg.norm(v))
        if not nrm > 0.0:
            raise ValueError("state vector must be nonzero")
        v = v / nrm
        return cls(d, np.outer(v, v.conj()))

    @classmethod
    def maximally_mixed(cls, d: int) -> "LogicalDensityMatrix":
        return cls(d, np.eye(d) / d)

    @property
    def purity(self) -> float:
        return float(np.real(np.trace(self.entries @ self.entries)))


def strange_state() -> LogicalDensityMatrix:
    """The qutrit state (|1> + |2>)/sqrt(2), the single-qudit negativity maximizer."""
    return LogicalDensityMatrix.from_state_vector(3, np.array([0.0, 1.0, 1.0]))


# ---------------------------------------------------------------------------
# Bloch-sphere view of a qubit payload

_PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
_PAULI_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
_PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)

# cos(2 beta) = 1/sqrt(3): the +1 eigenstate of (X + Y + Z)/sqrt(3)
_T_BETA = 0.5 * math.acos(1.0 / math.sqrt(3.0))


@dataclass(frozen=True)
class BlochVector:
    """Expectation values (x, y, z) of the three Pauli operators.

    Physical states satisfy |r| <= 1; a small numerical overshoot of 1e-8
    is tolerated to absorb rounding from the decoder quadrature.
    """

    x: float
    y: float
    z: float

    def __post_init__(self):
        if self.norm > 1.0 + 1e-8:
            raise ValueError(f"Bloch vector has length {self.norm:.12g} > 1")

    @classmethod
    def from_density(cls, rho: LogicalDensityMatrix) -> "BlochVector":
        if rho.d != 2:
            raise UnsupportedDimensionError(
                f"Bloch vectors require a qubit payload, got d = {rho.d}"
            )
        M = rho.entries
        return cls(
            float(np.trace(M @ _PAULI_X).real),
            float(np.trace(M @ _PAULI_Y).real),
            float(np.trace(M @ _PAULI_Z).real),
        )

    @property
    def norm(self) -> float:
        return math.hypot(self.x, math.hypot(self.y, self.z))

    @property
    def one_norm(self) -> float:
        return abs(self.x) + abs(self.y) + abs(self.z)


def t_state() -> LogicalDensityMatrix:
    """The qubit magic state cos(beta)|0> + e^{i pi/4} sin(beta)|1>, cos(2 beta) = 1/sqrt(3)."""
    return LogicalDensityMatrix.from_state_vector(2, _t_state_vector())


def _t_state_vector() -> np.ndarray:
    return np.array(
        [math.cos(_T_BETA), cmath.exp(0.25j * math.pi) * math.sin(_T_BETA)], dtype=complex
    )


# ---------------------------------------------------------------------------
# source wavefunctions

Wavefunction = Callable[[np.ndarray], np.ndarray]


def vacuum_wavefunction(x) -> np.ndarray:
    """Normalized ground-state Gaussian pi^{-1/4} exp(-x^2/2)."""
    xs = np.asarray(x, dtype=float)
    return (math.pi ** -0.25) * np.exp(-0.5 * xs * xs) + 0.0j


def bloch_wavefunction(theta: float, phi: float, delta: float) -> Wavefunction:
    """Position wavefunction of the finite-squeezing qubit codeword family.

    cos(theta/2) |0_Delta> + e^{i phi} sin(theta/2) |1_Delta>, unnormalized;
    the decoder divides out the norm, so none is applied here.
    """
    params = GKPParameters(2)
    c0 = math.cos(0.5 * theta)
    c1 = cmath.exp(1j * phi) * math.sin(0.5 * theta)

    def psi(x):
        out = np.zeros(np.shape(np.asarray(x, dtype=float)), dtype=complex)
        # skip codewords with zero weight so theta = 0 costs one comb, not two
        if c0 != 0.0:
            out = out + c0 * realistic_wavefunction(x, 0, params, delta)
        if c1 != 0.0:
            out = out + c1 * realistic_wavefunction(x, 1, params, delta)
        return out

    return psi


# ---------------------------------------------------------------------------
# error-correction overlaps and the stabilizer subsystem decoder


@dataclass(frozen=True)
class SSDConfig:
    """Quadrature controls for the stabilizer subsystem decoder.

    zak_grid midpoint nodes per shift axis (at least 16); comb_truncation
    bounds the comb index |m| in the overlap sums and must reach past the
    envelope, |m| >= 6/(ell * Delta) for a width-Delta state.  Entries of
    the decoded matrix are normalized post hoc by the trace.
    """

    zak_grid: int = 64
    comb_truncation: int = 120
    normalization: str = "trace"

    def __post_init__(self):
        if self.zak_grid < 16:
            raise ValueError(f"zak_grid must be at least 16, got {self.zak_grid}")
        if self.comb_truncation < 1:
            raise ValueError(f"comb_truncation must be positive, got {self.comb_truncation}")
        if self.normalization != "trace":
            raise ValueError(f"unknown normalization {self.normalization!r}")


_TAIL_TOL = 1e-10


def ec_overlap(psi: Wavefunction, s, l: int, d: int, *, truncation: int = 120) -> complex:
    """Overlap <l| D(s) |psi> of a displaced state with an ideal codeword bra.

    D(s) = exp(i (s_X p - s_Z q)) in canonical ordering, so the summand is
    e^{-i s_X s_Z / 2} e^{-i s_Z (l + d m) ell} psi((l + d m) ell + s_X)
    over the comb |m| <= truncation.  The bra is the distributional position
    comb at x = (l + d m) ell; no normalization is applied.  Warns with
    CombTruncationWarning when the dropped tail is visible next to the sum.
    """
    if d < 2:
        raise ValueError(f"dimension must be at least 2, got {d}")
    sx, sz = float(np.asarray(s).reshape(2)[0]), float(np.asarray(s).reshape(2)[1])
    ell = GKPParameters(d).ell
    m = np.arange(-truncation, truncation + 1)
    comb = (l + d * m) * ell
    terms = np.exp(-1j * sz * comb) * np.asarray(psi(comb + sx), dtype=complex)
    total = float(np.sum(np.abs(terms)))
    if total > 0.0 and (abs(terms[0]) + abs(terms[-1])) > _TAIL_TOL * total:
        warnings.warn(
            f"comb tail at |m| = {truncation} is not negligible; increase truncation",
            CombTruncationWarning,
            stacklevel=2,
        )
    return complex(cmath.exp(-0.5j * sx * sz) * np.sum(terms))


def _overlap_grid(psi, sx, sz, l, d, ell, truncation):
    """c_l on a shift grid, without the s-dependent global phase.

    Returns (values, tail) with values[i, j] = sum_m e^{-i sz[j] (l+dm) ell}
    psi((l+dm) ell + sx[i]) and tail the worst edge-term fraction, used for
    the truncation warning.  The separable structure keeps this one matrix
    product per codeword.
    """
    m = np.arange(-truncation, truncation + 1)
    comb = (l + d * m) * ell
    A = np.asarray(psi(comb[None, :] + sx[:, None]), dtype=complex)
    P = np.exp(-1j * np.outer(comb, sz))
    mass = np.abs(A).sum(axis=1)
    edge = np.abs(A[:, 0]) + np.abs(A[:, -1])
    live = mass > 0.0
    tail = float(np.max(edge[live] / mass[live])) if np.any(live) else 0.0
    return A @ P, tail


def stabilizer_ssd(
    psi: Wavefunction, d: int, cfg: Optional[SSDConfig] = None
) -> LogicalDensityMatrix:
    """Logical payload of a wavefunction under the stabilizer subsystem decoder.

    rho[l, l'] integrates c_l(s) conj(c_{l'}(s)) over one unit cell of
    shifts with midpoint quadrature: s in [-ell/2, ell/2)^2 for d = 2 and
    [0, ell)^2 otherwise, zak_grid nodes per axis.  The result is Gram by
    construction, hence PSD, and is trace-normalized.

    Raises:
        DegenerateProjectionError: the raw trace fell below 1e-12, e.g. for
            a wavefunction with no mass near any comb within the truncation.
    """
    if cfg is None:
        cfg = SSDConfig()
    if d < 2:
        raise ValueError(f"dimension must be at least 2, got {d}")
    ell = GKPParameters(d).ell
    G = cfg.zak_grid
    h = ell / G
    lo = -0.5 * ell if d == 2 else 0.0
    nodes = lo + (np.arange(G) + 0.5) * h
    V = np.empty((d, G, G), dtype=complex)
    tail = 0.0
    for l in range(d):
        V[l], t = _overlap_grid(psi, nodes, nodes, l, d, ell, cfg.comb_truncation)
        tail = max(tail, t)
    if tail > _TAIL_TOL:
        warnings.warn(
            f"comb tail at |m| = {cfg.comb_truncation} is not negligible; increase truncation",
            CombTruncationWarning,
            stacklevel=2,
        )
    raw = np.einsum("lxy,kxy->lk", V, V.conj()) * h * h
    if float(np.trace(raw).real) < 1e-12:
        raise DegenerateProjectionError(
            "decoded matrix trace is below 1e-12; the state has no support on the comb"
        )
    return LogicalDensityMatrix(d, raw)


# ---------------------------------------------------------------------------
# Gaussian pre-processing of the wavefunction

def _rotated(psi, theta, span, nodes):
    # fractional-Fourier kernel sqrt((1 - i cot)/(2 pi))
    #   * exp(i (x^2 + y^2) cot/2 - i x y csc); theta = pi/2 is q -> p
    k = round(theta / math.pi)
    if abs(theta - k * math.pi) < 1e-8:
        if k % 2 == 0:
            return psi
        return lambda x: np.asarray(psi(-np.asarray(x, dtype=float)), dtype=complex)
    cot = math.cos(theta) / math.sin(theta)
    csc = 1.0 / math.sin(theta)
    amp = cmath.sqrt((1.0 - 1j * cot) / (2.0 * math.pi))
    # the sampled oscillatory kernel aliases at spacing 2 pi |sin theta| / h;
    # keep the first image outside the clamp window |x| <= span
    nodes = max(nodes, int(math.ceil(2.2 * span * span / (math.pi * abs(math.sin(theta))))))
    y = np.linspace(-span, span, nodes)
    w = np.full(nodes, y[1] - y[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    g = np.asarray(psi(y), dtype=complex) * w * np.exp(0.5j * cot * y * y)

    def rotated(x):
        xs = np.asarray(x, dtype=float).reshape(-1)
        out = np.zeros(xs.size, dtype=complex)
        # a state the span covers stays inside it under rotation, so the
        # quadrature is only trusted (and only evaluated) there
        live = np.flatnonzero(np.abs(xs) <= span)
        for a in range(0, live.size, 1024):  # chunk the kernel to bound memory
            idx = live[a : a + 1024]
            xc = xs[idx, None]
            out[idx] = np.exp(-1j * csc * xc * y) @ g
        out[live] *= amp * np.exp(0.5j * cot * xs[live] * xs[live])
        return out.reshape(np.shape(x))

    return rotated


def gaussian_transform(
    psi: Wavefunction,
    op: GaussianOperation,
    *,
    rotation_span: float = 40.0,
    rotation_nodes: int = 4001,
) -> Wavefunction:
    """Position wavefunction of the state after a single-mode Gaussian unitary.

    The symplectic part factors as Shear(kappa) Squeeze(s) Rotation(theta)
    and each factor acts in closed form -- rotation as a fractional-Fourier
    quadrature over [-rotation_span, rotation_span] with rotation_nodes
    trapezoid points, squeeze as s^{-1/2} psi(x/s), shear as multiplication
    by e^{i kappa x^2/2}, and the displacement c as e^{i c_Z x} psi(x - c_X),
    moving every first moment to S r + c.  Global phase is not pinned.
    The identity returns psi itself.  Rotating a state wider than the span
    needs larger quadrature settings.
    """
    if op.n != 1:
        raise UnsupportedDimensionError(f"need a single-mode operation, got n = {op.n}")
    kappa, s, theta = iwasawa_decompose(op.S)
    out = _rotated(psi, theta, rotation_span, rotation_nodes)
    if s != 1.0:
        inner_sq = out
        out = lambda x: np.asarray(inner_sq(np.asarray(x, dtype=float) / s), dtype=complex) / math.sqrt(s)
    if kappa != 0.0:
        inner_sh = out

        def sheared(x):
            xs = np.asarray(x, dtype=float)
            return np.exp(0.5j * kappa * xs * xs) * np.asarray(inner_sh(xs), dtype=complex)

        out = sheared
    cx, cz = float(op.c[0]), float(op.c[1])
    if cx != 0.0 or cz != 0.0:
        inner_d = out

        def displaced(x):
            xs = np.asarray(x, dtype=float)
            return np.exp(1j * cz * xs) * np.asarray(inner_d(xs - cx), dtype=complex)

        out = displaced
    return out


def pre_unitary_map(
    psi: Wavefunction,
    op: GaussianOperation,
    d: int,
    cfg: Optional[SSDConfig] = None,
    *,
    rotation_span: float = 40.0,
    rotation_nodes: int = 4001,
) -> LogicalDensityMatrix:
    """Decode the state after a single-mode Gaussian unitary acts on it.

    Composes gaussian_transform with stabilizer_ssd; the identity operation
    reduces exactly to stabilizer_ssd of the input.
    """
    out = gaussian_transform(psi, op, rotation_span=rotation_span, rotation_nodes=rotation_nodes)
    return stabilizer_ssd(out, d, cfg)


# ---------------------------------------------------------------------------
# robustness-style monotone for qubit payloads

@dataclass(frozen=True)
class ROMReport:
    """Monotone value, fidelity with the T magic state, and the verdict.

    rom is the 1-norm of the Bloch vector; distillable compares it against
    a caller-supplied threshold and stays None when no threshold was given.
    """

    rom: float
    fidelity_to_T: float
    distillable: Optional[bool]
    bloch: BlochVector


def rom(rho: LogicalDensityMatrix, r_star: Optional[float] = None) -> ROMReport:
    """1-norm of the Bloch vector, |<X>| + |<Y>| + |<Z>|, for a qubit payload.

    Pauli eigenstates give 1, the maximally mixed state 0, and the T state
    sqrt(3).  fidelity_to_T is sqrt(<T|rho|T>).  Raises
    UnsupportedDimensionError for d != 2.
    """
    if rho.d != 2:
        raise UnsupportedDimensionError(f"the monotone is defined for d = 2, got d = {rho.d}")
    r = BlochVector.from_density(rho)
    value = r.one_norm
    tvec = _t_state_vector()
    fid = math.sqrt(max(0.0, float(np.real(tvec.conj() @ rho.entries @ tvec))))
    verdict = None if r_star is None else bool(value > r_star)
    return ROMReport(value, fid, verdict, r)


@dataclass(frozen=True)
class ROMSweepResult:
    """Monotone surface over a (theta, delta) grid at fixed azimuth phi.

    rom and fidelity are indexed [i, j] for thetas[i], deltas[j];
    distillable is None unless a threshold was supplied to the sweep.
    """

    thetas: np.ndarray
    deltas: np.ndarray
    phi: float
    rom: np.ndarray
    fidelity: np.ndarray
    distillable: Optional[np.ndarray]
    r_star: Optional[float]

    def rows(self) -> Iterator[Tuple]:
        """Yield (theta, delta, rom, fidelity_T, distillable) in theta-major order."""
        for i, th in enumerate(self.thetas):
            for j, de in enumerate(self.deltas):
                flag = None if self.distillable is None else bool(self.distillable[i, j])
                yield float(th), float(de), float(self.rom[i, j]), float(self.fidelity[i, j]), flag


def rom_sweep(
    delta_grid: Sequence[float],
    theta_grid: Sequence[float],
    phi: float = 0.25 * math.pi,
    cfg: Optional[SSDConfig] = None,
    r_star: Optional[float] = None,
    threads: int = 1,
) -> ROMSweepResult:
    """Decode and score the codeword family over a (theta, Delta) grid.

    Each cell builds cos(theta/2)|0_Delta> + e^{i phi} sin(theta/2)|1_Delta>,
    decodes it, and records the monotone and the T-state fidelity.  Cells
    are independent, so the grid is embarrassingly parallel; results do not
    depend on the thread count.
    """
    if cfg is None:
        cfg = SSDConfig()
    thetas = np.asarray(list(theta_grid), dtype=float)
    deltas = np.asarray(list(delta_grid), dtype=float)
    if thetas.size == 0 or deltas.size == 0:
        raise ValueError("both grids must be nonempty")
    if np.any(deltas <= 0.0):
        raise ValueError("Delta grid entries must be positive")

    def cell(args):
        th, de = args
        report = rom(stabilizer_ssd(bloch_wavefunction(th, phi, de), 2, cfg), r_star)
        return report.rom, report.fidelity_to_T, report.distillable

    jobs = [(th, de) for th in thetas for de in deltas]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            flat = list(pool.map(cell, jobs))
    else:
        flat = [cell(j) for j in jobs]
    shape = (thetas.size, deltas.size)
    roms = np.array([f[0] for f in flat]).reshape(shape)
    fids = np.array([f[1] for f in flat]).reshape(shape)
    flags = None if r_star is None else np.array([f[2] for f in flat], dtype=bool).reshape(shape)
    return ROMSweepResult(thetas, deltas, phi, roms, fids, flags, r_star)
