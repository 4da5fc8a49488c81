"""Torus Wigner representation of encoded qudits and the sampling estimator.

Two phase-space pictures cooperate here.  The discrete one lives on the
d x d grid Z_d^2: ``gross_wigner`` expands a logical density matrix over the
scaled translation operators and returns the discrete Wigner function.  The
continuous one lives on the torus [0, d*ell)^2 with ell = sqrt(2*pi/d): the
modular Wigner function of a code state is a Fourier series over the
displacement lattice ell*Z^2.  For ideal codewords it degenerates to a comb
carrying the discrete function's weights; for finitely squeezed states it is
a smooth quasi-probability density that integrates to 1 over the torus.

Encoded Clifford circuits act on the torus by affine maps (integer
symplectic part, lattice translation part); pushing sampled phase-space
points through those maps and binning the measured coordinate yields the
quasi-probability estimator for modular-position statistics, with sample
complexity set by the total negativity ``M``.
"""

from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .core import (
    CircuitDescription,
    GKPParameters,
    GaussianOperation,
    IdealGKPState,
    RealisticGKPState,
    named_gate_matrix,
    parse_squeezing,
)
from .magic import LogicalDensityMatrix
from .theta import ConvergenceError

__all__ = [
    "EvenDimensionError",
    "UnsupportedOperationError",
    "UnsupportedMeasurementError",
    "EstimatorConfigError",
    "ZGWGridSingleMode",
    "ProductZGW",
    "gross_wigner",
    "zgw_ideal",
    "zgw_realistic",
    "zgw_realistic_at",
    "series_window",
    "CliffordAction",
    "identity_action",
    "operation_action",
    "circuit_action",
    "compose_actions",
    "clifford_transform",
    "encoded_phase_operation",
    "parity_defect",
    "NegativityReport",
    "negativity",
    "EstimatorConfig",
    "EstimateResult",
    "required_samples",
    "estimate_pdf",
]


class EvenDimensionError(ValueError):
    """Discrete phase-space machinery requires odd code dimension."""


class UnsupportedOperationError(ValueError):
    """The operation does not act as an encoded Clifford on the code lattice."""


class UnsupportedMeasurementError(ValueError):
    """The estimator handles single-mode modular-position measurements only."""


class EstimatorConfigError(ValueError):
    """Estimator configuration violates the sample-complexity contract."""


# ---------------------------------------------------------------------------
# discrete picture


def gross_wigner(rho: LogicalDensityMatrix) -> np.ndarray:
    """Discrete Wigner function of a logical state on the d x d grid, odd d.

    W[a_x, a_z] = d^{-2} * sum_k omega^{-(a_x k_z - a_z k_x)} Tr(T_k rho)
    with T_k = omega^{kappa k_x k_z} X^{k_x} Z^{k_z} and kappa = 2^{-1} mod d.
    Rows index the position coordinate; the d^2 values sum to Tr(rho) = 1.
    """
    d = rho.d
    if d % 2 == 0:
        raise EvenDimensionError(f"discrete Wigner function needs odd d, got {d}")
    kappa = pow(2, -1, d)
    omega_pow = np.exp(2j * np.pi * np.outer(np.arange(d), np.arange(d)) / d)  # [a,b] -> w^{ab}
    m = np.arange(d)
    chi = np.empty((d, d), dtype=complex)
    for kx in range(d):
        diag = rho.entries[m, (m + kx) % d]  # Tr(T_k rho) needs <m|rho|m+kx>
        chi[kx, :] = (omega_pow @ diag) * omega_pow[(kappa * kx) % d, m]
    # W[ax, az] = d^-2 sum_kx w^{az kx} sum_kz w^{-ax kz} chi[kx, kz]
    B = chi @ omega_pow.conj()
    W = (omega_pow @ B).T.real / (d * d)
    return W


def zgw_ideal(rho: LogicalDensityMatrix) -> "ZGWGridSingleMode":
    """Torus Wigner function of an ideally encoded logical state.

    The exact distribution is a comb of point masses on the lattice
    (ell*a_x, ell*a_z) weighted by the discrete Wigner function; on the
    resolution-d grid each spike occupies one cell, so value = weight/cell.
    """
    W = gross_wigner(rho)
    ell = GKPParameters(rho.d).ell
    return ZGWGridSingleMode(rho.d, W / (ell * ell), delta=None)


# ---------------------------------------------------------------------------
# grid containers


@dataclass(frozen=True, eq=False)
class ZGWGridSingleMode:
    """Single-mode torus Wigner values on a uniform R x R grid.

    ``values[i, j]`` is W(u_i, v_j) at u_i = i*period/R, v_j = j*period/R
    (period = d*ell); the grid is lattice-aligned so ideal combs sit exactly
    on grid points.  ``riemann_total`` approximates the torus integral and
    equals 1 for a state up to series truncation.
    """

    d: int
    values: np.ndarray
    delta: Optional[float] = None

    def __post_init__(self):
        if self.d % 2 == 0:
            raise EvenDimensionError(f"torus Wigner grids need odd d, got {self.d}")
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1] or v.shape[0] < 1:
            raise ValueError(f"values must be a square 2-d array, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def resolution(self) -> int:
        return self.values.shape[0]

    @property
    def period(self) -> float:
        return self.d * GKPParameters(self.d).ell

    @property
    def cell_area(self) -> float:
        h = self.period / self.resolution
        return h * h

    def axis(self) -> np.ndarray:
        return np.arange(self.resolution) * (self.period / self.resolution)

    def riemann_total(self) -> float:
        return float(self.values.sum() * self.cell_area)

    def abs_total(self) -> float:
        return float(np.abs(self.values).sum() * self.cell_area)


@dataclass(frozen=True)
class ProductZGW:
    """Product of per-mode torus Wigner grids (modes share the dimension)."""

    modes: Tuple[ZGWGridSingleMode, ...]

    def __post_init__(self):
        if not self.modes:
            raise ValueError("need at least one mode")
        d = self.modes[0].d
        if any(g.d != d for g in self.modes):
            raise ValueError("all modes must share the code dimension")
        object.__setattr__(self, "modes", tuple(self.modes))

    @property
    def n(self) -> int:
        return len(self.modes)

    @property
    def d(self) -> int:
        return self.modes[0].d


# ---------------------------------------------------------------------------
# realistic states: exact Gaussian-comb algebra

_PEAK_SIGMAS = 9.0      # envelope window: peaks beyond carry weight < exp(-K^2/2)
_WINDOW_FACTOR = 10.0   # lattice truncation: boundary terms ~ exp(-(F/2)^2) < 1e-10
_PAIR_FLOOR = 1e-22     # drop Gaussian pair couplings below this factor


def series_window(d: int, delta: float) -> int:
    """Default displacement-lattice truncation ceil(10/(ell*delta)).

    The lattice coefficients decay like exp(-(m*ell*delta)^2/4); this window
    leaves boundary terms below 1e-10 so doubling it is a no-op at that scale.
    """
    return int(math.ceil(_WINDOW_FACTOR / (GKPParameters(d).ell * delta)))


@dataclass(frozen=True)
class _GaussianComb:
    """Normalized realistic code wavefunction as a finite sum of Gaussians.

    psi(x) = sum_k w_k exp(-(x - mu_k)^2 / (2 sigma2)), exactly: multiplying
    the width-1/Delta envelope into the width-Delta comb re-centers each peak
    at mu_k = x_k/(1+Delta^4) with common variance Delta^2/(1+Delta^4).
    """

    d: int
    delta: float
    sigma2: float
    centers: np.ndarray
    weights: np.ndarray


def _comb_key(d, delta, amps):
    return (d, float(delta), np.asarray(amps, dtype=complex).tobytes())


_comb_cache: dict = {}
_lattice_cache: dict = {}


def _gaussian_comb(d: int, delta: float, amplitudes) -> _GaussianComb:
    key = _comb_key(d, delta, amplitudes)
    hit = _comb_cache.get(key)
    if hit is not None:
        return hit
    ell = GKPParameters(d).ell
    amps = np.asarray(amplitudes, dtype=complex).reshape(d)
    xmax = _PEAK_SIGMAS / delta
    kmax = int(math.ceil(xmax / (d * ell))) + 1
    k = np.arange(-kmax, kmax + 1)
    x = ell * (np.arange(d)[:, None] + d * k[None, :])      # (d, K) peak lattice
    dd4 = 1.0 + delta ** 4
    w = amps[:, None] * np.exp(-(x * x) * (delta * delta) / (2.0 * dd4))
    x, w = x.ravel(), w.ravel()
    keep = np.abs(w) > 1e-18 * max(1e-300, float(np.max(np.abs(w))))
    x, w = x[keep], w[keep]
    if x.size == 0:
        raise ValueError("state has no peaks inside the envelope window")
    sigma2 = delta * delta / dd4
    mu = x / dd4
    # normalize <psi|psi> = 1 via the pairwise Gaussian overlap integrals
    dmu = mu[:, None] - mu[None, :]
    gram = math.sqrt(math.pi * sigma2) * np.exp(-(dmu * dmu) / (4.0 * sigma2))
    n2 = float(np.real(np.conj(w) @ gram @ w))
    comb = _GaussianComb(d, delta, sigma2, mu, w / math.sqrt(n2))
    if len(_comb_cache) > 64:
        _comb_cache.clear()
    _comb_cache[key] = comb
    return comb


def _chi_points(comb: _GaussianComb, a, b) -> np.ndarray:
    """Characteristic values chi(a, b) = <psi| e^{-i b x} psi(x + a) > exactly.

    Closed form of the pairwise Gaussian integrals; ``a`` and ``b`` are
    broadcast-compatible real arrays of displacement coordinates.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a, b = np.broadcast_arrays(a, b)
    shape = a.shape
    a, b = a.ravel(), b.ravel()
    mu, w, s2 = comb.centers, comb.weights, comb.sigma2
    pref = math.sqrt(math.pi * s2)
    wp = (np.conj(w)[:, None] * w[None, :]).ravel()
    dmu = (mu[:, None] - mu[None, :]).ravel()
    smu = (mu[:, None] + mu[None, :]).ravel()
    out = np.empty(a.size, dtype=complex)
    step = max(1, int(2e6) // max(1, wp.size))
    for k0 in range(0, a.size, step):
        ac = a[k0:k0 + step, None]
        bc = b[k0:k0 + step, None]
        g = np.exp(-((dmu[None, :] + ac) ** 2) / (4.0 * s2))
        ph = np.exp(-0.5j * bc * (smu[None, :] - ac))
        out[k0:k0 + step] = (g * ph) @ wp
    out *= pref * np.exp(-(b * b) * s2 / 4.0)
    return out.reshape(shape)


def _chi_lattice(d: int, delta: float, amplitudes, window: int) -> np.ndarray:
    """chi on the displacement lattice: C[n+W, m+W] = chi(n*ell, m*ell).

    Banded evaluation: for a fixed position shift n*ell only peak pairs with
    |mu_j - mu_k + n*ell| within a few widths contribute, so each n costs one
    masked pair table instead of a full triple loop.
    """
    key = (_comb_key(d, delta, amplitudes), window)
    hit = _lattice_cache.get(key)
    if hit is not None:
        return hit
    comb = _gaussian_comb(d, delta, amplitudes)
    ell = GKPParameters(d).ell
    mu, w, s2 = comb.centers, comb.weights, comb.sigma2
    pref = math.sqrt(math.pi * s2)
    W = window
    mvals = np.arange(-W, W + 1) * ell
    gauss_b = np.exp(-(mvals * mvals) * s2 / 4.0)
    dmu = mu[:, None] - mu[None, :]
    smu = mu[:, None] + mu[None, :]
    wp = np.conj(w)[:, None] * w[None, :]
    C = np.empty((2 * W + 1, 2 * W + 1), dtype=complex)
    for i, n in enumerate(range(-W, W + 1)):
        a = n * ell
        g = np.exp(-((dmu + a) ** 2) / (4.0 * s2))
        mask = g > _PAIR_FLOOR
        if not mask.any():
            C[i, :] = 0.0
            continue
        coef = (wp[mask] * g[mask]) * pref
        centers = 0.5 * (smu[mask] - a)
        C[i, :] = gauss_b * (np.exp(-1j * np.outer(mvals, centers)) @ coef)
    if len(_lattice_cache) > 64:
        _lattice_cache.clear()
    _lattice_cache[key] = C
    return C


def _series_values(C: np.ndarray, d: int, us, vs, grid: bool) -> np.ndarray:
    """Evaluate the torus Fourier series from lattice coefficients C.

    W(u, v) = (2 pi d)^{-1} sum_{n,m} e^{-i pi n m / d} e^{i ell (m u - n v)} C[n, m];
    ``grid=True`` returns the outer grid over (us, vs), else paired points.
    Complex output: the imaginary part is a numerical-error diagnostic.
    """
    W = (C.shape[0] - 1) // 2
    ell = GKPParameters(d).ell
    n = np.arange(-W, W + 1)
    # Weyl half-angle; reduces to a parity sign on the n = 0 mod d harmonics
    half = np.exp(-1j * math.pi * np.outer(n, n) / d)
    K = C * half / (2.0 * math.pi * d)
    us = np.asarray(us, dtype=float).ravel()
    vs = np.asarray(vs, dtype=float).ravel()
    if grid:
        Pu = np.exp(1j * ell * np.outer(us, n))      # (U, m)
        Pv = np.exp(-1j * ell * np.outer(n, vs))     # (n, V)
        return (Pu @ K.T) @ Pv
    out = np.empty(us.size, dtype=complex)
    step = max(1, int(2e6) // max(1, 2 * W + 1))
    for k0 in range(0, us.size, step):
        Pu = np.exp(1j * ell * np.outer(us[k0:k0 + step], n))
        Pv = np.exp(-1j * ell * np.outer(vs[k0:k0 + step], n))
        out[k0:k0 + step] = ((Pu @ K.T) * Pv).sum(axis=1)
    return out


# ---------------------------------------------------------------------------
# realistic states: theta-function route for the 0-logical state

_COND_FLOOR = 1e-13


def _zero_logical_gamma(d: int, delta: float) -> np.ndarray:
    """Period matrix of the closed-form 0-logical torus Wigner function."""
    D2 = delta * delta
    D4 = D2 * D2
    g = np.array(
        [
            [1j / (d * D2), 1.0, -1j / D2, 1j / D2],
            [1.0, 1j * D2 / d, 1.0, 1.0],
            [-1j / D2, 1.0, 1j * d * (1.0 + 2.0 * D4) / D2, -1j * d / D2],
            [1j / D2, 1.0, -1j * d / D2, 1j * d * (1.0 + 2.0 * D4) / D2],
        ],
        dtype=complex,
    )
    return 0.5 * g


def _theta_fold(d: int, delta: float, tol: float = 1e-14):
    """Fold the genus-4 lattice sum onto its two z-coupled indices.

    Returns (H, b1, b2) with H[n1+b1, n2+b2] = sum over the interior indices
    of the signed Gaussian terms; the full series at z = (z1, z2, 0, 0) is
    then sum_{n1,n2} H e^{2 pi i (n1 z1 + n2 z2)}.  Raises ConvergenceError
    when the quadratic form is too ill-conditioned to enumerate reliably.
    """
    gamma = _zero_logical_gamma(d, delta)
    Mim = gamma.imag
    lam = np.linalg.eigvalsh(Mim)
    if lam[0] <= _COND_FLOOR * lam[-1]:
        raise ConvergenceError(
            "0-logical quadratic form is numerically degenerate at "
            f"Delta = {delta:g} (eigenvalue ratio {lam[0] / lam[-1]:.2e}); "
            "use the direct series route"
        )
    tau = -math.log(tol) / math.pi
    Minv = np.linalg.inv(Mim)
    bounds = [int(math.floor(math.sqrt(max(0.0, tau * Minv[i, i])))) + 1 for i in range(4)]
    b1, b2, b3, b4 = bounds
    n2 = np.arange(-b2, b2 + 1)[:, None, None]
    n3 = np.arange(-b3, b3 + 1)[None, :, None]
    n4 = np.arange(-b4, b4 + 1)[None, None, :]
    # interior quadratic pieces that do not involve n1
    Q_in = (
        Mim[1, 1] * n2 * n2
        + Mim[2, 2] * n3 * n3
        + Mim[3, 3] * n4 * n4
        + 2.0 * Mim[1, 2] * n2 * n3
        + 2.0 * Mim[1, 3] * n2 * n4
        + 2.0 * Mim[2, 3] * n3 * n4
    )
    lin = 2.0 * (Mim[0, 1] * n2 + Mim[0, 2] * n3 + Mim[0, 3] * n4)
    # interior parity weight (-1)^{n2 (n3 + n4)}: the harmonic parity of the
    # comb interference; it does not couple to the outer index n1
    sign = 1.0 - 2.0 * ((n2 * (n3 + n4)) % 2) * np.ones_like(n4 * n3)
    H = np.zeros((2 * b1 + 1, 2 * b2 + 1), dtype=float)
    for i1, m1 in enumerate(range(-b1, b1 + 1)):
        Q = Mim[0, 0] * m1 * m1 + m1 * lin + Q_in
        mask = Q <= tau
        if not mask.any():
            continue
        term = np.where(mask, sign * np.exp(-math.pi * np.minimum(Q, tau)), 0.0)
        H[i1, :] = term.sum(axis=(1, 2))
    return H, b1, b2


def _theta_route_values(d: int, delta: float, us, vs, grid: bool) -> np.ndarray:
    """0-logical torus Wigner values via the folded lattice sum.

    The torus integral of the raw sum is period^2 times its (0,0) Fourier
    coefficient H[b1, b2], which fixes the physical normalization without
    reference to the series route.
    """
    H, b1, b2 = _theta_fold(d, delta)
    period = d * GKPParameters(d).ell
    const = 1.0 / (period * period * H[b1, b2])
    n1 = np.arange(-b1, b1 + 1)
    n2 = np.arange(-b2, b2 + 1)
    us = np.asarray(us, dtype=float).ravel()
    vs = np.asarray(vs, dtype=float).ravel()
    # z = (v/period, -u/period): position comb couples to the u exponent
    if grid:
        Pu = np.exp(-2j * math.pi * np.outer(us, n2) / period)   # (U, n2)
        Pv = np.exp(2j * math.pi * np.outer(n1, vs) / period)    # (n1, V)
        vals = (Pu @ H.T) @ Pv
    else:
        Pu = np.exp(-2j * math.pi * np.outer(us, n2) / period)
        Pv = np.exp(2j * math.pi * np.outer(vs, n1) / period)
        vals = ((Pu @ H.T) * Pv).sum(axis=1)
    return const * vals


def _is_zero_logical(amplitudes, d: int) -> bool:
    amps = np.asarray(amplitudes, dtype=complex).reshape(d)
    ref = np.zeros(d, dtype=complex)
    ref[0] = amps[0] if abs(amps[0]) > 0 else 1.0
    return bool(np.max(np.abs(amps - ref)) < 1e-12)


def _resolve_realistic_args(d, delta, amplitudes):
    if d < 2:
        raise ValueError(f"dimension must be at least 2, got {d}")
    if d % 2 == 0:
        raise EvenDimensionError(f"torus Wigner functions need odd d, got {d}")
    delta = parse_squeezing(delta)
    if not delta > 0:
        raise ValueError(f"Delta must be positive, got {delta}")
    if amplitudes is None:
        amplitudes = np.zeros(d, dtype=complex)
        amplitudes[0] = 1.0
    amps = np.asarray(amplitudes, dtype=complex).reshape(d)
    if not np.any(np.abs(amps) > 0):
        raise ValueError("amplitudes must not all vanish")
    return delta, amps


def zgw_realistic(
    d: int,
    delta,
    amplitudes=None,
    *,
    resolution: int = 256,
    method: str = "auto",
    window: Optional[int] = None,
) -> ZGWGridSingleMode:
    """Torus Wigner grid of a finitely squeezed code state.

    ``delta`` accepts a plain width or a decibel string ("12dB").  Two
    independent evaluation routes are available: ``"series"`` sums the
    displacement-lattice Fourier series (any logical amplitudes), while
    ``"theta"`` evaluates the closed-form genus-4 lattice sum (0-logical
    state only).  ``"auto"`` picks the series route, which covers every
    state; the theta route exists as an independent cross-check and a
    fast path for the 0-logical state.
    """
    delta, amps = _resolve_realistic_args(d, delta, amplitudes)
    if resolution < 1:
        raise ValueError("resolution must be positive")
    ax = np.arange(resolution) * (d * GKPParameters(d).ell / resolution)
    if method not in ("auto", "series", "theta"):
        raise ValueError(f"unknown method {method!r}")
    if method == "theta" and not _is_zero_logical(amps, d):
        raise ValueError("theta route covers the 0-logical state only")
    use_theta = method == "theta"
    if use_theta:
        vals = _theta_route_values(d, delta, ax, ax, grid=True)
    else:
        W = window if window is not None else series_window(d, delta)
        C = _chi_lattice(d, delta, amps, W)
        vals = _series_values(C, d, ax, ax, grid=True)
    return ZGWGridSingleMode(d, vals.real, delta=delta)


def zgw_realistic_at(
    d: int,
    delta,
    u,
    v,
    amplitudes=None,
    *,
    method: str = "series",
    window: Optional[int] = None,
) -> np.ndarray:
    """Pointwise torus Wigner values W(u, v) at paired coordinate arrays."""
    delta, amps = _resolve_realistic_args(d, delta, amplitudes)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    u, v = np.broadcast_arrays(u, v)
    if method == "theta":
        if not _is_zero_logical(amps, d):
            raise ValueError("theta route covers the 0-logical state only")
        vals = _theta_route_values(d, delta, u.ravel(), v.ravel(), grid=False)
    elif method == "series":
        W = window if window is not None else series_window(d, delta)
        C = _chi_lattice(d, delta, amps, W)
        vals = _series_values(C, d, u.ravel(), v.ravel(), grid=False)
    else:
        raise ValueError(f"unknown method {method!r}")
    return vals.real.reshape(u.shape)


# ---------------------------------------------------------------------------
# encoded Clifford actions on the torus


def _omega_int(n: int) -> np.ndarray:
    O = np.zeros((2 * n, 2 * n), dtype=np.int64)
    O[:n, n:] = np.eye(n, dtype=np.int64)
    O[n:, :n] = -np.eye(n, dtype=np.int64)
    return O


def parity_defect(S: np.ndarray) -> np.ndarray:
    """Column parity vector of an integer symplectic matrix.

    Component j is (S e_j)_X . (S e_j)_Z mod 2: the change of the comb parity
    weight under the map.  It is linear over Z_2 in the lattice argument, so
    the column values determine the full correction.
    """
    S = np.asarray(S, dtype=np.int64)
    n = S.shape[0] // 2
    return (S[:n, :] * S[n:, :]).sum(axis=0) % 2


@dataclass(frozen=True, eq=False)
class CliffordAction:
    """Affine torus map carried by an encoded Clifford operation.

    ``transform`` sends the evaluation point of the output-state function to
    the evaluation point of the input-state function:
    W_out(eta) = W_in((S @ eta - ell * t_shift) mod d*ell).  ``S`` is an
    exact integer symplectic matrix; reducing it mod d preserves the map on
    the code lattice but not on continuous points, so the exact
    representative is stored and ``canonical`` exposes the reduction.
    """

    d: int
    S: np.ndarray
    t_shift: np.ndarray

    def __post_init__(self):
        if self.d < 2 or self.d % 2 == 0:
            raise EvenDimensionError(f"actions need odd d >= 3, got {self.d}")
        S = np.asarray(self.S, dtype=np.int64)
        t = np.asarray(self.t_shift, dtype=np.int64)
        if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape[0] % 2:
            raise ValueError(f"S must be 2n x 2n, got shape {S.shape}")
        n = S.shape[0] // 2
        if t.shape != (2 * n,):
            raise ValueError(f"t_shift must have length {2 * n}, got {t.shape}")
        O = _omega_int(n)
        if not np.array_equal(S.T @ O @ S, O):
            raise ValueError("S must be an integer symplectic matrix")
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "t_shift", t)

    @property
    def n(self) -> int:
        return self.S.shape[0] // 2

    @property
    def ell(self) -> float:
        return GKPParameters(self.d).ell

    def transform(self, eta) -> np.ndarray:
        """Map coordinate vectors (..., 2n) through the action, mod d*ell."""
        eta = np.asarray(eta, dtype=float)
        if eta.shape[-1] != 2 * self.n:
            raise ValueError(f"need trailing axis of length {2 * self.n}")
        out = eta @ self.S.T.astype(float) - self.ell * self.t_shift.astype(float)
        return np.mod(out, self.d * self.ell)

    def inverse(self) -> "CliffordAction":
        n = self.n
        O = _omega_int(n)
        Sinv = (-O) @ self.S.T @ O          # = Omega^{-1} S^T Omega, exact
        return CliffordAction(self.d, Sinv, -(Sinv @ self.t_shift))

    def canonical(self) -> "CliffordAction":
        """Mod-d reduction: the representative acting on the code lattice."""
        return CliffordAction(self.d, _symplectic_mod(self.S, self.d), self.t_shift % self.d)


def _symplectic_mod(S: np.ndarray, d: int) -> np.ndarray:
    # centered residues keep the reduced matrix exactly symplectic over Z for
    # the generator products used here; fall back to the plain residue if not
    R = ((S + d // 2) % d) - d // 2
    n = S.shape[0] // 2
    O = _omega_int(n)
    if np.array_equal(R.T @ O @ R, O):
        return R
    return S % d


def identity_action(d: int, n: int = 1) -> CliffordAction:
    return CliffordAction(d, np.eye(2 * n, dtype=np.int64), np.zeros(2 * n, dtype=np.int64))


def operation_action(op: GaussianOperation, d: int) -> CliffordAction:
    """Torus pullback of a code-preserving Gaussian operation.

    Requires an integer symplectic part and a displacement compatible with
    the code lattice: the derived shift (S^{-1} c - xi)/ell must be integral
    within 1e-9, where xi is the half-lattice parity correction fixed by the
    column parities of S.  Operations failing either condition do not act as
    encoded Cliffords and raise UnsupportedOperationError.
    """
    n = op.n
    ell = GKPParameters(d).ell
    Sfrac = op.S
    S = np.empty((2 * n, 2 * n), dtype=np.int64)
    for i in range(2 * n):
        for j in range(2 * n):
            e = Sfrac[i, j]
            if e.denominator != 1:
                raise UnsupportedOperationError(
                    f"symplectic entry S[{i},{j}] = {e} is not an integer; "
                    "the operation does not preserve the code lattice"
                )
            S[i, j] = int(e)
    O = _omega_int(n)
    Sinv = (-O) @ S.T @ O
    tprime = parity_defect(S)
    xi = -(d * ell / 2.0) * ((-O).astype(float) @ tprime.astype(float))
    tvec = (Sinv.astype(float) @ np.asarray(op.c, dtype=float) - xi) / ell
    trnd = np.rint(tvec)
    if np.max(np.abs(tvec - trnd)) > 1e-9:
        raise UnsupportedOperationError(
            "displacement is not compatible with the code lattice: the induced "
            f"shift {tvec} (in units of ell) is not integral within 1e-9; "
            "shears need the canonical momentum offset -s*d*ell/2 "
            "(see encoded_phase_operation)"
        )
    return CliffordAction(d, Sinv, trnd.astype(np.int64))


def compose_actions(*actions: CliffordAction) -> CliffordAction:
    """Pullback of a gate sequence, actions listed in gate order.

    W_final(eta) = W_initial(A_1(A_2(... A_k(eta)))) for gates g_1 ... g_k,
    so composition folds the later action inside the earlier one.
    """
    if not actions:
        raise ValueError("need at least one action")
    acc = actions[0]
    for nxt in actions[1:]:
        if nxt.d != acc.d or nxt.n != acc.n:
            raise ValueError("actions must share dimension and mode count")
        acc = CliffordAction(acc.d, acc.S @ nxt.S, acc.S @ nxt.t_shift + acc.t_shift)
    return acc


def circuit_action(circuit: CircuitDescription) -> CliffordAction:
    """Composed torus pullback of every operation in a circuit."""
    if circuit.d % 2 == 0:
        raise EvenDimensionError(f"encoded actions need odd d, got {circuit.d}")
    acts = [operation_action(op, circuit.d) for op in circuit.operations]
    if not acts:
        return identity_action(circuit.d, circuit.n)
    return compose_actions(*acts)


def clifford_transform(action: CliffordAction, target):
    """Apply an action to coordinates or pull a grid back through it.

    For a coordinate array (..., 2n) this is ``action.transform``.  For a
    single-mode grid the pullback W'(eta) = W(action(eta)) is exact index
    arithmetic when the action maps the grid lattice to itself; a lattice
    shift that the resolution cannot express raises ValueError (resolutions
    divisible by d always work).
    """
    if isinstance(target, ZGWGridSingleMode):
        g = target
        if action.n != 1 or action.d != g.d:
            raise ValueError("action and grid must be single-mode with equal d")
        R = g.resolution
        shift = action.t_shift * R  # in units of period/R: t*ell = t*R/d cells
        if np.any(shift % g.d):
            raise ValueError(
                f"resolution {R} cannot express a shift by ell*{action.t_shift.tolist()}; "
                "use a resolution divisible by d"
            )
        cells = shift // g.d
        I, J = np.meshgrid(np.arange(R), np.arange(R), indexing="ij")
        I2 = (action.S[0, 0] * I + action.S[0, 1] * J - cells[0]) % R
        J2 = (action.S[1, 0] * I + action.S[1, 1] * J - cells[1]) % R
        return ZGWGridSingleMode(g.d, g.values[I2, J2], delta=g.delta)
    return action.transform(target)


def encoded_phase_operation(d: int, s: int = 1, n: int = 1, target: int = 0) -> GaussianOperation:
    """Shear by integer s with the canonical momentum offset -s*d*ell/2.

    The bare shear multiplies the comb by a peak-dependent phase and is not
    an encoded operation for odd d; the offset makes the phase uniform over
    the code lattice, so the pair acts as the encoded phase-type gate.
    """
    if int(s) != s:
        raise UnsupportedOperationError(f"encoded shears need integer s, got {s}")
    base = named_gate_matrix("shear", n, target=target, s=Fraction(int(s)))
    c = np.array(base.c, dtype=float, copy=True)
    c[n + target] -= s * d * GKPParameters(d).ell / 2.0
    return GaussianOperation(base.S, c)


# ---------------------------------------------------------------------------
# negativity

_COARSE_RESOLUTION = 64


@dataclass(frozen=True)
class NegativityReport:
    """Total and per-mode negativity mass of a torus Wigner representation."""

    M_total: float
    per_mode: Tuple[float, ...]
    n_modes: int
    warnings: Tuple[str, ...] = ()


def negativity(obj: Union[ZGWGridSingleMode, ProductZGW]) -> NegativityReport:
    """Riemann 1-norm M = integral |W| of a grid or product of grids.

    M = 1 exactly for nonnegative states; M > 1 measures the sampling
    overhead of the quasi-probability estimator (per-mode values multiply).
    """
    grids = obj.modes if isinstance(obj, ProductZGW) else (obj,)
    per = tuple(g.abs_total() for g in grids)
    warns = []
    for i, g in enumerate(grids):
        if g.delta is not None and g.resolution < _COARSE_RESOLUTION:
            warns.append(
                f"mode {i}: resolution {g.resolution} below {_COARSE_RESOLUTION}; "
                "the Riemann 1-norm may be coarse"
            )
    M = 1.0
    for p in per:
        M *= p
    return NegativityReport(M, per, len(per), tuple(warns))


# ---------------------------------------------------------------------------
# quasi-probability estimator


def required_samples(M: float, epsilon: float, delta: float) -> int:
    """Sample count ceil((2/eps^2) M^2 log(2/delta)) for additive error eps
    with failure probability delta, at total negativity M."""
    if not (epsilon > 0 and 0 < delta < 1 and M > 0):
        raise ValueError("need epsilon > 0, 0 < delta < 1, M > 0")
    return int(math.ceil((2.0 / (epsilon * epsilon)) * M * M * math.log(2.0 / delta)))


@dataclass(frozen=True)
class EstimatorConfig:
    """Configuration of the sampling estimator.

    ``seed`` is mandatory: runs are deterministic given (seed, shard_size).
    ``n_samples`` may only raise the sample count above the guarantee bound;
    ``bin_width`` must divide the torus period (default ell/64).
    ``epsilon``/``delta`` are the additive-error and failure-probability
    targets; ``resolution``/``window`` control the per-mode grids.
    """

    seed: int
    epsilon: float = 0.05
    delta: float = 0.05
    n_samples: Optional[int] = None
    bin_width: Optional[float] = None
    resolution: int = 256
    window: Optional[int] = None
    shard_size: int = 8192
    threads: Optional[int] = None


@dataclass(frozen=True, eq=False)
class EstimateResult:
    """Binned modular-position estimates with per-bin standard errors."""

    bin_centers: np.ndarray
    estimates: np.ndarray
    stderr: np.ndarray
    bin_width: float
    n_samples: int
    M_total: float
    per_mode_M: Tuple[float, ...]
    measured_mode: int
    seed: int

    @property
    def n_bins(self) -> int:
        return self.estimates.size

    @property
    def total_probability(self) -> float:
        return float(self.estimates.sum())


def _shard_seed(seed: int, index: int) -> int:
    digest = hashlib.sha256(f"gkpsim-zgw:{seed}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _mode_tables(state, d: int, cfg: EstimatorConfig):
    """(coords_u, coords_v, probabilities, signs, M) for one input mode."""
    if isinstance(state, IdealGKPState):
        if state.n != 1:
            raise UnsupportedOperationError("inputs must be listed per mode")
        vec = np.zeros(d, dtype=complex)
        vec[state.j] = 1.0
        grid = zgw_ideal(LogicalDensityMatrix.from_state_vector(d, vec))
    elif isinstance(state, RealisticGKPState):
        grid = zgw_realistic(
            d, state.delta, np.asarray(state.amplitudes),
            resolution=cfg.resolution, method="series", window=cfg.window,
        )
    else:
        raise UnsupportedOperationError(f"unsupported input state {type(state).__name__}")
    mass = np.abs(grid.values).ravel() * grid.cell_area
    M = float(mass.sum())
    ax = grid.axis()
    R = grid.resolution
    idx = np.arange(R * R)
    return ax[idx // R], ax[idx % R], mass / M, np.sign(grid.values).ravel(), M


def estimate_pdf(circuit: CircuitDescription, config: EstimatorConfig) -> EstimateResult:
    """Estimate the modular-position distribution of an encoded circuit.

    Draws phase-space points from the per-mode |W| distributions, pushes them
    through the circuit's affine torus map, and accumulates the signed
    negativity weight M * prod(signs) into the bin of the measured position
    coordinate.  The estimate of each bin probability is unbiased for the
    gridded input representation; ``stderr`` is the per-bin sample error.

    Raises UnsupportedMeasurementError unless the circuit measures modular
    position on exactly one mode, UnsupportedOperationError for operations
    that are not encoded Cliffords, and EstimatorConfigError when the
    requested sample count undercuts the (epsilon, delta) guarantee bound.
    """
    d = circuit.d
    if d % 2 == 0:
        raise EvenDimensionError(f"the estimator needs odd d, got {d}")
    meas = circuit.measurement
    if meas.kind != "modular-position":
        raise UnsupportedMeasurementError(
            f"measurement kind {meas.kind!r} is not supported; use modular-position"
        )
    if len(meas.modes) != 1:
        raise UnsupportedMeasurementError(
            f"need exactly one measured mode, got {len(meas.modes)}"
        )
    mode = meas.modes[0]
    n = circuit.n
    ell = GKPParameters(d).ell
    period = d * ell

    push = circuit_action(circuit).inverse()

    tables = [_mode_tables(st, d, config) for st in circuit.inputs]
    per_mode_M = tuple(t[4] for t in tables)
    M_total = 1.0
    for m in per_mode_M:
        M_total *= m

    bin_width = config.bin_width if config.bin_width is not None else ell / 64.0
    n_bins_f = period / bin_width
    n_bins = int(round(n_bins_f))
    if not bin_width > 0 or abs(n_bins_f - n_bins) > 1e-9 * n_bins_f:
        raise EstimatorConfigError(
            f"bin width {bin_width} must evenly divide the torus period {period}"
        )

    n_required = required_samples(M_total, config.epsilon, config.delta)
    n_samples = config.n_samples if config.n_samples is not None else n_required
    if n_samples < n_required:
        raise EstimatorConfigError(
            f"n_samples = {n_samples} is below the guarantee bound {n_required} "
            f"for M = {M_total:.6g}, epsilon = {config.epsilon}, delta = {config.delta}"
        )

    shard_size = max(1, config.shard_size)
    shards = [
        (k, min(shard_size, n_samples - k * shard_size))
        for k in range((n_samples + shard_size - 1) // shard_size)
    ]
    Spush = push.S.T.astype(float)
    toff = ell * push.t_shift.astype(float)

    def run_shard(args):
        index, count = args
        rng = np.random.default_rng(_shard_seed(config.seed, index))
        eta = np.empty((count, 2 * n), dtype=float)
        signs = np.ones(count, dtype=float)
        for m, (uu, vv, prob, sgn, _) in enumerate(tables):
            idx = rng.choice(prob.size, size=count, p=prob)
            eta[:, m] = uu[idx]
            eta[:, n + m] = vv[idx]
            signs *= sgn[idx]
        out = np.mod(eta @ Spush - toff, period)
        x = out[:, mode]
        bins = np.clip((x / bin_width).astype(np.int64), 0, n_bins - 1)
        contrib = M_total * signs
        acc = np.bincount(bins, weights=contrib, minlength=n_bins)
        acc_sq = np.bincount(bins, weights=contrib * contrib, minlength=n_bins)
        return acc, acc_sq

    n_threads = config.threads
    if n_threads is None:
        n_threads = int(os.environ.get("GKPSIM_THREADS", "1") or "1")
    if n_threads > 1 and len(shards) > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(run_shard, shards))
    else:
        results = [run_shard(s) for s in shards]

    total = np.zeros(n_bins)
    total_sq = np.zeros(n_bins)
    for acc, acc_sq in results:  # fixed merge order: thread scheduling is immaterial
        total += acc
        total_sq += acc_sq

    estimates = total / n_samples
    var = np.maximum(total_sq - n_samples * estimates * estimates, 0.0)
    stderr = np.sqrt(var / max(1, n_samples - 1)) / math.sqrt(n_samples)
    centers = (np.arange(n_bins) + 0.5) * bin_width
    return EstimateResult(
        bin_centers=centers,
        estimates=estimates,
        stderr=stderr,
        bin_width=bin_width,
        n_samples=n_samples,
        M_total=M_total,
        per_mode_M=per_mode_M,
        measured_mode=mode,
        seed=config.seed,
    )
