"""Torus Wigner engine against independent oracles.

Oracles: a closed-form phase-point operator for the discrete function,
brute-force wavefunction quadrature for the characteristic function and both
marginals, and coefficient-level conjugation identities for covariance.
All of them are derived independently of the module under test.
"""

import math
from fractions import Fraction

import numpy as np
import pytest

from gkpsim.core import (
    CircuitDescription,
    GKPParameters,
    GaussianOperation,
    IdealGKPState,
    Measurement,
    RealisticGKPState,
    compose,
    named_gate_matrix,
    realistic_wavefunction,
)
from gkpsim.magic import LogicalDensityMatrix, strange_state
from gkpsim.theta import ConvergenceError
from gkpsim.zgw import (
    CliffordAction,
    EstimatorConfig,
    EstimatorConfigError,
    EvenDimensionError,
    NegativityReport,
    ProductZGW,
    UnsupportedMeasurementError,
    UnsupportedOperationError,
    ZGWGridSingleMode,
    circuit_action,
    clifford_transform,
    compose_actions,
    encoded_phase_operation,
    estimate_pdf,
    gross_wigner,
    identity_action,
    negativity,
    operation_action,
    parity_defect,
    required_samples,
    series_window,
    zgw_ideal,
    zgw_realistic,
    zgw_realistic_at,
)
from gkpsim.zgw import _chi_lattice, _series_values


# ---------------------------------------------------------------------------
# oracles


def oracle_phase_point(d: int, tx: int, tz: int) -> np.ndarray:
    """Phase-point operator A_t[j, m] = (1/d) w^{tz (j-m)} [j+m = 2 tx mod d].

    Derived by resumming the T_k expansion by hand; Tr(A_t rho) gives the
    discrete Wigner value at t independently of the engine's FFT-style path.
    """
    w = np.exp(2j * np.pi / d)
    A = np.zeros((d, d), dtype=complex)
    for j in range(d):
        for m in range(d):
            if (j + m) % d == (2 * tx) % d:
                A[j, m] = w ** (tz * (j - m)) / d
    return A


def oracle_gross(rho: LogicalDensityMatrix) -> np.ndarray:
    d = rho.d
    W = np.empty((d, d))
    for tx in range(d):
        for tz in range(d):
            W[tx, tz] = np.trace(oracle_phase_point(d, tx, tz) @ rho.entries).real
    return W


def normalized_psi(d, amps, delta, x):
    """Brute-force position wavefunction of sum_j c_j |j_Delta>, unit L2 norm."""
    p = GKPParameters(d)
    psi = np.zeros_like(np.asarray(x, dtype=float), dtype=complex)
    for j, c in enumerate(amps):
        if c != 0:
            psi = psi + c * realistic_wavefunction(x, j, p, delta)
    return psi / math.sqrt(np.trapezoid(np.abs(psi) ** 2, x))


def brute_chi(d, amps, delta, a, b, x):
    """chi(a, b) = int conj(psi(x)) e^{-i b x} psi(x + a) dx by quadrature."""
    p = GKPParameters(d)
    psi = np.zeros_like(np.asarray(x, dtype=float), dtype=complex)
    shifted = np.zeros_like(psi)
    for j, c in enumerate(amps):
        if c != 0:
            psi = psi + c * realistic_wavefunction(x, j, p, delta)
            shifted = shifted + c * realistic_wavefunction(x + a, j, p, delta)
    norm = np.trapezoid(np.abs(psi) ** 2, x)
    return np.trapezoid(np.conj(psi) * np.exp(-1j * b * x) * shifted, x) / norm


def wrapped_position_pdf(d, amps, delta, us, k_range=9):
    """sum_k |psi(u + k period)|^2 with psi unit-normalized on the line."""
    p = GKPParameters(d)
    period = d * p.ell
    span = 12.0 / delta
    x = np.linspace(-span, span, 120001)
    norm = np.trapezoid(np.abs(normalized_psi(d, amps, delta, x)) ** 2, x)  # ~1 sanity
    assert abs(norm - 1.0) < 1e-9
    us = np.asarray(us, dtype=float)
    total = np.zeros_like(us)
    raw = np.zeros_like(x, dtype=complex)
    for j, c in enumerate(amps):
        if c != 0:
            raw = raw + c * realistic_wavefunction(x, j, p, delta)
    scale = np.trapezoid(np.abs(raw) ** 2, x)
    for k in range(-k_range, k_range + 1):
        pts = us + k * period
        val = np.zeros_like(pts, dtype=complex)
        for j, c in enumerate(amps):
            if c != 0:
                val = val + c * realistic_wavefunction(pts, j, p, delta)
        total += np.abs(val) ** 2
    return total / scale


def wrapped_momentum_pdf(d, amps, delta, vs, k_range=6):
    """Wrapped |psi-tilde(v)|^2 via direct Fourier quadrature."""
    period = d * GKPParameters(d).ell
    span = 12.0 / delta
    x = np.linspace(-span, span, 48001)
    psi = normalized_psi(d, amps, delta, x)
    vs = np.asarray(vs, dtype=float)
    total = np.zeros_like(vs)
    for k in range(-k_range, k_range + 1):
        ps = vs + k * period
        phases = np.exp(-1j * np.outer(ps, x))
        tilde = (phases @ psi) * (x[1] - x[0]) / math.sqrt(2.0 * math.pi)
        total += np.abs(tilde) ** 2
    return total


DENSE_X = np.linspace(-60.0, 60.0, 400001)


# ---------------------------------------------------------------------------
# discrete function


class TestGrossWigner:
    @pytest.mark.parametrize("d", [3, 5, 7])
    def test_matches_phase_point_oracle(self, d):
        rng = np.random.default_rng(11 + d)
        vec = rng.normal(size=d) + 1j * rng.normal(size=d)
        rho = LogicalDensityMatrix.from_state_vector(d, vec)
        assert np.max(np.abs(gross_wigner(rho) - oracle_gross(rho))) < 1e-12

    @pytest.mark.parametrize("d", [3, 5])
    def test_sums_to_trace(self, d):
        rng = np.random.default_rng(3 * d)
        vec = rng.normal(size=d) + 1j * rng.normal(size=d)
        W = gross_wigner(LogicalDensityMatrix.from_state_vector(d, vec))
        assert abs(W.sum() - 1.0) < 1e-12

    def test_codeword_rows(self):
        # |j> concentrates on the position row a_x = j, uniform along a_z
        d = 3
        for j in range(d):
            vec = np.zeros(d, dtype=complex)
            vec[j] = 1.0
            W = gross_wigner(LogicalDensityMatrix.from_state_vector(d, vec))
            assert np.max(np.abs(W[j, :] - 1.0 / d)) < 1e-12
            W[j, :] = 0.0
            assert np.max(np.abs(W)) < 1e-12

    def test_maximally_mixed_uniform(self):
        d = 5
        W = gross_wigner(LogicalDensityMatrix.maximally_mixed(d))
        assert np.max(np.abs(W - 1.0 / d**2)) < 1e-12

    def test_strange_state_negativity(self):
        W = gross_wigner(strange_state())
        assert np.min(W) < 0
        assert abs(np.abs(W).sum() - 5.0 / 3.0) < 1e-12

    def test_pauli_shift_covariance(self):
        # X rho X^dag moves the position coordinate by one row; Z moves columns
        d = 5
        rng = np.random.default_rng(17)
        vec = rng.normal(size=d) + 1j * rng.normal(size=d)
        rho = LogicalDensityMatrix.from_state_vector(d, vec)
        W = gross_wigner(rho)
        X = np.roll(np.eye(d), 1, axis=0)
        Z = np.diag(np.exp(2j * np.pi * np.arange(d) / d))
        WX = gross_wigner(LogicalDensityMatrix(d, X @ rho.entries @ X.conj().T))
        WZ = gross_wigner(LogicalDensityMatrix(d, Z @ rho.entries @ Z.conj().T))
        assert np.max(np.abs(WX - np.roll(W, 1, axis=0))) < 1e-12
        assert np.max(np.abs(WZ - np.roll(W, 1, axis=1))) < 1e-12

    def test_even_dimension_rejected(self):
        with pytest.raises(EvenDimensionError):
            gross_wigner(LogicalDensityMatrix.maximally_mixed(4))


class TestZgwIdeal:
    def test_codeword_comb(self):
        d = 3
        g = zgw_ideal(LogicalDensityMatrix.from_state_vector(d, np.array([1.0, 0, 0])))
        assert g.resolution == d
        assert abs(g.riemann_total() - 1.0) < 1e-12
        assert abs(g.abs_total() - 1.0) < 1e-12
        # nonnegative comb with all mass on the u = 0 column of cells
        assert g.values.min() >= -1e-15
        assert np.max(np.abs(g.values[0, :] * g.cell_area - 1.0 / d)) < 1e-12

    def test_strange_total_negativity(self):
        g = zgw_ideal(strange_state())
        assert abs(g.abs_total() - 5.0 / 3.0) < 1e-9
        assert abs(g.riemann_total() - 1.0) < 1e-12

    def test_uniform_mixture_flat(self):
        d = 3
        g = zgw_ideal(LogicalDensityMatrix.maximally_mixed(d))
        assert np.ptp(g.values) < 1e-12


# ---------------------------------------------------------------------------
# realistic states: characteristic lattice and series


class TestChiLattice:
    def test_brute_quadrature_codeword(self):
        # includes cross-residue displacements, whose size is e^{-pi/(2 d Delta^2)}
        d, delta = 3, 0.25
        ell = GKPParameters(d).ell
        amps = np.array([1.0, 0.0, 0.0])
        W = series_window(d, delta)
        C = _chi_lattice(d, delta, amps, W)
        for n, m in [(0, 0), (3, 0), (3, 1), (0, 2), (1, 0), (1, 1), (2, 1), (4, 0)]:
            ref = brute_chi(d, amps, delta, n * ell, m * ell, DENSE_X)
            assert abs(C[n + W, m + W] - ref) < 1e-12

    def test_brute_quadrature_superposition(self):
        d, delta = 3, 0.3
        ell = GKPParameters(d).ell
        amps = np.array([1.0, 0.5 - 0.2j, 0.3j])
        amps = amps / np.linalg.norm(amps)
        W = series_window(d, delta)
        C = _chi_lattice(d, delta, amps, W)
        for n, m in [(0, 0), (1, 0), (3, 2), (2, 2), (0, 1)]:
            ref = brute_chi(d, amps, delta, n * ell, m * ell, DENSE_X)
            assert abs(C[n + W, m + W] - ref) < 1e-11

    def test_brute_quadrature_d5(self):
        d, delta = 5, 0.25
        ell = GKPParameters(d).ell
        amps = np.zeros(5)
        amps[2] = 1.0
        W = series_window(d, delta)
        C = _chi_lattice(d, delta, amps, W)
        for n, m in [(0, 0), (5, 0), (0, 3), (5, 2)]:
            ref = brute_chi(d, amps, delta, n * ell, m * ell, DENSE_X)
            assert abs(C[n + W, m + W] - ref) < 1e-12

    def test_standardised_at_origin(self):
        C = _chi_lattice(3, 0.2, np.array([0.2, 1.0, -0.4 + 0.1j]), 20)
        assert abs(C[20, 20] - 1.0) < 1e-13


class TestSeriesRoute:
    def test_position_marginal(self):
        # v-average of the grid times the period integrates out v exactly
        d, delta = 3, 0.25
        g = zgw_realistic(d, delta, resolution=64)
        marg = g.values.mean(axis=1) * g.period
        ref = wrapped_position_pdf(d, (1.0, 0, 0), delta, g.axis())
        assert np.max(np.abs(marg - ref)) < 1e-7

    def test_momentum_marginal(self):
        d, delta = 3, 0.25
        g = zgw_realistic(d, delta, resolution=64)
        marg = g.values.mean(axis=0) * g.period
        ref = wrapped_momentum_pdf(d, (1.0, 0, 0), delta, g.axis())
        assert np.max(np.abs(marg - ref)) < 1e-6

    def test_momentum_displaced_amplitudes(self):
        # c_j = w^{j} marks the momentum-displaced codeword: the v-marginal
        # moves by one lattice step while the u-marginal stays put
        d, delta = 3, 0.22
        w = np.exp(2j * np.pi / d)
        amps = np.array([1.0, w, w**2]) / math.sqrt(3)
        g = zgw_realistic(d, delta, np.array(amps), resolution=96)
        ell = GKPParameters(d).ell
        vmarg = g.values.mean(axis=0) * g.period
        ref = wrapped_momentum_pdf(d, amps, delta, g.axis())
        assert np.max(np.abs(vmarg - ref)) < 1e-6
        # peak of the v-marginal sits at v = ell
        assert abs(g.axis()[int(np.argmax(vmarg))] - ell) < g.period / 96 + 1e-12
        umarg = g.values.mean(axis=1) * g.period
        uref = wrapped_position_pdf(d, amps, delta, g.axis())
        assert np.max(np.abs(umarg - uref)) < 1e-6

    def test_series_values_are_real(self):
        d, delta = 3, 0.2
        W = series_window(d, delta)
        C = _chi_lattice(d, delta, np.array([1.0, 0.4, 0.1j]), W)
        ax = np.arange(48) * (d * GKPParameters(d).ell / 48.0)
        vals = _series_values(C, d, ax, ax, grid=True)
        assert np.max(np.abs(vals.imag)) < 1e-10

    def test_pointwise_matches_grid(self):
        d, delta = 3, 0.25
        g = zgw_realistic(d, delta, resolution=32)
        uu, vv = np.meshgrid(g.axis(), g.axis(), indexing="ij")
        pts = zgw_realistic_at(d, delta, uu, vv)
        assert np.max(np.abs(pts - g.values)) < 1e-10

    def test_standardisation_and_grid_exactness(self):
        d = 3
        g = zgw_realistic(d, 0.1, resolution=512)
        assert abs(g.riemann_total() - 1.0) < 2e-3
        # lattice-aligned Riemann sums of the series are exact once the
        # resolution clears the truncation window
        assert abs(g.riemann_total() - 1.0) < 1e-9

    def test_convergence_of_resolution(self):
        d = 3
        e512 = abs(zgw_realistic(d, 0.1, resolution=512).riemann_total() - 1.0)
        e1024 = abs(zgw_realistic(d, 0.1, resolution=1024).riemann_total() - 1.0)
        assert e1024 <= max(e512, 1e-9)

    def test_db_string_accepted(self):
        g1 = zgw_realistic(3, "12dB", resolution=16)
        g2 = zgw_realistic(3, 10 ** (-12 / 20), resolution=16)
        assert np.array_equal(g1.values, g2.values)
        assert g1.delta == pytest.approx(0.2512, abs=1e-4)

    def test_mass_concentrates_on_comb(self):
        # comb of the ideal Wigner function: u on (d ell / 2) Z, v on (ell / 2) Z
        d = 3
        ell = GKPParameters(d).ell
        hu, hv = d * ell / 2.0, ell / 2.0
        fractions = []
        for delta in (0.3, 0.2, 0.1):
            g = zgw_realistic(d, delta, resolution=128)
            uu, vv = np.meshgrid(g.axis(), g.axis(), indexing="ij")
            du = np.minimum(uu % hu, hu - (uu % hu))
            dv = np.minimum(vv % hv, hv - (vv % hv))
            near = (du <= 0.3) & (dv <= 0.3)
            mass = np.abs(g.values)
            fractions.append(float(mass[near].sum() / mass.sum()))
        assert fractions[0] < fractions[1] < fractions[2]
        assert fractions[2] > 0.999
        assert fractions[2] > 0.999

    def test_negative_regions_exist(self):
        g = zgw_realistic(3, "12dB", resolution=128)
        assert g.values.min() < -1e-3

    def test_truncation_window_stable(self):
        d, delta = 3, 0.2
        W = series_window(d, delta)
        a = zgw_realistic(d, delta, resolution=128, window=W)
        b = zgw_realistic(d, delta, resolution=128, window=2 * W)
        assert np.max(np.abs(a.values - b.values)) < 1e-10

    def test_periodicity_of_pointwise_route(self):
        d, delta = 3, 0.2
        period = d * GKPParameters(d).ell
        us = np.array([0.3, 1.1, 2.9])
        vs = np.array([0.7, 2.2, 0.05])
        a = zgw_realistic_at(d, delta, us, vs)
        b = zgw_realistic_at(d, delta, us + period, vs)
        c = zgw_realistic_at(d, delta, us, vs - period)
        assert np.max(np.abs(a - b)) < 1e-10
        assert np.max(np.abs(a - c)) < 1e-10


class TestThetaRoute:
    def test_agrees_with_series_at_strong_squeezing(self):
        d, delta = 3, 0.15
        gs = zgw_realistic(d, delta, resolution=64, method="series")
        gt = zgw_realistic(d, delta, resolution=64, method="theta")
        scale = np.max(np.abs(gs.values))
        assert np.max(np.abs(gs.values - gt.values)) < 1e-8 * scale

    @pytest.mark.parametrize("delta", [0.2, 0.25, 0.3])
    def test_route_difference_inside_exponential_envelope(self, delta):
        # the closed form carries cross-residue terms of size e^{-pi/(2 d D^2)};
        # the measured route difference tracks that envelope with a small factor
        d = 3
        gs = zgw_realistic(d, delta, resolution=48, method="series")
        gt = zgw_realistic(d, delta, resolution=48, method="theta")
        rel = np.max(np.abs(gs.values - gt.values)) / np.max(np.abs(gs.values))
        assert rel < 4.0 * math.exp(-math.pi / (2 * d * delta * delta))

    def test_theta_route_standardised(self):
        g = zgw_realistic(3, 0.15, resolution=256, method="theta")
        assert abs(g.riemann_total() - 1.0) < 1e-9

    def test_theta_route_rejects_non_zero_logical(self):
        with pytest.raises(ValueError):
            zgw_realistic(3, 0.2, np.array([0.0, 1.0, 0.0]), method="theta")

    def test_degenerate_squeezing_raises(self):
        with pytest.raises(ConvergenceError):
            zgw_realistic(3, 1e-3, method="theta")

    def test_pointwise_theta_matches_grid(self):
        d, delta = 3, 0.18
        g = zgw_realistic(d, delta, resolution=16, method="theta")
        uu, vv = np.meshgrid(g.axis(), g.axis(), indexing="ij")
        pts = zgw_realistic_at(d, delta, uu, vv, method="theta")
        assert np.max(np.abs(pts - g.values)) < 1e-10


# ---------------------------------------------------------------------------
# covariance


class TestCovariance:
    def test_fourier_on_ideal_grid(self):
        # the q->p, p->-q gate conjugates like the inverse DFT F[j,k] = w^{-jk}/sqrt(d)
        d = 3
        w = np.exp(2j * np.pi / d)
        F = w ** (-np.outer(np.arange(d), np.arange(d))) / math.sqrt(d)
        X = np.roll(np.eye(d), 1, axis=0)
        Z = np.diag(w ** np.arange(d))
        assert np.max(np.abs(F @ X @ F.conj().T - Z.conj().T)) < 1e-12  # convention pin
        assert np.max(np.abs(F @ Z @ F.conj().T - X)) < 1e-12
        rng = np.random.default_rng(5)
        vec = rng.normal(size=d) + 1j * rng.normal(size=d)
        rho = LogicalDensityMatrix.from_state_vector(d, vec)
        left = zgw_ideal(LogicalDensityMatrix(d, F @ rho.entries @ F.conj().T))
        act = operation_action(named_gate_matrix("fourier", 1, target=0), d)
        right = clifford_transform(act, zgw_ideal(rho))
        assert np.max(np.abs(left.values - right.values)) < 1e-12

    @staticmethod
    def _transformed_coefficients(Cbig, d, act, half_window):
        """Gather C'[n', m'] for the pullback W(act.S eta - ell t) of the series.

        Harmonic vector K = (m, -n) transforms as K -> act.S^T K, so the new
        coefficient pulls from (n, m) = act.S (n', m') and carries the Weyl
        half-phase ratio plus the displacement phase from t_shift.
        """
        Wn = (Cbig.shape[0] - 1) // 2
        A = np.array([[int(act.S[i, j]) for j in range(2)] for i in range(2)])
        t = np.asarray(act.t_shift, dtype=int)
        idx = np.arange(-half_window, half_window + 1)
        Np, Mp = np.meshgrid(idx, idx, indexing="ij")
        n_old = A[0, 0] * Np + A[0, 1] * Mp
        m_old = A[1, 0] * Np + A[1, 1] * Mp
        ok = (np.abs(n_old) <= Wn) & (np.abs(m_old) <= Wn)
        ratio = np.exp(-1j * math.pi * (n_old * m_old - Np * Mp) / d)
        shift = np.exp(-2j * math.pi * (m_old * t[0] - n_old * t[1]) / d)
        vals = Cbig[np.clip(n_old, -Wn, Wn) + Wn, np.clip(m_old, -Wn, Wn) + Wn]
        return np.where(ok, ratio * shift * vals, 0.0)

    def test_fourier_on_realistic_grid(self):
        d, delta = 3, 0.2
        amps = np.array([1.0, 0.6, 0.3j])
        Wn = 80
        Cbig = _chi_lattice(d, delta, amps, Wn)
        op = named_gate_matrix("fourier", 1, target=0)
        act = operation_action(op, d)
        Cp = self._transformed_coefficients(Cbig, d, act, Wn // 2)
        R = 128
        ax = np.arange(R) * (d * GKPParameters(d).ell / R)
        left = _series_values(Cp, d, ax, ax, grid=True).real
        g = zgw_realistic(d, delta, amps, resolution=R, window=Wn)
        right = clifford_transform(act, g).values
        assert np.max(np.abs(left - right)) < 1e-6 * np.max(np.abs(right))

    def test_encoded_phase_on_realistic_grid(self):
        # shear tilts m by n; the half-phase ratio reduces to e^{i pi n^2 / d}
        d, delta = 3, 0.2
        amps = np.array([1.0, 0.6, 0.3j])
        Wn = 80
        Cbig = _chi_lattice(d, delta, amps, Wn)
        act = operation_action(encoded_phase_operation(d, s=1), d)
        assert all(int(t) % d == 0 for t in act.t_shift)
        Cp = self._transformed_coefficients(Cbig, d, act, Wn // 2)
        R = 128
        ax = np.arange(R) * (d * GKPParameters(d).ell / R)
        left = _series_values(Cp, d, ax, ax, grid=True).real
        g = zgw_realistic(d, delta, amps, resolution=R, window=Wn)
        right = clifford_transform(act, g).values
        assert np.max(np.abs(left - right)) < 1e-6 * np.max(np.abs(right))

    def test_sum_gate_on_product_grid(self):
        # two-mode check: conjugate the product characteristic function by
        # SUM^{-1} and resum on a 16^4 grid; compare with the product grid
        # pulled back through the engine's affine action
        d, delta = 3, 0.25
        ell = GKPParameters(d).ell
        period = d * ell
        R = 16
        Wc, Wb = 40, 60  # pair terms beyond Wc carry chi1*chi2 mass < 1e-11
        amps1 = np.array([1.0, 0.6, 0.3j])
        amps2 = np.array([0.2, 1.0, -0.4 + 0.1j])
        C1 = _chi_lattice(d, delta, amps1, Wb)
        C2 = _chi_lattice(d, delta, amps2, Wb)

        op = named_gate_matrix("sum", 2, control=0, target=1)
        act = operation_action(op, d)
        A = np.array([[int(act.S[i, j]) for j in range(4)] for i in range(4)])
        AinvT = np.rint(np.linalg.inv(A)).astype(int).T
        assert np.array_equal(A @ AinvT.T, np.eye(4, dtype=int))
        t = np.asarray(act.t_shift, dtype=int)

        idx = np.arange(-Wc, Wc + 1)
        N2, M1, M2 = np.meshgrid(idx, idx, idx, indexing="ij")
        Kf = np.zeros((R, R, R, R), dtype=complex)  # axes (nu1, nu2, mu1, mu2)
        for n1 in idx:
            # harmonic vector K = (m1, m2, -n1, -n2) transforms by act.S^{-T}
            kt = [M1, M2, -n1 * np.ones_like(N2), -N2]
            K = [sum(AinvT[r, c] * kt[c] for c in range(4)) for r in range(4)]
            m1o, m2o, n1o, n2o = K[0], K[1], -K[2], -K[3]
            ok = (np.abs(n1o) <= Wb) & (np.abs(n2o) <= Wb) & (np.abs(m1o) <= Wb) & (np.abs(m2o) <= Wb)
            half = np.exp(-1j * math.pi * (n1o * m1o + n2o * m2o) / d)
            shift = np.exp(-2j * math.pi * (m1o * t[0] + m2o * t[1] - n1o * t[2] - n2o * t[3]) / d)
            term = np.where(
                ok,
                half * shift
                * C1[np.clip(n1o, -Wb, Wb) + Wb, np.clip(m1o, -Wb, Wb) + Wb]
                * C2[np.clip(n2o, -Wb, Wb) + Wb, np.clip(m2o, -Wb, Wb) + Wb],
                0.0,
            ) / (2.0 * math.pi * d) ** 2
            flat = ((N2 % R) * R * R + (M1 % R) * R + (M2 % R)).ravel()
            acc = np.bincount(flat, weights=term.real.ravel(), minlength=R**3) + 1j * np.bincount(
                flat, weights=term.imag.ravel(), minlength=R**3
            )
            Kf[n1 % R] += acc.reshape(R, R, R)
        E = np.exp(2j * np.pi * np.outer(np.arange(R), np.arange(R)) / R)
        # W'[i1, j1, i2, j2] = sum Kf * E[mu1, i1] conj(E)[nu1, j1] * ...
        left = np.einsum("abcd,ci,aj,dk,bl->ijkl", Kf, E, E.conj(), E, E.conj()).real

        g1 = zgw_realistic(d, delta, amps1, resolution=R, window=Wb)
        g2 = zgw_realistic(d, delta, amps2, resolution=R, window=Wb)
        ax = g1.axis()
        I1, J1, I2, J2 = np.meshgrid(*(np.arange(R),) * 4, indexing="ij")
        eta = np.stack(
            [ax[I1], ax[I2], ax[J1], ax[J2]], axis=-1
        )  # (q1, q2, p1, p2) coordinates
        tr = act.transform(eta)
        ki = np.rint(tr / (period / R)).astype(int) % R
        right = g1.values[ki[..., 0], ki[..., 2]] * g2.values[ki[..., 1], ki[..., 3]]
        assert np.max(np.abs(left - right)) < 1e-7 * np.max(np.abs(right))


# ---------------------------------------------------------------------------
# torus actions


class TestActions:
    def test_identity(self):
        act = identity_action(3, n=2)
        eta = np.array([0.3, 1.0, 2.2, 0.1])
        assert np.max(np.abs(act.transform(eta) - eta)) < 1e-15

    def test_fourier_action_matrix(self):
        op = named_gate_matrix("fourier", 1, target=0)
        act = operation_action(op, 3)
        Sf = np.array(op.S.to_float()).round().astype(int)
        assert np.array_equal(act.S @ Sf, np.eye(2, dtype=int))  # stored part is S^{-1}
        assert np.array_equal(act.t_shift, [0, 0])

    def test_displacement_action(self):
        d = 3
        ell = GKPParameters(d).ell
        op = named_gate_matrix("displacement", 1, v=np.array([2 * ell, -ell]))
        act = operation_action(op, d)
        assert np.array_equal(act.S, np.eye(2, dtype=int))
        assert np.array_equal(act.t_shift, [2, -1])

    def test_bare_shear_rejected(self):
        op = named_gate_matrix("shear", 1, target=0, s=Fraction(1))
        with pytest.raises(UnsupportedOperationError):
            operation_action(op, 3)

    def test_fractional_symplectic_rejected(self):
        op = named_gate_matrix("shear", 1, target=0, s=Fraction(1, 2))
        with pytest.raises(UnsupportedOperationError):
            operation_action(op, 3)

    def test_off_lattice_displacement_rejected(self):
        op = named_gate_matrix("displacement", 1, v=np.array([0.5, 0.0]))
        with pytest.raises(UnsupportedOperationError):
            operation_action(op, 3)

    def test_encoded_phase_lattice_compatible(self):
        for d in (3, 5):
            for s in (1, 2):
                act = operation_action(encoded_phase_operation(d, s=s), d)
                assert np.all(act.t_shift % d == 0)

    def test_inverse_roundtrip(self):
        d = 3
        acts = [
            operation_action(named_gate_matrix("fourier", 1, target=0), d),
            operation_action(encoded_phase_operation(d, s=1), d),
            operation_action(
                named_gate_matrix("displacement", 1, v=np.array([GKPParameters(d).ell, 0.0])), d
            ),
        ]
        for act in acts:
            ident = compose_actions(act, act.inverse())
            assert np.array_equal(ident.S, np.eye(2, dtype=int))
            assert np.array_equal(ident.t_shift, [0, 0])

    def test_compose_matches_action_of_composition(self):
        d = 3
        ell = GKPParameters(d).ell
        rng = np.random.default_rng(23)
        pool = [
            named_gate_matrix("fourier", 2, target=0),
            named_gate_matrix("fourier", 2, target=1),
            encoded_phase_operation(d, s=1, n=2, target=0),
            encoded_phase_operation(d, s=2, n=2, target=1),
            named_gate_matrix("sum", 2, control=0, target=1),
            named_gate_matrix("sum", 2, control=1, target=0),
            named_gate_matrix("displacement", 2, v=np.array([ell, 0.0, -2 * ell, ell])),
        ]
        for _ in range(25):
            word = [pool[i] for i in rng.integers(0, len(pool), size=rng.integers(2, 6))]
            whole = operation_action(compose(*word), d)
            parts = compose_actions(*[operation_action(g, d) for g in word])
            assert np.array_equal(whole.S, parts.S)
            assert np.all((whole.t_shift - parts.t_shift) % d == 0)

    def test_parity_defect_generators(self):
        F = np.array([[0, 1], [-1, 0]])
        P = np.array([[1, 0], [1, 1]])
        assert np.array_equal(parity_defect(F), [0, 0])
        assert np.array_equal(parity_defect(P), [1, 0])
        S4 = np.array([[int(x) for x in row] for row in
                       np.array(named_gate_matrix("sum", 2, control=0, target=1).S.to_float())])
        assert np.array_equal(parity_defect(S4), [0, 0, 0, 0])

    def test_parity_defect_composition_law(self):
        # t'(S2 S1) = S1^T t'(S2) + t'(S1) mod 2
        d = 3
        rng = np.random.default_rng(41)
        gens = [
            named_gate_matrix("fourier", 2, target=0),
            named_gate_matrix("shear", 2, target=0, s=Fraction(1)),
            named_gate_matrix("shear", 2, target=1, s=Fraction(3)),
            named_gate_matrix("sum", 2, control=1, target=0),
        ]
        def random_S():
            word = [gens[i] for i in rng.integers(0, len(gens), size=4)]
            return np.array(compose(*word).S.to_float()).round().astype(int)
        for _ in range(30):
            S1, S2 = random_S(), random_S()
            lhs = parity_defect(S2 @ S1)
            rhs = (S1.T @ parity_defect(S2) + parity_defect(S1)) % 2
            assert np.array_equal(lhs, rhs)

    def test_canonical_reduces_mod_d(self):
        d = 3
        act = operation_action(encoded_phase_operation(d, s=4), d)
        can = act.canonical()
        assert np.array_equal(can.S % d, act.S % d)
        assert np.all((can.t_shift - act.t_shift) % d == 0)
        assert np.max(np.abs(can.S)) <= d

    def test_grid_pullback_needs_expressible_shift(self):
        d = 3
        g = zgw_realistic(d, 0.2, resolution=32)  # 32 not divisible by 3
        act = operation_action(
            named_gate_matrix("displacement", 1, v=np.array([GKPParameters(d).ell, 0.0])), d
        )
        with pytest.raises(ValueError):
            clifford_transform(act, g)
        g2 = zgw_realistic(d, 0.2, resolution=33)
        moved = clifford_transform(act, g2)
        # mass moved by +ell along u: 11 grid rows
        assert np.max(np.abs(moved.values - np.roll(g2.values, 11, axis=0))) < 1e-12

    def test_even_dimension_rejected(self):
        with pytest.raises(EvenDimensionError):
            identity_action(4)

    def test_circuit_action_composes(self):
        d = 3
        ell = GKPParameters(d).ell
        ops = (
            named_gate_matrix("displacement", 1, v=np.array([ell, 0.0])),
            named_gate_matrix("fourier", 1, target=0),
        )
        circ = CircuitDescription(
            1, d, (IdealGKPState(d, 0),), ops, Measurement("modular-position", (0,))
        )
        act = circuit_action(circ)
        ref = compose_actions(*[operation_action(op, d) for op in ops])
        assert np.array_equal(act.S, ref.S)
        assert np.array_equal(act.t_shift, ref.t_shift)


# ---------------------------------------------------------------------------
# negativity


class TestNegativity:
    def test_ideal_stabilizer_unit(self):
        for j in range(3):
            vec = np.zeros(3)
            vec[j] = 1.0
            rep = negativity(zgw_ideal(LogicalDensityMatrix.from_state_vector(3, vec)))
            assert rep.M_total == pytest.approx(1.0, abs=1e-12)
            assert rep.warnings == ()

    def test_strange_state_exceeds_unity(self):
        rep = negativity(zgw_ideal(strange_state()))
        assert abs(rep.M_total - 5.0 / 3.0) < 1e-9

    def test_realistic_strange_bounded_below_by_ideal(self):
        amps = np.array([0.0, 1.0, 1.0]) / math.sqrt(2)
        g = zgw_realistic(3, 0.1, amps, resolution=256)
        rep = negativity(g)
        assert rep.M_total > 5.0 / 3.0 - 0.05

    def test_twelve_db_codeword(self):
        rep = negativity(zgw_realistic(3, "12dB", resolution=256))
        assert rep.M_total > 1.0
        assert rep.M_total < 3.0

    def test_product_multiplies(self):
        g1 = zgw_realistic(3, "12dB", resolution=128)
        g2 = zgw_ideal(strange_state())
        rep = negativity(ProductZGW((g1, g2)))
        assert rep.n_modes == 2
        assert rep.M_total == pytest.approx(rep.per_mode[0] * rep.per_mode[1], rel=1e-12)

    def test_coarse_grid_warns(self):
        rep = negativity(zgw_realistic(3, 0.2, resolution=32))
        assert rep.warnings and "resolution" in rep.warnings[0]


# ---------------------------------------------------------------------------
# estimator


def _measure(mode=0):
    return Measurement("modular-position", (mode,))


class TestRequiredSamples:
    def test_printed_bound_value(self):
        assert required_samples(1.0, 0.05, 0.01) == 4239

    def test_monotone_in_negativity_and_targets(self):
        assert required_samples(2.0, 0.05, 0.01) > required_samples(1.0, 0.05, 0.01)
        assert required_samples(1.0, 0.02, 0.01) > required_samples(1.0, 0.05, 0.01)
        assert required_samples(1.0, 0.05, 0.001) > required_samples(1.0, 0.05, 0.01)

    def test_invalid_args(self):
        with pytest.raises(ValueError):
            required_samples(0.0, 0.05, 0.01)
        with pytest.raises(ValueError):
            required_samples(1.0, -1.0, 0.01)
        with pytest.raises(ValueError):
            required_samples(1.0, 0.05, 1.5)


class TestEstimator:
    def test_ideal_codeword_identity_circuit(self):
        d = 3
        circ = CircuitDescription(1, d, (IdealGKPState(d, 0),), (), _measure())
        res = estimate_pdf(circ, EstimatorConfig(seed=1))
        assert res.M_total == pytest.approx(1.0, abs=1e-12)
        k = int(np.argmax(res.estimates))
        assert res.bin_centers[k] < res.bin_width  # the u = 0 bin
        assert res.estimates[k] == pytest.approx(1.0, abs=1e-15)
        assert abs(res.total_probability - 1.0) < 1e-12

    def test_displacement_moves_the_comb(self):
        d = 3
        ell = GKPParameters(d).ell
        circ = CircuitDescription(
            1, d, (IdealGKPState(d, 0),),
            (named_gate_matrix("displacement", 1, v=np.array([ell, 0.0])),),
            _measure(),
        )
        res = estimate_pdf(circ, EstimatorConfig(seed=2))
        k = int(np.argmax(res.estimates))
        assert res.estimates[k] == pytest.approx(1.0, abs=1e-15)
        assert abs(res.bin_centers[k] - ell) < res.bin_width

    def test_fourier_spreads_the_comb(self):
        d = 3
        ell = GKPParameters(d).ell
        circ = CircuitDescription(
            1, d, (IdealGKPState(d, 0),),
            (named_gate_matrix("fourier", 1, target=0),), _measure(),
        )
        res = estimate_pdf(circ, EstimatorConfig(seed=3))
        hot = np.flatnonzero(res.estimates > 0.0)
        assert hot.size == d
        for k, target in zip(hot, (0.0, ell, 2 * ell)):
            assert abs(res.bin_centers[k] - target) < res.bin_width
            assert abs(res.estimates[k] - 1.0 / d) < 0.05

    def test_two_mode_sum_circuit(self):
        d = 3
        ell = GKPParameters(d).ell
        circ = CircuitDescription(
            2, d, (IdealGKPState(d, 1), IdealGKPState(d, 1)),
            (named_gate_matrix("sum", 2, control=0, target=1),),
            _measure(mode=1),
        )
        res = estimate_pdf(circ, EstimatorConfig(seed=4))
        assert res.measured_mode == 1
        k = int(np.argmax(res.estimates))
        assert res.estimates[k] == pytest.approx(1.0, abs=1e-15)
        assert abs(res.bin_centers[k] - 2 * ell) < res.bin_width

    def test_realistic_identity_against_quadrature(self):
        d = 3
        delta = 10 ** (-12 / 20)
        circ = CircuitDescription(
            1, d, (RealisticGKPState(d, delta, (1.0, 0.0, 0.0)),), (), _measure()
        )
        res = estimate_pdf(circ, EstimatorConfig(seed=5, resolution=384))
        edges = np.arange(res.n_bins + 1) * res.bin_width
        fine = 12
        sub = (edges[:-1, None] + (np.arange(fine)[None, :] + 0.5) * res.bin_width / fine)
        pdf = wrapped_position_pdf(d, (1.0, 0, 0), delta, sub.ravel()).reshape(sub.shape)
        truth = pdf.mean(axis=1) * res.bin_width
        assert abs(truth.sum() - 1.0) < 1e-6
        assert np.max(np.abs(res.estimates - truth)) < 0.05

    def test_unbiased_against_gridded_truth(self):
        d = 3
        delta = 0.25
        ell = GKPParameters(d).ell
        circ = CircuitDescription(
            1, d, (RealisticGKPState(d, delta, (1.0, 0.0, 0.0)),),
            (named_gate_matrix("fourier", 1, target=0),), _measure(),
        )
        cfg0 = EstimatorConfig(seed=0, epsilon=0.1, resolution=64, bin_width=ell / 16)
        g = zgw_realistic(d, delta, resolution=64)
        push = circuit_action(circ).inverse()
        coords = np.stack(
            [np.repeat(g.axis(), 64), np.tile(g.axis(), 64)], axis=-1
        )
        pushed = push.transform(coords)[:, 0]
        n_bins = round(g.period / cfg0.bin_width)
        bins = np.clip((pushed / cfg0.bin_width).astype(int), 0, n_bins - 1)
        truth = np.bincount(bins, weights=g.values.ravel() * g.cell_area, minlength=n_bins)
        reps = [
            estimate_pdf(circ, EstimatorConfig(seed=s, epsilon=0.1, resolution=64,
                                               bin_width=ell / 16)).estimates
            for s in range(60)
        ]
        stack = np.stack(reps)
        mean = stack.mean(axis=0)
        sem = stack.std(axis=0, ddof=1) / math.sqrt(len(reps))
        assert np.all(np.abs(mean - truth) <= 4.0 * sem + 1e-4)

    def test_deterministic_and_thread_invariant(self):
        d = 3
        circ = CircuitDescription(
            1, d, (RealisticGKPState(d, 0.25, (1.0, 0.0, 0.0)),), (), _measure()
        )
        base = EstimatorConfig(seed=9, resolution=64, shard_size=512)
        r1 = estimate_pdf(circ, base)
        r2 = estimate_pdf(circ, base)
        r3 = estimate_pdf(circ, EstimatorConfig(seed=9, resolution=64, shard_size=512, threads=4))
        r4 = estimate_pdf(circ, EstimatorConfig(seed=10, resolution=64, shard_size=512))
        assert np.array_equal(r1.estimates, r2.estimates)
        assert np.array_equal(r1.estimates, r3.estimates)
        assert not np.array_equal(r1.estimates, r4.estimates)

    def test_sample_floor_enforced(self):
        d = 3
        circ = CircuitDescription(1, d, (IdealGKPState(d, 0),), (), _measure())
        with pytest.raises(EstimatorConfigError):
            estimate_pdf(circ, EstimatorConfig(seed=1, n_samples=100))
        bound = required_samples(1.0, 0.05, 0.05)
        res = estimate_pdf(circ, EstimatorConfig(seed=1, n_samples=bound + 5))
        assert res.n_samples == bound + 5

    def test_rejects_wrong_measurements(self):
        d = 3
        with pytest.raises(UnsupportedMeasurementError):
            estimate_pdf(
                CircuitDescription(1, d, (IdealGKPState(d, 0),), (),
                                   Measurement("homodyne-position", (0,))),
                EstimatorConfig(seed=1),
            )
        with pytest.raises(UnsupportedMeasurementError):
            estimate_pdf(
                CircuitDescription(2, d, (IdealGKPState(d, 0), IdealGKPState(d, 0)), (),
                                   Measurement("modular-position", (0, 1))),
                EstimatorConfig(seed=1),
            )

    def test_rejects_non_clifford_operation(self):
        d = 3
        circ = CircuitDescription(
            1, d, (IdealGKPState(d, 0),),
            (named_gate_matrix("shear", 1, target=0, s=Fraction(1)),), _measure(),
        )
        with pytest.raises(UnsupportedOperationError):
            estimate_pdf(circ, EstimatorConfig(seed=1))

    def test_rejects_even_dimension(self):
        circ = CircuitDescription(1, 2, (IdealGKPState(2, 0),), (), _measure())
        with pytest.raises(EvenDimensionError):
            estimate_pdf(circ, EstimatorConfig(seed=1))

    def test_rejects_bad_bin_width(self):
        d = 3
        circ = CircuitDescription(1, d, (IdealGKPState(d, 0),), (), _measure())
        with pytest.raises(EstimatorConfigError):
            estimate_pdf(circ, EstimatorConfig(seed=1, bin_width=1.0))
