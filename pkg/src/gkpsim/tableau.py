"""n-qudit stabilizer tableaux with exact phase arithmetic mod D.

Every group element is stored in the normal form

    omega_D^phi * X^{a_1} x ... x X^{a_n} * Z^{b_1} x ... x Z^{b_n},

with a, b reduced mod d and phi mod D, where D = d for odd d and 2d for
even d.  All products, powers, and conjugations below are derived from the
single reordering rule Z^b X^a = omega_d^{ab} X^a Z^b, so phase bookkeeping
is exact for every dimension; the even-d half-integer phases live in the
doubled ring D = 2d rather than in any floating-point root of unity.

Heisenberg-Weyl elements enter as exponent vectors u with a declared phase:
T_u = omega_D^{kappa * u_X.u_Z} X^{u_X} Z^{u_Z}, kappa = 2^{-1} mod d for
odd d and 1 for even d.  With this convention T_u^h = 1 whenever h*u = 0
mod d, so measurement outcomes are clean labels: outcome j for observable
omega_D^p T_u names the eigenvalue omega_D^p * omega_h^j, h the order of u.

For composite d a stabilizer group of order d^n need not have n independent
generators (the order-8 pair {Z^2, X^4} on one qudit is already minimal),
so tableaux hold a variable-length generator list; the group-order and
commutation invariants are what `validate` enforces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .exact import RationalMatrix, smith_normal_form

__all__ = [
    "TableauError",
    "HWObservable",
    "DimensionLift",
    "SuperpositionState",
    "StabilizerTableau",
    "DenseState",
    "new_logical_state",
    "apply_clifford",
    "apply_pauli",
    "measure_hw",
    "hw_outcome_distribution",
    "lift_dimension",
    "lifted_tableau",
    "pushthrough",
]


class TableauError(ValueError):
    """A tableau invariant failed or an operation was applied out of range."""


# a group element is (a: tuple, b: tuple, phi: int)
_Element = Tuple[Tuple[int, ...], Tuple[int, ...], int]


def _phase_modulus(d: int) -> int:
    return d if d % 2 else 2 * d


def _mul(d: int, D: int, g1: _Element, g2: _Element) -> _Element:
    # (X^a1 Z^b1)(X^a2 Z^b2): moving Z^b1 past X^a2 costs omega_d^{b1.a2}
    a1, b1, p1 = g1
    a2, b2, p2 = g2
    cross = sum(x * y for x, y in zip(b1, a2))
    phi = (p1 + p2 + (D // d) * cross) % D
    a = tuple((x + y) % d for x, y in zip(a1, a2))
    b = tuple((x + y) % d for x, y in zip(b1, b2))
    return a, b, phi


def _pow(d: int, D: int, g: _Element, k: int) -> _Element:
    # (X^a Z^b)^k = omega_d^{a.b * k(k-1)/2} X^{ka} Z^{kb}, valid for all k
    a, b, p = g
    dot = sum(x * y for x, y in zip(a, b))
    phi = (k * p + (D // d) * dot * (k * (k - 1) // 2)) % D
    return tuple((k * x) % d for x in a), tuple((k * x) % d for x in b), phi


def _commutator_exp(d: int, g: _Element, o: _Element) -> int:
    # g o = omega_d^c o g with c = b_g . a_o - a_g . b_o
    return (
        sum(x * y for x, y in zip(g[1], o[0]))
        - sum(x * y for x, y in zip(g[0], o[1]))
    ) % d


def _is_identity(g: _Element) -> bool:
    return not any(g[0]) and not any(g[1]) and g[2] == 0


@dataclass(frozen=True)
class HWObservable:
    """Heisenberg-Weyl element omega_D^phase * T_u, u in Z_d^{2n}."""

    u: Tuple[int, ...]
    phase: int = 0

    def __post_init__(self):
        object.__setattr__(self, "u", tuple(int(x) for x in self.u))
        if len(self.u) % 2:
            raise ValueError("exponent vector must have even length 2n")

    def _element(self, d: int, D: int) -> _Element:
        n = len(self.u) // 2
        ux = tuple(x % d for x in self.u[:n])
        uz = tuple(x % d for x in self.u[n:])
        kappa = 1 if d % 2 == 0 else pow(2, -1, d)
        phi = (self.phase + kappa * sum(x * y for x, y in zip(ux, uz))) % D
        return ux, uz, phi


@dataclass(frozen=True)
class DimensionLift:
    """Square lift d1 -> d2 = a^2 d1 of the logical label space."""

    d1: int
    a: int

    def __post_init__(self):
        if self.d1 < 2 or self.a < 1:
            raise ValueError("need d1 >= 2 and a >= 1")

    @property
    def d2(self) -> int:
        return self.a * self.a * self.d1


@dataclass(frozen=True)
class SuperpositionState:
    """Uniform superposition (1/sqrt(len)) sum_j |label_j> in dimension d."""

    d: int
    labels: Tuple[int, ...]

    def __post_init__(self):
        labels = tuple(int(x) % self.d for x in self.labels)
        if len(set(labels)) != len(labels):
            raise ValueError("superposition labels must be distinct")
        object.__setattr__(self, "labels", labels)


@dataclass(frozen=True)
class StabilizerTableau:
    """Generators of an order-d^n stabilizer group, phases mod D.

    Rows are normal-form elements (a, b, phase).  The row count may exceed
    n for composite d; `validate` checks pairwise commutation, that the
    generated group has order exactly d^n, and that it contains no phased
    identity (in particular not -1).
    """

    n: int
    d: int
    generators: Tuple[_Element, ...]

    def __post_init__(self):
        if self.d < 2 or self.n < 1:
            raise ValueError("need d >= 2 and n >= 1")
        rows = []
        for a, b, p in self.generators:
            if len(a) != self.n or len(b) != self.n:
                raise TableauError("generator exponent length must equal n")
            rows.append(
                (
                    tuple(x % self.d for x in a),
                    tuple(x % self.d for x in b),
                    p % self.D,
                )
            )
        object.__setattr__(self, "generators", tuple(rows))

    @property
    def D(self) -> int:
        return _phase_modulus(self.d)

    def validate(self) -> None:
        d, D = self.d, self.D
        gens = self.generators
        for i in range(len(gens)):
            for j in range(i + 1, len(gens)):
                if _commutator_exp(d, gens[i], gens[j]) != 0:
                    raise TableauError(f"generators {i} and {j} do not commute")
        # group order d^n and phase consistency via SNF over Z
        m = len(gens)
        rows = [list(g[0]) + list(g[1]) for g in gens]
        stack = rows + [
            [d if k == c else 0 for k in range(2 * self.n)] for c in range(2 * self.n)
        ]
        snf = smith_normal_form(stack)
        diag = snf.diagonal()
        quotient = 1
        for x in diag:
            quotient *= x
        if quotient == 0 or d ** (2 * self.n) // quotient != d**self.n:
            raise TableauError(
                f"group order is {0 if quotient == 0 else d**(2*self.n)//quotient}, "
                f"want {d**self.n}"
            )
        # kernel rows of the stack witness every relation; their products
        # must be the bare identity (no omega^phi with phi != 0)
        r = len([x for x in diag if x != 0])
        for krow in snf.Vinv[r:]:
            g = (tuple([0] * self.n), tuple([0] * self.n), 0)
            for k, gen in zip(krow[:m], gens):
                if k:
                    g = _mul(d, D, g, _pow(d, D, gen, k))
            if not _is_identity(g):
                raise TableauError(
                    "stabilizer relations produce a phased identity "
                    f"(omega^{g[2]}); -1 or a root of it is in the group"
                )


def new_logical_state(n: int, d: int, labels: Sequence[int]) -> StabilizerTableau:
    """Tableau of the computational basis state |labels>.

    Z|j> = omega_d^j |j>, so omega_d^{-j} Z stabilizes qudit j.
    """
    labels = [int(x) for x in labels]
    if len(labels) != n:
        raise ValueError(f"need {n} labels, got {len(labels)}")
    if any(not 0 <= x < d for x in labels):
        raise ValueError(f"labels {labels} outside [0, {d})")
    D = _phase_modulus(d)
    gens = []
    for j, lab in enumerate(labels):
        b = tuple(int(k == j) for k in range(n))
        gens.append((tuple([0] * n), b, (-lab * (D // d)) % D))
    return StabilizerTableau(n, d, tuple(gens))


def _conj_fourier(d: int, D: int, g: _Element, t: int) -> _Element:
    # F X F* = Z, F Z F* = X^{-1}; reordering the image costs omega_d^{-ab}
    a, b, p = list(g[0]), list(g[1]), g[2]
    at, bt = a[t], b[t]
    a[t] = (-bt) % d
    b[t] = at
    return tuple(a), tuple(b), (p - (D // d) * at * bt) % D


def _conj_phase_gate(d: int, D: int, g: _Element, t: int) -> _Element:
    # P X P* = XZ (odd d) or omega_2d XZ (even d); P Z P* = Z
    a, b, p = list(g[0]), list(g[1]), g[2]
    at = a[t]
    b[t] = (b[t] + at) % d
    if d % 2:
        p = (p + at * (at - 1) // 2) % D
    else:
        p = (p + at * at) % D
    return tuple(a), tuple(b), p


def _conj_sum(d: int, D: int, g: _Element, ctrl: int, tgt: int) -> _Element:
    # X_c -> X_c X_t, Z_t -> Z_t Z_c^{-1}; images stay in normal form
    a, b, p = list(g[0]), list(g[1]), g[2]
    a[tgt] = (a[tgt] + a[ctrl]) % d
    b[ctrl] = (b[ctrl] - b[tgt]) % d
    return tuple(a), tuple(b), p


def apply_clifford(
    t: StabilizerTableau, gate: str, targets: Sequence[int]
) -> StabilizerTableau:
    """Conjugate every generator by F, P, or SUM on the given targets."""
    d, D, n = t.d, t.D, t.n
    name = gate.upper()
    targets = [int(x) for x in targets]
    for x in targets:
        if not 0 <= x < n:
            raise TableauError(f"target {x} outside [0, {n})")
    if name in ("F", "FOURIER"):
        if len(targets) != 1:
            raise TableauError("F takes exactly one target")
        gens = [_conj_fourier(d, D, g, targets[0]) for g in t.generators]
    elif name in ("P", "PHASE"):
        if len(targets) != 1:
            raise TableauError("P takes exactly one target")
        gens = [_conj_phase_gate(d, D, g, targets[0]) for g in t.generators]
    elif name == "SUM":
        if len(targets) != 2 or targets[0] == targets[1]:
            raise TableauError("SUM needs distinct control and target")
        gens = [_conj_sum(d, D, g, targets[0], targets[1]) for g in t.generators]
    else:
        raise TableauError(f"unknown Clifford generator {gate!r}")
    return StabilizerTableau(n, d, tuple(gens))


def apply_pauli(t: StabilizerTableau, obs: HWObservable) -> StabilizerTableau:
    """Conjugate the tableau by a Heisenberg-Weyl displacement.

    Exponent vectors are untouched; each phase shifts by the commutator
    omega_d^{u_Z.a - u_X.b}.
    """
    d, D, n = t.d, t.D, t.n
    if len(obs.u) != 2 * n:
        raise TableauError(f"observable acts on {len(obs.u)//2} qudits, tableau has {n}")
    ux, uz, _ = obs._element(d, D)
    gens = []
    for a, b, p in t.generators:
        c = sum(x * y for x, y in zip(uz, a)) - sum(x * y for x, y in zip(ux, b))
        gens.append((a, b, (p + (D // d) * c) % D))
    return StabilizerTableau(n, d, tuple(gens))


def _solve_in_group(t: StabilizerTableau, target: _Element) -> _Element:
    """Express target's exponent vector in the group; return the element.

    Solves sum_i k_i v_i = u mod d by SNF over Z and multiplies the
    generators out with exact phases.  Raises TableauError if u is not in
    the span (the state is then not full rank, or the caller's observable
    does not commute).
    """
    d, D, n = t.d, t.D, t.n
    gens = t.generators
    m = len(gens)
    rows = [list(g[0]) + list(g[1]) for g in gens]
    stack = rows + [
        [d if k == c else 0 for k in range(2 * n)] for c in range(2 * n)
    ]
    snf = smith_normal_form(stack)
    u = list(target[0]) + list(target[1])
    # solve z D = u Uinv, then (k | l) = z Vinv
    w = [
        sum(u[i] * snf.Uinv[i][j] for i in range(2 * n)) for j in range(2 * n)
    ]
    diag = snf.diagonal()
    z = [0] * (m + 2 * n)
    for j in range(2 * n):
        dj = diag[j] if j < len(diag) else 0
        if dj == 0:
            if w[j] != 0:
                raise TableauError("observable is outside the stabilizer span")
            continue
        if w[j] % dj:
            raise TableauError("observable is outside the stabilizer span")
        z[j] = w[j] // dj
    k = [
        sum(z[i] * snf.Vinv[i][j] for i in range(m + 2 * n)) for j in range(m)
    ]
    g = (tuple([0] * n), tuple([0] * n), 0)
    for ki, gen in zip(k, gens):
        if ki:
            g = _mul(d, D, g, _pow(d, D, gen, ki))
    if g[0] != target[0] or g[1] != target[1]:
        raise TableauError("internal solve mismatch")
    return g


def _order_of(d: int, elem: _Element) -> int:
    g0 = math.gcd(d, *elem[0], *elem[1])
    return d // g0


def _label_from_eigen_exponent(
    D: int, h: int, e: int, p_ref: int
) -> int:
    # omega_D^e = omega_D^{p_ref} omega_h^j  =>  j = (e - p_ref) h / D mod h
    num = (e - p_ref) * h
    if num % D:
        raise TableauError("eigenvalue is not on the observable's label grid")
    return (num // D) % h


def _outcome_law(t: StabilizerTableau, obs: HWObservable):
    """Resolve an observable against the tableau.

    Returns ("det", label) when the observable commutes with every
    generator, else ("random", j0, step, q, survivors, o, h) where the
    outcome is uniform over {j0 + step*k : k in [0, q)} and `survivors` are
    the commuting generators (folded) that persist after projection.
    """
    d, D, n = t.d, t.D, t.n
    if len(obs.u) != 2 * n:
        raise TableauError(f"observable acts on {len(obs.u)//2} qudits, tableau has {n}")
    o = obs._element(d, D)
    h = _order_of(d, o)
    p_ref = obs.phase % D
    comms = [_commutator_exp(d, g, o) for g in t.generators]
    if all(c == 0 for c in comms):
        g = _solve_in_group(t, o)
        e = (o[2] - g[2]) % D
        return "det", _label_from_eigen_exponent(D, h, e, p_ref)

    # fold anticommuting generators pairwise so a single carrier holds the
    # gcd of the commutator exponents; SL2(Z) combinations keep the group
    gens = list(t.generators)
    idx = [i for i, c in enumerate(comms) if c != 0]
    p = idx[0]
    carrier, c_star = gens[p], comms[p]
    for i in idx[1:]:
        ci = comms[i]
        gcd, x, y = _xgcd(c_star, ci)
        new_carrier = _mul(d, D, _pow(d, D, carrier, x), _pow(d, D, gens[i], y))
        new_other = _mul(
            d, D, _pow(d, D, carrier, -(ci // gcd)), _pow(d, D, gens[i], c_star // gcd)
        )
        carrier, c_star = new_carrier, gcd
        gens[i] = new_other
    gamma = math.gcd(c_star, d)
    q = d // gamma  # orbit size; also the power of O that commutes with all
    if h % q:
        raise TableauError("orbit size does not divide the observable order")
    step = h // q

    # the commuting power O^q pins the outcome class j mod step
    survivors = [g for i, g in enumerate(gens) if i != p]
    keeper = _pow(d, D, carrier, q)
    if not _is_identity(keeper):
        survivors = survivors + [keeper]
    probe = StabilizerTableau(n, d, tuple(survivors))
    oq = _pow(d, D, o, q)
    gq = _solve_in_group(probe, oq)
    e_q = (oq[2] - gq[2]) % D
    num = (e_q - p_ref * q) * h
    if num % D:
        raise TableauError("eigenvalue is not on the observable's label grid")
    r = (num // D) % h
    if r % q:
        raise TableauError("outcome congruence is unsolvable")
    j0 = (r // q) % step
    return "random", j0, step, q, survivors, o, h


def hw_outcome_distribution(t: StabilizerTableau, obs: HWObservable) -> dict:
    """Exact outcome-label distribution {j: Fraction probability}."""
    law = _outcome_law(t, obs)
    if law[0] == "det":
        return {law[1]: Fraction(1)}
    _, j0, step, q, _, _, h = law
    return {(j0 + step * k) % h: Fraction(1, q) for k in range(q)}


def measure_hw(
    t: StabilizerTableau, obs: HWObservable, seed: int
) -> Tuple[int, StabilizerTableau]:
    """Measure a Heisenberg-Weyl observable; return (label, new tableau).

    Outcome j names the eigenvalue omega_D^{phase} * omega_h^j, with h the
    order of the exponent vector mod d.  Commuting observables resolve
    deterministically through the group (tableau unchanged); otherwise the
    outcome is uniform over the allowed coset of Z_h and one anticommuting
    generator is exchanged for the phased observable.  Composite d is
    handled with gcd folds rather than field inverses.
    """
    law = _outcome_law(t, obs)
    if law[0] == "det":
        return law[1], t
    _, j0, step, q, survivors, o, h = law
    rng = np.random.default_rng(seed)
    j = (j0 + step * int(rng.integers(0, q))) % h
    return j, _project(t, obs, j, survivors, o, h)


def _project(
    t: StabilizerTableau,
    obs: HWObservable,
    j: int,
    survivors: List[_Element],
    o: _Element,
    h: int,
) -> StabilizerTableau:
    # post-measurement group: commuting survivors plus the observable
    # locked to the sampled eigenvalue omega_D^{p_ref} omega_h^j
    d, D, n = t.d, t.D, t.n
    p_ref = obs.phase % D
    locked = (o[0], o[1], (o[2] - p_ref - j * (D // h)) % D)
    new_rows = survivors + [locked]
    if len(new_rows) > 2 * n:
        new_rows = _compress(d, D, new_rows, n)
    return StabilizerTableau(n, d, tuple(new_rows))


def _xgcd(a: int, b: int) -> Tuple[int, int, int]:
    old_r, r = a, b
    old_s, s = 1, 0
    old_t, tt = 0, 1
    while r:
        qq = old_r // r
        old_r, r = r, old_r - qq * r
        old_s, s = s, old_s - qq * s
        old_t, tt = tt, old_t - qq * tt
    if old_r < 0:
        old_r, old_s, old_t = -old_r, -old_s, -old_t
    return old_r, old_s, old_t


def _compress(d: int, D: int, rows: List[_Element], n: int) -> List[_Element]:
    """Reduce a generator list without changing the generated group.

    Column-by-column gcd folds (the same SL2(Z) moves as in measurement)
    drive all but one row to zero in each coordinate; zero-exponent rows
    with zero phase are dropped.  A zero-exponent row with nonzero phase
    means the group contains a phased identity: invalid, raise.
    """
    work = [g for g in rows if not _is_identity(g)]
    pivot = 0
    for col in range(2 * n):
        def val(g: _Element) -> int:
            return (g[0] + g[1])[col] % d

        live = [i for i in range(pivot, len(work)) if val(work[i]) != 0]
        if not live:
            continue
        i0 = live[0]
        for i in live[1:]:
            a_v, b_v = val(work[i0]), val(work[i])
            g, x, y = _xgcd(a_v, b_v)
            merged = _mul(d, D, _pow(d, D, work[i0], x), _pow(d, D, work[i], y))
            cleared = _mul(
                d, D, _pow(d, D, work[i0], -(b_v // g)), _pow(d, D, work[i], a_v // g)
            )
            work[i0], work[i] = merged, cleared
        work[pivot], work[i0] = work[i0], work[pivot]
        pivot += 1
    out = []
    for g in work:
        if not any(g[0]) and not any(g[1]):
            if g[2] != 0:
                raise TableauError("compression exposed a phased identity")
            continue
        out.append(g)
    return out


# ---------------------------------------------------------------------------
# dimension lift


def lift_dimension(state, lift: DimensionLift) -> SuperpositionState:
    """Relabel a logical basis state into the lifted dimension d2 = a^2 d1.

    |j, d1> becomes the uniform superposition over labels a*j + d1*a*k for
    k = 0..a-1; a = 1 is the identity relabeling.
    """
    if state.d != lift.d1:
        raise ValueError(f"state dimension {state.d} != lift base {lift.d1}")
    a, d2 = lift.a, lift.d2
    labels = tuple((a * state.j + lift.d1 * a * k) % d2 for k in range(a))
    return SuperpositionState(d2, labels)


def lifted_tableau(state, lift: DimensionLift) -> StabilizerTableau:
    """Stabilizer tableau of the lifted basis state (one qudit, d2 labels).

    Generated by omega_{d1}^{-j} Z^a (the lifted logical-Z eigenvalue) and
    X^{d1 a} (the cyclic shift across the superposed labels): for a > 1
    these two generators are genuinely independent, so the row count here
    exceeds n = 1.
    """
    if state.d != lift.d1:
        raise ValueError(f"state dimension {state.d} != lift base {lift.d1}")
    d2, a = lift.d2, lift.a
    D2 = _phase_modulus(d2)
    zgen = ((0,), (a % d2,), (-state.j * (D2 // lift.d1)) % D2)
    if a == 1:
        return StabilizerTableau(1, d2, (zgen,))
    xgen = (((lift.d1 * a) % d2,), (0,), 0)
    return StabilizerTableau(1, d2, (zgen, xgen))


# ---------------------------------------------------------------------------
# displacement push-through


def pushthrough(ops: Iterable) -> Tuple[RationalMatrix, Tuple[Fraction, ...]]:
    """Fold a Gaussian operation sequence to one (S_total, c_total) pair.

    The commutation relation behind the fold: as operator products,
    D(r) U_S = U_S D(S^{-1} r), so a displacement moves through a
    symplectic at the cost of the inverse matrix.  Folding every
    displacement into a single trailing one is then the affine recursion
    c <- S c_prev + c, carried out here in exact rational arithmetic on
    the stored values (floats convert exactly), so the result reproduces
    step-by-step evolution with no rounding at all.
    """
    ops = list(ops)
    if not ops:
        raise ValueError("pushthrough needs at least one operation")
    S_total: RationalMatrix = ops[0].S
    c_total = [Fraction(x) for x in np.asarray(ops[0].c).tolist()]
    for op in ops[1:]:
        S = op.S
        c_total = [
            sum((S[i, j] * c_total[j] for j in range(S.cols)), Fraction(0))
            + Fraction(float(op.c[i]))
            for i in range(S.rows)
        ]
        S_total = op.S @ S_total
    return S_total, tuple(c_total)


# ---------------------------------------------------------------------------
# dense brute-force oracle


class DenseState:
    """Dense state vector on n qudits of dimension d (oracle for small systems)."""

    def __init__(self, n: int, d: int, amplitudes: np.ndarray):
        self.n = n
        self.d = d
        amps = np.asarray(amplitudes, dtype=complex).reshape(d**n)
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"amplitudes must be normalized, |psi| = {norm}")
        self.amplitudes = amps

    @classmethod
    def from_labels(cls, n: int, d: int, labels: Sequence[int]) -> "DenseState":
        amps = np.zeros(d**n, dtype=complex)
        idx = 0
        for lab in labels:
            idx = idx * d + int(lab) % d
        amps[idx] = 1.0
        return cls(n, d, amps)

    @classmethod
    def from_superposition(cls, sup: SuperpositionState) -> "DenseState":
        amps = np.zeros(sup.d, dtype=complex)
        for lab in sup.labels:
            amps[lab] = 1.0
        return cls(1, sup.d, amps / np.linalg.norm(amps))

    # single-qudit / two-qudit unitaries ------------------------------------

    def _omega(self, k: int) -> complex:
        return np.exp(2j * np.pi / k)

    def _gate_matrix(self, name: str) -> np.ndarray:
        d = self.d
        j = np.arange(d)
        if name in ("F", "FOURIER"):
            return np.exp(2j * np.pi * np.outer(j, j) / d) / math.sqrt(d)
        if name in ("P", "PHASE"):
            sig = 1 if d % 2 else 0
            return np.diag(np.exp(2j * np.pi * j * (j - sig) / (2 * d)))
        raise ValueError(f"unknown dense gate {name!r}")

    def _apply_single(self, U: np.ndarray, t: int) -> "DenseState":
        psi = self.amplitudes.reshape([self.d] * self.n)
        psi = np.moveaxis(np.tensordot(U, psi, axes=([1], [t])), 0, t)
        return DenseState(self.n, self.d, psi.reshape(-1))

    def apply_gate(self, name: str, targets: Sequence[int]) -> "DenseState":
        name = name.upper()
        if name == "SUM":
            ctrl, tgt = targets
            psi = self.amplitudes.reshape([self.d] * self.n)
            out = np.zeros_like(psi)
            for j in range(self.d):
                src = np.take(psi, j, axis=ctrl)
                rolled = np.roll(src, j, axis=tgt - (1 if tgt > ctrl else 0))
                out_idx = [slice(None)] * self.n
                out_idx[ctrl] = j
                out[tuple(out_idx)] = rolled
            return DenseState(self.n, self.d, out.reshape(-1))
        U = self._gate_matrix(name)
        (t,) = targets
        return self._apply_single(U, t)

    def hw_matrix(self, obs: HWObservable) -> np.ndarray:
        d, n = self.d, self.n
        D = _phase_modulus(d)
        ux, uz, phi = obs._element(d, D)
        full = np.ones((1, 1), dtype=complex)
        j = np.arange(d)
        for k in range(n):
            X = np.zeros((d, d), dtype=complex)
            X[(j + ux[k]) % d, j] = 1.0
            Z = np.diag(np.exp(2j * np.pi * j * uz[k] / d))
            full = np.kron(full, X @ Z)
        return np.exp(2j * np.pi * phi / D) * full

    def apply_hw(self, obs: HWObservable) -> "DenseState":
        return DenseState(self.n, self.d, self.hw_matrix(obs) @ self.amplitudes)

    def measure_distribution(self, obs: HWObservable) -> dict:
        """Exact outcome-label distribution by eigenspace projection."""
        d = self.d
        D = _phase_modulus(d)
        o = obs._element(d, D)
        h = _order_of(d, o)
        O = self.hw_matrix(obs)
        lam_ref = np.exp(2j * np.pi * (obs.phase % D) / D)
        probs = {}
        psi = self.amplitudes
        for jlab in range(h):
            lam = lam_ref * np.exp(2j * np.pi * jlab / h)
            proj = np.zeros_like(O)
            Ok = np.eye(O.shape[0], dtype=complex)
            for k in range(h):
                proj += Ok / lam**k
                Ok = Ok @ O
            proj /= h
            p = float(np.real(np.vdot(psi, proj @ psi)))
            if p > 1e-12:
                probs[jlab] = p
        return probs

    def measure(
        self, obs: HWObservable, seed: int, outcome: int = None
    ) -> Tuple[int, "DenseState"]:
        dist = self.measure_distribution(obs)
        if outcome is None:
            labels = sorted(dist)
            weights = np.array([dist[k] for k in labels])
            weights = weights / weights.sum()
            rng = np.random.default_rng(seed)
            j = labels[int(rng.choice(len(labels), p=weights))]
        else:
            if outcome not in dist:
                raise ValueError(f"outcome {outcome} has zero probability")
            j = outcome
        d = self.d
        D = _phase_modulus(d)
        O = self.hw_matrix(obs)
        h = _order_of(d, obs._element(d, D))
        lam = np.exp(2j * np.pi * (obs.phase % D) / D) * np.exp(2j * np.pi * j / h)
        proj = np.zeros_like(O)
        Ok = np.eye(O.shape[0], dtype=complex)
        for k in range(h):
            proj += Ok / lam**k
            Ok = Ok @ O
        out = (proj / h) @ self.amplitudes
        return j, DenseState(self.n, d, out / np.linalg.norm(out))
