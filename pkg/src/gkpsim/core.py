"""Domain types and wavefunction-level primitives for grid-state circuits.

Conventions fixed here and used throughout the package:

* quadrature ordering (q_1..q_n, p_1..p_n), symplectic form [[0, I], [-I, 0]];
* an operation (S, c) acts on Heisenberg operators as r -> S r + c, so the
  rows of S express the new quadratures in terms of the old;
* Rotation(t) maps q -> q cos t + p sin t, Squeeze(s) = diag(s, 1/s),
  Shear(k) = [[1, 0], [k, 1]];
* squeezing in dB = -10*log10(Delta^2).

Ideal grid states are symbolic (their delta-comb wavefunctions are not
normalizable); only the finitely-squeezed states get numeric amplitudes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .exact import RationalMatrix, is_symplectic
from .theta import ConvergenceError, ThetaArgs, jacobi_theta

__all__ = [
    "GKPParameters",
    "IdealGKPState",
    "RealisticGKPState",
    "GaussianOperation",
    "Measurement",
    "CircuitDescription",
    "CircuitParseError",
    "CircuitValidationError",
    "CIRCUIT_SCHEMA",
    "realistic_wavefunction",
    "iwasawa_decompose",
    "rotation_matrix",
    "squeeze_matrix",
    "shear_matrix",
    "named_gate_matrix",
    "identity_operation",
    "compose",
    "parse_circuit",
    "parse_squeezing",
    "squeezing_db_to_delta",
    "delta_to_squeezing_db",
]

CIRCUIT_SCHEMA = "gkpsim-circuit/1"


def squeezing_db_to_delta(db: float) -> float:
    return 10.0 ** (-db / 20.0)


def delta_to_squeezing_db(delta: float) -> float:
    return -10.0 * math.log10(delta * delta)


def parse_squeezing(text: Union[str, float]) -> float:
    """Parse a squeezing value: plain Delta, or decibels with a dB suffix."""
    if isinstance(text, str):
        stripped = text.strip()
        if stripped.lower().endswith("db"):
            return squeezing_db_to_delta(float(stripped[:-2]))
        return float(stripped)
    return float(text)


@dataclass(frozen=True)
class GKPParameters:
    """Code parameters for dimension d: peak spacing and phase-ring modulus.

    ell = sqrt(2*pi/d) so that ell^2 * d = 2*pi; the phase ring has modulus
    D = d for odd d and 2d for even d.
    """

    d: int
    ell: float = field(init=False)
    D: int = field(init=False)

    def __post_init__(self):
        if not (isinstance(self.d, int) and self.d >= 1):
            raise ValueError(f"dimension must be a positive integer, got {self.d!r}")
        object.__setattr__(self, "ell", math.sqrt(2.0 * math.pi / self.d))
        object.__setattr__(self, "D", self.d if self.d % 2 else 2 * self.d)


@dataclass(frozen=True)
class IdealGKPState:
    """Symbolic ideal codeword |j>^(x)n in dimension d: no numeric amplitudes."""

    d: int
    j: int
    n: int = 1

    def __post_init__(self):
        if not 0 <= self.j < self.d:
            raise ValueError(f"logical label {self.j} outside [0, {self.d})")
        if self.n < 1:
            raise ValueError("mode count must be positive")


@dataclass(frozen=True, eq=False)
class RealisticGKPState:
    """Finitely squeezed code state: envelope width Delta and logical amplitudes."""

    d: int
    delta: float
    amplitudes: Tuple[complex, ...]

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"Delta must be positive, got {self.delta}")
        amps = tuple(complex(a) for a in self.amplitudes)
        if len(amps) != self.d:
            raise ValueError(f"need {self.d} amplitudes, got {len(amps)}")
        norm = math.sqrt(sum(abs(a) ** 2 for a in amps))
        if norm == 0:
            raise ValueError("amplitudes are all zero")
        object.__setattr__(self, "amplitudes", tuple(a / norm for a in amps))

    @classmethod
    def from_bloch(cls, theta: float, phi: float, delta: float) -> "RealisticGKPState":
        """Qubit-case constructor from Bloch angles: (cos(t/2), e^{i phi} sin(t/2))."""
        return cls(2, delta, (math.cos(theta / 2.0),
                              math.sin(theta / 2.0) * complex(math.cos(phi), math.sin(phi))))

    @property
    def squeezing_db(self) -> float:
        return delta_to_squeezing_db(self.delta)


@dataclass(frozen=True, eq=False)
class GaussianOperation:
    """A symplectic matrix with a phase-space displacement: r -> S r + c."""

    S: RationalMatrix
    c: np.ndarray

    def __post_init__(self):
        if not is_symplectic(self.S):
            raise CircuitValidationError("is_symplectic failed for operation matrix")
        c = np.array(self.c, dtype=float).reshape(-1)
        if c.size != self.S.rows:
            raise CircuitValidationError(
                f"displacement length {c.size} does not match 2n = {self.S.rows}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "c", c)

    @property
    def n(self) -> int:
        return self.S.rows // 2


def identity_operation(n: int) -> GaussianOperation:
    return GaussianOperation(RationalMatrix.identity(2 * n), np.zeros(2 * n))


def compose(*ops: GaussianOperation) -> GaussianOperation:
    """Fold a sequence of operations (applied left to right) into one.

    Displacements push through later symplectics: applying (S1, c1) then
    (S2, c2) gives (S2 S1, S2 c1 + c2), exactly in the rational part.
    """
    if not ops:
        raise ValueError("compose needs at least one operation")
    total_S, total_c = ops[0].S, ops[0].c
    for op in ops[1:]:
        total_c = op.S.to_float() @ total_c + op.c
        total_S = op.S @ total_S
    return GaussianOperation(total_S, total_c)


# ---------------------------------------------------------------------------
# wavefunctions


def realistic_wavefunction(x, j: int, params: GKPParameters, delta: float):
    """Unnormalized position wavefunction of a finitely squeezed codeword.

    (1/(sqrt(2 pi) Delta)) * exp(-x^2 Delta^2 / 2)
        * theta((x - j ell)/(d ell), i Delta^2 / d)

    Gaussian envelope times a theta comb whose peaks sit at x = (j + d m) ell
    with width Delta; for d = 2 the theta argument reduces to the familiar
    (x/(2 ell) - j/2, i pi Delta^2/(2 ell^2)) form.  Vectorized over x.
    Normalization is left to consumers.
    """
    if delta < 0:
        raise ConvergenceError(f"Delta must be positive, got {delta}")
    d = params.d
    ell = params.ell
    xs = np.asarray(x, dtype=float)
    z = (xs - j * ell) / (d * ell)
    tau = 1j * delta * delta / d
    comb = jacobi_theta(ThetaArgs(z, tau))
    envelope = np.exp(-xs * xs * delta * delta / 2.0) / (math.sqrt(2.0 * math.pi) * delta)
    return envelope * comb


# ---------------------------------------------------------------------------
# single-mode decomposition


def rotation_matrix(theta: float) -> np.ndarray:
    return np.array([[math.cos(theta), math.sin(theta)],
                     [-math.sin(theta), math.cos(theta)]])


def squeeze_matrix(s: float) -> np.ndarray:
    return np.array([[s, 0.0], [0.0, 1.0 / s]])


def shear_matrix(kappa: float) -> np.ndarray:
    return np.array([[1.0, 0.0], [kappa, 1.0]])


def iwasawa_decompose(S, tol: float = 1e-9) -> Tuple[float, float, float]:
    """Factor a 2x2 symplectic as Shear(kappa) @ Squeeze(s) @ Rotation(theta).

    Returns (kappa, s, theta) with s > 0 and theta in [0, 2*pi); the first
    row of S fixes s = hypot(a, b) and theta = atan2(b, a), the second row
    then gives kappa = (a c + b d)/s^2.

    Raises:
        ValueError: if |det S - 1| exceeds ``tol``.
    """
    if isinstance(S, RationalMatrix):
        S = S.to_float()
    S = np.asarray(S, dtype=float)
    if S.shape != (2, 2):
        raise ValueError(f"need a 2x2 matrix, got shape {S.shape}")
    a, b = S[0]
    c, d = S[1]
    det = a * d - b * c
    if abs(det - 1.0) > tol:
        raise ValueError(f"matrix is not symplectic within tolerance: det = {det!r}")
    s2 = a * a + b * b
    s = math.sqrt(s2)
    theta = math.atan2(b, a) % (2.0 * math.pi)
    kappa = (a * c + b * d) / s2
    return kappa, s, theta


# ---------------------------------------------------------------------------
# named gates and circuits


_F2 = [[Fraction(0), Fraction(1)], [Fraction(-1), Fraction(0)]]


def _embed_single_mode(block, target: int, n: int) -> RationalMatrix:
    rows = [[Fraction(int(i == j)) for j in range(2 * n)] for i in range(2 * n)]
    idx = (target, n + target)
    for bi, i in enumerate(idx):
        for bj, j in enumerate(idx):
            rows[i][j] = Fraction(block[bi][bj])
    return RationalMatrix(rows)


def named_gate_matrix(
    gate: str,
    n: int,
    target: Optional[int] = None,
    control: Optional[int] = None,
    s=None,
    v=None,
) -> GaussianOperation:
    """Expand a named gate into its 2n x 2n rational operation.

    Gates: ``fourier`` (target), ``shear`` (target, rational parameter s),
    ``sum`` (control, target), ``displacement`` (real 2n-vector v).
    Mode indices are 0-based.
    """
    name = gate.lower()
    zeros = np.zeros(2 * n)

    def check(mode: Optional[int], what: str) -> int:
        if mode is None or not 0 <= mode < n:
            raise ValueError(f"invalid {what} mode {mode!r} for n = {n}")
        return mode

    if name == "fourier":
        return GaussianOperation(_embed_single_mode(_F2, check(target, "target"), n), zeros)
    if name == "shear":
        if s is None:
            raise ValueError("shear gate needs parameter s")
        block = [[Fraction(1), Fraction(0)], [Fraction(s), Fraction(1)]]
        return GaussianOperation(_embed_single_mode(block, check(target, "target"), n), zeros)
    if name == "sum":
        ctrl = check(control, "control")
        tgt = check(target, "target")
        if ctrl == tgt:
            raise ValueError("sum gate needs distinct control and target")
        rows = [[Fraction(int(i == j)) for j in range(2 * n)] for i in range(2 * n)]
        rows[tgt][ctrl] = Fraction(1)        # q_t' = q_t + q_c
        rows[n + ctrl][n + tgt] = Fraction(-1)  # p_c' = p_c - p_t
        return GaussianOperation(RationalMatrix(rows), zeros)
    if name == "displacement":
        if v is None:
            raise ValueError("displacement gate needs the shift vector v")
        return GaussianOperation(RationalMatrix.identity(2 * n), np.asarray(v, dtype=float))
    raise ValueError(f"unknown gate {gate!r}")


class CircuitParseError(ValueError):
    """The circuit document is not well-formed."""


class CircuitValidationError(ValueError):
    """The circuit document violates an invariant; the message names it."""


@dataclass(frozen=True)
class Measurement:
    """Final measurement: position homodyne, modular position, or a phase-space
    translation observable given by its integer exponent vector and phase."""

    kind: str
    modes: Tuple[int, ...] = ()
    observable: Optional[Tuple[Tuple[int, ...], int]] = None

    KINDS = ("homodyne-position", "modular-position", "hw-observable")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise CircuitValidationError(f"unknown measurement kind {self.kind!r}")


@dataclass(frozen=True, eq=False)
class CircuitDescription:
    """A validated circuit: inputs, expanded operations, final measurement."""

    n: int
    d: int
    inputs: Tuple[Union[IdealGKPState, RealisticGKPState], ...]
    operations: Tuple[GaussianOperation, ...]
    measurement: Measurement

    def total_operation(self) -> GaussianOperation:
        if not self.operations:
            return identity_operation(self.n)
        return compose(*self.operations)


def _as_fraction(entry) -> Fraction:
    if isinstance(entry, str):
        return Fraction(entry)
    if isinstance(entry, int):
        return Fraction(entry)
    raise CircuitValidationError(f"rational entries must be \"p/q\" strings, got {entry!r}")


def _as_real(entry) -> float:
    if isinstance(entry, (str, int, float)):
        return float(entry)
    raise CircuitValidationError(f"real entries must be decimal strings, got {entry!r}")


def _parse_input(doc, d: int, where: str):
    if not isinstance(doc, dict) or "type" not in doc:
        raise CircuitValidationError(f"{where}: input specifier must have a type")
    kind = doc["type"]
    if kind == "ideal":
        return IdealGKPState(d, int(doc.get("label", 0)))
    if kind == "realistic":
        delta = parse_squeezing(doc.get("delta", doc.get("squeezing")))
        if "bloch" in doc:
            th, ph = (_as_real(x) for x in doc["bloch"])
            if d != 2:
                raise CircuitValidationError(f"{where}: bloch angles need dimension 2")
            return RealisticGKPState.from_bloch(th, ph, delta)
        amps = doc.get("amplitudes")
        if amps is None:
            raise CircuitValidationError(f"{where}: realistic input needs amplitudes or bloch")
        return RealisticGKPState(
            d, delta, tuple(complex(_as_real(re), _as_real(im)) for re, im in amps)
        )
    raise CircuitValidationError(f"{where}: unknown input type {kind!r}")


def _parse_operation(doc, n: int, where: str) -> GaussianOperation:
    if not isinstance(doc, dict) or "type" not in doc:
        raise CircuitValidationError(f"{where}: operation must have a type")
    kind = doc["type"]
    if kind == "gate":
        kwargs = {}
        if "target" in doc:
            kwargs["target"] = int(doc["target"])
        if "control" in doc:
            kwargs["control"] = int(doc["control"])
        if "s" in doc:
            kwargs["s"] = _as_fraction(doc["s"])
        if "v" in doc:
            kwargs["v"] = [_as_real(x) for x in doc["v"]]
        try:
            return named_gate_matrix(doc.get("name", ""), n, **kwargs)
        except ValueError as exc:
            raise CircuitValidationError(f"{where}: {exc}") from exc
    if kind == "displacement":
        c = [_as_real(x) for x in doc.get("c", ())]
        if len(c) != 2 * n:
            raise CircuitValidationError(f"{where}: displacement needs 2n = {2*n} entries")
        return GaussianOperation(RationalMatrix.identity(2 * n), np.asarray(c))
    if kind == "symplectic":
        rows = doc.get("S")
        if not rows:
            raise CircuitValidationError(f"{where}: symplectic operation needs S")
        S = RationalMatrix([[_as_fraction(x) for x in row] for row in rows])
        if S.rows != 2 * n or S.cols != 2 * n:
            raise CircuitValidationError(
                f"{where}: S must be {2*n}x{2*n}, got {S.rows}x{S.cols}"
            )
        c = np.asarray([_as_real(x) for x in doc.get("c", [0] * (2 * n))])
        try:
            return GaussianOperation(S, c)
        except CircuitValidationError as exc:
            raise CircuitValidationError(f"{where}: {exc}") from exc
    raise CircuitValidationError(f"{where}: unknown operation type {kind!r}")


def _parse_measurement(doc, n: int) -> Measurement:
    if doc is None:
        return Measurement("homodyne-position", tuple(range(n)))
    if not isinstance(doc, dict) or "type" not in doc:
        raise CircuitValidationError("measurement must have a type")
    kind = doc["type"]
    modes = tuple(int(m) for m in doc.get("modes", range(n)))
    if any(not 0 <= m < n for m in modes):
        raise CircuitValidationError(f"measurement modes {modes} outside [0, {n})")
    if kind == "hw-observable":
        u = tuple(int(x) for x in doc.get("u", ()))
        if len(u) != 2 * n:
            raise CircuitValidationError(f"observable exponent needs 2n = {2*n} entries")
        return Measurement(kind, modes, (u, int(doc.get("phase", 0))))
    return Measurement(kind, modes)


def parse_circuit(text: str) -> CircuitDescription:
    """Parse and validate a circuit document (schema ``gkpsim-circuit/1``).

    Raises:
        CircuitParseError: malformed JSON, with line/column.
        CircuitValidationError: well-formed but invalid; message names the
            failing invariant (e.g. is_symplectic).
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CircuitParseError(
            f"invalid circuit document at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(doc, dict):
        raise CircuitValidationError("circuit document must be a JSON object")
    schema = doc.get("schema")
    if schema != CIRCUIT_SCHEMA:
        raise CircuitValidationError(
            f"unsupported schema {schema!r}; expected {CIRCUIT_SCHEMA!r}"
        )
    try:
        n = int(doc["modes"])
        d = int(doc.get("dimension", 2))
    except KeyError as exc:
        raise CircuitValidationError(f"missing required field {exc.args[0]!r}") from exc
    if n < 1:
        raise CircuitValidationError(f"modes must be positive, got {n}")
    if d < 2:
        raise CircuitValidationError(f"dimension must be at least 2, got {d}")
    raw_inputs = doc.get("inputs", [{"type": "ideal", "label": 0}] * n)
    if len(raw_inputs) == 1 and n > 1:
        raw_inputs = list(raw_inputs) * n
    if len(raw_inputs) != n:
        raise CircuitValidationError(
            f"need {n} input specifiers (or one to broadcast), got {len(raw_inputs)}"
        )
    inputs = tuple(
        _parse_input(spec, d, f"inputs[{i}]") for i, spec in enumerate(raw_inputs)
    )
    operations = tuple(
        _parse_operation(spec, n, f"operations[{i}]")
        for i, spec in enumerate(doc.get("operations", []))
    )
    measurement = _parse_measurement(doc.get("measurement"), n)
    return CircuitDescription(n, d, inputs, operations, measurement)
