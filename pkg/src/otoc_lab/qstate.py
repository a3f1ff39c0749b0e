"""State vectors, phase frames, Bell pairs and the V (x) V^T measurement.

Conventions
-----------
* Amplitude index bit ``q`` encodes qubit ``q`` (little endian).
* Chain sites are numbered ``1..n``; site ``j`` of a single copy is qubit ``j-1``.
* A doubled register stores the two copies pair-locally: site ``j`` of copy
  ``c`` (``c`` in {1, 2}) is qubit ``2*(j-1) + (c-1)``, so every Bell pair is an
  adjacent two-qubit block.
* Amplitudes are coordinates in the state's phase frame, whose basis states are
  ``|0>`` and ``exp(i*theta_q)|1>`` per qubit. Operators handed to the
  functions below are matrices in that same frame, and transposes are taken in
  it.

The pair matrix of a doubled state is ``M[x1, x2]`` with ``x1`` (``x2``) the
copy-1 (copy-2) bit string read with the same little-endian rule, so
``|psi> = sum M[x1, x2] |x1>_1 |x2>_2`` and ``(A (x) B)|psi>`` has pair matrix
``A @ M @ B.T``. Example for one site: ``Phi+`` has ``M = I/sqrt(2)``, and
``(Z (x) 1) Phi+`` has ``M = Z/sqrt(2)``.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import check_budget

HALF_PI = np.pi / 2

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


@dataclass(frozen=True)
class PhaseFrame:
    """Per-qubit working basis ``{|0>, exp(i*theta)|1>}`` with theta in {0, pi/2}."""

    phases: tuple

    def __post_init__(self):
        snapped = []
        for theta in self.phases:
            theta = float(theta)
            if abs(theta) <= 1e-12:
                snapped.append(0.0)
            elif abs(theta - HALF_PI) <= 1e-12:
                snapped.append(HALF_PI)
            else:
                raise ValueError(f"frame angles must be 0 or pi/2, got {theta!r}")
        object.__setattr__(self, "phases", tuple(snapped))

    @classmethod
    def trivial(cls, n):
        return cls((0.0,) * n)

    @classmethod
    def from_mask(cls, n, mask):
        """Frame with pi/2 on every qubit whose bit is set in ``mask``."""
        return cls(tuple(HALF_PI if (mask >> q) & 1 else 0.0 for q in range(n)))

    @classmethod
    def odd_sites(cls, n):
        """pi/2 on the odd-numbered chain sites 1, 3, 5, ..."""
        return cls(tuple(HALF_PI if q % 2 == 0 else 0.0 for q in range(n)))

    @property
    def num_qubits(self):
        return len(self.phases)

    @property
    def mask(self):
        return sum(1 << q for q, th in enumerate(self.phases) if th)

    @property
    def is_trivial(self):
        return self.mask == 0

    def doubled(self):
        """The frame of a pair-local doubled register (both copies share it)."""
        return PhaseFrame(tuple(th for th in self.phases for _ in range(2)))

    def single(self):
        """Inverse of :meth:`doubled`."""
        ph = self.phases
        if len(ph) % 2 or any(ph[2 * j] != ph[2 * j + 1] for j in range(len(ph) // 2)):
            raise ValueError("not a doubled frame")
        return PhaseFrame(ph[::2])

    def basis_change(self, qubit):
        return np.diag([1.0, np.exp(1j * self.phases[qubit])])

    def operator_in_frame(self, qubit, op):
        """Matrix of a computational-basis 2x2 operator in this frame."""
        b = self.basis_change(qubit)
        return b.conj().T @ np.asarray(op, dtype=complex) @ b

    def coordinate_phases(self):
        """``exp(i sum_q theta_q x_q)`` for every basis index ``x``."""
        n = self.num_qubits
        out = np.ones(2**n, dtype=complex)
        idx = np.arange(2**n)
        for q, th in enumerate(self.phases):
            if th:
                out[(idx >> q) & 1 == 1] *= np.exp(1j * th)
        return out


def pair_qubit(site, copy):
    """Register qubit of chain ``site`` (1-based) in ``copy`` (1 or 2)."""
    if copy not in (1, 2):
        raise ValueError("copy must be 1 or 2")
    return 2 * (site - 1) + (copy - 1)


def _pair_axes(n):
    rows = [2 * n - 1 - 2 * j for j in range(n - 1, -1, -1)]
    cols = [2 * n - 2 - 2 * j for j in range(n - 1, -1, -1)]
    return rows + cols


def pair_matrix(amplitudes, n):
    """Reshape a pair-local 2n-qubit amplitude vector into ``M[x1, x2]``."""
    tensor = np.asarray(amplitudes).reshape((2,) * (2 * n))
    return np.ascontiguousarray(tensor.transpose(_pair_axes(n))).reshape(2**n, 2**n)


def pair_vector(matrix, n):
    """Inverse of :func:`pair_matrix`."""
    tensor = np.asarray(matrix).reshape((2,) * (2 * n))
    inv = np.argsort(_pair_axes(n))
    return np.ascontiguousarray(tensor.transpose(inv)).reshape(-1)


@dataclass(eq=False)
class StateVector:
    num_qubits: int
    amplitudes: np.ndarray
    frame: PhaseFrame = None

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (2**self.num_qubits,):
            raise ValueError(
                f"expected {2**self.num_qubits} amplitudes, got {self.amplitudes.shape}"
            )
        if self.frame is None:
            self.frame = PhaseFrame.trivial(self.num_qubits)
        if self.frame.num_qubits != self.num_qubits:
            raise ValueError("frame size does not match the register")
        nrm = np.linalg.norm(self.amplitudes)
        if abs(nrm - 1.0) > 1e-9:
            raise ValueError(f"state is not normalized (norm {nrm!r})")

    @classmethod
    def from_pair_matrix(cls, matrix, frame=None):
        n = int(np.log2(matrix.shape[0]))
        if frame is not None and frame.num_qubits == n:
            frame = frame.doubled()
        return cls(2 * n, pair_vector(matrix, n), frame)

    @property
    def is_doubled(self):
        return self.num_qubits % 2 == 0

    @property
    def copy_size(self):
        return self.num_qubits // 2

    def norm(self):
        return float(np.linalg.norm(self.amplitudes))

    def copy(self):
        return StateVector(self.num_qubits, self.amplitudes.copy(), self.frame)

    def in_frame(self, frame):
        """Same physical state, coordinates re-expressed in ``frame``."""
        if frame.num_qubits != self.num_qubits:
            raise ValueError("frame size does not match the register")
        amps = self.amplitudes * self.frame.coordinate_phases()
        amps = amps * frame.coordinate_phases().conj()
        return StateVector(self.num_qubits, amps, frame)

    def computational(self):
        return self.in_frame(PhaseFrame.trivial(self.num_qubits))

    def pair_matrix(self):
        if not self.is_doubled:
            raise ValueError("pair matrix needs a doubled register")
        return pair_matrix(self.amplitudes, self.copy_size)


@dataclass(frozen=True, eq=False)
class LocalObservable:
    """A single-site observable; ``matrix`` is written in the working frame."""

    site: int
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (2, 2):
            raise ValueError("local observable must be 2x2")
        if np.max(np.abs(m - m.conj().T)) > 1e-12:
            raise ValueError("local observable must be Hermitian")
        if self.site < 1:
            raise ValueError("sites are numbered from 1")
        object.__setattr__(self, "matrix", m)


def pauli_observable(label, site, frame=None):
    """``sigma^label`` on ``site`` written in ``frame`` (a single-copy frame)."""
    op = PAULI[label.upper()]
    if frame is not None and not frame.is_trivial:
        op = frame.operator_in_frame(site - 1, op)
    return LocalObservable(site, op)


def bell_state(n, frame=None, pair_signs=None):
    """Product of Bell pairs between the two copies.

    Without ``pair_signs`` this is ``2^{-n/2} sum_x |x>_1 |x>_2`` over the
    basis states of ``frame``; physically that is ``Phi-`` on pi/2 sites and
    ``Phi+`` elsewhere. With ``pair_signs`` (one of +1/-1 or '+'/'-' per site)
    the physical pair on site ``j`` is ``Phi+`` or ``Phi-`` as given.
    The returned coordinates are in ``frame.doubled()``.
    """
    if n < 1:
        raise ValueError("need at least one site")
    check_budget(16 * 4**n, "Bell state")
    frame = frame or PhaseFrame.trivial(n)
    if frame.num_qubits != n:
        raise ValueError("frame size does not match n")
    if pair_signs is None:
        coord = np.ones(n)
    else:
        if len(pair_signs) != n:
            raise ValueError("need one sign per site")
        coord = np.array([_sign(s) for s in pair_signs], dtype=float)
        # the |11> frame basis vector carries exp(2i theta) relative to |11>
        coord *= np.array([-1.0 if th else 1.0 for th in frame.phases])
    idx = np.arange(2**n)
    diag = np.ones(2**n)
    for q in range(n):
        diag[(idx >> q) & 1 == 1] *= coord[q]
    mat = np.diag(diag / np.sqrt(2**n)).astype(complex)
    return StateVector(2 * n, pair_vector(mat, n), frame.doubled())


def _sign(s):
    if s in (1, "+", "+1"):
        return 1
    if s in (-1, "-", "-1"):
        return -1
    raise ValueError(f"pair sign must be +/-, got {s!r}")


def _check_unitary(u, tol=1e-12):
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValueError("expected a square matrix")
    if np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) > tol:
        raise ValueError("matrix is not unitary")
    return u


def apply_local_unitary(state, qubit, u):
    """Apply a 2x2 unitary (frame coordinates) to register ``qubit``; returns a new state."""
    u = np.ascontiguousarray(_check_unitary(u))
    if u.shape != (2, 2):
        raise ValueError("expected a 2x2 unitary")
    if not 0 <= qubit < state.num_qubits:
        raise IndexError(f"qubit {qubit} outside a {state.num_qubits}-qubit register")
    amps = state.amplitudes.copy().reshape(-1, 1)
    kernels.apply_1q(amps, qubit, u)
    return StateVector(state.num_qubits, amps.reshape(-1), state.frame)


def apply_pair_local(matrix, site, a=None, b=None):
    """Return ``A M B^T`` for ``a`` on copy 1 and ``b`` on copy 2 at ``site``."""
    out = np.array(matrix, dtype=complex, order="C", copy=True)
    if a is not None:
        kernels.apply_1q(out, site - 1, np.ascontiguousarray(a, dtype=complex))
    if b is not None:
        kernels.apply_1q(out.T, site - 1, np.ascontiguousarray(b, dtype=complex))
    return out


def isotropic_identity_residual(n, u):
    """``|| (u (x) conj(u)) |Bell> - |Bell> ||`` with the computational Bell state."""
    u = np.asarray(u, dtype=complex)
    if u.shape != (2**n, 2**n):
        raise ValueError(f"expected a {2**n}x{2**n} matrix, got {u.shape}")
    m0 = np.eye(2**n) / np.sqrt(2**n)
    # (A (x) B) acts as A M B^T and conj(u)^T = u^dagger
    return float(np.linalg.norm(u @ m0 @ u.conj().T - m0))


def _real(value, what):
    if abs(value.imag) > 1e-10 * max(1.0, abs(value.real)):
        raise RuntimeError(f"{what} has imaginary part {value.imag!r}; convention error")
    return float(value.real)


def expectation_vvt(state, v):
    """``<psi| V (x) V^T |psi>`` with V on copy 1 and its frame transpose on copy 2."""
    _check_site(state, v.site)
    m = state.pair_matrix()
    vm = apply_pair_local(m, v.site, v.matrix, v.matrix.T)
    return _real(np.vdot(m, vm), "<V (x) V^T>")


def _check_site(state, site):
    if not state.is_doubled:
        raise ValueError("V (x) V^T needs a doubled register")
    if not 1 <= site <= state.copy_size:
        raise IndexError(f"site {site} outside 1..{state.copy_size}")


class VVTSample(NamedTuple):
    estimate: float
    stderr: float
    counts: dict


def joint_probabilities(state, v):
    """Outcome probabilities for measuring V on copy 1 and V^T on copy 2.

    Returns ``(probs, eigenvalues)`` where ``probs[a, b]`` is the probability
    of eigenvalue ``eigenvalues[a]`` on copy 1 and ``eigenvalues[b]`` on copy 2.
    """
    _check_site(state, v.site)
    evals, evecs = np.linalg.eigh(v.matrix)
    m = state.pair_matrix()
    # V^T = conj(V) has eigenvectors conj(evecs); rotate both into those bases
    rot = apply_pair_local(m, v.site, evecs.conj().T, evecs.T)
    n = state.copy_size
    bits = (np.arange(2**n) >> (v.site - 1)) & 1
    weight = np.abs(rot) ** 2
    probs = np.array(
        [[weight[np.ix_(bits == a, bits == b)].sum() for b in (0, 1)] for a in (0, 1)]
    )
    return probs / probs.sum(), evals


OUTCOMES = ((1, 1), (1, -1), (-1, 1), (-1, -1))


def outcome_distribution(probs, evals):
    """Map a 2x2 eigen-probability table onto the (+1,+1), (+1,-1), ... order."""
    if np.max(np.abs(np.abs(evals) - 1)) > 1e-9:
        raise ValueError("sampling needs an observable with eigenvalues +/-1")
    signs = np.sign(evals).astype(int)
    dist = np.zeros(4)
    for a in (0, 1):
        for b in (0, 1):
            dist[OUTCOMES.index((signs[a], signs[b]))] += probs[a, b]
    return dist


def draw_outcomes(dist, shots, rng):
    """Draw ``shots`` joint outcomes; returns counts keyed by (s1, s2)."""
    seq = rng.choice(4, size=shots, p=dist / dist.sum())
    tally = np.bincount(seq, minlength=4)
    return {OUTCOMES[k]: int(tally[k]) for k in range(4)}


def summarize_counts(counts):
    """Mean and standard error of s1*s2 over the recorded shots."""
    shots = sum(counts.values())
    if shots < 1:
        raise ValueError("no shots recorded")
    plus = sum(c for (s1, s2), c in counts.items() if s1 * s2 == 1)
    mean = (2 * plus - shots) / shots
    if shots == 1:
        return mean, float("inf")
    var = (1 - mean**2) * shots / (shots - 1)
    return mean, float(np.sqrt(max(var, 0.0) / shots))


def sample_vvt(state, v, shots, seed):
    """Simulate ``shots`` projective V (x) V^T measurements."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    probs, evals = joint_probabilities(state, v)
    counts = draw_outcomes(outcome_distribution(probs, evals), shots, np.random.default_rng(seed))
    est, err = summarize_counts(counts)
    return VVTSample(est, err, counts)
