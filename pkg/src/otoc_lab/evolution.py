"""Exact unitary propagation and Lindblad integration.

Propagators come from dense eigendecompositions, ``U(t) = Q exp(-i L t) Q^dag``
(hbar = 1, time in units of 1/J). When the Hamiltonian conserves the number of
excited qubits (true for every XX + YY model here, in any phase frame) the
eigenproblem is split into Hamming-weight sectors, which is what makes a
12-qubit doubled register cheap.

Doubled registers evolve with ``U1 (x) U2`` as ``M -> U1 M U2^T`` on the pair
matrix (see :mod:`otoc_lab.qstate`). One site, ``U = exp(-i t X)``:
``M = I/sqrt(2)`` maps to ``U U^T / sqrt(2) = U^2 / sqrt(2)``.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import IntegrationError, check_budget
from .hamiltonians import FlipMaskOperator, _popcount
from .qstate import PhaseFrame, StateVector, _real, expectation_vvt, pair_qubit


class Eigensystem:
    """Block eigendecomposition of a Hermitian operator.

    ``sectors`` holds the basis indices of each block and ``blocks`` the
    matching ``(eigenvalues, eigenvectors)``.
    """

    def __init__(self, sectors, blocks, dim):
        self.sectors = sectors
        self.blocks = blocks
        self.dim = dim

    @classmethod
    def from_operator(cls, op, use_sectors=True):
        dim = op.dim
        if use_sectors and op.conserves_popcount():
            pc = _popcount(np.arange(dim))
            sectors = [np.flatnonzero(pc == k) for k in range(op.num_qubits + 1)]
        else:
            sectors = [np.arange(dim)]
        biggest = max(len(s) for s in sectors)
        check_budget(16 * biggest**2 * 3, "eigendecomposition")
        dense = _sector_dense(op, sectors)
        blocks = [np.linalg.eigh(b) for b in dense]
        return cls(sectors, blocks, dim)

    @classmethod
    def from_spec(cls, h, frame=None, use_sectors=True):
        return cls.from_operator(FlipMaskOperator.from_spec(h, frame), use_sectors)

    @classmethod
    def from_dense(cls, matrix):
        matrix = np.asarray(matrix, dtype=complex)
        return cls([np.arange(matrix.shape[0])], [np.linalg.eigh(matrix)], matrix.shape[0])

    def eigenvalues(self):
        return np.sort(np.concatenate([w for w, _ in self.blocks]))

    def evolve(self, x, t):
        """``exp(-i H t) @ x`` acting on the row index of ``x`` (1-D or 2-D)."""
        x = np.asarray(x, dtype=complex)
        if t == 0:
            return x.copy()  # skip the basis round trip so t=0 values are exact
        out = np.empty_like(x)
        for idx, (w, q) in zip(self.sectors, self.blocks):
            coef = q.conj().T @ x[idx]
            phase = np.exp(-1j * w * t)
            coef *= phase[:, None] if coef.ndim == 2 else phase
            out[idx] = q @ coef
        return out

    def propagator(self, t):
        check_budget(16 * self.dim**2, "propagator")
        u = np.zeros((self.dim, self.dim), dtype=complex)
        for idx, (w, q) in zip(self.sectors, self.blocks):
            u[np.ix_(idx, idx)] = (q * np.exp(-1j * w * t)) @ q.conj().T
        return u

    def heisenberg(self, op, t):
        """``U^dag op U`` for a dense operator."""
        right = self.evolve(np.asarray(op, dtype=complex).conj().T, -t).conj().T
        return self.evolve(right, -t)


def _sector_dense(op, sectors):
    if len(sectors) == 1:
        return [op.to_dense()]
    out = []
    full_index = np.full(op.dim, -1)
    for idx in sectors:
        full_index[:] = -1
        full_index[idx] = np.arange(len(idx))
        block = np.zeros((len(idx), len(idx)), dtype=complex)
        for mask, d in zip(op.masks, op.diags):
            src = idx ^ mask
            col = full_index[src]
            keep = (col >= 0) & (d[idx] != 0)
            block[np.flatnonzero(keep), col[keep]] += d[idx][keep]
        out.append(block)
    return out


@dataclass(eq=False)
class Propagator:
    matrix: np.ndarray
    t: float
    hamiltonian: object = None
    frame: PhaseFrame = None

    @property
    def dim(self):
        return self.matrix.shape[0]

    def unitarity_error(self):
        u = self.matrix
        return float(np.max(np.abs(u.conj().T @ u - np.eye(self.dim))))


def make_propagator(h, frame=None, t=0.0):
    """Dense ``exp(-i H t)`` in ``frame``."""
    eig = Eigensystem.from_spec(h, frame)
    return Propagator(eig.propagator(t), float(t), h, frame)


def _matrix_of(u):
    return u.matrix if isinstance(u, Propagator) else np.asarray(u, dtype=complex)


def evolve_doubled_product(state, u, u2=None):
    """Apply ``U (x) U2`` (``U2`` defaults to ``U``) to a doubled state."""
    if not state.is_doubled:
        raise ValueError("need a doubled register")
    a = _matrix_of(u)
    b = a if u2 is None else _matrix_of(u2)
    dim = 2**state.copy_size
    if a.shape != (dim, dim) or b.shape != (dim, dim):
        raise ValueError(f"propagators must be {dim}x{dim} for this register")
    m = state.pair_matrix()
    return StateVector.from_pair_matrix(a @ m @ b.T, state.frame)


def evolve_pair_matrix(m, eig1, t, eig2=None, t2=None):
    """``U1 M U2^T`` with both propagators taken from eigensystems."""
    eig2 = eig1 if eig2 is None else eig2
    t2 = t if t2 is None else t2
    left = eig1.evolve(m, t)
    return eig2.evolve(left.T, t2).T


def evolve_full(state, h, t):
    """Propagate the whole register with ``h`` (written in computational labels)."""
    if h.num_qubits != state.num_qubits:
        raise ValueError("Hamiltonian and state act on different registers")
    eig = Eigensystem.from_spec(h, state.frame)
    return StateVector(state.num_qubits, eig.evolve(state.amplitudes, t), state.frame)


@dataclass(eq=False)
class DensityMatrix:
    matrix: np.ndarray
    frame: PhaseFrame = None

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        if self.frame is None:
            self.frame = PhaseFrame.trivial(self.num_qubits)

    @property
    def num_qubits(self):
        return int(np.log2(self.matrix.shape[0]))

    @classmethod
    def from_state(cls, state):
        check_budget(16 * 4**state.num_qubits, "density matrix")
        a = state.amplitudes
        return cls(np.outer(a, a.conj()), state.frame)

    def invariants(self):
        m = self.matrix
        herm = float(np.max(np.abs(m - m.conj().T)))
        evals = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
        return {
            "trace_error": float(abs(np.trace(m) - 1.0)),
            "hermiticity_error": herm,
            "min_eigenvalue": float(evals.min()),
        }

    def check(self, trace_tol=1e-9, herm_tol=1e-9, pos_tol=1e-7):
        inv = self.invariants()
        if inv["trace_error"] > trace_tol:
            raise ValueError(f"trace off by {inv['trace_error']:.3g}")
        if inv["hermiticity_error"] > herm_tol:
            raise ValueError(f"not Hermitian ({inv['hermiticity_error']:.3g})")
        if inv["min_eigenvalue"] < -pos_tol:
            raise ValueError(f"negative eigenvalue {inv['min_eigenvalue']:.3g}")
        return inv

    def expectation(self, op):
        return complex(np.sum(self.matrix.T * op))

    def reduced(self, qubits):
        """Reduced density matrix on ``qubits`` (first listed = most significant)."""
        n = self.num_qubits
        k = len(qubits)
        tensor = self.matrix.reshape((2,) * (2 * n))
        rows = [n - 1 - q for q in qubits]
        cols = [2 * n - 1 - q for q in qubits]
        rest_r = [a for a in range(n) if a not in rows]
        rest_c = [n + a for a in rest_r]
        t = tensor.transpose(rows + rest_r + cols + rest_c)
        t = t.reshape(2**k, 2 ** (n - k), 2**k, 2 ** (n - k))
        return np.einsum("arbr->ab", t)

    def pair_reduced(self, site):
        """Two-qubit state of the Bell pair at ``site`` (copy 1 bit most significant)."""
        return self.reduced([pair_qubit(site, 1), pair_qubit(site, 2)])

    def expectation_vvt(self, v):
        """``Tr(rho V (x) V^T)`` for a doubled register."""
        red = self.pair_reduced(v.site)
        op = np.kron(v.matrix, v.matrix.T)
        val = np.trace(red @ op)
        return _real(val, "Tr(rho V (x) V^T)")


class _LindbladRHS:
    def __init__(self, op, gamma, jump_mask):
        self.op = op
        self.gamma = float(gamma)
        self.jump_mask = int(jump_mask)

    def __call__(self, rho):
        h_rho = self.op.apply(rho)
        # rho H = (H rho)^dag because every RK stage stays Hermitian
        out = -1j * (h_rho - h_rho.conj().T)
        if self.gamma and self.jump_mask:
            kernels.decay_dissipator(rho, out, self.gamma, self.jump_mask)
        return np.ascontiguousarray(out)


def lindblad_trajectory(rho0, h, jumps, gamma, times, dt=1e-3, trace_tol=1e-6):
    """Integrate ``d rho/dt = -i[H, rho] + gamma sum_j D[sigma^-_j] rho`` with RK4.

    ``jumps`` lists the register qubits that decay. In a pi/2 frame sigma^-
    picks up a phase i, which leaves its dissipator unchanged, so the jumps
    are the same in every frame. Returns ``(states, diagnostics)`` with one
    :class:`DensityMatrix` per requested time.
    """
    times = [float(t) for t in times]
    if any(b <= a for a, b in zip(times, times[1:])) or (times and times[0] < 0):
        raise ValueError("output times must be non-negative and increasing")
    op = FlipMaskOperator.from_spec(h, rho0.frame)
    if op.num_qubits != rho0.num_qubits:
        raise ValueError("Hamiltonian and density matrix act on different registers")
    mask = 0
    for q in jumps:
        mask |= 1 << int(q)
    rhs = _LindbladRHS(op, gamma, mask)
    rho = np.ascontiguousarray(rho0.matrix, dtype=complex).copy()
    tr0 = np.trace(rho).real
    now = 0.0
    states, drift = [], []
    steps_taken = 0
    for t_out in times:
        span = t_out - now
        nsteps = int(np.ceil(span / dt - 1e-9)) if span > 0 else 0
        h_step = span / nsteps if nsteps else 0.0
        for _ in range(nsteps):
            k1 = rhs(rho)
            k2 = rhs(rho + 0.5 * h_step * k1)
            k3 = rhs(rho + 0.5 * h_step * k2)
            k4 = rhs(rho + h_step * k3)
            rho = rho + (h_step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        steps_taken += nsteps
        now = t_out
        err = abs(np.trace(rho).real - tr0)
        drift.append(err)
        # RK4 keeps the trace of a trace-preserving generator, so drift here
        # means round-off from an unstable step (or an overflow to nan)
        if not err <= trace_tol or not np.isfinite(rho).all():
            raise IntegrationError(
                f"trace drifted by {err:.3g} at t={t_out} with dt={dt}; "
                f"retry with dt <= {dt / 4:g}"
            )
        states.append(DensityMatrix(rho.copy(), rho0.frame))
    return states, {"trace_drift": drift, "steps": steps_taken, "dt": dt}


def lindblad_evolve(rho0, h, jumps, gamma, t, dt=1e-3):
    """Single-time wrapper around :func:`lindblad_trajectory`."""
    states, _ = lindblad_trajectory(rho0, h, jumps, gamma, [t], dt)
    return states[0]


def depolarized_expectation(state0, h, t, gamma, v):
    """``<V (x) V^T>`` under global depolarizing noise from the closed-form solution.

    ``rho(t) = e^{-gamma t} U rho0 U^dag + (1 - e^{-gamma t}) 1/4^n``; ``h`` is the
    total Hamiltonian of the doubled register.
    """
    ideal = expectation_vvt(evolve_full(state0, h, t), v)
    decay = np.exp(-gamma * t)
    mixed = (np.trace(v.matrix).real ** 2) / 4.0
    return float(decay * ideal + (1 - decay) * mixed)
