"""Brute-force references built from Kronecker products and scipy.linalg.expm.

Nothing here imports the package's propagation code, so agreement with it is
a genuine cross-check. Qubit q is bit q of the basis index (little-endian),
which means the leftmost Kronecker factor is the highest qubit.
"""

import numpy as np
from scipy.linalg import expm

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
P = {"I": I2, "X": X, "Y": Y, "Z": Z}


def kron_word(word):
    """Dense matrix of a Pauli word, character q on qubit q."""
    out = np.ones((1, 1), dtype=complex)
    for c in reversed(word):
        out = np.kron(out, P[c])
    return out


def local(op, qubit, n):
    ops = [I2] * n
    ops[qubit] = op
    out = np.ones((1, 1), dtype=complex)
    for q in reversed(range(n)):
        out = np.kron(out, ops[q])
    return out


def dense(terms, n):
    """``sum coeff * word`` from ``[(word, coeff), ...]``."""
    m = np.zeros((2**n, 2**n), dtype=complex)
    for word, c in terms:
        m += c * kron_word(word)
    return m


def xy_chain_terms(n, J=1.0, part="AB"):
    """``J/|i-j|^3 (XX + YY)`` on A-B bonds, or on the A-A and B-B bonds otherwise."""
    out = []
    for i in range(n):
        for j in range(i + 1, n):
            cross = (i % 2) != (j % 2)
            if (part == "AB") != cross:
                continue
            c = J / abs(i - j) ** 3
            for op in "XY":
                w = ["I"] * n
                w[i] = w[j] = op
                out.append(("".join(w), c))
    return out


def random_odd_y_terms(n, rng, count=6):
    """Random real-coefficient Pauli words with an odd number of Y's."""
    out = []
    while len(out) < count:
        word = "".join(rng.choice(list("IXYZ"), size=n))
        if word.count("Y") % 2:
            out.append((word, float(rng.normal())))
    return out


def frame_unitary(mask, n):
    """``B = prod diag(1, i)`` on the qubits set in ``mask``; frame coordinates are ``B^dag H B``."""
    d = np.ones(2**n, dtype=complex)
    idx = np.arange(2**n)
    for q in range(n):
        if (mask >> q) & 1:
            d[(idx >> q) & 1 == 1] *= 1j
    return np.diag(d)


def pair_embed(a, b, n):
    """``a`` on copy 1 and ``b`` on copy 2 in the pair-local 2n-qubit layout."""
    dim = 2**n
    out = np.zeros((4**n, 4**n), dtype=complex)
    idx = np.arange(4**n)
    x1 = np.zeros_like(idx)
    x2 = np.zeros_like(idx)
    for q in range(n):
        x1 |= ((idx >> (2 * q)) & 1) << q
        x2 |= ((idx >> (2 * q + 1)) & 1) << q
    kab = np.kron(a, b)  # row index x1 * dim + x2
    flat = x1 * dim + x2
    out[:, :] = kab[np.ix_(flat, flat)]
    return out


def pair_vector_from_matrix(m):
    """Pair-local amplitudes ``psi[x] = M[x1, x2]``."""
    n = int(np.log2(m.shape[0]))
    idx = np.arange(4**n)
    x1 = np.zeros_like(idx)
    x2 = np.zeros_like(idx)
    for q in range(n):
        x1 |= ((idx >> (2 * q)) & 1) << q
        x2 |= ((idx >> (2 * q + 1)) & 1) << q
    return m[x1, x2]


def otoc_trace(h, w, v, t):
    """``Re Tr(W^dag V(t)^dag W V(t)) / Tr(W W^dag)`` with ``V(t) = U^dag V U``."""
    u = expm(-1j * h * t)
    vt = u.conj().T @ v @ u
    val = np.trace(w.conj().T @ vt.conj().T @ w @ vt) / np.trace(w @ w.conj().T)
    return float(val.real)


def liouvillian(h, jumps, gamma):
    """Row-major vectorised Lindbladian for ``sigma^-`` jumps on the listed qubits."""
    d = h.shape[0]
    n = int(np.log2(d))
    eye = np.eye(d)
    sm = np.array([[0, 1], [0, 0]], dtype=complex)
    L = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for q in jumps:
        c = local(sm, q, n)
        cdc = c.conj().T @ c
        L += gamma * (np.kron(c, c.conj()) - 0.5 * np.kron(cdc, eye) - 0.5 * np.kron(eye, cdc.T))
    return L


def noisy_bell_rho(n, delta):
    """Dense product of per-pair ``(1-delta)|Phi><Phi| + delta/4`` in frame coordinates.

    In frame coordinates every pair is ``(|00> + |11>)/sqrt(2)``.
    """
    phi = np.array([1, 0, 0, 1]) / np.sqrt(2)  # index = x1*2 + x2
    pair = (1 - delta) * np.outer(phi, phi) + delta * np.eye(4) / 4
    m = np.ones((1, 1), dtype=complex)
    for _ in range(n):
        # site j's pair lands on register qubits 2j, 2j+1; the pair state is
        # swap-symmetric so the copy order inside it does not matter
        m = np.kron(pair, m)
    return m
