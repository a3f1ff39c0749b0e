"""Pauli-string Hamiltonians, the long-range XY chain and the H^T = -H certificate.

A Pauli string is a word over ``IXYZ`` whose character ``k`` acts on qubit
``k`` (chain site ``k+1``). Hermitian Pauli strings have real matrices when
they contain an even number of Y's and purely imaginary matrices otherwise, so
a real-coefficient sum is antisymmetric in a basis exactly when every term
has odd Y-parity there. Moving to a phase frame with pi/2 on a qubit rewrites
that qubit's X into -Y and Y into X (the matrix ``B^dag P B`` with
``B = diag(1, i)``), which is what :func:`conjugate_by_frame` does symbolically.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import check_budget
from .qstate import PhaseFrame

_SINGLE = {
    # quarter turns of the frame phase: X -> -Y -> -X -> Y -> X, Y -> X -> -Y -> -X -> Y
    "X": [(1, "X"), (-1, "Y"), (-1, "X"), (1, "Y")],
    "Y": [(1, "Y"), (1, "X"), (-1, "Y"), (-1, "X")],
}


@dataclass(frozen=True)
class PauliString:
    ops: str
    coeff: float = 1.0

    def __post_init__(self):
        ops = self.ops.upper()
        if set(ops) - set("IXYZ"):
            raise ValueError(f"bad Pauli word {self.ops!r}")
        coeff = float(self.coeff)
        if not np.isfinite(coeff):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "ops", ops)
        object.__setattr__(self, "coeff", coeff)

    @property
    def num_qubits(self):
        return len(self.ops)

    @property
    def y_parity(self):
        return self.ops.count("Y") % 2

    @property
    def x_mask(self):
        """Qubits flipped by the string (X or Y)."""
        return sum(1 << q for q, c in enumerate(self.ops) if c in "XY")

    @property
    def z_mask(self):
        """Qubits that pick up a sign (Z or Y)."""
        return sum(1 << q for q, c in enumerate(self.ops) if c in "YZ")

    def row_phases(self):
        """``d[x]`` such that ``(P psi)[x] = coeff * d[x] * psi[x ^ x_mask]``."""
        n = self.num_qubits
        idx = np.arange(2**n)
        src = idx ^ self.x_mask
        parity = np.zeros(2**n, dtype=np.int64)
        zm = self.z_mask
        for q in range(n):
            if (zm >> q) & 1:
                parity ^= (src >> q) & 1
        phase = (1j) ** self.ops.count("Y")
        return self.coeff * phase * np.where(parity, -1.0, 1.0)


@dataclass(frozen=True)
class HamiltonianSpec:
    num_qubits: int
    terms: tuple = ()
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        terms = tuple(t if isinstance(t, PauliString) else PauliString(*t) for t in self.terms)
        for t in terms:
            if t.num_qubits != self.num_qubits:
                raise ValueError(f"term {t.ops!r} does not act on {self.num_qubits} qubits")
        object.__setattr__(self, "terms", terms)

    def __add__(self, other):
        if other.num_qubits != self.num_qubits:
            raise ValueError("cannot add Hamiltonians on different registers")
        meta = dict(self.metadata)
        meta.update({k: v for k, v in other.metadata.items() if k not in meta})
        return HamiltonianSpec(self.num_qubits, self.terms + other.terms, meta)

    def scaled(self, factor):
        return HamiltonianSpec(
            self.num_qubits,
            tuple(PauliString(t.ops, factor * t.coeff) for t in self.terms),
            dict(self.metadata),
        )

    def simplified(self, tol=1e-14):
        """Merge repeated words and drop vanishing coefficients."""
        merged = {}
        for t in self.terms:
            merged[t.ops] = merged.get(t.ops, 0.0) + t.coeff
        terms = tuple(PauliString(w, c) for w, c in merged.items() if abs(c) > tol)
        return HamiltonianSpec(self.num_qubits, terms, dict(self.metadata))

    def to_dict(self):
        return {
            "num_qubits": self.num_qubits,
            "terms": [{"paulis": t.ops, "coeff": t.coeff} for t in self.terms],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            n = int(doc["num_qubits"])
            terms = tuple(PauliString(t["paulis"], t["coeff"]) for t in doc.get("terms", []))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed Hamiltonian document: {exc}") from exc
        return cls(n, terms, dict(doc.get("metadata", {})))

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def sublattice_labels(n):
    """A on odd-numbered sites (1, 3, ...), B on even-numbered ones."""
    return tuple("A" if q % 2 == 0 else "B" for q in range(n))


def _word(n, ops_at):
    chars = ["I"] * n
    for q, c in ops_at.items():
        chars[q] = c
    return "".join(chars)


def build_xy_chain(n, J=1.0, part="AB"):
    """All-to-all ``J/r^3 (XX + YY)`` couplings on a unit-spaced chain.

    ``part`` selects the inter-sublattice bonds ("AB") or the bonds inside one
    sublattice ("AA", "BB"); "AA+BB" gives both intra-sublattice groups.
    """
    if n < 2:
        raise ValueError("the chain needs at least two sites")
    part = part.upper()
    if part not in ("AB", "AA", "BB", "AA+BB"):
        raise ValueError(f"unknown sublattice part {part!r}")
    labels = sublattice_labels(n)
    terms = []
    for i in range(n):
        for j in range(i + 1, n):
            pair = "".join(sorted(labels[i] + labels[j]))
            if pair != part and not (part == "AA+BB" and pair in ("AA", "BB")):
                continue
            c = J / abs(i - j) ** 3
            terms.append(PauliString(_word(n, {i: "X", j: "X"}), c))
            terms.append(PauliString(_word(n, {i: "Y", j: "Y"}), c))
    meta = {"model": "xy_chain", "part": part, "J": J, "decay_power": 3, "spacing": 1,
            "sublattice": "".join(labels)}
    return HamiltonianSpec(n, tuple(terms), meta)


def embed_in_copy(h, copy):
    """Place a single-copy Hamiltonian on copy 1 or 2 of a pair-local doubled register."""
    if copy not in (1, 2):
        raise ValueError("copy must be 1 or 2")
    n = h.num_qubits
    terms = []
    for t in h.terms:
        chars = ["I"] * (2 * n)
        for q, c in enumerate(t.ops):
            chars[2 * q + copy - 1] = c
        terms.append(PauliString("".join(chars), t.coeff))
    return HamiltonianSpec(2 * n, tuple(terms), dict(h.metadata, copy=copy))


def doubled(h1, h2=None):
    """``H1 (x) 1 + 1 (x) H2`` on the doubled register (``H2`` defaults to ``H1``)."""
    return embed_in_copy(h1, 1) + embed_in_copy(h2 if h2 is not None else h1, 2)


def build_intercopy_coupling(n, J=1.0):
    """Site-matched ``J (XX + YY)`` between the two copies (no distance decay)."""
    terms = []
    for q in range(n):
        a, b = 2 * q, 2 * q + 1
        terms.append(PauliString(_word(2 * n, {a: "X", b: "X"}), J))
        terms.append(PauliString(_word(2 * n, {a: "Y", b: "Y"}), J))
    return HamiltonianSpec(2 * n, tuple(terms), {"model": "intercopy_coupling", "J": J})


def _conjugate_word(ops, coeff, turns):
    chars = []
    for c, k in zip(ops, turns):
        if c in _SINGLE and k % 4:
            sign, c = _SINGLE[c][k % 4]
            coeff *= sign
        chars.append(c)
    return "".join(chars), coeff


def conjugate_by_quarter_turns(h, turns):
    """Rewrite ``h`` in the frame ``theta_q = turns[q] * pi/2`` (any integer turns)."""
    if len(turns) != h.num_qubits:
        raise ValueError("need one entry per qubit")
    terms = tuple(PauliString(*_conjugate_word(t.ops, t.coeff, turns)) for t in h.terms)
    return HamiltonianSpec(h.num_qubits, terms, dict(h.metadata))


def conjugate_by_frame(h, frame):
    """The same operator written in ``frame``'s basis."""
    if frame.num_qubits != h.num_qubits:
        raise ValueError("frame size does not match the Hamiltonian")
    turns = [1 if th else 0 for th in frame.phases]
    return conjugate_by_quarter_turns(h, turns)


def antisymmetry_report(h, frame=None):
    """Whether ``H^T = -H`` in ``frame``.

    Returns ``(holds, max_violation)``; the violation is the summed absolute
    coefficient of the even-Y-parity (real, symmetric) terms.
    """
    frame = frame or PhaseFrame.trivial(h.num_qubits)
    hf = conjugate_by_frame(h, frame).simplified()
    violation = sum(abs(t.coeff) for t in hf.terms if t.y_parity == 0)
    return violation == 0.0, float(violation)


def dense_antisymmetry_violation(h, frame=None):
    """``max |H^T + H|`` from the dense matrix; an independent cross-check."""
    m = dense_matrix(h, frame)
    return float(np.max(np.abs(m.T + m))) if m.size else 0.0


def _popcount(arr):
    arr = np.asarray(arr, dtype=np.int64).copy()
    count = np.zeros(arr.shape, dtype=np.int64)
    while np.any(arr):
        count += arr & 1
        arr >>= 1
    return count


def find_phase_frame(h, max_qubits=16):
    """Exhaustively search theta in {0, pi/2}^n for a frame where ``H^T = -H``.

    Returns the matching frame with the smallest bit mask, or ``None``.
    """
    n = h.num_qubits
    if n > max_qubits:
        raise ValueError(f"frame search limited to {max_qubits} qubits, got {n}")
    hs = h.simplified()
    frames = np.arange(2**n, dtype=np.int64)
    ok = np.ones(2**n, dtype=bool)
    for t in hs.terms:
        xs = sum(1 << q for q, c in enumerate(t.ops) if c == "X")
        ys = sum(1 << q for q, c in enumerate(t.ops) if c == "Y")
        # after conjugation a Y sits where (Y and theta=0) or (X and theta=pi/2)
        parity = _popcount((ys & ~frames) | (xs & frames)) & 1
        ok &= parity == 1
    hits = np.flatnonzero(ok)
    if hits.size == 0:
        return None
    return PhaseFrame.from_mask(n, int(hits[0]))


class FlipMaskOperator:
    """Sparse form ``H = sum_k D_k P_k`` with ``P_k: x -> x ^ mask_k`` and diagonal ``D_k``.

    ``(H psi)[x] = sum_k diags[k, x] psi[x ^ masks[k]]``.
    """

    def __init__(self, num_qubits, masks, diags):
        self.num_qubits = num_qubits
        self.masks = np.asarray(masks, dtype=np.int64)
        self.diags = np.ascontiguousarray(diags, dtype=complex).reshape(len(self.masks), 2**num_qubits)

    @classmethod
    def from_spec(cls, h, frame=None):
        if frame is not None and not frame.is_trivial:
            h = conjugate_by_frame(h, frame)
        n = h.num_qubits
        check_budget(16 * 2**n * max(1, len(h.terms)), "flip-mask operator")
        groups = {}
        for t in h.terms:
            d = t.row_phases()
            if t.x_mask in groups:
                groups[t.x_mask] = groups[t.x_mask] + d
            else:
                groups[t.x_mask] = d.astype(complex)
        masks = sorted(groups)
        diags = np.array([groups[m] for m in masks]) if masks else np.zeros((0, 2**n), complex)
        return cls(n, masks, diags)

    @property
    def dim(self):
        return 2**self.num_qubits

    def apply(self, psi, out=None):
        from . import kernels

        psi = np.ascontiguousarray(psi, dtype=complex)
        vec = psi.ndim == 1
        psi2 = psi.reshape(self.dim, -1)
        res = np.zeros_like(psi2) if out is None else out.reshape(self.dim, -1)
        kernels.flip_mask_apply(self.masks, self.diags, psi2, res)
        return res.reshape(-1) if vec else res

    def to_dense(self):
        check_budget(16 * self.dim**2, "dense Hamiltonian")
        m = np.zeros((self.dim, self.dim), dtype=complex)
        idx = np.arange(self.dim)
        for mask, d in zip(self.masks, self.diags):
            m[idx, idx ^ mask] += d
        return m

    def conserves_popcount(self):
        idx = np.arange(self.dim)
        pc = _popcount(idx)
        for mask, d in zip(self.masks, self.diags):
            live = np.abs(d) > 0
            if np.any(pc[live] != pc[idx[live] ^ mask]):
                return False
        return True


def dense_matrix(h, frame=None):
    """Dense matrix of ``h`` in ``frame`` (computational basis when ``None``)."""
    check_budget(16 * 4**h.num_qubits, "dense Hamiltonian")
    return FlipMaskOperator.from_spec(h, frame).to_dense()


def kron_matrix(h, frame=None):
    """Term-by-term Kronecker-product construction; slow, used as an oracle."""
    from .qstate import PAULI

    if frame is not None and not frame.is_trivial:
        h = conjugate_by_frame(h, frame)
    n = h.num_qubits
    m = np.zeros((2**n, 2**n), dtype=complex)
    for t in h.terms:
        term = np.ones((1, 1), dtype=complex)
        for c in reversed(t.ops):
            term = np.kron(term, PAULI[c])
        m += t.coeff * term
    return m
