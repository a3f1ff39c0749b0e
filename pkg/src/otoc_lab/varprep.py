"""Variational preparation of ``|W1>`` / ``|W12>`` for diagonal, non-unitary W.

The ansatz is ``prod_j U_x exp(i alpha_j W) |+^n>`` with the reflection
``U_x = 1 - 2|+><+|``; ``alpha_1`` acts first. Its overlap with
``|W1> = sum_w w|w> / sqrt(Tr W W^dag)`` depends on W only through the
eigenvalue distribution, which is what :class:`Spectrum` carries.
"""

import csv
import io
import itertools
from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy import optimize, special

from .qstate import StateVector

DISTRIBUTIONS = ("uniform", "arcsine", "wigner_semicircle", "gaussian", "bernoulli")
_ALIASES = {"wigner": "wigner_semicircle", "semicircle": "wigner_semicircle"}
GAUSSIAN_SIGMA = 1.0 / 3.0
GRID_POINTS = 64


def _safe(a, small, big):
    """Evaluate ``big(a)`` away from zero and ``small(a)`` near it (a is an array)."""
    a = np.asarray(a, dtype=float)
    near = np.abs(a) < 1e-4
    out = np.empty(a.shape, dtype=complex)
    out[near] = small(a[near])
    out[~near] = big(a[~near])
    return out


def _uniform(a):
    phi = _safe(a, lambda x: 1 - x**2 / 6 + x**4 / 120, lambda x: np.sin(x) / x)
    wphi = _safe(a, lambda x: 1j * (x / 3 - x**3 / 30),
                 lambda x: 1j * (np.sin(x) / x**2 - np.cos(x) / x))
    return phi, wphi


def _arcsine(a):
    a = np.asarray(a, dtype=float)
    return special.j0(a) + 0j, 1j * special.j1(a)


def _wigner(a):
    phi = _safe(a, lambda x: 1 - x**2 / 8 + x**4 / 192, lambda x: 2 * special.j1(x) / x)
    wphi = _safe(a, lambda x: 1j * (x / 4 - x**3 / 48), lambda x: 2j * special.jv(2, x) / x)
    return phi, wphi


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalue distribution of W, discrete (levels with degeneracies) or analytic.

    ``name`` is ``"discrete"`` or one of :data:`DISTRIBUTIONS`.
    """

    name: str
    levels: tuple = ()
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.name == "discrete":
            levels = tuple((float(w), int(c)) for w, c in self.levels)
            if not levels or any(c <= 0 for _, c in levels):
                raise ValueError("degeneracies must be positive integers")
            total = sum(c for _, c in levels)
            if total & (total - 1):
                raise ValueError(f"degeneracies sum to {total}, not a power of two")
            object.__setattr__(self, "levels", levels)
        elif self.name not in DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.name!r}")
        if self.second_moment <= 0:
            raise ValueError("W has zero norm")

    @classmethod
    def discrete(cls, values, counts=None):
        """From eigenvalues (optionally with degeneracies); repeated values are merged."""
        values = np.asarray(values, dtype=float)
        counts = np.ones(len(values), dtype=int) if counts is None else np.asarray(counts, dtype=int)
        merged = {}
        for w, c in zip(values, counts):
            merged[float(w)] = merged.get(float(w), 0) + int(c)
        return cls("discrete", tuple(sorted(merged.items())))

    @property
    def dimension(self):
        return sum(c for _, c in self.levels) if self.name == "discrete" else None

    def _weights(self):
        w = np.array([x for x, _ in self.levels])
        p = np.array([c for _, c in self.levels], dtype=float)
        return w, p / p.sum()

    def characteristic(self, alpha):
        """``(E[e^{i a w}], E[w e^{i a w}])`` evaluated elementwise."""
        a = np.asarray(alpha, dtype=float)
        if self.name == "discrete":
            w, p = self._weights()
            e = np.exp(1j * a[..., None] * w)
            return e @ p, e @ (p * w)
        if self.name == "uniform":
            return _uniform(a)
        if self.name == "arcsine":
            return _arcsine(a)
        if self.name == "wigner_semicircle":
            return _wigner(a)
        if self.name == "gaussian":
            s = self.params.get("sigma", GAUSSIAN_SIGMA)
            phi = np.exp(-0.5 * (a * s) ** 2) + 0j
            return phi, 1j * a * s * s * phi
        q = self.params.get("q", 0.5)
        e = np.exp(1j * a)
        return q * e + (1 - q) / e, q * e - (1 - q) / e

    def phi(self, alpha):
        return self.characteristic(alpha)[0]

    @property
    def mean(self):
        if self.name == "discrete":
            w, p = self._weights()
            return float(p @ w)
        if self.name == "bernoulli":
            return 2 * self.params.get("q", 0.5) - 1
        return 0.0

    @property
    def second_moment(self):
        if self.name == "discrete":
            w, p = self._weights()
            return float(p @ w**2)
        return {
            "uniform": 1 / 3,
            "arcsine": 1 / 2,
            "wigner_semicircle": 1 / 4,
            "gaussian": self.params.get("sigma", GAUSSIAN_SIGMA) ** 2,
            "bernoulli": 1.0,
        }[self.name]

    def to_dict(self):
        if self.name == "discrete":
            return {"type": "discrete", "levels": [{"w": w, "degeneracy": c} for w, c in self.levels]}
        return {"type": self.name, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d):
        kind = d.get("type")
        if kind == "discrete":
            return cls("discrete", tuple((lv["w"], lv["degeneracy"]) for lv in d["levels"]))
        if kind == "zsum":
            p = d.get("params", {})
            return spectrum_of_zsum(p.get("k", 5), p.get("n", p.get("k", 5)))
        return named_distribution(kind, **d.get("params", {}))


def spectrum_of_zsum(k, n=None):
    """``W = sum_{i<=k} Z_i`` on n qubits: eigenvalue ``k-2m`` with degeneracy ``C(k,m) 2^{n-k}``."""
    n = k if n is None else n
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    return Spectrum("discrete", tuple((k - 2 * m, comb(k, m) * 2 ** (n - k)) for m in range(k + 1)))


def named_distribution(name, **params):
    """Analytic spectrum on ``[-1, 1]``.

    ``bernoulli(q)`` puts weight ``q`` on +1 and ``1-q`` on -1; ``gaussian``
    takes ``sigma`` (default 1/3) and is not truncated.
    """
    name = _ALIASES.get(name, name)
    if name not in DISTRIBUTIONS:
        raise ValueError(f"unknown distribution {name!r}; choose from {DISTRIBUTIONS}")
    allowed = {"gaussian": {"sigma"}, "bernoulli": {"q"}}.get(name, set())
    if set(params) - allowed:
        raise ValueError(f"{name} does not take {sorted(set(params) - allowed)}")
    if name == "bernoulli" and not 0 <= params.get("q", 0.5) <= 1:
        raise ValueError("q must lie in [0, 1]")
    if name == "gaussian" and params.get("sigma", GAUSSIAN_SIGMA) <= 0:
        raise ValueError("sigma must be positive")
    return Spectrum(name, (), dict(params))


def sample_spectrum(dist, k, seed=0):
    """Discrete spectrum of a random diagonal W on k qubits drawn from ``dist``."""
    rng = np.random.default_rng(seed)
    size = 2**k
    name = dist.name
    if name == "discrete":
        w, p = dist._weights()
        values = rng.choice(w, size=size, p=p)
    elif name == "uniform":
        values = rng.uniform(-1, 1, size)
    elif name == "arcsine":
        values = np.cos(np.pi * rng.random(size))
    elif name == "wigner_semicircle":
        values = 2 * rng.beta(1.5, 1.5, size) - 1
    elif name == "gaussian":
        values = rng.normal(0, dist.params.get("sigma", GAUSSIAN_SIGMA), size)
    else:
        values = np.where(rng.random(size) < dist.params.get("q", 0.5), 1.0, -1.0)
    return Spectrum.discrete(values)


# fidelity engine ------------------------------------------------------------

@dataclass(frozen=True)
class AnsatzParams:
    alphas: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))

    @property
    def p(self):
        return len(self.alphas)


def fidelity_f0(s):
    """``Tr(W) / sqrt(2^n Tr(W W^dag))``."""
    return complex(s.mean / np.sqrt(s.second_moment))


def fidelity_fp(s, params):
    """Overlap ``<W1|psi_var>``; ``params`` may be AnsatzParams or an array of shape (..., p).

    Uses ``F_p(a1..ap) = F_{p-1}(a1+a2, a3..) - 2 F_{p-1}(a2..ap) phi(a1)``.
    """
    alphas = np.asarray(params.alphas if isinstance(params, AnsatzParams) else params, dtype=float)
    if alphas.shape[-1:] == (0,):
        return fidelity_f0(s) if alphas.ndim == 1 else np.full(alphas.shape[:-1], fidelity_f0(s))
    norm = np.sqrt(s.second_moment)
    mean = s.mean

    def rec(a):
        if a.shape[-1] == 1:
            phi, wphi = s.characteristic(a[..., 0])
            return (wphi - 2 * mean * phi) / norm
        merged = np.concatenate([a[..., :1] + a[..., 1:2], a[..., 2:]], axis=-1)
        return rec(merged) - 2 * rec(a[..., 1:]) * s.phi(a[..., 0])

    out = rec(alphas)
    return complex(out) if np.ndim(out) == 0 else out


def grid_half_width(s):
    """Search box ``[-L, L)`` for each angle.

    Commensurate (integer) spectra are 2pi-periodic in alpha so ``L = pi``
    covers everything; continuous spectra need ``L`` of a few inverse widths.
    """
    if s.name in ("discrete", "bernoulli") and all(float(w).is_integer() for w, _ in s.levels or ((1, 1),)):
        return np.pi
    return 2 * np.pi / np.sqrt(s.second_moment)


def _grid(s, p, points):
    L = grid_half_width(s)
    axis = np.linspace(-L, L, points, endpoint=False)
    return np.stack(np.meshgrid(*([axis] * p), indexing="ij"), axis=-1).reshape(-1, p)


def _refine(s, x0):
    res = optimize.minimize(lambda x: -abs(fidelity_fp(s, x)), x0, method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
    return res.x, -res.fun


def optimize_alphas(s, p, points=GRID_POINTS):
    """Deterministic grid search plus simplex refinement; returns ``(AnsatzParams, max |F_p|)``.

    Depth ``p`` is also seeded with the depth ``p-1`` optimum behind a zero
    angle, which reproduces ``|F_{p-1}|``, so the result never drops with p.
    """
    if p == 0:
        return AnsatzParams(()), abs(fidelity_f0(s))
    if p not in (1, 2, 3):
        raise ValueError("depth must be 0..3")
    grid = _grid(s, p, points)
    values = np.abs(fidelity_fp(s, grid))
    starts = [grid[int(np.argmax(values))]]
    if p > 1:
        prev, _ = optimize_alphas(s, p - 1, points)
        starts.append(np.concatenate([[0.0], prev.alphas]))
    best_x, best_v = None, -1.0
    for x0 in starts:
        x, v = _refine(s, x0)
        if v > best_v:
            best_x, best_v = x, v
    return AnsatzParams(tuple(best_x)), float(min(best_v, 1.0))


def landscape(s, points=GRID_POINTS, half_width=None):
    """``(axis, |F_2|)`` on a square grid, ``|F_2|[i, j]`` at ``(axis[i], axis[j])``."""
    L = grid_half_width(s) if half_width is None else half_width
    axis = np.linspace(-L, L, points, endpoint=False)
    a1, a2 = np.meshgrid(axis, axis, indexing="ij")
    return axis, np.abs(fidelity_fp(s, np.stack([a1, a2], axis=-1)))


def landscape_csv(axis, values):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["alpha1", "alpha2", "abs_F2"])
    for i, j in itertools.product(range(len(axis)), repeat=2):
        writer.writerow([repr(float(axis[i])), repr(float(axis[j])), repr(float(values[i, j]))])
    return buf.getvalue()


# circuit oracle -------------------------------------------------------------

def _diagonal(w_diag):
    w = np.asarray(w_diag)
    if w.ndim == 2:
        if np.max(np.abs(w - np.diag(np.diag(w)))) > 1e-12:
            raise ValueError("W must be diagonal in the working basis")
        w = np.diag(w)
    w = np.asarray(w, dtype=complex)
    k = int(np.log2(len(w)))
    if 2**k != len(w):
        raise ValueError("diagonal length must be a power of two")
    return w, k


def build_ansatz_state(w_diag, params, n):
    """``prod_j U_x exp(i alpha_j W) |+^n>`` with W (and U_x) on qubits 1..k."""
    w, k = _diagonal(w_diag)
    if k > n:
        raise ValueError("W acts on more qubits than the register holds")
    params = params if isinstance(params, AnsatzParams) else AnsatzParams(tuple(params))
    # rows: qubits k+1..n, columns: the support block
    psi = np.full((2 ** (n - k), 2**k), 2 ** (-n / 2), dtype=complex)
    for a in params.alphas:
        psi *= np.exp(1j * a * w)[None, :]
        psi -= 2 * psi.mean(axis=1, keepdims=True)
    return StateVector(n, psi.reshape(-1))


def w1_target(w_diag, n=None):
    """``|W1> = sum_x w(x)|x> / sqrt(Tr W W^dag)`` with W on qubits 1..k."""
    w, k = _diagonal(w_diag)
    n = k if n is None else n
    amps = np.tile(w, 2 ** (n - k))
    norm = np.linalg.norm(amps)
    if norm == 0:
        raise ValueError("W is the zero operator")
    return StateVector(n, amps / norm)


def extend_to_w12(state, frame=None, u_w=None):
    """CNOT-copy system 1 into a fresh system 2: ``sum_x psi(x)|x>|x>``.

    For ``W = U_W D U_W^dag`` pass ``u_w``; ``(U_W (x) conj(U_W))`` is applied after the copy.
    The amplitudes are taken as coordinates in ``frame`` (diagonal W is frame-invariant).
    """
    m = np.diag(state.amplitudes).astype(complex)
    if u_w is not None:
        u = np.asarray(u_w, dtype=complex)
        m = u @ m @ u.conj().T
    return StateVector.from_pair_matrix(m, frame)
