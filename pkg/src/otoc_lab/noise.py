"""Imperfection channels for the Bell-pair protocol and their error-scaling fits.

Each channel turns into an *evaluator*: a function of time returning the
four joint outcome probabilities for ``|W12>`` and for ``|Bell>`` (the
baseline) plus an optional shot sampler. ``run_series`` does the rest.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DegenerateFitError
from .evolution import DensityMatrix, Eigensystem, evolve_pair_matrix, lindblad_trajectory
from .hamiltonians import build_intercopy_coupling, build_xy_chain, doubled
from .qstate import (
    OUTCOMES,
    PAULI,
    StateVector,
    apply_local_unitary,
    bell_state,
    draw_outcomes,
    joint_probabilities,
    outcome_distribution,
    pair_qubit,
)

PARAMETER = {
    "readout": "x",
    "imperfect_bell": "delta",
    "symmetry_breaking": "epsilon",
    "unequal_hamiltonians": "epsilon",
    "intercopy_coupling": "epsilon",
    "spontaneous_emission": "gamma",
    "depolarizing": "gamma",
}
EPSILON_GRID = (0.0025, 0.005, 0.01, 0.02, 0.04)
SIGNS = np.array([1.0, -1.0, -1.0, 1.0])


@dataclass(frozen=True)
class NoiseConfig:
    """One imperfection channel and its strength.

    The three epsilon channels accept a signed strength so that ``O_eps`` and
    ``O_-eps`` can be compared directly.
    """

    kind: str
    strength: float = 0.0
    dt: float = 0.005  # Lindblad step, spontaneous emission only

    def __post_init__(self):
        kind = self.kind.replace("-", "_").lower()
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "strength", float(self.strength))
        if kind not in PARAMETER:
            raise ConfigError(f"unknown noise channel {self.kind!r}; choose from {sorted(PARAMETER)}")
        s = self.strength
        if not np.isfinite(s):
            raise ConfigError("noise strength must be finite")
        if kind == "readout" and not 0.0 <= s <= 0.5:
            raise ConfigError("readout flip probability x must lie in [0, 0.5]")
        if kind == "imperfect_bell" and not 0.0 <= s <= 1.0:
            raise ConfigError("Bell infidelity delta must lie in [0, 1]")
        if PARAMETER[kind] == "gamma" and s < 0:
            raise ConfigError("rate gamma must be non-negative")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")

    @property
    def parameter(self):
        return PARAMETER[self.kind]


# readout ------------------------------------------------------------------

def _flip_probs(x):
    return np.array([(1 - x) ** 2, (1 - x) * x, x * (1 - x), x * x])


def apply_readout(counts, x, seed=None):
    """Flip each recorded +/-1 independently with probability ``x``.

    ``counts`` maps ``(s1, s2)`` to tallies; ``seed`` may be an int or a Generator.
    """
    if not 0.0 <= x <= 0.5:
        raise ValueError("x must lie in [0, 0.5]")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    out = np.zeros(4, dtype=np.int64)
    probs = _flip_probs(x)
    for k, outcome in enumerate(OUTCOMES):
        # index bit 1 flags s1 = -1 and bit 0 flags s2 = -1, so a flip is an xor
        pattern = rng.multinomial(int(counts.get(outcome, 0)), probs)
        for p, c in enumerate(pattern):
            out[k ^ p] += c
    return {OUTCOMES[k]: int(out[k]) for k in range(4)}


def readout_distribution(dist, x):
    probs = _flip_probs(x)
    out = np.zeros(4)
    for k in range(4):
        for p in range(4):
            out[k ^ p] += dist[k] * probs[p]
    return out


# imperfect Bell pairs -----------------------------------------------------

_ERRORS = (np.eye(2, dtype=complex), PAULI["X"], PAULI["Y"], PAULI["Z"])


def imperfect_bell_ensemble(n, frame=None, pair_signs=None, delta=0.0, seed=0):
    """Endless sampler of pure states whose mixture is the noisy Bell product.

    Draw ``k`` uses the stream ``SeedSequence([seed, k])``. Each pair is
    replaced, with probability ``delta``, by one of the four Bell states chosen
    uniformly, realised as a random Pauli on copy 1.
    """
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    target = bell_state(n, frame, pair_signs)
    k = 0
    while True:
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), k]))
        hit = rng.random(n) < delta
        which = rng.integers(0, 4, size=n)
        state = target
        for site in range(1, n + 1):
            if hit[site - 1] and which[site - 1]:
                state = apply_local_unitary(state, pair_qubit(site, 1), _ERRORS[which[site - 1]])
        yield state
        k += 1


def depolarize_sites(a, n, delta):
    """Apply ``A -> (1-delta) A + delta Tr_j(A) (x) 1/2`` on every site of an n-qubit operator."""
    t = np.asarray(a, dtype=complex).reshape((2,) * (2 * n))
    for q in range(n):
        r, c = n - 1 - q, 2 * n - 1 - q
        tr = np.trace(t, axis1=r, axis2=c)
        tr = np.expand_dims(np.expand_dims(tr, r), c)
        eye = np.eye(2).reshape([2 if ax in (r, c) else 1 for ax in range(2 * n)])
        t = (1 - delta) * t + 0.5 * delta * tr * eye
    return t.reshape(2**n, 2**n)


def _projectors(v):
    evals, evecs = np.linalg.eigh(v.matrix)
    return evals, [np.outer(evecs[:, a], evecs[:, a].conj()) for a in (0, 1)]


def _local_dense(op, qubit, n):
    out = np.ones((1, 1), dtype=complex)
    for q in range(n - 1, -1, -1):
        out = np.kron(out, op if q == qubit else np.eye(2))
    return out


def imperfect_bell_distribution(eig, n, w_frame, v, t, delta):
    """Exact outcome probabilities of the noisy-Bell mixture at time ``t``.

    Pauli errors on copy 1 average the Heisenberg operator ``W^dag P_a(t) W``
    through a per-site depolarizing map, so no ``4^n`` density matrix is built.
    ``w_frame`` is the dense frame-coordinate ``W`` (``None`` for the baseline).
    """
    evals, proj = _projectors(v)
    d = 2**n
    left, right = [], []
    for a in (0, 1):
        big = _local_dense(proj[a], v.site - 1, n)
        ha = eig.heisenberg(big, t)
        if w_frame is not None:
            ha = w_frame.conj().T @ ha @ w_frame
        left.append(depolarize_sites(ha, n, delta))
        # copy 2 measures conj(P_b); U^T conj(P_b) U^* = conj(U^dag P_b U)
        right.append(eig.heisenberg(big, t).conj())
    norm = d if w_frame is None else np.real(np.trace(w_frame @ w_frame.conj().T))
    probs = np.array([[np.real(np.sum(left[a] * right[b])) / norm for b in (0, 1)] for a in (0, 1)])
    return outcome_distribution(probs, evals)


# density-matrix helpers -----------------------------------------------------

def density_distribution(rho, v):
    """Joint outcome probabilities of ``V (x) V^T`` in a doubled-register density matrix."""
    red = rho.pair_reduced(v.site)
    evals, evecs = np.linalg.eigh(v.matrix)
    probs = np.zeros((2, 2))
    for a in (0, 1):
        for b in (0, 1):
            vec = np.kron(evecs[:, a], evecs[:, b].conj())
            probs[a, b] = np.real(vec.conj() @ red @ vec)
    return outcome_distribution(probs / probs.sum(), evals)


def _pure_dist(m, frame2, v):
    return outcome_distribution(*joint_probabilities(StateVector.from_pair_matrix(m, frame2), v))


# channel dispatch ---------------------------------------------------------

def channel_evaluator(config, model, times):
    """Build ``t -> (dist_W, dist_Bell, sampler)`` for ``config.noise``."""
    noise = config.noise
    kind, s = noise.kind, noise.strength
    n, frame = model.n, model.frame
    frame2 = frame.doubled()
    v = model.observable(config.v_site)
    if config.initial_state is not None:
        w_state = config.initial_state.in_frame(frame2)
    else:
        w_state = model.initial_state(config.w_site)
    bell = model.initial_state(None)
    mw, mb = w_state.pair_matrix(), bell.pair_matrix()

    if kind in ("readout", "depolarizing"):
        def ideal(t):
            return (_pure_dist(evolve_pair_matrix(mw, model.eig_frame, t), frame2, v),
                    _pure_dist(evolve_pair_matrix(mb, model.eig_frame, t), frame2, v))

        if kind == "readout":
            def sampler_for(dist):
                def sample(shots, rng):
                    return apply_readout(draw_outcomes(dist, shots, rng), s, rng)
                return sample

            def evaluate(t):
                dw, db = ideal(t)
                return readout_distribution(dw, s), readout_distribution(db, s), sampler_for(dw)
        else:
            def evaluate(t):
                decay = np.exp(-s * t)
                dw, db = ideal(t)
                flat = np.full(4, 0.25)
                return decay * dw + (1 - decay) * flat, decay * db + (1 - decay) * flat, None
        return evaluate

    if kind == "imperfect_bell":
        if config.initial_state is not None:
            raise ConfigError("imperfect_bell needs a Pauli W, not a prepared state")
        w = frame.operator_in_frame(config.w_site - 1, PAULI["Z"])
        w_dense = _local_dense(w, config.w_site - 1, n)

        def evaluate(t):
            return (imperfect_bell_distribution(model.eig_frame, n, w_dense, v, t, s),
                    imperfect_bell_distribution(model.eig_frame, n, None, v, t, s), None)
        return evaluate

    if kind in ("symmetry_breaking", "unequal_hamiltonians"):
        if kind == "symmetry_breaking":
            h_eps = model.h + build_xy_chain(n, model.h.metadata.get("J", 1.0), "AA+BB").scaled(s)
            eig = Eigensystem.from_spec(h_eps.simplified(), frame)

            def step(m, t):
                return evolve_pair_matrix(m, eig, t)
        else:
            def step(m, t):
                return evolve_pair_matrix(m, model.eig_frame, (1 + s) * t, model.eig_frame, (1 - s) * t)

        def evaluate(t):
            return _pure_dist(step(mw, t), frame2, v), _pure_dist(step(mb, t), frame2, v), None
        return evaluate

    if kind == "intercopy_coupling":
        J = model.h.metadata.get("J", 1.0)
        h_tot = (doubled(model.h) + build_intercopy_coupling(n, J).scaled(s)).simplified()
        eig = Eigensystem.from_spec(h_tot, frame2)

        def run(state, t):
            out = StateVector(2 * n, eig.evolve(state.amplitudes, t), frame2)
            return outcome_distribution(*joint_probabilities(out, v))

        def evaluate(t):
            return run(w_state, t), run(bell, t), None
        return evaluate

    if kind == "spontaneous_emission":
        h_tot = doubled(model.h)
        grid = sorted(set(times))
        jumps = range(2 * n)
        rw, _ = lindblad_trajectory(DensityMatrix.from_state(w_state), h_tot, jumps, s, grid, noise.dt)
        rb, _ = lindblad_trajectory(DensityMatrix.from_state(bell), h_tot, jumps, s, grid, noise.dt)
        table = {t: (density_distribution(a, v), density_distribution(b, v), None)
                 for t, a, b in zip(grid, rw, rb)}

        def evaluate(t):
            return table[t]
        return evaluate

    raise ConfigError(f"no evaluator for {kind!r}")  # pragma: no cover


def channel_series(channel, base):
    """Run ``base`` (a SeriesConfig) under ``channel``."""
    from .protocol import run_series

    return run_series(replace(base, noise=channel))


def channel_values(channel, strengths, times, base, dt=0.005):
    """Infinite-shot ``(O_est, O')`` on a strengths x times grid, shape ``(S, T, 2)``.

    One model (and its eigensystems) is shared by every strength.
    """
    from .protocol import OtocModel

    times = [float(t) for t in np.atleast_1d(times)]
    model = OtocModel(base.build_hamiltonian(), base.frame)
    out = np.empty((len(strengths), len(times), 2))
    for i, s in enumerate(strengths):
        cfg = replace(base, noise=NoiseConfig(channel, s, dt), times=tuple(sorted(times)), shots=0)
        evaluate = channel_evaluator(cfg, model, times)
        for j, t in enumerate(times):
            dw, db, _ = evaluate(t)
            out[i, j] = SIGNS @ dw, SIGNS @ db
    return out


def channel_value(channel, base, t):
    """Infinite-shot ``(O_est, O')`` for one channel at one time."""
    est, bas = channel_values(channel.kind, [channel.strength], [t], base, channel.dt)[0, 0]
    return float(est), float(bas)


def scaling_exponent(channel, strengths, t, base, floor=1e-12):
    """Least-squares slope of ``log|O_eps - O_0|`` against ``log eps``.

    ``channel`` is a channel name, ``base`` a SeriesConfig and ``t`` one time
    or several (one slope per time). Raises :class:`DegenerateFitError` when
    every difference sits below ``floor``.
    """
    strengths = np.asarray(strengths, dtype=float)
    if len(strengths) < 4 or np.any(strengths <= 0):
        raise ValueError("need at least four positive strengths")
    if strengths.max() / strengths.min() < 10 - 1e-9:
        raise ValueError("strengths must span at least a decade")
    vals = channel_values(channel, [0.0, *strengths], t, base)[..., 0]
    slopes = []
    for j in range(vals.shape[1]):
        diffs = np.abs(vals[1:, j] - vals[0, j])
        keep = diffs >= floor
        if keep.sum() < 2:
            raise DegenerateFitError(f"{channel}: no deviation above {floor:g} at t={np.atleast_1d(t)[j]}")
        slope, _ = np.polyfit(np.log(strengths[keep]), np.log(diffs[keep]), 1)
        slopes.append(float(slope))
    return slopes[0] if np.ndim(t) == 0 else np.array(slopes)
