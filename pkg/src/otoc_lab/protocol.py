"""Infinite-temperature OTOCs two ways: a dense trace and the Bell-pair protocol.

The trace path never touches a doubled register or a phase frame:
``O(t) = Re Tr(W^dag V(t)^dag W V(t)) / Tr(W W^dag)`` with
``V(t) = exp(iHt) V exp(-iHt)``. The protocol path prepares
``(W (x) 1)|Bell>`` in the antisymmetric frame, evolves both copies with
``+H`` and measures ``V (x) V^T``. The two agree whenever ``H^T = -H`` in the
frame, which is the point of the whole construction.
"""

import csv
import io
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .errors import AntisymmetryWarning, UndefinedRatioError
from .evolution import Eigensystem, evolve_pair_matrix
from .hamiltonians import antisymmetry_report, build_xy_chain, find_phase_frame
from .qstate import (
    PAULI,
    PhaseFrame,
    StateVector,
    apply_local_unitary,
    bell_state,
    draw_outcomes,
    expectation_vvt,
    joint_probabilities,
    outcome_distribution,
    pair_qubit,
    pauli_observable,
    summarize_counts,
)

CSV_FIELDS = ["t", "exact", "protocol", "baseline", "sampled_mean", "sampled_stderr",
              "rescaled", "n_shots", "seed"]
DEFAULT_TIMES = tuple(np.linspace(0.0, 3.0, 61))


def _local_dense(op, qubit, n):
    out = np.ones((1, 1), dtype=complex)
    for q in range(n - 1, -1, -1):
        out = np.kron(out, op if q == qubit else np.eye(2))
    return out


def worker_count():
    try:
        return max(1, int(os.environ.get("OTOC_LAB_THREADS", "1")))
    except ValueError:
        return 1


class OtocModel:
    """A single-copy Hamiltonian with its working frame and cached eigensystems."""

    def __init__(self, h, frame=None):
        self.h = h
        self.n = h.num_qubits
        if frame is None:
            frame = find_phase_frame(h) if self.n <= 16 else None
            frame = frame or PhaseFrame.trivial(self.n)
        self.frame = frame
        self.antisymmetric, self.violation = antisymmetry_report(h, frame)
        self._eig_comp = None
        self._eig_frame = None

    @property
    def eig_computational(self):
        if self._eig_comp is None:
            self._eig_comp = Eigensystem.from_spec(self.h)
        return self._eig_comp

    @property
    def eig_frame(self):
        if self._eig_frame is None:
            if self.frame.is_trivial:
                self._eig_frame = self.eig_computational
            else:
                self._eig_frame = Eigensystem.from_spec(self.h, self.frame)
        return self._eig_frame

    def warn_if_not_antisymmetric(self):
        if not self.antisymmetric:
            warnings.warn(
                f"H^T != -H in the chosen frame (violation {self.violation:.3g}); "
                "the protocol value is not the OTOC",
                AntisymmetryWarning,
                stacklevel=3,
            )

    # trace oracle ---------------------------------------------------------

    def exact_general(self, w, v, t):
        """``Re Tr(W^dag V(t)^dag W V(t)) / Tr(W W^dag)`` for dense computational-basis W, V."""
        w = np.asarray(w, dtype=complex)
        vt = self.eig_computational.heisenberg(v, t)
        val = np.trace(w.conj().T @ vt.conj().T @ w @ vt) / np.trace(w @ w.conj().T)
        if abs(val.imag) > 1e-10:
            raise RuntimeError(f"OTOC trace has imaginary part {val.imag:.3g}")
        return float(val.real)

    def exact(self, w_site, v_site, t, w_label="Z", v_label="X"):
        n = self.n
        v = _local_dense(PAULI[v_label], v_site - 1, n)
        vt = self.eig_computational.heisenberg(v, t)
        if w_label == "Z":
            s = np.where((np.arange(2**n) >> (w_site - 1)) & 1, -1.0, 1.0)
            wvw = s[:, None] * vt * s[None, :]
        else:
            w = _local_dense(PAULI[w_label], w_site - 1, n)
            wvw = w @ vt @ w
        val = np.sum(wvw * vt.T) / 2**n
        if abs(val.imag) > 1e-10:
            raise RuntimeError(f"OTOC trace has imaginary part {val.imag:.3g}")
        return float(val.real)

    def exact_many(self, w_site, v_sites, t, w=None):
        """Trace OTOC with ``V = X_j`` for several j, sharing ``A = U W U^dag``.

        ``Tr(W^dag V(t) W V(t)) = Tr(A^dag V A V)``, and right-multiplying by a
        Pauli X is a column permutation, so each extra site costs O(4^n).
        """
        n = self.n
        if w is None:
            s = np.where((np.arange(2**n) >> (w_site - 1)) & 1, -1.0, 1.0)
            w = np.diag(s).astype(complex)
        a = self.eig_computational.heisenberg(w, -t)
        norm = np.trace(w @ w.conj().T).real
        ah = a.conj().T
        idx = np.arange(2**n)
        out = {}
        for v in v_sites:
            perm = idx ^ (1 << (v - 1))
            val = np.sum(ah[:, perm] * a[:, perm].T) / norm
            if abs(val.imag) > 1e-10:
                raise RuntimeError(f"OTOC trace has imaginary part {val.imag:.3g}")
            out[v] = float(val.real)
        return out

    # Bell-pair protocol ---------------------------------------------------

    def initial_state(self, w_site=None, w_label="Z"):
        """``(W (x) 1)|Bell>`` in the working frame; ``w_site=None`` gives ``|Bell>``."""
        state = bell_state(self.n, self.frame)
        if w_site is not None:
            w = self.frame.operator_in_frame(w_site - 1, PAULI[w_label])
            state = apply_local_unitary(state, pair_qubit(w_site, 1), w)
        return state

    def evolve(self, state, t, t2=None, eig2=None):
        m = evolve_pair_matrix(state.pair_matrix(), self.eig_frame, t, eig2, t2)
        return StateVector.from_pair_matrix(m, state.frame)

    def observable(self, v_site, v_label="X"):
        return pauli_observable(v_label, v_site, self.frame)

    def protocol(self, w_site, v_site, t):
        self.warn_if_not_antisymmetric()
        state = self.evolve(self.initial_state(w_site), t)
        return expectation_vvt(state, self.observable(v_site))

    def baseline(self, v_site, t):
        self.warn_if_not_antisymmetric()
        state = self.evolve(self.initial_state(None), t)
        return expectation_vvt(state, self.observable(v_site))


@lru_cache(maxsize=16)
def _model(h, frame):
    return OtocModel(h, frame)


def otoc_exact_trace(h, frame, w_site, v_site, t):
    """``(1/2^n) Re Tr(Z_i X_j(t) Z_i X_j(t))``; the frame does not enter a trace."""
    return _model(h, frame).exact(w_site, v_site, t)


def otoc_protocol(h, frame, w_site, v_site, t):
    """``<W12(t)| X_j (x) X_j^T |W12(t)>`` with ``W = Z_i``, both copies evolved by ``+H``."""
    return _model(h, frame).protocol(w_site, v_site, t)


def otoc_baseline(h, frame, v_site, t):
    """The protocol with ``W = 1``: ``O'_j(t)``, identically 1 when ``H^T = -H``."""
    return _model(h, frame).baseline(v_site, t)


def otoc_rescaled(estimate, baseline):
    if abs(baseline) <= 1e-6:
        raise UndefinedRatioError(f"baseline {baseline!r} too close to zero to rescale")
    return estimate / baseline


@dataclass
class OtocPoint:
    t: float
    exact: float
    protocol: float
    baseline: float
    sampled: tuple = None  # (estimate, stderr, shots, seed)
    rescaled: float = float("nan")

    def row(self):
        est, err, shots, seed = self.sampled if self.sampled else (None, None, 0, None)
        return {
            "t": self.t, "exact": self.exact, "protocol": self.protocol,
            "baseline": self.baseline, "sampled_mean": est, "sampled_stderr": err,
            "rescaled": self.rescaled, "n_shots": shots, "seed": seed,
        }


@dataclass
class OtocSeries:
    points: list
    model: dict = field(default_factory=dict)
    sites: tuple = (None, None)
    noise: object = None
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        ts = [p.t for p in self.points]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("time grid must be strictly increasing")

    def __len__(self):
        return len(self.points)

    def column(self, name):
        return np.array([np.nan if (v := p.row()[name]) is None else v for p in self.points], float)

    def to_csv(self, fh=None, extra=None):
        """Write the series as CSV; ``extra`` maps additional constant columns."""
        buf = fh if fh is not None else io.StringIO()
        extra = dict(extra or {})
        if self.noise is not None and not extra:
            extra = {"channel": self.noise.kind, "strength": _fmt(self.noise.strength)}
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_FIELDS + list(extra))
        for p in self.points:
            row = p.row()
            writer.writerow([_fmt(row[k]) for k in CSV_FIELDS] + [extra[k] for k in extra])
        return buf.getvalue() if fh is None else None


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


@dataclass
class SeriesConfig:
    """Everything needed to produce one OTOC time series.

    ``hamiltonian`` defaults to the long-range XY chain ``H_AB`` on ``n`` sites.
    ``initial_state``/``w_operator`` replace ``Z_{w_site}`` by a prepared
    ``|W12>`` and its (dense, computational-basis) operator.
    """

    n: int = 10
    J: float = 1.0
    w_site: int = 5
    v_site: int = 6
    times: tuple = DEFAULT_TIMES
    shots: int = 0
    seed: int = 0
    stream: int = 0
    noise: object = None
    hamiltonian: object = None
    frame: PhaseFrame = None
    initial_state: StateVector = None
    w_operator: np.ndarray = None

    def build_hamiltonian(self):
        return self.hamiltonian if self.hamiltonian is not None else build_xy_chain(self.n, self.J, "AB")


def point_rng(seed, index, stream=0):
    """Shot stream for grid point ``index``; ``stream`` separates curves sharing a seed."""
    entropy = [int(seed), int(index)] + ([int(stream)] if stream else [])
    return np.random.default_rng(np.random.SeedSequence(entropy))


def _ideal_evaluator(config, model, v_sites):
    obs = {v: model.observable(v) for v in v_sites}
    if config.initial_state is not None:
        w_state = config.initial_state
        if w_state.frame != model.frame.doubled():
            w_state = w_state.in_frame(model.frame.doubled())
    else:
        w_state = model.initial_state(config.w_site)
    bell = model.initial_state(None)

    def evaluate(t):
        sw, sb = model.evolve(w_state, t), model.evolve(bell, t)
        return {
            v: (outcome_distribution(*joint_probabilities(sw, o)),
                outcome_distribution(*joint_probabilities(sb, o)), None)
            for v, o in obs.items()
        }

    return evaluate


SIGNS = np.array([1, -1, -1, 1])


def run_series(config):
    """Fill exact, protocol, baseline, sampled and rescaled values over the time grid."""
    return run_series_many(config, [config.v_site])[0]


def run_series_many(config, v_sites):
    """One series per measured site, sharing the evolved states at every time.

    Curve ``k`` draws shots from stream ``config.stream + k``. Noise channels
    are evaluated one site at a time.
    """
    v_sites = [int(v) for v in v_sites]
    times = [float(t) for t in config.times]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("time grid must be strictly increasing")
    h = config.build_hamiltonian()
    model = OtocModel(h, config.frame)
    caught = []
    if not model.antisymmetric and (config.noise is None or config.noise.kind != "symmetry_breaking"):
        caught.append(f"H^T != -H in frame (violation {model.violation:.3g})")
    if config.noise is not None:
        from .noise import channel_evaluator

        evals = [channel_evaluator(replace(config, v_site=v), model, times) for v in v_sites]

        def evaluate(t):
            return {v: ev(t) for v, ev in zip(v_sites, evals)}
    else:
        evaluate = _ideal_evaluator(config, model, v_sites)

    w_dense = None if config.w_operator is None else np.asarray(config.w_operator, dtype=complex)

    def one(index):
        t = times[index]
        per_site = evaluate(t)
        exact = model.exact_many(config.w_site, v_sites, t, w_dense)
        row = []
        for k, v in enumerate(v_sites):
            dw, db, sampler = per_site[v]
            prot = float(SIGNS @ dw)
            base = float(SIGNS @ db)
            sampled = None
            value = prot
            if config.shots > 0:
                rng = point_rng(config.seed, index, config.stream + k)
                if sampler is not None:
                    counts = sampler(config.shots, rng)
                else:
                    counts = draw_outcomes(dw, config.shots, rng)
                est, err = summarize_counts(counts)
                sampled = (est, err, config.shots, config.seed)
                value = est
            try:
                resc = otoc_rescaled(value, base)
            except UndefinedRatioError:
                resc = float("nan")
            row.append(OtocPoint(t, exact[v], prot, base, sampled, resc))
        return row

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AntisymmetryWarning)
        workers = worker_count()
        if workers > 1 and len(times) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                rows = list(pool.map(one, range(len(times))))
        else:
            rows = [one(i) for i in range(len(times))]
    meta = {"n": model.n, "frame_mask": model.frame.mask, "antisymmetric": model.antisymmetric}
    meta.update({k: v for k, v in h.metadata.items() if isinstance(v, (int, float, str))})
    return [
        OtocSeries([r[k] for r in rows], meta, (config.w_site, v), config.noise, list(caught))
        for k, v in enumerate(v_sites)
    ]
