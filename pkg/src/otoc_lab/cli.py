"""``otoc-lab`` command line: OTOC series, noise sweeps, variational prep, frame search.

Exit codes: 0 success, 2 bad configuration, 3 a contract check failed
(outputs are still written), 4 numerical failure (budget, integrator, ratio).
"""

import argparse
import csv
import hashlib
import io
import json
import platform
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__ as VERSION
from . import kernels
from .config import PRESETS, config_hash, load_config
from .errors import (
    BudgetExceededError,
    ConfigError,
    IntegrationError,
    UndefinedRatioError,
)
from .hamiltonians import (
    HamiltonianSpec,
    antisymmetry_report,
    build_xy_chain,
    dense_antisymmetry_violation,
    find_phase_frame,
)
from .noise import PARAMETER, NoiseConfig, channel_evaluator
from .protocol import OtocModel, SeriesConfig, run_series, run_series_many
from .qstate import PhaseFrame
from .varprep import (
    Spectrum,
    build_ansatz_state,
    extend_to_w12,
    landscape,
    landscape_csv,
    optimize_alphas,
    spectrum_of_zsum,
)

SIGNS = np.array([1.0, -1.0, -1.0, 1.0])


# shared helpers -------------------------------------------------------------

def _times(cfg, default_stop=3.0, default_points=61):
    t = cfg.get("time", {})
    if "values" in t:
        return tuple(float(x) for x in t["values"])
    return tuple(np.linspace(t.get("start", 0.0), t.get("stop", default_stop), t.get("points", default_points)))


def _hamiltonian(cfg, default_n):
    model = cfg.get("model", {})
    if "hamiltonian" in cfg:
        return HamiltonianSpec.from_dict(cfg["hamiltonian"])
    if "hamiltonian" in model:
        return _read_spec(model["hamiltonian"])
    return build_xy_chain(model.get("n", default_n), model.get("J", 1.0), "AB")


def _read_spec(path):
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        return HamiltonianSpec.from_dict(doc)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _frame(cfg, h):
    mask = cfg.get("model", {}).get("frame_mask")
    return None if mask is None else PhaseFrame.from_mask(h.num_qubits, mask)


def _v_sites(cfg, default):
    v = cfg.get("sites", {}).get("v", default)
    return [v] if isinstance(v, int) else list(v)


def _check_sites(n, *sites):
    for s in sites:
        if not 1 <= s <= n:
            raise ConfigError(f"site {s} outside 1..{n}")


def _write(out, name, text, files):
    path = out / name
    path.write_text(text)
    files.append(name)
    return path


def _svg(fig, out, name, files):
    import matplotlib

    matplotlib.rcParams["svg.hashsalt"] = "otoc-lab"
    fig.savefig(out / name, format="svg", metadata={"Date": None})
    files.append(name)


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _fmt(x):
    return repr(float(x))


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# commands -------------------------------------------------------------------

def cmd_otoc_series(cfg, out):
    h = _hamiltonian(cfg, 10)
    n = h.num_qubits
    w = cfg.get("sites", {}).get("w", max(1, n // 2))
    vs = _v_sites(cfg, min(w + 1, n))
    _check_sites(n, w, *vs)
    times = _times(cfg)
    frame = _frame(cfg, h)
    prepared = {}
    if "prepare" in cfg:
        k = cfg["prepare"].get("k", min(5, n))
        depth = cfg["prepare"].get("depth", 2)
        if k > n:
            raise ConfigError("prepare/k exceeds the number of sites")
        params, fid = optimize_alphas(spectrum_of_zsum(k, n), depth) if depth else (None, None)
        diag = sum(1.0 - 2.0 * ((np.arange(2**k) >> q) & 1) for q in range(k))
        model = OtocModel(h, frame)
        state = build_ansatz_state(diag, params.alphas if params else (), n)
        prepared = {
            "initial_state": extend_to_w12(state, model.frame),
            "w_operator": np.diag(np.tile(diag, 2 ** (n - k))),
            "frame": model.frame,
        }
    files, problems = [], []
    sc = SeriesConfig(n=n, w_site=w, v_site=vs[0], times=times, shots=cfg.get("shots", 0),
                      seed=cfg.get("seed", 0), hamiltonian=h,
                      frame=prepared.get("frame", frame),
                      initial_state=prepared.get("initial_state"),
                      w_operator=prepared.get("w_operator"))
    series = list(zip(vs, run_series_many(sc, vs)))
    for v, s in series:
        problems += s.warnings
        _write(out, f"otoc_w{w}_v{v}.csv", s.to_csv(), files)
        if not prepared and s.model["antisymmetric"] and len(s):
            gap = float(np.max(np.abs(s.column("protocol") - s.column("exact"))))
            if gap > 1e-8:
                problems.append(f"v={v}: protocol and trace differ by {gap:.3g}")
            drift = float(np.max(np.abs(s.column("baseline") - 1.0)))
            if drift > 1e-10:
                problems.append(f"v={v}: baseline departs from 1 by {drift:.3g}")

    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for i, (v, s) in enumerate(series):
        color = f"C{i % 10}"
        ax.plot(s.column("t"), s.column("exact"), "-", color=color, label=f"j={v}")
        if cfg.get("shots", 0) > 0:
            ax.errorbar(s.column("t"), s.column("sampled_mean"), yerr=s.column("sampled_stderr"),
                        fmt="o", ms=3, color=color, elinewidth=0.6)
    ax.set_xlabel("Jt")
    ax.set_ylabel(f"O_{w}j(t)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _svg(fig, out, "otoc.svg", files)
    plt.close(fig)
    return files, problems


def _noise_rows(channel, strengths, marker_times, base, dt):
    model = OtocModel(base.build_hamiltonian(), base.frame)
    exact = {t: model.exact(base.w_site, base.v_site, t) for t in marker_times}
    rows = []
    for s in strengths:
        cfg = replace(base, noise=NoiseConfig(channel, s, dt))
        evaluate = channel_evaluator(cfg, model, list(marker_times))
        for t in marker_times:
            dw, db, _ = evaluate(t)
            est, bas = float(SIGNS @ dw), float(SIGNS @ db)
            resc = est / bas if abs(bas) > 1e-6 else float("nan")
            o = exact[t]
            rows.append((s, t, o, est, bas, resc, o - est, 1 - bas, o - resc))
    return rows


def cmd_noise_sweep(cfg, out):
    noise = cfg.get("noise")
    if not noise:
        raise ConfigError("the noise command needs a [noise] section")
    channel = noise["channel"].replace("-", "_")
    h = _hamiltonian(cfg, 6)
    n = h.num_qubits
    w = cfg.get("sites", {}).get("w", 1)
    v = _v_sites(cfg, n)[0]
    _check_sites(n, w, v)
    strengths = noise.get("strengths", [noise.get("strength", 0.0)])
    marker_times = tuple(noise.get("marker_times", [1.0, 1.5]))
    dt = noise.get("dt", 0.005)
    for s in strengths:
        NoiseConfig(channel, s, dt)
    base = SeriesConfig(n=n, w_site=w, v_site=v, hamiltonian=h, frame=_frame(cfg, h),
                        shots=cfg.get("shots", 0), seed=cfg.get("seed", 0))
    rows = _noise_rows(channel, strengths, marker_times, base, dt)
    header = ["channel", "strength", "t", "exact", "estimate", "baseline", "rescaled",
              "err_estimate", "err_baseline", "err_rescaled"]
    files, problems = [], []
    _write(out, f"sweep_{channel}.csv", _csv(header, [[channel] + [_fmt(x) for x in r] for r in rows]), files)

    if channel in ("depolarizing", "readout"):
        worst = max((abs(r[8]) for r in rows), default=0.0)
        if worst > 1e-10:
            problems.append(f"{channel}: rescaled value misses the exact OTOC by {worst:.3g}")
    if channel == "intercopy_coupling":
        worst = max((abs(r[7]) for r in rows), default=0.0)
        if worst > 1e-10:
            problems.append(f"intercopy coupling moved the baseline by {worst:.3g}")
    if PARAMETER[channel] == "epsilon":
        by_key = {(r[0], r[1]): r[3] for r in rows}
        for (s, t), val in by_key.items():
            if s > 0 and (-s, t) in by_key and abs(val - by_key[(-s, t)]) > 1e-10:
                problems.append(f"{channel}: O(eps={s}) != O(eps={-s}) at t={t}")

    if noise.get("series", False):
        times = _times(cfg, 2.0, 41)
        for idx, s in enumerate(strengths):
            sc = replace(base, times=times, stream=idx, noise=NoiseConfig(channel, s, dt))
            _write(out, f"series_{channel}_{s:g}.csv", run_series(sc).to_csv(), files)

    plt = _pyplot()
    fig, axes = plt.subplots(1, len(marker_times), figsize=(4 * len(marker_times), 3.5), squeeze=False)
    for ax, t in zip(axes[0], marker_times):
        sub = sorted((r for r in rows if r[1] == t), key=lambda r: r[0])
        xs = [r[0] for r in sub]
        ax.plot(xs, [r[6] for r in sub], "o-", label="O - O_est")
        ax.plot(xs, [r[7] for r in sub], "s--", label="1 - O'")
        ax.plot(xs, [r[8] for r in sub], "D:", label="O - rescaled")
        ax.set_xlabel(PARAMETER[channel])
        ax.set_title(f"Jt = {t:g}")
    axes[0][0].legend(fontsize=8)
    fig.tight_layout()
    _svg(fig, out, f"sweep_{channel}.svg", files)
    plt.close(fig)
    return files, problems


def cmd_varprep(cfg, out):
    vp = cfg.get("varprep")
    if not vp:
        raise ConfigError("the varprep command needs a [varprep] section")
    default_depths = vp.get("depths", [0, 1, 2, 3])
    points = vp.get("points", 64)
    rows, files = [], []
    plt = _pyplot() if vp.get("landscape", False) else None
    for entry in vp["spectra"]:
        try:
            spec = Spectrum.from_dict(entry)
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"spectrum {entry.get('type')!r}: {exc}") from None
        label = entry.get("label", entry["type"])
        for p in entry.get("depths", default_depths):
            params, best = optimize_alphas(spec, p)
            rows.append([label, str(p), _fmt(best), " ".join(f"{a:.6f}" for a in params.alphas)])
        if plt is not None:
            axis, vals = landscape(spec, points)
            _write(out, f"landscape_{label}.csv", landscape_csv(axis, vals), files)
            fig, ax = plt.subplots(figsize=(4.5, 4))
            ext = [axis[0], axis[-1], axis[0], axis[-1]]
            im = ax.imshow(vals.T, origin="lower", extent=ext, vmin=0, vmax=1, cmap="viridis")
            fig.colorbar(im, ax=ax, label="|F2|")
            ax.set_xlabel("alpha1")
            ax.set_ylabel("alpha2")
            ax.set_title(label)
            fig.tight_layout()
            _svg(fig, out, f"landscape_{label}.svg", files)
            plt.close(fig)
    _write(out, "summary.csv", _csv(["spectrum", "p", "max_abs_F", "alphas"], rows), files)
    width = max(len(r[0]) for r in rows)
    for r in rows:
        print(f"{r[0]:<{width}}  p={r[1]}  max|F|={float(r[2]):.6f}")
    return files, []


def cmd_check_symmetry(cfg, out):
    h = _hamiltonian(cfg, 10)
    n = h.num_qubits
    frame = find_phase_frame(h)
    trivial_ok, trivial_violation = antisymmetry_report(h, PhaseFrame.trivial(n))
    report = {
        "num_qubits": n,
        "num_terms": len(h.terms),
        "violation_trivial_frame": trivial_violation,
        "frame": None,
    }
    lines = [f"qubits: {n}, terms: {len(h.terms)}"]
    if frame is None:
        lines.append("frame: NONE (no {0, pi/2} phase frame makes H antisymmetric)")
    else:
        ok, violation = antisymmetry_report(h, frame)
        dense = dense_antisymmetry_violation(h, frame) if n <= 10 else None
        phases = ["pi/2" if th else "0" for th in frame.phases]
        pairs = ["Phi-" if th else "Phi+" for th in frame.phases]
        w = cfg.get("sites", {}).get("w")
        if w is not None:
            _check_sites(n, w)
            # Z on copy 1 swaps Phi+ and Phi-
            pairs[w - 1] = "Phi+" if pairs[w - 1] == "Phi-" else "Phi-"
        report.update(frame={"mask": frame.mask, "phases": phases}, bell_pairs=pairs,
                      violation=violation, dense_violation=dense)
        lines.append("frame: " + " ".join(f"{j + 1}:{p}" for j, p in enumerate(phases)))
        lines.append(("bell pairs after W: " if w else "bell pairs: ")
                     + " ".join(f"{j + 1}:{p}" for j, p in enumerate(pairs)))
        lines.append(f"violation: {violation:.3g}" + ("" if dense is None else f" (dense {dense:.3g})"))
    lines.append(f"violation without frame: {trivial_violation:.3g}")
    print("\n".join(lines))
    files = []
    _write(out, "symmetry.json", json.dumps(report, indent=2, sort_keys=True) + "\n", files)
    return files, []


COMMANDS = {
    "otoc": cmd_otoc_series,
    "noise": cmd_noise_sweep,
    "varprep": cmd_varprep,
    "check-symmetry": cmd_check_symmetry,
}


def _versions():
    import matplotlib
    import scipy

    return {
        "otoc_lab": VERSION,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "matplotlib": matplotlib.__version__,
        "kernels": kernels.BACKEND,
    }


def write_manifest(out, command, cfg, files, problems):
    entries = []
    for name in files:
        digest = hashlib.sha256((out / name).read_bytes()).hexdigest()
        entries.append({"file": name, "sha256": digest})
    manifest = {
        "command": command,
        "config": cfg,
        "config_sha256": config_hash(cfg),
        "versions": _versions(),
        "outputs": entries,
        "problems": problems,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _load(command, path):
    p = Path(path)
    if command == "check-symmetry" and p.suffix == ".json" and p.exists():
        try:
            doc = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
        if isinstance(doc, dict) and "num_qubits" in doc:
            _read_spec(p)
            return {"hamiltonian": doc}
    return load_config(path)


def build_parser():
    parser = argparse.ArgumentParser(prog="otoc-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"otoc-lab {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True,
                       help=f"TOML/JSON file or preset name ({', '.join(PRESETS)})")
        p.add_argument("--seed", type=int, help="override the config seed (unsigned 64-bit)")
        p.add_argument("--shots", type=int, help="override the number of shots per point")
        p.add_argument("--out", default="otoc-lab-out", help="output directory")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args.command, args.config)
        meant = cfg.get("command")
        if meant and meant != args.command and args.command != "check-symmetry":
            raise ConfigError(f"{args.config} is a '{meant}' configuration, not '{args.command}'")
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg["seed"] = args.seed
        if args.shots is not None:
            if args.shots < 0:
                raise ConfigError("--shots must be non-negative")
            cfg["shots"] = args.shots
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        files, problems = COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"otoc-lab: {exc}", file=sys.stderr)
        return 2
    except (BudgetExceededError, IntegrationError, UndefinedRatioError) as exc:
        print(f"otoc-lab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4
    problems = list(dict.fromkeys(problems))
    write_manifest(out, args.command, cfg, files, problems)
    for msg in problems:
        print(f"otoc-lab: contract: {msg}", file=sys.stderr)
    return 3 if problems else 0


if __name__ == "__main__":
    sys.exit(main())
