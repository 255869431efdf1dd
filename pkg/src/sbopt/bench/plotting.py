"""Plot-data emitters: CSV always, SVG when matplotlib is importable.

Everything here renders from traces or simulator output that already
exists; nothing in this module evaluates an objective.
"""

import csv
from pathlib import Path

import numpy as np

from ..core import SboError, Trace
from ..mfdsim import SimOutput


def read_trace_csv(path) -> dict:
    """Load a trace CSV back into arrays.

    Returns a dict with eval_index, seed, tau (n, m), value, best_value.
    The column layout is the one write_trace_csv produces.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SboError(f"trace file {path} is empty")
    header, body = rows[0], rows[1:]
    tau_cols = [i for i, name in enumerate(header) if name.startswith("tau_")]
    want = ["eval_index", "seed", "value", "best_value"]
    if any(name not in header for name in want):
        raise SboError(f"{path} does not look like a trace CSV (header {header})")
    if not body:
        raise SboError(f"trace file {path} has no records")
    idx = {name: header.index(name) for name in want}
    try:
        return {
            "eval_index": np.array([int(r[idx["eval_index"]]) for r in body]),
            "seed": np.array([int(r[idx["seed"]]) for r in body]),
            "tau": np.array([[float(r[i]) for i in tau_cols] for r in body]),
            "value": np.array([float(r[idx["value"]]) for r in body]),
            "best_value": np.array([float(r[idx["best_value"]]) for r in body]),
        }
    except (ValueError, IndexError) as exc:
        raise SboError(f"{path} has malformed trace rows: {exc}") from exc


def write_best_curve_csv(eval_index, best_value, path) -> Path:
    """Best objective value against evaluation count, one row per evaluation."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["eval_index", "best_value"])
        for i, v in zip(eval_index, best_value):
            writer.writerow([int(i), repr(float(v))])
    return path


def write_nfd_scatter(out: SimOutput, path) -> Path:
    """Density-flow pairs sampled once a simulated minute."""
    path = Path(path)
    step = max(1, int(round(60.0 / (out.t_s[1] - out.t_s[0]))) if out.t_s.size > 1 else 1)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "q"])
        for k, q in zip(out.k[::step], out.q[::step]):
            writer.writerow([repr(float(k)), repr(float(q))])
    return path


def _curve_from_source(source) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(source, Trace):
        if len(source) == 0:
            raise SboError("trace is empty, nothing to plot")
        idx = np.array([rec.evaluation.eval_index for rec in source.records])
        return idx, np.asarray(source.best_curve, dtype=float)
    data = read_trace_csv(source)
    return data["eval_index"], data["best_value"]


def emit_plot_data(source, out_dir, stem: str = None) -> list[Path]:
    """Write plottable CSVs for a trace (or trace CSV path) or a SimOutput.

    Traces yield a best-curve CSV; simulator output yields a density-flow
    scatter CSV.  Returns the paths written.  An SVG rendering is added
    for each CSV when matplotlib is available.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if isinstance(source, SimOutput):
        stem = stem or "nfd_scatter"
        path = write_nfd_scatter(source, out_dir / f"{stem}.csv")
        written.append(path)
        svg = plot_nfd_scatter(source, out_dir / f"{stem}.svg")
        if svg is not None:
            written.append(svg)
        return written
    stem = stem or (Path(source).stem if not isinstance(source, Trace) else "best_curve")
    idx, best = _curve_from_source(source)
    path = write_best_curve_csv(idx, best, out_dir / f"{stem}_best.csv")
    written.append(path)
    svg = plot_best_curve(idx, best, out_dir / f"{stem}_best.svg")
    if svg is not None:
        written.append(svg)
    return written


def _pyplot():
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        return plt
    except ImportError:
        return None


def plot_best_curve(eval_index, best_value, path, label: str = None):
    """SVG line plot of the running best; None if matplotlib is missing."""
    plt = _pyplot()
    if plt is None:
        return None
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.step(eval_index, best_value, where="post", label=label)
    ax.set_xlabel("evaluations")
    ax.set_ylabel("best objective")
    if label:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def plot_curve_bands(grid, median_curves, iqr_curves, path, ylabel="best objective"):
    """SVG of per-solver median curves with interquartile bands."""
    plt = _pyplot()
    if plt is None:
        return None
    fig, ax = plt.subplots(figsize=(6.5, 4.2))
    for name, med in median_curves.items():
        line, = ax.step(grid, med, where="post", label=name)
        if name in iqr_curves:
            lo, hi = iqr_curves[name]
            ax.fill_between(grid, lo, hi, step="post", alpha=0.2,
                            color=line.get_color(), linewidth=0)
    ax.set_xlabel("evaluations")
    ax.set_ylabel(ylabel)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def plot_nfd_scatter(out: SimOutput, path, curve=None):
    """SVG density-flow scatter, optionally with the ideal curve overlaid."""
    plt = _pyplot()
    if plt is None:
        return None
    fig, ax = plt.subplots(figsize=(5.5, 4.2))
    ax.scatter(out.k, out.q, s=4, alpha=0.35, linewidths=0)
    if curve is not None:
        from ..mfdsim import nfd_flow
        ks = np.linspace(0.0, curve.k_jam, 200)
        ax.plot(ks, [nfd_flow(k, curve) for k in ks], lw=1.2, color="black")
    ax.set_xlabel("density (veh/km/lane)")
    ax.set_ylabel("flow (veh/h/lane)")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)
