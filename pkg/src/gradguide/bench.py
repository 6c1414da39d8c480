"""Benchmark runner, metric aggregation, CSV/markdown tables and the SVG figure."""

import csv
import io
import re
import time
from dataclasses import dataclass, field, replace
from xml.sax.saxutils import escape

import numpy as np

from .attacks import AttackConfig, ifgsm_eps_sweep, run_c_search
from .data import gen_synthetic_2d, pick_targets
from .exceptions import UsageError
from .nn import MLPClassifier, forward_logits
from .rng import make_rng

CSV_HEADER = ["method", "kappa", "success_rate", "mean_l2", "mean_iters", "n"]
DEFAULT_KAPPAS = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0)
_METHOD_RE = re.compile(r"^(Our|CW|L-BFGS)(\d+)$")
_FAMILY = {"Our": "grad_guided", "CW": "cw", "L-BFGS": "lbfgs"}


@dataclass(frozen=True)
class BenchRow:
    method: str
    kappa: float
    success_rate: float
    mean_l2_success: float  # None when nothing succeeded
    mean_iterations: float
    n_examples: int


@dataclass
class BenchReport:
    rows: list
    n_attacked: int
    n_excluded: int
    results: dict = field(default_factory=dict)  # (method, kappa) -> list of AttackResult
    epsilons: dict = field(default_factory=dict)  # kappa -> I-FGSM budget found by the sweep


def parse_method(name):
    """Split a method name into ``(attack family, c_steps)``.

    ``"Our1"`` -> ``("grad_guided", 1)``, ``"CW6"`` -> ``("cw", 6)``,
    ``"L-BFGS2"`` -> ``("lbfgs", 2)``, ``"I-FGSM"`` -> ``("ifgsm", 1)``.
    """
    if name == "I-FGSM":
        return "ifgsm", 1
    match = _METHOD_RE.match(name)
    if not match or int(match.group(2)) < 1:
        raise UsageError(f"unknown method {name!r}")
    return _FAMILY[match.group(1)], int(match.group(2))


def attack_presets(box_lo, box_hi, kappa=0.0):
    """Per-family configurations used by the benchmark.

    On the unit box these are the library defaults. On wider boxes the
    gradient-guided magnitudes (``theta0`` and its learning rate) scale with
    the box width, as the tanh parametrization of CW already does
    implicitly, and CW's learning rate is raised to 0.03, the smallest value
    at which single-constant CW reaches every target of the synthetic 2D
    benchmark within 100 iterations.
    """
    width = box_hi - box_lo
    base = AttackConfig(kappa=kappa, box_lo=box_lo, box_hi=box_hi)
    wide = width > 1.0
    return {
        "grad_guided": replace(base, theta0=0.01 * width, lr=0.01 * width),
        "cw": replace(base, lr=0.03 if wide else 0.01),
        "lbfgs": base,
        "ifgsm": replace(base, epsilon=0.05 * width),
    }


def aggregate(method, kappa, results):
    """Fold per-example results into a :class:`BenchRow`.

    The distance mean is over successes only; the iteration mean includes
    failures.
    """
    n = len(results)
    if n == 0:
        raise UsageError("no results to aggregate")
    wins = [r.l2_distance for r in results if r.success]
    return BenchRow(
        method=method,
        kappa=float(kappa),
        success_rate=len(wins) / n,
        mean_l2_success=float(np.mean(wins)) if wins else None,
        mean_iterations=float(np.mean([r.iterations for r in results])),
        n_examples=n,
    )


def correctly_classified(m, X, y):
    return np.argmax(forward_logits(m, np.atleast_2d(X)), axis=1) == np.asarray(y)


def run_method(m, X, targets, method, config):
    """Attack every row of ``X`` toward ``targets``.

    Returns ``(results, epsilon)``; ``epsilon`` is the I-FGSM sweep result
    and ``None`` for the other methods.
    """
    family, c_steps = parse_method(method)
    if family == "ifgsm":
        eps, results, _ = ifgsm_eps_sweep(m, X, targets, config)
        return results, eps
    cfg = replace(config, c_steps=c_steps)
    return [run_c_search(m, x, int(t), cfg, family) for x, t in zip(X, targets)], None


def evaluate_attack(m, X, y, targets, method, kappas=(0.0,), configs=None):
    """Benchmark one method over a grid of confidences.

    Only examples that the model already classifies correctly are attacked.

    Parameters
    ----------
    configs : callable, optional
        ``kappa -> {family: AttackConfig}``; defaults to
        :func:`attack_presets` on the unit box.

    Returns
    -------
    BenchReport
    """
    return run_benchmark(m, X, y, targets, [method], kappas, configs)


def run_benchmark(m, X, y, targets, methods, kappas=(0.0,), configs=None):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    if X.shape[0] == 0:
        raise UsageError("empty benchmark slice")
    if configs is None:
        def configs(kappa):
            return attack_presets(0.0, 1.0, kappa)
    keep = correctly_classified(m, X, y)
    Xa, ta = X[keep], targets[keep]
    if Xa.shape[0] == 0:
        raise UsageError("the model misclassifies every example in the slice")
    report = BenchReport(rows=[], n_attacked=int(keep.sum()), n_excluded=int((~keep).sum()))
    for kappa in kappas:
        presets = configs(kappa)
        for method in methods:
            family, _ = parse_method(method)
            results, eps = run_method(m, Xa, ta, method, presets[family])
            if eps is not None:
                report.epsilons[float(kappa)] = eps
            report.results[(method, float(kappa))] = results
            report.rows.append(aggregate(method, kappa, results))
    report.rows.sort(key=lambda r: (r.method, r.kappa))
    return report


def _fmt(v):
    return "" if v is None else f"{v:.6f}"


def format_table_csv(rows):
    if not rows:
        raise UsageError("no rows to write")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in sorted(rows, key=lambda r: (r.method, r.kappa)):
        writer.writerow([r.method, _fmt(r.kappa), _fmt(r.success_rate),
                         _fmt(r.mean_l2_success), _fmt(r.mean_iterations), r.n_examples])
    return buf.getvalue()


def emit_table_csv(rows, path):
    text = format_table_csv(rows)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return text


def parse_table_csv(text):
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != CSV_HEADER:
        raise UsageError(f"unexpected CSV header {header}")
    rows = []
    for method, kappa, rate, l2, iters, n in reader:
        rows.append(BenchRow(method, float(kappa), float(rate),
                             float(l2) if l2 else None, float(iters), int(n)))
    return rows


def emit_table_markdown(rows, n_excluded=None):
    """Markdown table; distances of methods with no success print as ``NA``."""
    if not rows:
        raise UsageError("no rows to format")
    lines = []
    if n_excluded is not None:
        lines.append(f"Excluded (misclassified before attack): {n_excluded}\n")
    lines.append("| method | kappa | success | mean L2 | mean iters | n |")
    lines.append("|---|---:|---:|---:|---:|---:|")
    for r in sorted(rows, key=lambda r: (r.method, r.kappa)):
        l2 = "NA" if r.mean_l2_success is None else f"{r.mean_l2_success:.3f}"
        lines.append(f"| {r.method} | {r.kappa:g} | {100 * r.success_rate:.1f}% | {l2} "
                     f"| {r.mean_iterations:.1f} | {r.n_examples} |")
    return "\n".join(lines) + "\n"


@dataclass
class Trajectory2D:
    points: list
    method: str

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] == 0:
            raise UsageError("a 2D trajectory needs at least one (x1, x2) point")
        self.points = pts


def export_trajectory_csv(traj, path):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["step", "x1", "x2"])
    for k, (a, b) in enumerate(traj.points):
        writer.writerow([k, f"{a:.6f}", f"{b:.6f}"])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


_CLASS_COLORS = ("#1f77b4", "#ff7f0e")
_TRAJ_COLORS = ("#d62728", "#2ca02c", "#9467bd", "#8c564b")


def render_svg_scatter(X, y, point, trajectories, path=None, extent=10.0):
    """SVG of two class clouds, the line ``x1 + x2 = extent``, and trajectories.

    The view box is ``[0, extent]^2``; the vertical axis is flipped so that
    ``x2`` grows upward.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != 2 or np.asarray(point).shape != (2,):
        raise UsageError("the scatter plot only supports 2D data")

    def pt(p):
        return f"{p[0]:.4f},{extent - p[1]:.4f}"

    r = extent / 250.0
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {extent:g} {extent:g}" '
        'width="600" height="600">',
        f'<rect x="0" y="0" width="{extent:g}" height="{extent:g}" fill="white"/>',
    ]
    for label in (0, 1):
        out.append(f'<g class="class-{label}" fill="{_CLASS_COLORS[label]}" fill-opacity="0.5">')
        for p in X[np.asarray(y) == label]:
            a, b = pt(p).split(",")
            out.append(f'<circle cx="{a}" cy="{b}" r="{r:.4f}"/>')
        out.append("</g>")
    out.append(f'<line class="boundary" x1="0" y1="0" x2="{extent:g}" y2="{extent:g}" '
               f'stroke="black" stroke-width="{r / 2:.4f}" stroke-dasharray="0.1,0.1"/>')
    for k, traj in enumerate(trajectories):
        color = _TRAJ_COLORS[k % len(_TRAJ_COLORS)]
        coords = " ".join(pt(p) for p in traj.points)
        out.append(f'<polyline class="trajectory" data-method="{escape(traj.method)}" '
                   f'points="{coords}" fill="none" stroke="{color}" stroke-width="{r:.4f}"/>')
        a, b = pt(traj.points[-1]).split(",")
        out.append(f'<circle cx="{a}" cy="{b}" r="{2 * r:.4f}" fill="{color}"/>')
    a, b = pt(point).split(",")
    out.append(f'<circle class="legitimate" cx="{a}" cy="{b}" r="{2.5 * r:.4f}" fill="black"/>')
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def synthetic_setup(seed, epochs=200):
    """Seeded synthetic dataset and a trained 2-16-16-2 classifier."""
    train, test = gen_synthetic_2d(seed)
    clf = MLPClassifier(hidden_layer_sizes=(16, 16), epochs=epochs, batch_size=64,
                        learning_rate=1e-3, random_state=seed).fit(train.X, train.y)
    return train, test, clf


def figure1(seed, svg_path=None, trajectory_prefix=None):
    """Train on the synthetic data, attack one test point with Our1 and CW6, draw it.

    Returns a dict with accuracies, the chosen point, both results and the
    wall time.
    """
    start = time.perf_counter()
    train, test, clf = synthetic_setup(seed)
    m = clf.model_
    rng = make_rng(seed)
    idx = int(rng.integers(len(test)))
    x, label = test.X[idx], int(test.y[idx])
    target = int(pick_targets([label], 2, rng)[0])
    presets = attack_presets(0.0, 10.0)
    ours = run_c_search(m, x, target, replace(presets["grad_guided"], record_trajectory=True),
                        "grad_guided")
    cw = run_c_search(m, x, target, replace(presets["cw"], c_steps=6, record_trajectory=True),
                      "cw")
    trajs = [Trajectory2D(ours.trajectory, "Our1"), Trajectory2D(cw.trajectory, "CW6")]
    svg = render_svg_scatter(test.X, test.y, x, trajs, svg_path)
    if trajectory_prefix is not None:
        for traj in trajs:
            export_trajectory_csv(traj, f"{trajectory_prefix}{traj.method}.csv")
    return {
        "train_accuracy": clf.score(train.X, train.y),
        "test_accuracy": clf.score(test.X, test.y),
        "index": idx,
        "target": target,
        "ours": ours,
        "cw": cw,
        "svg": svg,
        "seconds": time.perf_counter() - start,
    }


def _cosines(starts, ends, directions):
    out = []
    for a, b, g_hat in zip(starts, ends, directions):
        disp = b - a
        norm = np.linalg.norm(disp)
        if norm > 0:
            out.append(float(-g_hat @ disp / norm))
    return out


def step_colinearity(result):
    """Cosine with ``-g`` of the first (uniform-theta, unclamped) candidate of each outer step.

    Needs a gradient-guided result recorded with ``record_trajectory``.
    """
    return _cosines(result.trajectory, result.initial_steps, result.directions)


def commit_colinearity(result):
    """Cosine with ``-g`` of each committed (optimized-theta) displacement."""
    return _cosines(result.trajectory[:-1], result.trajectory[1:], result.directions)
