"""Two-dimensional PCA projection of network weight trajectories."""

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..exceptions import DimensionError
from ..fileio import atomic_write_bytes
from ..nets import flatten_params, load_params

__all__ = ["PCAProjection", "pca_weight_trajectories", "load_trajectory", "checkpoint_dirs", "write_pca_csv", "write_pca_svg"]

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")


@dataclass
class PCAProjection:
    points: np.ndarray  # (n, 2)
    labels: list
    components: np.ndarray  # (2, d)
    explained_variance: np.ndarray  # (2,)
    mean: np.ndarray


def checkpoint_dirs(run_dir):
    """Checkpoint subdirectories of ``run_dir`` in interval order."""
    return sorted(p for p in Path(run_dir).iterdir() if p.is_dir() and (p / "manifest.json").exists())


def load_trajectory(dirs):
    return [load_params(p) for p in dirs]


def pca_weight_trajectories(runs, labels=None):
    """Project every checkpoint of every run onto the top two principal directions.

    ``runs`` is a list of runs, each a list of NetworkParams (or of flat
    vectors). All checkpoints must share one architecture. The eigenvectors
    come from the Gram matrix of the centred data, which is small when there
    are fewer checkpoints than weights.
    """
    if labels is None:
        labels = [f"run{i}" for i in range(len(runs))]
    vectors, point_labels = [], []
    shapes = None
    for run, label in zip(runs, labels):
        for p in run:
            if hasattr(p, "entries"):
                s = p.shapes()
                if shapes is None:
                    shapes = s
                elif s != shapes:
                    raise DimensionError("checkpoints come from different architectures")
                v = flatten_params(p)
            else:
                v = np.asarray(p, dtype=np.float64).ravel()
            vectors.append(v)
            point_labels.append(label)
    if not vectors:
        raise DimensionError("no checkpoints given")
    if len({v.size for v in vectors}) != 1:
        raise DimensionError("checkpoints come from different architectures")
    X = np.stack(vectors)
    mean = X.mean(axis=0)
    Xc = X - mean
    n = Xc.shape[0]
    gram = Xc @ Xc.T
    evals, evecs = np.linalg.eigh(gram)
    order = np.argsort(evals)[::-1][:2]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    components = np.zeros((2, Xc.shape[1]))
    for j in range(min(2, len(order))):
        if evals[j] > 1e-12 * max(evals[0], 1e-300):
            components[j] = Xc.T @ evecs[:, j] / np.sqrt(evals[j])
    points = Xc @ components.T
    explained = np.zeros(2)
    explained[: len(evals)] = evals / max(n - 1, 1)
    return PCAProjection(points, point_labels, components, explained, mean)


def write_pca_csv(proj, path):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label", "pc1", "pc2"])
    for label, (x, y) in zip(proj.labels, proj.points):
        w.writerow([label, repr(float(x)), repr(float(y))])
    atomic_write_bytes(path, buf.getvalue().encode())


def write_pca_svg(proj, path, size=480, margin=40):
    """Scatter plot of the projected checkpoints, one colour per label."""
    pts = np.asarray(proj.points, dtype=np.float64)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    inner = size - 2 * margin
    xy = margin + (pts - lo) / span * inner
    xy[:, 1] = size - xy[:, 1]
    labels = list(dict.fromkeys(proj.labels))
    colour = {lab: _PALETTE[i % len(_PALETTE)] for i, lab in enumerate(labels)}
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
        f'<line x1="{margin}" y1="{size - margin}" x2="{size - margin}" y2="{size - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{size - margin}" stroke="black"/>',
        f'<text x="{size / 2}" y="{size - 10}" text-anchor="middle" font-size="12">PC1</text>',
        f'<text x="12" y="{size / 2}" text-anchor="middle" font-size="12" transform="rotate(-90 12 {size / 2})">PC2</text>',
    ]
    for (x, y), lab in zip(xy, proj.labels):
        out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="4" fill="{colour[lab]}"><title>{lab}</title></circle>')
    for i, lab in enumerate(labels):
        y = margin + 14 * i
        out.append(f'<circle cx="{size - margin - 70}" cy="{y - 4}" r="4" fill="{colour[lab]}"/>')
        out.append(f'<text x="{size - margin - 60}" y="{y}" font-size="11">{lab}</text>')
    out.append("</svg>")
    atomic_write_bytes(path, ("\n".join(out) + "\n").encode())
