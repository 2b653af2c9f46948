"""Accuracy, the MAD smoothness metric, selection-usage matrices and report files."""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import UsageError
from .tensor import Value


def _array(x):
    return np.asarray(x.data if isinstance(x, Value) else x, dtype=np.float64)


def accuracy(logits, labels, mask) -> float:
    """Fraction of masked nodes whose argmax logit is the label (ties go to the lowest class)."""
    logits = _array(logits)
    mask = np.asarray(mask)
    idx = np.flatnonzero(mask) if mask.dtype == bool else mask.astype(np.int64)
    if len(idx) == 0:
        raise UsageError("accuracy over an empty mask")
    pred = np.argmax(logits[idx], axis=1)
    return float(np.mean(pred == np.asarray(labels)[idx]))


# --- MAD ------------------------------------------------------------------

@dataclass
class MadConfig:
    target: str = "neighbors"  # or "all-pairs"
    taps: tuple | None = None  # SFA block indices to profile; None means all


def _unit_rows(H):
    norms = np.linalg.norm(H, axis=1)
    zero = norms == 0
    unit = np.divide(H, norms[:, None], out=np.zeros_like(H), where=~zero[:, None])
    return unit, zero


def mad(H, g, cfg: MadConfig = MadConfig()) -> float:
    """Mean over nodes of the average cosine distance ``1 - cos(h_u, h_v)`` to their targets.

    Targets are 1-hop neighbours or all other nodes. Nodes with no targets are
    skipped; a pair involving a zero row has distance 1.
    """
    H = _array(H)
    if H.shape[0] != g.n:
        raise UsageError(f"H has {H.shape[0]} rows for {g.n} nodes")
    unit, zero = _unit_rows(H)
    if cfg.target == "neighbors":
        pattern = g.adjacency("raw")
        counts = np.diff(pattern.indptr)
        if not counts.any():
            raise UsageError("MAD: every node has an empty neighbour set")
        cos = kernels.sddmm(pattern.indptr, pattern.cols, unit, unit)
        dist = 1.0 - cos
        dist[zero[pattern.rows] | zero[pattern.cols]] = 1.0
        per_node = kernels.segment_sum(pattern.indptr, np.ascontiguousarray(dist))
        has = counts > 0
        return float(np.mean(per_node[has] / counts[has]))
    if cfg.target == "all-pairs":
        if g.n < 2:
            raise UsageError("MAD: all-pairs needs at least two nodes")
        dist = 1.0 - unit @ unit.T
        dist[zero, :] = 1.0
        dist[:, zero] = 1.0
        np.fill_diagonal(dist, 0.0)
        return float(np.mean(dist.sum(axis=1) / (g.n - 1)))
    raise UsageError(f"unknown MAD target '{cfg.target}'")


def mad_profile(net, g, cfg: MadConfig = MadConfig(), include_output=False):
    """``[(block index, MAD)]`` over the net's SFA blocks (eval mode).

    With ``include_output`` a final ``("output", MAD)`` entry measures the fused
    input of the output block.
    """
    from .childnet import childnet_forward

    _, levels, fused = childnet_forward(net, g, "eval", return_levels=True)
    taps = cfg.taps or range(1, net.spec.n_blocks + 1)
    for t in taps:
        if not 0 <= t <= net.spec.n_blocks:
            raise UsageError(f"tap {t} outside 0..{net.spec.n_blocks}")
    rows = [(t, mad(levels[t].data, g, cfg)) for t in taps]
    if include_output:
        rows.append(("output", mad(fused.data, g, cfg)))
    return rows


# --- usage matrix ---------------------------------------------------------

@dataclass
class UsageMatrix:
    """Cell ``(Bi, Lj)`` is 1 when level ``j`` feeds block ``i``; the last row is the output block."""

    cells: np.ndarray

    @property
    def row_labels(self):
        n = self.cells.shape[0] - 1
        return [f"B{i}" for i in range(1, n + 1)] + ["out"]

    @property
    def col_labels(self):
        return [f"L{j}" for j in range(self.cells.shape[1])]

    def rows(self):
        return [[label, *map(int, r)] for label, r in zip(self.row_labels, self.cells)]


def usage_matrix(spec) -> UsageMatrix:
    n = spec.n_blocks
    cells = np.zeros((n + 1, n + 1), dtype=np.int64)
    for i, mask in enumerate(spec.masks()):
        cells[i, :len(mask)] = mask
    return UsageMatrix(cells)


# --- report files ---------------------------------------------------------

def timestamp_line():
    return f"# generated {_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}"


def format_value(v):
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def write_tsv(path, header, rows, stamp=True):
    """Tab-separated table; the optional first line is the only nondeterministic one."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [timestamp_line()] if stamp else []
    lines.append("\t".join(header))
    lines.extend("\t".join(format_value(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_records(path, records, stamp=True):
    """One ``key=value`` record per line, fields separated by tabs."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [timestamp_line()] if stamp else []
    for rec in records:
        lines.append("\t".join(f"{k}={format_value(v)}" for k, v in rec.items()))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_records(path):
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line or line.startswith("#"):
            continue
        out.append(dict(field.split("=", 1) for field in line.split("\t")))
    return out


def bar_svg(labels, values, title="", width=480, height=240):
    """Minimal static bar chart."""
    pad, n = 30, max(len(values), 1)
    top = max(max(values, default=0.0), 1e-12)
    bw = (width - 2 * pad) / n
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<text x="{width / 2}" y="16" text-anchor="middle" font-size="12">{title}</text>']
    for k, (lab, v) in enumerate(zip(labels, values)):
        h = (height - 2 * pad) * v / top
        x = pad + k * bw
        parts.append(f'<rect x="{x + 2:.1f}" y="{height - pad - h:.1f}" width="{bw - 4:.1f}" '
                     f'height="{h:.1f}" fill="#4a7ab5"/>')
        parts.append(f'<text x="{x + bw / 2:.1f}" y="{height - pad + 14}" text-anchor="middle" '
                     f'font-size="10">{lab}</text>')
        parts.append(f'<text x="{x + bw / 2:.1f}" y="{height - pad - h - 3:.1f}" text-anchor="middle" '
                     f'font-size="9">{v:.3f}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def heatmap_svg(matrix: UsageMatrix, cell=24):
    rows, cols = matrix.cells.shape
    w, h = (cols + 1) * cell + 10, (rows + 1) * cell + 10
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">']
    for j, lab in enumerate(matrix.col_labels):
        parts.append(f'<text x="{(j + 1.5) * cell:.1f}" y="{cell * 0.7:.1f}" text-anchor="middle" '
                     f'font-size="10">{lab}</text>')
    for i, lab in enumerate(matrix.row_labels):
        parts.append(f'<text x="2" y="{(i + 1.7) * cell:.1f}" font-size="10">{lab}</text>')
        for j in range(cols):
            fill = "#1f3b63" if matrix.cells[i, j] else "#eeeeee"
            parts.append(f'<rect x="{(j + 1) * cell}" y="{(i + 1) * cell}" width="{cell - 2}" '
                         f'height="{cell - 2}" fill="{fill}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
