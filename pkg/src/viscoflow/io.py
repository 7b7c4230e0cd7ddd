"""File outputs: legacy VTK cell data, residual CSV, stats JSON, SVG plot,
and the flat key=value config format."""
import csv
import json
import math
from pathlib import Path

import numpy as np

from viscoflow import rheology
from viscoflow.errors import InvalidArgumentError

VTK_TRIANGLE = 5


def _fmt(x):
    return repr(float(x))


def cell_fields(disc, state, params):
    """Cell-constant output fields keyed by name."""
    third = np.full((1, 3), 1.0 / 3.0)
    theta_b = state.theta.mean(axis=1)
    q_b = state.q.mean(axis=1)
    psi, _ = disc.sigma_fields(third)  # (C, 1, 6, 2)
    coef = state.vector[disc.layout.sigma_dofs]  # (C, 12)
    sig = np.stack([np.einsum("cm,cmd->cd", coef[:, 6 * r:6 * r + 6], psi[:, 0])
                    for r in range(2)], axis=1)  # (C, 2, 2)
    return {
        "velocity": state.u.copy(),
        "pressure": state.phi.copy(),
        "theta_norm": rheology.frobenius(theta_b),
        "sigma_norm": rheology.frobenius(sig),
        "active": rheology.chi_active(params, rheology.frobenius(theta_b)).astype(float),
        "q_norm": rheology.frobenius(q_b),
    }


def write_vtk(mesh, fields, path, title="viscoflow"):
    """Legacy ASCII VTK 3.0 unstructured grid with cell data.

    `fields` maps names to (C,) scalars or (C, 2) vectors.
    """
    path = Path(path)
    V, C = mesh.num_vertices, mesh.num_cells
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {V} double"]
    lines += [f"{_fmt(x)} {_fmt(y)} 0.0" for x, y in mesh.vertices]
    lines.append(f"CELLS {C} {4 * C}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.cells]
    lines.append(f"CELL_TYPES {C}")
    lines += [str(VTK_TRIANGLE)] * C
    lines.append(f"CELL_DATA {C}")
    for name, val in fields.items():
        val = np.asarray(val, dtype=float)
        if val.shape == (C,):
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [_fmt(v) for v in val]
        elif val.shape == (C, 2):
            lines.append(f"VECTORS {name} double")
            lines += [f"{_fmt(a)} {_fmt(b)} 0.0" for a, b in val]
        else:
            raise InvalidArgumentError(f"field {name} has shape {val.shape}")
    path.write_text("\n".join(lines) + "\n")
    return path


def read_vtk(path):
    """Minimal reader for files written by `write_vtk`.

    Returns (points (V,2), cells (C,3), {name: array}).
    """
    tok = Path(path).read_text().split("\n")
    i = 0
    points = cells = None
    data = {}
    ncell = 0
    while i < len(tok):
        head = tok[i].split()
        if not head:
            i += 1
            continue
        key = head[0]
        if key == "POINTS":
            n = int(head[1])
            points = np.array([[float(v) for v in tok[i + 1 + k].split()[:2]] for k in range(n)])
            i += n + 1
        elif key == "CELLS":
            n = int(head[1])
            cells = np.array([[int(v) for v in tok[i + 1 + k].split()[1:]] for k in range(n)])
            i += n + 1
        elif key == "CELL_TYPES":
            i += int(head[1]) + 1
        elif key == "CELL_DATA":
            ncell = int(head[1])
            i += 1
        elif key == "SCALARS":
            data[head[1]] = np.array([float(tok[i + 2 + k]) for k in range(ncell)])
            i += ncell + 2
        elif key == "VECTORS":
            data[head[1]] = np.array([[float(v) for v in tok[i + 1 + k].split()[:2]]
                                      for k in range(ncell)])
            i += ncell + 1
        else:
            i += 1
    return points, cells, data


def write_residual_csv(report, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["iteration", "absolute", "relative"])
        for n, (a, r) in enumerate(zip(report.residuals, report.relative_residuals)):
            w.writerow([n, _fmt(a), _fmt(r)])
    return path


def write_stats_json(report, path):
    path = Path(path)
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return path


def read_stats_json(path):
    from viscoflow.solver import SolveReport
    return SolveReport.from_dict(json.loads(Path(path).read_text()))


def write_residual_svg(report, path, width=480, height=320):
    """Log-scale relative residual against iteration as a bare SVG 1.1 plot."""
    path = Path(path)
    rel = [max(r, 1e-300) for r in report.relative_residuals]
    lo = math.floor(math.log10(min(rel)))
    hi = math.ceil(math.log10(max(rel)))
    if hi == lo:
        hi = lo + 1
    pad = 50
    n = max(len(rel) - 1, 1)

    def xy(k, r):
        x = pad + (width - 2 * pad) * k / n
        y = height - pad - (height - 2 * pad) * (math.log10(r) - lo) / (hi - lo)
        return f"{x:.2f},{y:.2f}"

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
        'fill="none" stroke="black"/>',
    ]
    for e in range(lo, hi + 1):
        y = xy(0, 10.0 ** e).split(",")[1]
        parts.append(f'<text x="{pad - 6}" y="{y}" font-size="10" text-anchor="end">1e{e}</text>')
    parts.append(f'<text x="{width / 2:.0f}" y="{height - 12}" font-size="12" '
                 'text-anchor="middle">iteration</text>')
    pts = " ".join(xy(k, r) for k, r in enumerate(rel))
    parts.append(f'<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{pts}"/>')
    for k, r in enumerate(rel):
        x, y = xy(k, r).split(",")
        parts.append(f'<circle cx="{x}" cy="{y}" r="2.5" fill="steelblue"/>')
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")
    return path


def write_report(report, outdir, stem="run", svg=True, csv_out=True, json_out=True):
    """Write the residual CSV, stats JSON and optional SVG; returns the paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {}
    if csv_out:
        paths["csv"] = write_residual_csv(report, outdir / f"{stem}_residuals.csv")
    if json_out:
        paths["json"] = write_stats_json(report, outdir / f"{stem}_stats.json")
    if svg:
        paths["svg"] = write_residual_svg(report, outdir / f"{stem}_residuals.svg")
    return paths


def parse_config(text):
    """Flat `key = value` lines; '#' starts a comment. Keys use underscores."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArgumentError(f"config line {n}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise InvalidArgumentError(f"config line {n}: empty key")
        out[key.replace("-", "_")] = val
    return out


def read_config(path):
    return parse_config(Path(path).read_text())
