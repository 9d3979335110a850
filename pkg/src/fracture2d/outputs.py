"""Result emission: curve CSV, legacy-VTK field snapshots, SVG curve plots."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .mesh import Mesh
from .solver import SimulationResult, Snapshot

CURVE_COLUMNS = (
    "step",
    "u_applied_mm",
    "reaction_sum_N",
    "reaction_avg_N",
    "iterations",
    "E_elastic",
    "E_dissipated",
    "E_kinetic",
)


def write_curve_csv(result: SimulationResult, path) -> None:
    rows = [",".join(CURVE_COLUMNS)]
    for r in result.records:
        values = (
            r.step,
            r.u_applied,
            r.reaction_sum,
            r.reaction_avg,
            r.iterations,
            r.E_elastic,
            r.E_dissipated,
            r.E_kinetic,
        )
        for v in values[1:]:
            if not math.isfinite(float(v)):
                raise ValueError(f"non-finite value in curve at step {r.step}")
        rows.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in values))
    Path(path).write_text("\n".join(rows) + "\n")


def read_curve_csv(path) -> np.ndarray:
    lines = Path(path).read_text().strip().splitlines()
    if lines[0].split(",") != list(CURVE_COLUMNS):
        raise ValueError("unexpected curve.csv header")
    return np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])


_VTK_CELL_TYPES = {0: 9, 1: 5, 2: 9}  # quad4 -> VTK_QUAD, tri3 -> VTK_TRIANGLE, cie4 -> VTK_QUAD


def write_vtk_snapshot(mesh: Mesh, snap: Snapshot, path) -> None:
    """Legacy ASCII VTK unstructured grid with point data u, phi and cell data
    phase, von Mises, cohesive damage."""
    lines = [
        "# vtk DataFile Version 3.0",
        f"fracture2d snapshot step {snap.step}",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_nodes} double",
    ]
    for x, y in mesh.nodes:
        lines.append(f"{x!r} {y!r} 0.0")
    counts = [len(mesh.element_nodes(e)) for e in range(mesh.n_elements)]
    lines.append(f"CELLS {mesh.n_elements} {sum(counts) + mesh.n_elements}")
    for e in range(mesh.n_elements):
        nn = mesh.element_nodes(e)
        lines.append(f"{len(nn)} " + " ".join(str(int(v)) for v in nn))
    lines.append(f"CELL_TYPES {mesh.n_elements}")
    for e in range(mesh.n_elements):
        lines.append(str(_VTK_CELL_TYPES[int(mesh.elem_kind[e])]))
    lines.append(f"POINT_DATA {mesh.n_nodes}")
    lines.append("VECTORS displacement double")
    for ux, uy in snap.u:
        lines.append(f"{ux!r} {uy!r} 0.0")
    lines.append("SCALARS phi double 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend(repr(float(v)) for v in snap.phi)
    lines.append(f"CELL_DATA {mesh.n_elements}")
    lines.append("SCALARS phase int 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend(str(int(v)) for v in snap.phase)
    lines.append("SCALARS von_mises double 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend(repr(float(v)) for v in snap.von_mises)
    lines.append("SCALARS cohesive_damage double 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend(repr(float(v)) for v in snap.cie_damage)
    Path(path).write_text("\n".join(lines) + "\n")


def write_run_summary(result: SimulationResult, wall_time: float, path) -> None:
    lines = [
        f"scheme: {result.scheme}",
        f"lc: {result.lc!r}",
        f"steps: {len(result.records)}",
        f"total_iterations: {result.total_iterations}",
        f"wall_time_s: {wall_time!r}",
        f"peak_reaction_N: {result.peak_reaction!r}",
        f"external_work_Nmm: {result.external_work!r}",
        f"dissipated_Nmm: {(result.external_work - (result.records[-1].E_elastic if result.records else 0.0))!r}",
        f"max_ke_ratio: {result.max_ke_ratio!r}",
        f"complete_fracture: {result.complete_fracture}",
        f"aborted: {result.aborted}",
    ]
    if result.aborted:
        lines.append(f"abort_reason: {result.abort_reason}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_curve_svg(curve: np.ndarray, path, width: int = 640, height: int = 480) -> None:
    """Plot (u, F) pairs as an SVG polyline without plotting dependencies."""
    if len(curve) == 0:
        raise ValueError("empty curve")
    u = curve[:, 0]
    f = curve[:, 1]
    pad = 50
    umax = float(np.max(u)) or 1.0
    fmax = float(np.max(np.abs(f))) or 1.0
    xs = pad + (width - 2 * pad) * u / umax
    ys = height - pad - (height - 2 * pad) * f / fmax
    points = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    svg = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height-pad}" x2="{width-pad}" y2="{height-pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height-pad}" stroke="black"/>',
        f'<polyline points="{points}" fill="none" stroke="crimson" stroke-width="1.5"/>',
        f'<text x="{width//2}" y="{height-12}" font-size="13">displacement (mm), max {umax:.4g}</text>',
        f'<text x="14" y="{height//2}" font-size="13" transform="rotate(-90 14 {height//2})">'
        f"reaction (N), max {fmax:.4g}</text>",
        "</svg>",
    ]
    Path(path).write_text("\n".join(svg) + "\n")
