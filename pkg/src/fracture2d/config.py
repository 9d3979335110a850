"""Run configuration: flat sectioned key-value files and model assembly.

Format::

    [model]
    scheme = CPFM
    lc = 1.1
    [geometry]
    source = benchmark
    edge_length = 0.3
    [materials.interface]
    preset = interface3
    [solver]
    step_increment = 5e-3
    [output]
    directory = out

Unknown sections or keys are errors so sweep scripts fail loudly on typos.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .materials import FractureModel, MaterialTable, load_property_tables
from .mesh import (
    ALL_FACETS,
    INTERFACE_BOUNDARY_ONLY,
    QUAD4,
    TRI3,
    GeometrySpec,
    Inclusion,
    Mesh,
    generate_structured_mesh,
    insert_cohesive_elements,
    read_mesh_file,
    tag_phases,
)
from .solver import EXPLICIT_DYNAMIC, STAGGERED_IMPLICIT, SolverConfig

MODELS = ("AT1", "AT2", "CPFM", "CZM", "HYBRID")


class ConfigError(ValueError):
    pass


# benchmark single-inclusion geometry: 20 x 20 mm domain, circular inclusion
# of radius 4 mm centered, 0.6 mm interface ring (overridable via [geometry])
BENCHMARK = dict(width=20.0, height=20.0, radius=4.0, interface_thickness=0.6)


def benchmark_geometry(edge_length: float = 0.3, interface_thickness: float | None = None) -> GeometrySpec:
    t = BENCHMARK["interface_thickness"] if interface_thickness is None else interface_thickness
    inc = Inclusion(
        "circle",
        (BENCHMARK["width"] / 2.0, BENCHMARK["height"] / 2.0),
        (BENCHMARK["radius"],),
        t,
    )
    return GeometrySpec(
        width=BENCHMARK["width"], height=BENCHMARK["height"], edge_length=edge_length, inclusions=(inc,)
    )


@dataclass
class RunConfig:
    model: str = "CPFM"
    geometry_source: str = "benchmark"  # benchmark | layout:<name> | file:<path> | mesh:<path>
    element_kind: str = ""  # defaults by model
    edge_length: float = 0.3
    interface_thickness: float | None = None
    material_overrides: dict = field(default_factory=dict)
    solver: SolverConfig = field(default_factory=SolverConfig)
    output_dir: str = "out"
    snapshot_interval: int = 0

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}, expected one of {MODELS}")
        if not self.element_kind:
            self.element_kind = TRI3 if self.model == "CZM" else QUAD4
        if self.model == "CZM" and self.element_kind != TRI3:
            raise ConfigError("CZM requires a tri3 bulk mesh")
        if self.element_kind not in (QUAD4, TRI3):
            raise ConfigError(f"unknown element kind {self.element_kind!r}")
        self.solver.mode = EXPLICIT_DYNAMIC if self.model == "CZM" else STAGGERED_IMPLICIT
        if self.model == "CZM" and self.solver.step_increment > 1e-3:
            # desk-scale default: mass scaling targets the stability limit, so
            # quasi-staticity (kinetic/total < 5 %) needs a finer increment
            # than the full-mass reference value
            self.solver.step_increment = 2.5e-5
        self.solver.snapshot_interval = self.snapshot_interval

    # -- derived pieces -----------------------------------------------------
    def geometry(self) -> GeometrySpec | None:
        src = self.geometry_source
        if src == "benchmark":
            return benchmark_geometry(self.edge_length, self.interface_thickness)
        if src.startswith("layout:"):
            from .microstructure import fixed_layouts

            spec = fixed_layouts(src.split(":", 1)[1])
            return GeometrySpec(
                width=spec.width,
                height=spec.height,
                edge_length=self.edge_length,
                inclusions=spec.inclusions,
            )
        if src.startswith("file:"):
            from .microstructure import read_geometry_file

            spec = read_geometry_file(src.split(":", 1)[1])
            return GeometrySpec(
                width=spec.width,
                height=spec.height,
                edge_length=self.edge_length or spec.edge_length,
                inclusions=spec.inclusions,
            )
        if src.startswith("mesh:"):
            return None
        raise ConfigError(f"unknown geometry source {src!r}")

    def build_mesh(self) -> Mesh:
        if self.geometry_source.startswith("mesh:"):
            mesh = read_mesh_file(self.geometry_source.split(":", 1)[1])
            self._validate_external_mesh(mesh)
            return mesh
        spec = self.geometry()
        mesh = tag_phases(generate_structured_mesh(spec, self.element_kind), spec)
        if self.model == "CZM":
            mesh = insert_cohesive_elements(mesh, ALL_FACETS)
        elif self.model == "HYBRID":
            mesh = insert_cohesive_elements(mesh, INTERFACE_BOUNDARY_ONLY)
        return mesh

    def _validate_external_mesh(self, mesh: Mesh) -> None:
        has_cie = len(mesh.cie_ids) > 0
        if self.model == "CZM":
            if mesh.bulk_kind() != TRI3 or not has_cie:
                raise ConfigError("CZM requires a tri3 mesh with inserted cohesive elements")
        elif self.model == "HYBRID":
            if not has_cie:
                raise ConfigError("HYBRID requires a mesh with boundary cohesive elements")
        elif has_cie:
            raise ConfigError(f"model {self.model} cannot run on a mesh with cohesive elements")

    def fracture_model(self) -> FractureModel | None:
        if self.model in ("AT1", "AT2"):
            return FractureModel(scheme=self.model)
        if self.model in ("CPFM", "HYBRID"):
            return FractureModel(scheme="CPFM")
        return None

    def phase_property_map(self) -> dict[str, str]:
        # hybrid: the cohesive elements carry the interface failure, the
        # band's bulk behaves as matrix
        return {"interface": "matrix"} if self.model == "HYBRID" else {}

    def material_table(self) -> MaterialTable:
        return load_property_tables(self.material_overrides)


# ---------------------------------------------------------------------------
# Text format
# ---------------------------------------------------------------------------

_MODEL_KEYS = {"scheme"}
_GEOMETRY_KEYS = {"source", "element_kind", "edge_length", "interface_thickness"}
_SOLVER_KEYS = {
    "lc",
    "total_displacement",
    "total_time",
    "step_increment",
    "newton_tol",
    "newton_max_iter",
    "density",
    "damping",
    "mass_scaling",
    "passes_per_step",
    "thickness",
    "record_every",
    "monitor_every",
}
_OUTPUT_KEYS = {"directory", "snapshot_interval"}
_MATERIAL_KEYS = {"preset", "E", "nu", "Gc", "sigma_u", "K", "sigma_n0", "sigma_s0", "G_I", "G_II", "eta"}


def parse_config_text(text: str) -> RunConfig:
    sections: dict[str, dict[str, str]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current in sections:
                raise ConfigError(f"line {lineno}: duplicate section [{current}]")
            sections[current] = {}
            continue
        if current is None or "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value' inside a section")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in sections[current]:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} in [{current}]")
        sections[current][key] = value

    def take(section: str, allowed: set[str]) -> dict[str, str]:
        data = sections.pop(section, {})
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)} in [{section}]")
        return data

    model_sec = take("model", _MODEL_KEYS)
    geom = take("geometry", _GEOMETRY_KEYS)
    sol = take("solver", _SOLVER_KEYS)
    out = take("output", _OUTPUT_KEYS)
    overrides: dict[str, dict] = {}
    for name in list(sections):
        if name.startswith("materials."):
            phase = name.split(".", 1)[1]
            data = take(name, _MATERIAL_KEYS)
            overrides[phase] = {
                k: (v if k == "preset" else float(v)) for k, v in data.items()
            }
    if sections:
        raise ConfigError(f"unknown sections: {sorted(sections)}")

    solver = SolverConfig()
    for key, value in sol.items():
        if key in ("newton_max_iter", "passes_per_step", "record_every", "monitor_every"):
            setattr(solver, key, int(value))
        elif key == "mass_scaling":
            solver.mass_scaling = None if value.lower() in ("auto", "none") else float(value)
        else:
            setattr(solver, key, float(value))

    kwargs = dict(material_overrides=overrides, solver=solver)
    if "scheme" in model_sec:
        kwargs["model"] = model_sec["scheme"]
    if "source" in geom:
        kwargs["geometry_source"] = geom["source"]
    if "element_kind" in geom:
        kwargs["element_kind"] = geom["element_kind"]
    if "edge_length" in geom:
        kwargs["edge_length"] = float(geom["edge_length"])
    if "interface_thickness" in geom:
        kwargs["interface_thickness"] = float(geom["interface_thickness"])
    if "directory" in out:
        kwargs["output_dir"] = out["directory"]
    if "snapshot_interval" in out:
        kwargs["snapshot_interval"] = int(out["snapshot_interval"])
    return RunConfig(**kwargs)


def write_config_text(cfg: RunConfig) -> str:
    lines = ["[model]", f"scheme = {cfg.model}", "", "[geometry]"]
    lines.append(f"source = {cfg.geometry_source}")
    lines.append(f"element_kind = {cfg.element_kind}")
    lines.append(f"edge_length = {cfg.edge_length!r}")
    if cfg.interface_thickness is not None:
        lines.append(f"interface_thickness = {cfg.interface_thickness!r}")
    lines += ["", "[solver]"]
    s = cfg.solver
    lines.append(f"lc = {s.lc!r}")
    lines.append(f"total_displacement = {s.total_displacement!r}")
    lines.append(f"total_time = {s.total_time!r}")
    lines.append(f"step_increment = {s.step_increment!r}")
    lines.append(f"newton_tol = {s.newton_tol!r}")
    lines.append(f"newton_max_iter = {s.newton_max_iter}")
    lines.append(f"passes_per_step = {s.passes_per_step}")
    if s.mass_scaling is not None:
        lines.append(f"mass_scaling = {s.mass_scaling!r}")
    lines += ["", "[output]"]
    lines.append(f"directory = {cfg.output_dir}")
    lines.append(f"snapshot_interval = {cfg.snapshot_interval}")
    for phase, data in cfg.material_overrides.items():
        lines += ["", f"[materials.{phase}]"]
        for k, v in data.items():
            lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def read_config_file(path) -> RunConfig:
    with open(path) as fh:
        return parse_config_text(fh.read())
