"""2D finite-element fracture simulation for three-phase particulate composites.

Fracture schemes: standard phase-field (AT1/AT2), cohesive phase-field,
cohesive-zone modeling with zero-thickness interface elements, and a hybrid
(interface cohesive elements + cohesive phase-field bulk).
"""

from .materials import (
    DerivedModelConstants,
    FractureModel,
    PhaseProperties,
    alpha,
    c0,
    cpfm_a1,
    derive_constants,
    load_property_tables,
    omega,
    psi_eq_threshold,
)
from .mesh import (
    GeometrySpec,
    Inclusion,
    Mesh,
    generate_structured_mesh,
    insert_cohesive_elements,
    merge_cohesive_nodes,
    read_mesh_file,
    tag_phases,
    validate_interface_resolution,
    write_mesh_file,
)
from .solver import (
    ExplicitSolver,
    SimulationResult,
    SolverConfig,
    StaggeredSolver,
    apply_boundary_conditions,
    dissipated_fracture_energy,
)

__all__ = [
    "DerivedModelConstants",
    "FractureModel",
    "PhaseProperties",
    "alpha",
    "c0",
    "cpfm_a1",
    "derive_constants",
    "load_property_tables",
    "omega",
    "psi_eq_threshold",
    "GeometrySpec",
    "Inclusion",
    "Mesh",
    "generate_structured_mesh",
    "insert_cohesive_elements",
    "merge_cohesive_nodes",
    "read_mesh_file",
    "tag_phases",
    "validate_interface_resolution",
    "write_mesh_file",
    "ExplicitSolver",
    "SimulationResult",
    "SolverConfig",
    "StaggeredSolver",
    "apply_boundary_conditions",
    "dissipated_fracture_energy",
]

__version__ = "0.1.0"
