"""Simulation drivers: staggered implicit Newton and explicit dynamics.

The implicit driver advances displacement-controlled load steps with a
single-pass staggered scheme: solve the displacement sub-problem at frozen
damage, update the driving history (and cohesive states), then solve the
damage sub-problem at frozen displacement with the damage clamped to [0, 1].
The explicit driver integrates central differences with a lumped, optionally
mass-scaled system for cohesive-zone runs whose bulk stays linear elastic.

Reactions, energies and iteration counts are recorded per step; runs are
deterministic for identical configuration and mesh.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from . import phasefield as pf
from .cohesive import CohesiveBlock
from .materials import CPFM, FractureModel, MaterialTable
from .mesh import Mesh

STAGGERED_IMPLICIT = "staggered_implicit"
EXPLICIT_DYNAMIC = "explicit_dynamic"


class SolverError(RuntimeError):
    pass


class NewtonDivergence(SolverError):
    pass


class LinearSolveError(SolverError):
    pass


class StabilityError(SolverError):
    pass


class CompleteFracture(SolverError):
    """The structure lost all stiffness along the load path."""


@dataclass
class SolverConfig:
    mode: str = STAGGERED_IMPLICIT
    lc: float = 1.1
    total_displacement: float = 0.05
    total_time: float = 1.0
    step_increment: float = 5e-3
    newton_tol: float = 1e-6
    newton_max_iter: int = 50
    density: float = 2.4e-9
    mass_scaling: float | None = None  # None = scale automatically for stability
    damping: float = 0.05  # explicit: critical-damping fraction at the stiffest mode
    passes_per_step: int = 1
    thickness: float = 1.0
    snapshot_interval: int = 0  # steps between field snapshots; 0 = final only
    record_every: int = 100  # explicit: steps between curve records
    monitor_every: int = 10  # explicit: steps between energy checks

    def __post_init__(self):
        if self.step_increment <= 0 or self.total_time <= 0:
            raise ValueError("time increments must be positive")
        if self.newton_tol <= 0:
            raise ValueError("newton_tol must be positive")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.total_time / self.step_increment)))


@dataclass
class LoadStepRecord:
    step: int
    u_applied: float
    reaction_sum: float
    reaction_avg: float
    iterations: int
    E_elastic: float
    E_dissipated: float
    E_kinetic: float
    equilibrium_residual: float = 0.0


@dataclass
class Snapshot:
    step: int
    u: np.ndarray            # (N, 2)
    phi: np.ndarray          # (N,)
    von_mises: np.ndarray    # (E,) zero for cohesive elements
    cie_damage: np.ndarray   # (E,) zero for bulk elements
    phase: np.ndarray        # (E,)


@dataclass
class SimulationResult:
    records: list[LoadStepRecord]
    snapshots: list[Snapshot]
    mesh: Mesh
    scheme: str
    lc: float
    total_iterations: int
    complete_fracture: bool = False
    aborted: bool = False
    abort_reason: str = ""
    first_failed_element: int | None = None
    max_ke_ratio: float = 0.0
    external_work: float = 0.0
    surface_energy: float = 0.0
    final_phi: np.ndarray | None = None

    @property
    def peak_reaction(self) -> float:
        return max((r.reaction_sum for r in self.records), default=0.0)

    def curve(self) -> np.ndarray:
        return np.array([(r.u_applied, r.reaction_sum) for r in self.records])


def dissipated_fracture_energy(result: SimulationResult) -> float:
    """External work minus the recoverable elastic energy at the final state."""
    if not result.records:
        return 0.0
    return result.external_work - result.records[-1].E_elastic


# ---------------------------------------------------------------------------
# Boundary conditions, assembly, linear solve
# ---------------------------------------------------------------------------


def apply_boundary_conditions(mesh: Mesh, step_displacement: float) -> dict[int, float]:
    """Constrained displacement DOF map for the tension benchmark.

    Left edge u_x = 0, right edge u_x = step displacement, bottom-left corner
    u_y = 0 (rigid-body pin); all other DOFs free.
    """
    bc: dict[int, float] = {}
    for name in ("left_edge", "right_edge", "bottom_left_corner"):
        if name not in mesh.node_sets:
            raise SolverError(f"missing node set {name!r}")
        if len(mesh.node_sets[name]) == 0:
            raise SolverError(f"empty node set {name!r}")
    for n in mesh.node_sets["left_edge"]:
        bc[2 * int(n)] = 0.0
    for n in mesh.node_sets["right_edge"]:
        bc[2 * int(n)] = float(step_displacement)
    for n in mesh.node_sets["bottom_left_corner"]:
        bc[2 * int(n) + 1] = 0.0
    return bc


def assemble(n_dof: int, batches) -> tuple[sparse.csr_matrix, np.ndarray]:
    """Assemble a sparse symmetric system and residual from element batches.

    ``batches`` is an iterable of ``(dofs, K, f)`` with shapes (n, d),
    (n, d, d), (n, d).  Uses a fixed element order so assembly is
    deterministic.
    """
    rows, cols, data = [], [], []
    resid = np.zeros(n_dof)
    for dofs, K, f in batches:
        if len(dofs) == 0:
            continue
        d = dofs.shape[1]
        rows.append(np.repeat(dofs, d, axis=1).ravel())
        cols.append(np.tile(dofs, (1, d)).ravel())
        data.append(K.ravel())
        resid += np.bincount(dofs.ravel(), weights=f.ravel(), minlength=n_dof)
    if rows:
        A = sparse.coo_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n_dof, n_dof),
        ).tocsr()
    else:
        A = sparse.csr_matrix((n_dof, n_dof))
    return A, resid


def linear_solve(A: sparse.spmatrix, b: np.ndarray) -> np.ndarray:
    """Direct sparse solve with a residual guarantee of 1e-10 relative."""
    try:
        lu = splu(A.tocsc())
    except RuntimeError as exc:
        raise LinearSolveError(f"factorization failed: {exc}") from exc
    x = lu.solve(b)
    bnorm = np.linalg.norm(b)
    if bnorm > 0:
        r = np.linalg.norm(A @ x - b) / bnorm
        if r > 1e-12:
            x += lu.solve(b - A @ x)  # one step of iterative refinement
            r = np.linalg.norm(A @ x - b) / bnorm
        if not np.isfinite(r) or r > 1e-10:
            raise LinearSolveError(f"linear solve did not reach 1e-10 (residual {r:.2e})")
    return x


def _reduce(A: sparse.csr_matrix, free: np.ndarray) -> sparse.csr_matrix:
    return A[free, :][:, free]


# ---------------------------------------------------------------------------
# Staggered implicit driver
# ---------------------------------------------------------------------------


class StaggeredSolver:
    """Displacement-driven staggered phase-field (and hybrid) simulation.

    ``phase_property_map`` reassigns bulk material lookup per phase tag;
    hybrid runs map the interface band to matrix properties so interface
    failure is carried by the cohesive elements alone.
    """

    def __init__(self, mesh: Mesh, table: MaterialTable, model: FractureModel,
                 config: SolverConfig, phase_property_map: dict[str, str] | None = None):
        self.mesh = mesh
        self.table = table
        self.model = model
        self.config = config
        self.phase_property_map = dict(phase_property_map or {})
        bulk = mesh.bulk_ids

        def props_of(e):
            phase = mesh.phase_name(mesh.elem_phase[e])
            return table.bulk_for(self.phase_property_map.get(phase, phase))

        self.group = pf.build_element_group(
            mesh, bulk, props_of, model, config.lc, thickness=config.thickness
        )
        cie_ids = mesh.cie_ids
        if len(cie_ids):
            coords = mesh.nodes[mesh.elem_nodes[cie_ids]]
            laws = [table.cohesive[mesh.phase_name(mesh.elem_phase[e])] for e in cie_ids]
            self.cie = CohesiveBlock(coords, laws, thickness=config.thickness)
            self.cie_dofs = np.empty((len(cie_ids), 8), dtype=np.int64)
            self.cie_dofs[:, 0::2] = 2 * mesh.elem_nodes[cie_ids]
            self.cie_dofs[:, 1::2] = 2 * mesh.elem_nodes[cie_ids] + 1
            self.cie_conn = mesh.elem_nodes[cie_ids]
        else:
            self.cie = None

        n = mesh.n_nodes
        self.u = np.zeros(2 * n)
        self.phi = np.zeros(n)
        self.H = np.broadcast_to(self.group.psi0[:, None], (self.group.n_elements, self.group.n_qp)).copy()
        if model.scheme != CPFM:
            self.H[:] = 0.0
        # natural magnitude of the damage residual: local driving term times
        # nodal tributary area; residuals far below this are converged noise
        nodal_area = np.einsum("qk,nq->nk", self.group.N, self.group.detJw)
        self._phi_scale = float(np.max(nodal_area) * np.max(self.group.Gc / (np.pi * self.group.lc)))
        self.step_index = 0
        self.records: list[LoadStepRecord] = []
        self.snapshots: list[Snapshot] = []
        self.total_iterations = 0
        self.external_work = 0.0
        self._prev_force = 0.0
        self._prev_disp = 0.0
        self.first_failed_element: int | None = None
        self.complete_fracture = False
        self._left_dofs = 2 * mesh.node_sets["left_edge"] if "left_edge" in mesh.node_sets else None
        self._right_dofs = 2 * mesh.node_sets["right_edge"] if "right_edge" in mesh.node_sets else None

    # -- state snapshot / restore ------------------------------------------
    def snapshot_state(self) -> dict:
        state = dict(
            u=self.u.copy(),
            phi=self.phi.copy(),
            H=self.H.copy(),
            step_index=self.step_index,
            total_iterations=self.total_iterations,
            external_work=self.external_work,
            prev_force=self._prev_force,
            prev_disp=self._prev_disp,
            first_failed_element=self.first_failed_element,
            complete_fracture=self.complete_fracture,
        )
        if self.cie is not None:
            state["cie"] = self.cie.copy()
        return state

    def restore_state(self, state: dict) -> None:
        self.u = state["u"].copy()
        self.phi = state["phi"].copy()
        self.H = state["H"].copy()
        self.step_index = state["step_index"]
        self.total_iterations = state["total_iterations"]
        self.external_work = state["external_work"]
        self._prev_force = state["prev_force"]
        self._prev_disp = state["prev_disp"]
        self.first_failed_element = state["first_failed_element"]
        self.complete_fracture = state["complete_fracture"]
        if self.cie is not None:
            self.cie = state["cie"].copy()

    # -- sub-problem solves ---------------------------------------------------
    def omega_qp(self) -> np.ndarray:
        phi_qp = np.einsum("qk,nk->nq", self.group.N, self.phi[self.group.conn], optimize=True)
        phi_qp = np.clip(phi_qp, 0.0, 1.0)
        w, _, _ = pf.omega_derivatives(self.model, self.group.a1[:, None], phi_qp)
        return w

    def _internal_force(self, u, omega_qp):
        """Assembled residual (internal force) plus effective stresses."""
        u_elem = u[self.group.dofs]
        f, sigma_eff, _ = pf.group_internal_force(self.group, u_elem, omega_qp)
        R = np.bincount(self.group.dofs.ravel(), weights=f.ravel(), minlength=2 * self.mesh.n_nodes)
        if self.cie is not None:
            fc = self.cie.force_only(u[self.cie_dofs].reshape(-1, 4, 2))
            R += np.bincount(self.cie_dofs.ravel(), weights=fc.ravel(), minlength=2 * self.mesh.n_nodes)
        return R, sigma_eff

    def _tangent_matrix(self, sigma_eff, omega_qp, exact: bool = True):
        """Assembled displacement tangent with the split frozen at sigma_eff.

        ``exact=True`` uses the frozen-projection operator omega E+ + E-
        (mildly non-symmetric in mixed states, the true Jacobian between sign
        flips); ``exact=False`` its symmetric positive-definite secant.
        """
        from . import kernels

        w = np.maximum(np.asarray(omega_qp, dtype=float), 1e-8)
        if exact:
            dmat_q = pf.split_tangent_matrices(sigma_eff, w, self.group.dmat)
            K = kernels.u_stiffness(self.group.B_u, self.group.detJw, np.ascontiguousarray(dmat_q))
        else:
            K = pf.group_displacement_tangent(self.group, sigma_eff, omega_qp)
        batches = [(self.group.dofs, K, np.zeros((self.group.n_elements, K.shape[1])))]
        if self.cie is not None:
            u_cie = self.u[self.cie_dofs].reshape(-1, 4, 2)
            _, Kc = self.cie.force_and_stiffness(u_cie)
            batches.append((self.cie_dofs, Kc, np.zeros((self.cie.n_elements, 8))))
        A, _ = assemble(2 * self.mesh.n_nodes, batches)
        return A

    def _factorize(self, sigma_eff, omega_qp, free, exact=True):
        A = self._tangent_matrix(sigma_eff, omega_qp, exact=exact)
        try:
            return splu(_reduce(A, free).tocsc())
        except RuntimeError as exc:
            if "singular" in str(exc).lower():
                raise CompleteFracture("stiffness matrix singular: structure fully failed") from exc
            raise NewtonDivergence(f"displacement factorization failed: {exc}") from exc

    def solve_displacement(self, bc: dict[int, float]):
        """Globalized Newton on the displacement sub-problem at frozen damage.

        Each iteration re-linearizes with the frozen-split tangent (the exact
        Jacobian of the split stress between sign changes), so convergence is
        Newton-like.  Backtracking on the residual norm handles the kinks of
        the tension/compression split; when a step fails to descend right at
        a kink, the symmetric secant provides a fallback direction.
        """
        tol = self.config.newton_tol
        constrained = np.fromiter(bc.keys(), dtype=np.int64)
        values = np.fromiter(bc.values(), dtype=float)
        free = np.setdiff1d(np.arange(2 * self.mesh.n_nodes), constrained)
        self.u[constrained] = values
        omega_qp = self.omega_qp()
        # trust-region cap: nearly free DOFs inside an open crack band can
        # request enormous steps whose path crosses many constitutive
        # switches; bounded steps walk through such snaps incrementally
        du_cap = 8.0 * self.config.total_displacement / self.config.n_steps
        ref = None
        R, sigma_eff = self._internal_force(self.u, omega_qp)
        for it in range(self.config.newton_max_iter + 1):
            rnorm = float(np.linalg.norm(R[free])) if len(free) else 0.0
            if ref is None:
                # converged means small against both the initial out-of-balance
                # and the transmitted (reaction) force scale
                ref = max(rnorm, float(np.linalg.norm(R[constrained])), 1e-12)
            if rnorm <= tol * ref or rnorm < 1e-14:
                self._last_R = R
                self._last_sigma_eff = sigma_eff
                return it
            if it == self.config.newton_max_iter:
                break

            def line_search(du):
                alpha = 1.0
                if du_cap > 0.0:
                    du_inf = float(np.max(np.abs(du)))
                    if du_inf > du_cap:
                        alpha = du_cap / du_inf
                for _ in range(12):
                    trial = self.u.copy()
                    trial[free] += alpha * du
                    R_t, sig_t = self._internal_force(trial, omega_qp)
                    if float(np.linalg.norm(R_t[free])) < rnorm * (1.0 - 1e-4 * alpha):
                        return trial, R_t, sig_t
                    alpha *= 0.5
                return None

            lu = self._factorize(sigma_eff, omega_qp, free)
            du = lu.solve(-R[free])
            if not np.all(np.isfinite(du)):
                raise NewtonDivergence("non-finite displacement update")
            accepted = line_search(du)
            if accepted is None:
                lu_spd = self._factorize(sigma_eff, omega_qp, free, exact=False)
                accepted = line_search(lu_spd.solve(-R[free]))
            if accepted is None:
                raise NewtonDivergence(
                    "displacement Newton stalled: no descent along either tangent"
                )
            self.u, R, sigma_eff = accepted
        raise NewtonDivergence(
            f"displacement Newton did not converge in {self.config.newton_max_iter} iterations"
        )

    def _phase_system(self, phi):
        phi_elem = phi[self.group.conn]
        R_e, K_e = pf.group_phasefield_kernel(self.group, self.model, phi_elem, self.H)
        return assemble(self.mesh.n_nodes, [(self.group.conn, K_e, R_e)])

    def solve_phase_field(self, phi_bc: dict[int, float] | None = None, max_iter: int | None = None):
        """Projected Newton on the damage sub-problem at frozen displacement.

        Bounds are handled by clamping: nodes sitting on a bound with the
        residual pushing outward are held fixed for the iteration (so the
        linearized solve cannot drag their neighbors), everything else takes
        the Newton update and is clamped back into [0, 1].  Convergence is
        measured on the projected residual.  A diagonal damping engages if
        the Newton direction stops reducing the residual, which keeps coarse
        states with an indefinite Hessian convergent.
        """
        tol = self.config.newton_tol
        max_iter = max_iter or self.config.newton_max_iter
        n = self.mesh.n_nodes
        phi_bc = phi_bc or {}
        pinned = np.zeros(n, dtype=bool)
        if phi_bc:
            pins = np.fromiter(phi_bc.keys(), dtype=np.int64)
            self.phi[pins] = np.fromiter(phi_bc.values(), dtype=float)
            pinned[pins] = True
        ref = None
        tau = 0.0
        prev = math.inf
        for it in range(max_iter + 1):
            A, R = self._phase_system(self.phi)
            clamped_low = (self.phi <= 0.0) & (R > 0.0)
            clamped_high = (self.phi >= 1.0) & (R < 0.0)
            Rp = R.copy()
            Rp[clamped_low | clamped_high | pinned] = 0.0
            rnorm = float(np.max(np.abs(Rp)))
            if ref is None:
                ref = max(rnorm, self._phi_scale)
            if rnorm <= tol * ref or rnorm < 1e-14:
                return it
            if it == max_iter:
                break
            if rnorm >= 0.999 * prev:
                diag_scale = float(np.max(np.abs(A.diagonal()))) or 1.0
                tau = max(2.0 * tau, 1e-3 * diag_scale)
            prev = min(prev, rnorm)
            active = np.flatnonzero(~(clamped_low | clamped_high | pinned))
            if len(active) == 0:
                return it
            Af = _reduce(A, active)
            if tau > 0.0:
                Af = Af + tau * sparse.identity(Af.shape[0], format="csr")
            try:
                dphi = linear_solve(Af, -R[active])
            except LinearSolveError as exc:
                raise NewtonDivergence(f"phase-field solve failed: {exc}") from exc
            self.phi[active] = np.clip(self.phi[active] + dphi, 0.0, 1.0)
        raise NewtonDivergence(f"phase-field Newton did not converge in {max_iter} iterations")

    def update_history(self, sigma_eff: np.ndarray) -> None:
        s1, _ = pf.principal_values(sigma_eff)
        psi = np.maximum(s1, 0.0) ** 2 / (2.0 * self.group.E[:, None])
        self.H = np.maximum(self.H, psi)
        if self.model.scheme == CPFM:
            self.H = np.maximum(self.H, self.group.psi0[:, None])

    # -- stepping -------------------------------------------------------------
    def _reactions(self):
        R = self._last_R
        left = float(np.sum(R[self._left_dofs]))
        right = float(np.sum(R[self._right_dofs]))
        scale = max(abs(left), abs(right), 1e-30)
        return -left, right, abs(left + right) / scale

    def _do_step(self, d_target: float) -> int:
        iters = 0
        for _ in range(max(1, self.config.passes_per_step)):
            bc = apply_boundary_conditions(self.mesh, d_target)
            iters += self.solve_displacement(bc)
            self.update_history(self._last_sigma_eff)
            if self.cie is not None:
                self.cie.commit_state(self.u[self.cie_dofs].reshape(-1, 4, 2))
            iters += self.solve_phase_field()
        return iters

    def advance_one_step(self) -> LoadStepRecord:
        cfg = self.config
        self.step_index += 1
        tau = self.step_index / cfg.n_steps
        d_target = cfg.total_displacement * tau
        start = self.snapshot_state()
        d_from = self._prev_disp
        try:
            iters = self._do_step(d_target)
        except NewtonDivergence:
            iters = self._advance_with_halving(d_from, d_target, start)
        # reactions from the converged displacement solve of the last pass
        force, right_force, eq_res = self._reactions()
        self.external_work += 0.5 * (force + self._prev_force) * (d_target - self._prev_disp)
        self._prev_force = force
        self._prev_disp = d_target
        self._track_failure()
        e_el = self.elastic_energy()
        rec = LoadStepRecord(
            step=self.step_index,
            u_applied=d_target,
            reaction_sum=force,
            reaction_avg=force / max(len(self._left_dofs), 1),
            iterations=iters,
            E_elastic=e_el,
            E_dissipated=self.external_work - e_el,
            E_kinetic=0.0,
            equilibrium_residual=eq_res,
        )
        self.total_iterations += iters
        self.records.append(rec)
        if cfg.snapshot_interval and self.step_index % cfg.snapshot_interval == 0:
            self.snapshots.append(self.take_snapshot())
        return rec

    def _advance_with_halving(self, d_from: float, d_to: float, start_state: dict, depth: int = 1) -> int:
        """Retry a failed increment as a sequence of halved sub-increments."""
        if depth > 4:
            self.restore_state(start_state)
            if self._structure_fully_failed():
                raise CompleteFracture(
                    f"load path ends at u={d_to:.6g}: structure fully failed"
                )
            raise SolverError(
                f"step to u={d_to:.6g} failed after 4 halvings "
                f"(max phi = {float(np.max(self.phi)):.3f}, step {self.step_index})"
            )
        self.restore_state(start_state)
        mid = 0.5 * (d_from + d_to)
        iters = 0
        for target in (mid, d_to):
            sub_state = self.snapshot_state()
            try:
                iters += self._do_step(target)
            except NewtonDivergence:
                iters += self._advance_with_halving(
                    d_from if target == mid else mid, target, sub_state, depth + 1
                )
        return iters

    def _structure_fully_failed(self) -> bool:
        """True when the crack spans and the specimen transmits no load."""
        if len(self.records) < 5 or float(np.max(self.phi)) < 0.99:
            return False
        peak = max(r.reaction_sum for r in self.records)
        return abs(self.records[-1].reaction_sum) <= 0.02 * abs(peak)

    def _track_failure(self) -> None:
        if self.first_failed_element is not None:
            return
        phi_qp = np.einsum("qk,nk->nq", self.group.N, self.phi[self.group.conn], optimize=True)
        mx = np.max(phi_qp, axis=1)
        if float(np.max(mx)) >= 0.95:
            # several elements can cross within one increment: the one
            # furthest along is the first to have reached the threshold
            self.first_failed_element = int(self.mesh.bulk_ids[int(np.argmax(mx))])

    # -- energies and snapshots -------------------------------------------
    def elastic_energy(self) -> float:
        u_elem = self.u[self.group.dofs]
        strain = pf.group_strain(self.group, u_elem)
        sigma_eff = pf.group_effective_stress(self.group, strain)
        w = self.omega_qp()
        density = pf.split_energy_density(sigma_eff, strain, w)
        total = float(np.sum(density * self.group.detJw))
        if self.cie is not None:
            total += self.cie.elastic_energy(self.u[self.cie_dofs].reshape(-1, 4, 2))
        return total

    def surface_energy(self) -> float:
        """Volume integral of Gc times the crack surface density."""
        from .materials import alpha as alpha_of, c0 as c0_of

        cc = c0_of(self.model)
        phi_elem = self.phi[self.group.conn]
        phi_qp = np.clip(np.einsum("qk,nk->nq", self.group.N, phi_elem, optimize=True), 0.0, 1.0)
        a, _, _ = alpha_of(self.model, phi_qp)
        grad = np.einsum("nqik,nk->nqi", self.group.B_s, phi_elem, optimize=True)
        g2 = np.einsum("nqi,nqi->nq", grad, grad, optimize=True)
        lc = self.group.lc[:, None]
        gamma = (a / lc + lc * g2) / cc
        return float(np.sum(self.group.Gc[:, None] * gamma * self.group.detJw))

    def take_snapshot(self) -> Snapshot:
        u_elem = self.u[self.group.dofs]
        strain = pf.group_strain(self.group, u_elem)
        sigma_eff = pf.group_effective_stress(self.group, strain)
        sigma = pf.split_stress(sigma_eff, self.omega_qp())
        vm = np.zeros(self.mesh.n_elements)
        vm[self.mesh.bulk_ids] = pf.von_mises(sigma).mean(axis=1)
        dmg = np.zeros(self.mesh.n_elements)
        if self.cie is not None:
            dmg[self.mesh.cie_ids] = self.cie.D.mean(axis=1)
        return Snapshot(
            step=self.step_index,
            u=self.u.reshape(-1, 2).copy(),
            phi=self.phi.copy(),
            von_mises=vm,
            cie_damage=dmg,
            phase=self.mesh.elem_phase.copy(),
        )

    def run(self) -> SimulationResult:
        aborted = False
        reason = ""
        try:
            while self.step_index < self.config.n_steps:
                self.advance_one_step()
        except CompleteFracture:
            self.complete_fracture = True
        except SolverError as exc:
            aborted = True
            reason = str(exc)
        if not self.snapshots or self.snapshots[-1].step != self.step_index:
            self.snapshots.append(self.take_snapshot())
        return SimulationResult(
            records=self.records,
            snapshots=self.snapshots,
            mesh=self.mesh,
            scheme=self.model.scheme,
            lc=self.config.lc,
            total_iterations=self.total_iterations,
            complete_fracture=self.complete_fracture,
            aborted=aborted,
            abort_reason=reason,
            first_failed_element=self.first_failed_element,
            external_work=self.external_work,
            surface_energy=self.surface_energy(),
            final_phi=self.phi.copy(),
        )


# ---------------------------------------------------------------------------
# Explicit dynamics driver (cohesive-zone runs, linear-elastic bulk)
# ---------------------------------------------------------------------------


class ExplicitSolver:
    """Central-difference integration with lumped mass and smooth loading ramp."""

    def __init__(self, mesh: Mesh, table: MaterialTable, config: SolverConfig):
        self.mesh = mesh
        self.table = table
        self.config = config
        bulk = mesh.bulk_ids

        def props_of(e):
            return table.bulk_for(mesh.phase_name(mesh.elem_phase[e]))

        model = FractureModel(scheme="AT2")  # bulk stays elastic; scheme unused
        self.group = pf.build_element_group(mesh, bulk, props_of, model, lc=1.0, thickness=config.thickness)
        # precomputed undamaged element stiffness (bulk is linear elastic)
        dmat_q = np.repeat(self.group.dmat[:, None, :, :], self.group.n_qp, axis=1)
        from . import kernels

        self.Ke = kernels.u_stiffness(self.group.B_u, self.group.detJw, dmat_q)

        cie_ids = mesh.cie_ids
        if len(cie_ids):
            coords = mesh.nodes[mesh.elem_nodes[cie_ids]]
            laws = [table.cohesive[mesh.phase_name(mesh.elem_phase[e])] for e in cie_ids]
            self.cie = CohesiveBlock(coords, laws, thickness=config.thickness)
            self.cie_dofs = np.empty((len(cie_ids), 8), dtype=np.int64)
            self.cie_dofs[:, 0::2] = 2 * mesh.elem_nodes[cie_ids]
            self.cie_dofs[:, 1::2] = 2 * mesh.elem_nodes[cie_ids] + 1
        else:
            self.cie = None

        n = mesh.n_nodes
        self.u = np.zeros(2 * n)
        self.v = np.zeros(2 * n)
        self.mass = self._lumped_mass()
        self.dt = config.step_increment
        dt_crit = self.stable_dt()
        if config.mass_scaling is None:
            if self.dt > dt_crit:
                scale = (self.dt / dt_crit) ** 2
                self.mass *= scale
                self.mass_scaling = scale
            else:
                self.mass_scaling = 1.0
        else:
            self.mass *= config.mass_scaling
            self.mass_scaling = config.mass_scaling
            dt_crit = self.stable_dt()
            if self.dt > dt_crit:
                raise StabilityError(
                    f"step increment {self.dt:.3e} exceeds stable limit {dt_crit:.3e}; "
                    f"use dt <= {dt_crit:.3e} or raise mass_scaling"
                )
        self.records: list[LoadStepRecord] = []
        self.snapshots: list[Snapshot] = []
        self.max_ke_ratio = 0.0
        self.external_work = 0.0

    def _lumped_mass(self) -> np.ndarray:
        rho = self.config.density
        m_nodal = rho * np.einsum("qa,nq->na", self.group.N, self.group.detJw)
        m = np.bincount(self.group.conn.ravel(), weights=m_nodal.ravel(), minlength=self.mesh.n_nodes)
        if np.any(m <= 0):
            raise SolverError("zero lumped mass at a node")
        return np.repeat(m, 2)

    def _stiffness_matrix(self) -> sparse.csr_matrix:
        batches = [(self.group.dofs, self.Ke, np.zeros((self.group.n_elements, self.Ke.shape[1])))]
        if self.cie is not None:
            u0 = np.zeros((self.cie.n_elements, 4, 2))
            _, Kc = self.cie.force_and_stiffness(u0)
            batches.append((self.cie_dofs, Kc, np.zeros((self.cie.n_elements, 8))))
        A, _ = assemble(2 * self.mesh.n_nodes, batches)
        return A

    def stable_dt(self, safety: float = 0.9) -> float:
        """Estimate of the central-difference stability limit 2 / omega_max."""
        A = self._stiffness_matrix().tocoo()
        inv_sqrt_m = 1.0 / np.sqrt(self.mass)
        scaled = np.abs(A.data) * inv_sqrt_m[A.row] * inv_sqrt_m[A.col]
        rowsum = np.bincount(A.row, weights=scaled, minlength=len(self.mass))
        omega_max = math.sqrt(float(np.max(rowsum)))
        if omega_max == 0:
            return math.inf
        return safety * 2.0 / omega_max

    def _ramp(self, t: float) -> float:
        tau = min(max(t / self.config.total_time, 0.0), 1.0)
        return self.config.total_displacement * (3.0 * tau**2 - 2.0 * tau**3)

    def internal_force(self, u: np.ndarray) -> np.ndarray:
        f = self._bulk_stiffness_times(u)
        if self.cie is not None:
            u_cie = u[self.cie_dofs].reshape(-1, 4, 2)
            fc, _ = self.cie.force_and_stiffness(u_cie)
            f += np.bincount(self.cie_dofs.ravel(), weights=fc.ravel(), minlength=len(u))
        return f

    def _bulk_stiffness_times(self, vec: np.ndarray) -> np.ndarray:
        v_elem = vec[self.group.dofs]
        f_elem = np.einsum("nab,nb->na", self.Ke, v_elem, optimize=True)
        return np.bincount(self.group.dofs.ravel(), weights=f_elem.ravel(), minlength=len(vec))

    def bulk_elastic_energy(self) -> float:
        u_elem = self.u[self.group.dofs]
        return 0.5 * float(np.einsum("na,nab,nb->", u_elem, self.Ke, u_elem, optimize=True))

    def take_snapshot(self, step: int) -> Snapshot:
        u_elem = self.u[self.group.dofs]
        strain = pf.group_strain(self.group, u_elem)
        sigma = pf.group_effective_stress(self.group, strain)
        vm = np.zeros(self.mesh.n_elements)
        vm[self.mesh.bulk_ids] = pf.von_mises(sigma).mean(axis=1)
        dmg = np.zeros(self.mesh.n_elements)
        if self.cie is not None:
            dmg[self.mesh.cie_ids] = self.cie.D.mean(axis=1)
        return Snapshot(
            step=step,
            u=self.u.reshape(-1, 2).copy(),
            phi=np.zeros(self.mesh.n_nodes),
            von_mises=vm,
            cie_damage=dmg,
            phase=self.mesh.elem_phase.copy(),
        )

    def run(self) -> SimulationResult:
        cfg = self.config
        presc = np.fromiter(apply_boundary_conditions(self.mesh, 0.0).keys(), dtype=np.int64)
        right_dofs = 2 * self.mesh.node_sets["right_edge"]
        left_dofs = 2 * self.mesh.node_sets["left_edge"]
        fixed = np.setdiff1d(presc, right_dofs)
        free_mask = np.ones(2 * self.mesh.n_nodes, dtype=bool)
        free_mask[presc] = False
        n_steps = int(round(cfg.total_time / cfg.step_increment))
        dt = self.dt
        # stiffness-proportional damping on the (linear elastic) bulk absorbs
        # the high-frequency ringing that sudden interface failures inject;
        # viscous stress beta E deps/dt is negligible at quasi-static rates.
        # beta = damping * 2 / omega_max, with omega_max from the dt estimate.
        beta = cfg.damping * self.stable_dt(safety=1.0)
        t = 0.0
        prev_reaction = 0.0
        prev_d = 0.0
        w_damp = 0.0
        f_cie = None  # cohesive force cached from the previous commit
        monitor: list[tuple[float, float]] = []  # (kinetic, total) at monitored steps
        for step in range(1, n_steps + 1):
            f_int = self._bulk_stiffness_times(self.u)
            if self.cie is not None:
                if f_cie is None:
                    f_cie_elem = self.cie.force_only(self.u[self.cie_dofs].reshape(-1, 4, 2))
                else:
                    f_cie_elem = f_cie
                f_int += np.bincount(
                    self.cie_dofs.ravel(), weights=f_cie_elem.ravel(), minlength=len(f_int)
                )
            if beta > 0.0:
                f_damp = beta * self._bulk_stiffness_times(self.v)
                w_damp += dt * float(self.v[free_mask] @ f_damp[free_mask])
                f_int = f_int + f_damp
            self.v[free_mask] += dt * (-f_int[free_mask] / self.mass[free_mask])
            d_new = self._ramp(t + dt)
            self.v[right_dofs] = (d_new - self._ramp(t)) / dt
            self.v[fixed] = 0.0
            self.u[free_mask] += dt * self.v[free_mask]
            self.u[right_dofs] = d_new
            t += dt
            if self.cie is not None:
                f_cie = self.cie.commit_state(self.u[self.cie_dofs].reshape(-1, 4, 2))

            reaction = -float(np.sum(f_int[left_dofs]))
            self.external_work += 0.5 * (reaction + prev_reaction) * (d_new - prev_d)
            prev_reaction = reaction
            prev_d = d_new

            if step % cfg.monitor_every == 0 or step == n_steps:
                ke = 0.5 * float(np.sum(self.mass * self.v**2))
                e_el = self.bulk_elastic_energy()
                e_cie = self.cie.elastic_energy(self.u[self.cie_dofs].reshape(-1, 4, 2)) if self.cie else 0.0
                e_diss = (self.cie.dissipated_energy_total() if self.cie else 0.0) + w_damp
                monitor.append((ke, ke + e_el + e_cie + e_diss))
                if step % cfg.record_every == 0 or step == n_steps:
                    self.records.append(
                        LoadStepRecord(
                            step=step,
                            u_applied=d_new,
                            reaction_sum=reaction,
                            reaction_avg=reaction / len(left_dofs),
                            iterations=1,
                            E_elastic=e_el + e_cie,
                            E_dissipated=e_diss,
                            E_kinetic=ke,
                        )
                    )
            if cfg.snapshot_interval and step % cfg.snapshot_interval == 0:
                self.snapshots.append(self.take_snapshot(step))
        # kinetic-energy ratio, skipping the startup where total energy is
        # a negligible fraction of the run's energy scale
        if monitor:
            total_scale = max(total for _, total in monitor)
            floor = 0.01 * total_scale
            ratios = [ke / total for ke, total in monitor if total > floor]
            self.max_ke_ratio = max(ratios) if ratios else 0.0
        if not self.snapshots or self.snapshots[-1].step != n_steps:
            self.snapshots.append(self.take_snapshot(n_steps))
        return SimulationResult(
            records=self.records,
            snapshots=self.snapshots,
            mesh=self.mesh,
            scheme="CZM",
            lc=0.0,
            total_iterations=n_steps,
            max_ke_ratio=self.max_ke_ratio,
            external_work=self.external_work,
            final_phi=np.zeros(self.mesh.n_nodes),
        )
