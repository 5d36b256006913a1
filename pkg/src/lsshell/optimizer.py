"""Steepest-descent interior-point loop over the level set design variable."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.sparse.csgraph import connected_components
import scipy.sparse as sp

from . import io
from .config import RunConfig
from .errors import ConfigError, InfeasibleIterateError, NumericalError, StructureVanishedError
from .fem import Material, ShellModel, Supports, build_model
from .filters import LevelSetPipeline, PipelineFields
from .grid import build_grid, init_design, tag_boundary
from .isosurface import (ShellMesh, Topology, cleanup, compact, extract, inverse_gradient_median,
                         topology, vertex_normals)
from .sensitivity import (SurfaceSensitivity, constraint_sensitivity, embed, enclosed_volume_constraint,
                          filter_sensitivity, sensitivity_operator, shape_sensitivity)

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ["iter", "F", "G", "F_prime", "gamma_p", "n_vertices", "n_triangles",
                   "median_inv_grad_phi", "accepted"]


# -- elementary rules ------------------------------------------------------

def merit(F: float, G: Optional[float], gamma: float) -> float:
    """Barrier merit ``F - gamma/G``; requires a strictly feasible ``G < 0``."""
    if G is None:
        return F
    if not G < 0:
        raise InfeasibleIterateError(f"constraint value G = {G:.6g} is not strictly negative")
    return F - gamma / G


def gamma_init(G: float, dF: np.ndarray, dG: np.ndarray) -> float:
    """Initial barrier weight balancing the objective and barrier gradients."""
    if not G < 0:
        raise InfeasibleIterateError(f"initial design is infeasible (G = {G:.6g})")
    ng = float(np.abs(dG).sum())
    if ng == 0.0:
        raise ConfigError("constraint gradient vanishes at the initial design; run without G_max")
    return G * G * float(np.abs(dF).sum()) / ng


def update(psi: np.ndarray, grad: np.ndarray, alpha: float, frozen: Optional[np.ndarray] = None) -> np.ndarray:
    out = np.clip(psi - alpha * grad, -1.0, 1.0)
    if frozen is not None:
        out[frozen] = psi[frozen]
    return out


@dataclass
class OptState:
    k: int = 0
    gamma: float = 0.0
    F: list = field(default_factory=list)
    G: list = field(default_factory=list)
    F_prime: list = field(default_factory=list)
    gammas: list = field(default_factory=list)


def schedule(state: OptState, rate: float = 1e-3, g_threshold: float = -0.01, floor: float = 1e-12) -> OptState:
    """Halve the barrier weight once the merit stalls well inside the feasible set."""
    if len(state.F_prime) < 2 or state.gamma <= floor:
        return state
    prev, cur = state.F_prime[-2], state.F_prime[-1]
    change = abs(cur - prev) / abs(prev) if prev != 0 else math.inf
    G = state.G[-1]
    if change < rate and G is not None and G < g_threshold:
        state.gamma = max(0.5 * state.gamma, floor)
    return state


def stationary(values, window: int, tol: float) -> bool:
    if len(values) < window:
        return False
    w = np.asarray(values[-window:], dtype=float)
    return float(w.max() - w.min()) < tol * abs(float(w.mean()))


# -- problem setup ---------------------------------------------------------

@dataclass
class Evaluation:
    fields: PipelineFields
    mesh: ShellMesh
    model: Optional[ShellModel]
    F: float
    G: Optional[float]
    dF: np.ndarray
    dG: Optional[np.ndarray]
    sens: Optional[SurfaceSensitivity]
    raw: np.ndarray
    inv_grad: float
    topo: Topology
    dropped_triangles: int = 0


class Problem:
    """Everything that stays fixed over a run: grid, filters, supports, material."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        d, f, o = cfg["domain"], cfg["filter"], cfg["optimizer"]
        self.grid = build_grid(d["extents"], d["h_grid"], d["origin"])
        self.tags = tag_boundary(self.grid, cfg.boxes("dirichlet"))
        init = dict(cfg["initial"])
        init.setdefault("kind", "plane")
        self.pipeline = LevelSetPipeline(self.grid, f["R"], f["h"], self.tags, method=f["solver"], rtol=f["rtol"])
        self.psi0, phi_init = init_design(self.grid, init, f["d_norm"], self.pipeline)
        self.pipeline.phi_init = phi_init
        self.sens_op = sensitivity_operator(self.grid, f["R_sens"], self.tags, f["solver"])
        m = cfg["material"]
        self.material = Material(m["E"], m["nu"], m["thickness"], m["kappa"])
        lo = cfg["loads"]
        self.supports = Supports(
            clamp_boxes=cfg.boxes("clamp"),
            symmetry=[(p["axis"], p["value"]) for p in cfg["supports"]["symmetry"]],
            line_loads=cfg.line_loads(),
            area_load=None if lo["area"] is None else np.asarray(lo["area"], dtype=float),
        )
        self.tol = cfg.tolerance
        self.g_max = o["G_max"]
        self.frozen = self.tags.on_dirichlet

    def constraint(self, psi_tilde: np.ndarray) -> Optional[float]:
        if self.g_max is None:
            return None
        return enclosed_volume_constraint(psi_tilde, self.pipeline.bandwidth, self.pipeline.first.weights,
                                          self.g_max)

    def mesh_for(self, fields: PipelineFields) -> ShellMesh:
        me = self.cfg["mesh"]
        mesh = extract(fields.phi, self.grid, me["snap_eps"])
        if mesh.empty:
            raise StructureVanishedError("the zero isosurface is empty: the structure has vanished")
        mesh = cleanup(mesh, self.grid, me["min_angle"], me["hmin"])
        mesh.normals = vertex_normals(mesh, fields.phi, self.grid)
        return mesh

    def supported_part(self, mesh: ShellMesh):
        """Drop edge-connected pieces that touch no clamp box (they carry no load path)."""
        t = mesh.triangles
        n = mesh.n_vertices
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        g = sp.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
        _, lab = connected_components(g, directed=False)
        hit = np.zeros(n, dtype=bool)
        for box in self.supports.clamp_boxes:
            hit |= box.contains(mesh.vertices, self.tol)
        keep_labels = np.unique(lab[hit])
        keep_tri = np.isin(lab[t[:, 0]], keep_labels)
        if keep_tri.all():
            return mesh, 0
        if not keep_tri.any():
            raise NumericalError("no part of the surface touches a support")
        sub = ShellMesh(mesh.vertices, t[keep_tri], mesh.embed_nodes, mesh.embed_weights, mesh.embed_tet,
                        mesh.normals)
        return compact(sub), int((~keep_tri).sum())

    def evaluate(self, psi: np.ndarray, with_sensitivity: bool = True) -> Evaluation:
        fields = self.pipeline.run(psi)
        full = self.mesh_for(fields)
        topo = topology(full)
        mesh, dropped = self.supported_part(full)
        if dropped:
            log.warning("dropped %d triangles of unsupported surface pieces", dropped)
            for ll in self.supports.line_loads:
                if ll.box.contains(full.vertices, self.tol).any() and not ll.box.contains(mesh.vertices, self.tol).any():
                    raise NumericalError("the loaded edge is detached from the supports")
        model = build_model(mesh, self.material, self.supports, self.tol, mitc=self.cfg["optimizer"]["mitc"])
        sol = model.solve()
        G = self.constraint(fields.psi_tilde)
        inv_grad = inverse_gradient_median(mesh, fields.phi, self.grid)
        if not with_sensitivity:
            z = np.zeros(self.grid.n_nodes)
            return Evaluation(fields, mesh, model, sol.compliance, G, z, None, None, z, inv_grad, topo, dropped)
        o = self.cfg["optimizer"]
        sens = shape_sensitivity(model, o["fd_step"] * self.grid.spacing)
        raw = embed(sens, mesh, o["c"], self.grid)
        dF = filter_sensitivity(raw, self.sens_op)
        dG = None
        if self.g_max is not None:
            dG = constraint_sensitivity(fields.psi_tilde, self.pipeline)
            dG[self.frozen] = 0.0
        return Evaluation(fields, mesh, model, sol.compliance, G, dF, dG, sens, raw, inv_grad, topo, dropped)


# -- the loop --------------------------------------------------------------

@dataclass
class OptResult:
    history: list
    topology: list
    psi: np.ndarray
    psi_best: np.ndarray
    best_iter: int
    F_best: float
    F_init: float
    final: Evaluation
    best: Evaluation
    stop_reason: str
    out_dir: Optional[Path] = None


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return io.fmt(float(x))


def run(cfg: RunConfig, out_dir=None, export_every: Optional[int] = None,
        max_iters: Optional[int] = None, problem: Optional[Problem] = None) -> OptResult:
    """Optimize the design described by ``cfg``.

    ``max_iters`` counts evaluated (accepted) designs, the initial one
    included. With ``out_dir`` set, history.csv, topology.csv, per-iteration
    dumps and the final state are written there.
    """
    prob = problem or Problem(cfg)
    o = cfg["optimizer"]
    n_iter = o["max_iters"] if max_iters is None else max_iters
    every = cfg["output"]["export_every"] if export_every is None else export_every
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    psi = prob.psi0.copy()
    state = OptState()
    history, topo_rows = [], []
    best = None
    best_psi, best_iter, F_best = psi.copy(), 0, math.inf
    g_scale = 1.0
    alpha = float(o["alpha"])
    stop = "max_iters"
    ev = None
    k = 0
    t0 = time.perf_counter()
    if n_iter < 1:
        raise ConfigError("max_iters must be at least 1")
    ev = prob.evaluate(psi)
    while k < n_iter:
        if k == 0:
            F_init = ev.F
            if ev.G is not None:
                state.gamma = gamma_init(ev.G, ev.dF, ev.dG)
        Fp = merit(ev.F, ev.G, state.gamma)
        state.F.append(ev.F)
        state.G.append(ev.G)
        state.F_prime.append(Fp)
        state.gammas.append(state.gamma)
        row = [k, ev.F, ev.G, Fp, state.gamma, ev.mesh.n_vertices, ev.mesh.n_triangles, ev.inv_grad, True]
        history.append(row)
        topo_rows.append([k, ev.topo.components, ev.topo.boundary_loops, ev.topo.euler, ev.topo.genus])
        if ev.F < F_best:
            F_best, best_psi, best_iter, best = ev.F, psi.copy(), k, ev
        log.info("iter %4d  F=%.6g  G=%s  F'=%.6g  gamma=%.3g  tris=%d  (%.1fs)", k, ev.F,
                 "-" if ev.G is None else f"{ev.G:.5g}", Fp, state.gamma, ev.mesh.n_triangles,
                 time.perf_counter() - t0)
        if out is not None and every and k % every == 0:
            oc = cfg["output"]
            io.dump_iteration(out / f"iter_{k:04d}", prob.grid, ev, oc["vtk"], oc["obj"], oc["fields"])
        k += 1
        if k >= n_iter:
            break
        # stationarity: plain F window for unconstrained runs, merit window once gamma is spent
        if (ev.G is None or state.gamma <= o["gamma_floor"]) and \
                stationary(state.F, o["stationary_window"], o["stationary_tol"]):
            stop = "stationary"
            break
        grad = ev.dF if ev.dG is None else ev.dF + state.gamma / ev.G**2 * ev.dG
        if k == 1 and o["normalize"] != "none":
            # alpha * step_scale is the largest first-step change of psi
            gmax = float(np.abs(grad).max())
            g_scale = gmax / o["step_scale"] if gmax > 0 else 1.0
        step = alpha / g_scale
        if o["normalize"] == "relative":
            # descend on log F: the step keeps its size as the objective shrinks
            step *= state.F[0] / ev.F
        for attempt in range(o["max_retries"] + 1):
            cand = update(psi, grad, step, prob.frozen)
            log.debug("iter %4d  max|grad| %.4g  max|dpsi| %.4g", k, np.abs(grad).max(), np.abs(cand - psi).max())
            reason, G_new = None, None
            if prob.g_max is not None:
                G_new = prob.constraint(prob.pipeline.first.apply(cand))
                if G_new >= 0:
                    reason = f"G={G_new:.5g}"
            if reason is None:
                try:
                    trial = prob.evaluate(cand)
                    break
                except NumericalError as exc:
                    # a trial shape the solver cannot handle is treated like an infeasible one
                    reason = str(exc)
            log.info("iter %4d  rejected step (%s), halving the step", k, reason)
            history.append([k, None, G_new, None, state.gamma, None, None, None, False])
            step *= 0.5
        else:
            raise InfeasibleIterateError(f"no acceptable step after {o['max_retries']} retries at iteration {k}")
        psi, ev = cand, trial
        schedule(state, o["halving_rate"], o["halving_G"], o["gamma_floor"])

    result = OptResult(history, topo_rows, psi, best_psi, best_iter, F_best, F_init, ev, best, stop, out)
    if out is not None:
        write_history(out / "history.csv", history)
        write_topology(out / "topology.csv", topo_rows)
        save_state(out / "state.npz", cfg, result)
        io.write_obj(out / "final.obj", ev.mesh.vertices, ev.mesh.triangles)
        io.write_obj(out / "best.obj", best.mesh.vertices, best.mesh.triangles)
    return result


def write_history(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def write_topology(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "components", "boundary_loops", "euler", "genus"])
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def read_history(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def save_state(path, cfg: RunConfig, result: OptResult) -> None:
    import json

    np.savez(path, psi=result.psi, psi_best=result.psi_best, best_iter=result.best_iter,
             config=json.dumps(cfg.raw, sort_keys=True))


def load_state(path):
    """Return ``(config, psi, psi_best)`` from a saved state file."""
    import json

    from .config import from_dict

    try:
        with np.load(path) as data:
            raw = json.loads(str(data["config"]))
            psi, psi_best = data["psi"], data["psi_best"]
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot read state file {path}: {exc}") from None
    # symmetry planes were normalized to integer axes; map back for re-validation
    raw["supports"]["symmetry"] = [{"axis": "xyz"[p["axis"]], "value": p["value"]}
                                   for p in raw["supports"]["symmetry"]]
    return from_dict(raw), psi, psi_best
