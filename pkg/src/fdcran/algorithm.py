"""Outer optimization loop: successive inner approximation with rank recovery.

Each iteration linearizes the non-convex program at the current point,
solves the resulting convex subproblem and re-expands at its solution; the
surrogate objective is non-decreasing because the expansion point stays
feasible for every rebuilt subproblem.  Early iterations run the barrier
solver to a coarse duality-gap target only; once the objective stabilizes,
solves are KKT-certified and the rank of the DL transmit covariances is
driven down to the stream dimension, either by appending trace-orthogonality
cuts (default) or by Gaussian randomization with scalar re-adjustment.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .approximation import ExpansionPointError, SceneProblem
from .channels import ChannelRealization
from .config import NetworkConfig
from .linalg import hermitize
from .rates import DesignVariables
from .rng import stream
from .scenes import Scene, scene_fd_joint, scene_report, scene_violation
from .solver import SolverOptions, SolverResult, solve


@dataclass
class GiaOptions:
    eps: float = 1e-4                 # relative objective-change threshold
    max_outer: int = 150
    rank_strategy: str = "iterative"  # iterative | randomization
    rank_tol: float = 1e-6            # singular values below tol*s_max are zero
    gr_samples: int = 50
    gr_seed: int = 0
    coarse_gap: float = 0.05          # starting absolute-gap target (scaled by objective)
    solver: SolverOptions = field(default_factory=SolverOptions)
    keep_variables: bool = False      # retain per-iteration design points in the trace


@dataclass
class RankReductionState:
    """Accumulated rank cuts: j[m] sums the eliminated unit directions."""

    j: dict = field(default_factory=dict)
    cut_count: dict = field(default_factory=dict)

    def cut(self, m: int, direction: np.ndarray) -> None:
        outer = np.outer(direction, direction.conj())
        self.j[m] = self.j.get(m, np.zeros_like(outer)) + outer
        self.cut_count[m] = self.cut_count.get(m, 0) + 1


@dataclass
class IterationRecord:
    iteration: int
    surrogate: float
    exact_wssr: float
    violation: float
    solver_status: str
    solver_iters: int
    kkt_residual: float
    solve_time: float
    ranks: tuple
    cut_event: bool = False
    phase: str = "coarse"             # coarse | certified | rank
    variables: object = None


@dataclass
class GiaTrace:
    records: list = field(default_factory=list)
    converged: bool = False
    outer_iterations: int = 0
    fallback: str = ""

    def surrogates(self) -> np.ndarray:
        return np.array([r.surrogate for r in self.records])

    def to_csv(self, path) -> None:
        import csv
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "surrogate", "exact_wssr", "violation",
                        "solver_status", "solver_iters", "kkt_residual",
                        "solve_time", "ranks", "cut_event", "phase"])
            for r in self.records:
                w.writerow([r.iteration, repr(r.surrogate), repr(r.exact_wssr),
                            repr(r.violation), r.solver_status, r.solver_iters,
                            repr(r.kkt_residual), repr(r.solve_time),
                            "/".join(map(str, r.ranks)), int(r.cut_event),
                            r.phase])


def check_rank(w: np.ndarray, d: int, tol: float = 1e-6) -> bool:
    """True iff at most d singular values exceed tol * s_max."""
    if w.shape[0] == 0:
        return True
    svals = np.linalg.svd(hermitize(w), compute_uv=False)
    if svals[0] <= 0:
        return True
    return int(np.sum(svals > tol * svals[0])) <= d


def matrix_rank_profile(v: DesignVariables, config: NetworkConfig,
                        tol: float = 1e-6) -> tuple:
    out = []
    for w in v.w_tilde:
        svals = np.linalg.svd(hermitize(w), compute_uv=False)
        out.append(int(np.sum(svals > tol * max(svals[0], 1e-300))))
    return tuple(out)


def update_rank_cuts(w_star: list, state: RankReductionState,
                     config: NetworkConfig, tol: float = 1e-6,
                     dl_users=None) -> RankReductionState:
    """Append one cut per DL user whose covariance exceeds its stream rank.

    The eliminated direction is the (d_m+1)-th eigenvector in descending
    eigenvalue order, i.e. the least effective mode that must disappear.
    """
    dl_users = range(len(w_star)) if dl_users is None else dl_users
    for m, w in zip(dl_users, w_star):
        d = int(config.d_dl[m])
        if check_rank(w, d, tol):
            continue
        vals, vecs = np.linalg.eigh(hermitize(w))
        order = np.argsort(vals)[::-1]
        direction = vecs[:, order[d]]
        state.cut(m, direction)
    return state


def initialize_point(config: NetworkConfig, real: ChannelRealization,
                     scene: Scene = None, problem: SceneProblem = None,
                     slack: float = 0.1) -> DesignVariables:
    """Scaled-identity starting point with >= 10% slack on every power and
    fronthaul constraint; raises when no positive scaling fits."""
    scene = scene or scene_fd_joint(config, real)
    problem = problem or SceneProblem(scene)
    cfg = scene.config
    v = DesignVariables.zeros(cfg)

    if all(p <= 0 for p in cfg.p_dl_max) and all(p <= 0 for p in cfg.p_ul_max):
        return v  # zero budget: the all-zero point is the whole feasible set

    # a zero-capacity fronthaul admits no strictly positive quantization noise
    if any(cfg.c_dl[r] <= 0 for r in scene.fronthaul_dl_rus) or \
            any(cfg.c_ul[r] <= 0 for r in scene.fronthaul_ul_rus):
        raise ValueError("zero fronthaul capacity leaves no interior point")

    # identity within each block's face; unit trace per projector
    w_proj = {}
    for m in scene.dl_users:
        blk = problem.operand_blocks[f"W{m}"][0]
        lift = blk.lift if blk.lift is not None else np.eye(blk.full, dtype=complex)
        w_proj[m] = lift @ lift.conj().T
    qdl_blocks = problem.operand_blocks.get("Qdl", [])
    qdl_proj = np.zeros((cfg.total_tx_ru, cfg.total_tx_ru), dtype=complex)
    for blk in qdl_blocks:
        lift = blk.lift if blk.lift is not None else np.eye(blk.full, dtype=complex)
        qdl_proj += lift @ lift.conj().T
    qul_proj = np.zeros((cfg.total_rx_ru, cfg.total_rx_ru), dtype=complex)
    for blk in problem.operand_blocks.get("Qul", []):
        lift = blk.lift if blk.lift is not None else np.eye(blk.full, dtype=complex)
        qul_proj += lift @ lift.conj().T

    def block_trace(mat, r):
        off = cfg.tx_offsets
        return float(np.real(np.trace(mat[off[r]:off[r + 1], off[r]:off[r + 1]])))

    # power split between signal and DL quantization, 10% slack reserved
    for k in scene.ul_users:
        nk = int(cfg.tx_antennas_ul[k])
        v.f_tilde[k] = (1 - slack) * cfg.p_ul_max[k] / nk * np.eye(nk, dtype=complex)

    has_qdl = bool(qdl_blocks) and scene.power_rus
    alpha = beta_q = 0.0
    if scene.dl_users and scene.power_rus:
        share = 0.5 if has_qdl else 1.0
        caps = []
        for r in scene.power_rus:
            tr_w = sum(block_trace(w_proj[m], r) for m in scene.dl_users)
            if tr_w > 0:
                caps.append((1 - slack) * share * cfg.p_dl_max[r] / tr_w)
        alpha = min(caps) if caps else 0.0
        for m in scene.dl_users:
            v.w_tilde[m] = alpha * w_proj[m]
    if has_qdl:
        caps = []
        for r in scene.power_rus:
            tr_q = block_trace(qdl_proj, r)
            if tr_q > 0:
                used = sum(block_trace(v.w_tilde[m], r) for m in scene.dl_users)
                caps.append(((1 - slack) * cfg.p_dl_max[r] - used) / tr_q)
        beta_max = min(caps) if caps else 0.0
        if beta_max <= 0:
            raise ValueError("no room for DL quantization noise under the power budget")
        # largest scale keeping every DL fronthaul load within 90% capacity
        beta_q = None
        for cand in beta_max * np.logspace(0, -24, 49):
            v.q_dl = cand * qdl_proj
            loads = _fronthaul_dl_loads(scene, v)
            if all(loads[r] <= (1 - slack) * cfg.c_dl[r]
                   for r in scene.fronthaul_dl_rus):
                beta_q = cand
                break
        if beta_q is None:
            raise ValueError("no positive DL quantization scale satisfies the fronthaul capacities")
        v.q_dl = beta_q * qdl_proj

    if problem.operand_blocks.get("Qul"):
        from . import rates
        base = max(float(np.mean(cfg.noise_ul)), 1e-12)
        beta_u = None
        for cand in base * np.logspace(3, -9, 49):
            v.q_ul = cand * qul_proj
            loads = {r: rates.fronthaul_ul(r, v, real, cfg, users=scene.ul_users)
                     for r in scene.fronthaul_ul_rus}
            if all(loads[r] <= (1 - slack) * cfg.c_ul[r]
                   for r in scene.fronthaul_ul_rus):
                beta_u = cand
                break
        if beta_u is None:
            raise ValueError("no positive UL quantization scale satisfies the fronthaul capacities")
        v.q_ul = beta_u * qul_proj

    if scene_violation(scene, v) > 1e-9:
        raise ValueError("initialization failed to satisfy the constraint set")
    return v


def _fronthaul_dl_loads(scene: Scene, v: DesignVariables) -> dict:
    from . import rates
    return {r: rates.fronthaul_dl(r, v, scene.config)
            for r in scene.fronthaul_dl_rus}


def gia_optimize(config: NetworkConfig, real: ChannelRealization,
                 opts: GiaOptions = None, scene: Scene = None):
    """Run the full successive-inner-approximation loop on one realization.

    Returns (DesignVariables, GiaTrace); the final point satisfies every
    constraint within the solver feasibility tolerance and every DL transmit
    covariance obeys its rank limit.
    """
    opts = opts or GiaOptions()
    scene = scene or scene_fd_joint(config, real)
    cfg = scene.config
    cuts = RankReductionState()
    problem = SceneProblem(scene, rank_cuts=cuts.j)
    v = initialize_point(cfg, real, scene=scene, problem=problem)
    trace = GiaTrace()

    if not scene.dl_users and not scene.ul_users:
        return v, trace

    interior = problem.vars_to_z(v)
    z_prev = None
    t_prev = None
    obj_prev = None
    gain = None
    certified = False
    phase = "coarse"
    pending_cut_event = False
    d_targets = {m: int(cfg.d_dl[m]) for m in scene.dl_users}

    for it in range(opts.max_outer):
        spec = problem.build(v)
        spec.interior_point = interior
        nu = len(spec.rows) + sum(b.p for b in spec.blocks)
        z0_obj = spec.objective_value(spec.expansion_point)

        sopts = opts.solver
        if not certified:
            gap = opts.coarse_gap * (1.0 + abs(z0_obj))
            if gain is not None:
                gap = min(gap, max(0.3 * gain, 1e-3))
            sopts = SolverOptions(**{**sopts.__dict__, "obj_gap": gap,
                                     "aux_margin": 1e-3,
                                     "max_inner_iters": 120})
            t0 = max(2.0, nu / gap) if gain is not None else None
        else:
            sopts = SolverOptions(**{**sopts.__dict__, "aux_margin": 1e-4})
            t0 = max(2.0, nu / max(gain if gain is not None else 1e-3, 1e-5))
            t0 = min(t0, t_prev if t_prev else t0)

        res = solve(spec, warm_start=z_prev, opts=sopts, t0=t0)
        floor = spec.objective_value(spec.expansion_point)
        if (res.status == "infeasible" or not np.all(np.isfinite(res.z))
                or res.objective < floor - 1e-7 * (1 + abs(floor))):
            # the ascent guarantee failed (numerical hiccup): retry certified
            # from the expansion point itself
            res = solve(spec, warm_start=spec.expansion_point,
                        opts=opts.solver, t0=None)
            if res.status == "infeasible" or not np.all(np.isfinite(res.z)):
                raise RuntimeError(f"subproblem solve failed at iteration {it}: "
                                   f"{res.status} {res.message}")
            if res.objective < floor - 1e-7 * (1 + abs(floor)):
                # no further certified progress: keep the expansion point
                trace.converged = certified
                break
        v_new = res.variables
        obj = res.objective
        rep = scene_report(scene, v_new)
        viol = scene_violation(scene, v_new, rep)
        ranks = matrix_rank_profile(v_new, cfg, opts.rank_tol) if v_new.w_tilde else ()
        trace.records.append(IterationRecord(
            iteration=it, surrogate=obj, exact_wssr=rep.wssr, violation=viol,
            solver_status=res.status, solver_iters=res.iterations,
            kkt_residual=res.kkt_residual, solve_time=res.solve_time,
            ranks=ranks, cut_event=pending_cut_event, phase=phase,
            variables=v_new if opts.keep_variables else None))
        pending_cut_event = False

        rel_change = np.inf if obj_prev is None else \
            abs(obj - obj_prev) / max(1.0, abs(obj))
        gain = abs(obj - obj_prev) if obj_prev is not None else None
        obj_prev = obj
        z_prev, t_prev = res.z, res.t_final
        v = v_new

        if rel_change < opts.eps:
            if not certified:
                # objective settled at coarse accuracy: switch to certified solves
                certified = True
                phase = "certified"
                continue
            rank_ok = all(check_rank(v.w_tilde[m], d_targets[m], opts.rank_tol)
                          for m in scene.dl_users)
            if rank_ok:
                trace.converged = True
                break
            if opts.rank_strategy == "randomization":
                v, ok = gaussian_randomization(
                    [v.w_tilde[m] for m in scene.dl_users], v, real, cfg,
                    opts.gr_samples, scene=scene, opts=opts)
                if ok:
                    trace.converged = True
                    break
                trace.fallback = "randomization infeasible; iterative reduction"
            # iterative reduction: cut the least effective modes and continue
            update_rank_cuts([v.w_tilde[m] for m in scene.dl_users], cuts, cfg,
                             opts.rank_tol, dl_users=scene.dl_users)
            problem = SceneProblem(scene, rank_cuts=cuts.j)
            v = _project_to_faces(problem, v, scene)
            v = _repair_expansion(problem, scene, v, cfg, real)
            interior = problem.vars_to_z(
                initialize_point(cfg, real, scene=scene, problem=problem))
            z_prev, t_prev, gain = None, None, None
            certified = False   # re-approach cheaply, certify at the new tail
            obj_prev = None
            phase = "rank"
            pending_cut_event = True

    trace.outer_iterations = len(trace.records)
    return v, trace


def _project_to_faces(problem: SceneProblem, v: DesignVariables,
                      scene: Scene) -> DesignVariables:
    """Project the DL covariances onto the cut faces (tr(W J) = 0 exactly)."""
    out = v.copy()
    for m in scene.dl_users:
        blk = problem.operand_blocks[f"W{m}"][0]
        if blk.lift is None:
            continue
        p = blk.lift @ blk.lift.conj().T
        out.w_tilde[m] = hermitize(p @ v.w_tilde[m] @ p)
    return out


def _repair_expansion(problem: SceneProblem, scene: Scene, v: DesignVariables,
                      config: NetworkConfig, real: ChannelRealization) -> DesignVariables:
    """Pull the expansion point toward a feasible interior point until the
    exact constraint set accepts it (cuts can perturb fronthaul slacks)."""
    if scene_violation(scene, v) <= 1e-9:
        return v
    v_int = initialize_point(config, real, scene=scene, problem=problem)
    for theta in (0.01, 0.03, 0.1, 0.3, 0.6, 1.0):
        cand = _mix_vars(v, v_int, theta)
        if scene_violation(scene, cand) <= 1e-9:
            return cand
    return v_int


def _mix_vars(a: DesignVariables, b: DesignVariables, theta: float) -> DesignVariables:
    out = a.copy()
    out.w_tilde = [(1 - theta) * x + theta * y for x, y in zip(a.w_tilde, b.w_tilde)]
    out.f_tilde = [(1 - theta) * x + theta * y for x, y in zip(a.f_tilde, b.f_tilde)]
    out.q_dl = (1 - theta) * a.q_dl + theta * b.q_dl
    out.q_ul = (1 - theta) * a.q_ul + theta * b.q_ul
    return out


def gaussian_randomization(w_star: list, variables: DesignVariables,
                           real: ChannelRealization, config: NetworkConfig,
                           n_samples: int = 50, scene: Scene = None,
                           opts: GiaOptions = None):
    """Low-rank candidates from the relaxed covariances plus scalar re-fit.

    Each candidate draws a standard complex Gaussian X, forms the rank-d
    precoder U S^{1/2} X and re-optimizes per-user scale factors (with the
    other covariances frozen) until the scaled candidate is feasible; the
    best feasible candidate by exact weighted sum secrecy rate is returned
    together with a feasibility flag.
    """
    opts = opts or GiaOptions()
    scene = scene or scene_fd_joint(config, real)
    cfg = scene.config
    rng = stream(opts.gr_seed, 97)
    best_v, best_wssr = None, -np.inf
    decomp = []
    for m, w in zip(scene.dl_users, w_star):
        vals, vecs = np.linalg.eigh(hermitize(w))
        vals = np.maximum(vals, 0.0)
        decomp.append((m, vecs, np.sqrt(vals)))

    for _ in range(max(1, int(n_samples))):
        cand = {}
        for m, vecs, sroot in decomp:
            d = int(cfg.d_dl[m])
            x = (rng.standard_normal((vecs.shape[0], d))
                 + 1j * rng.standard_normal((vecs.shape[0], d))) / np.sqrt(2.0)
            w_vec = vecs @ (sroot[:, None] * x)
            cand[m] = hermitize(w_vec @ w_vec.conj().T)
        adjusted = _scalar_readjust(cand, variables, scene, opts)
        if adjusted is None:
            continue
        rep = scene_report(scene, adjusted)
        if scene_violation(scene, adjusted, rep) > opts.solver.feas_tol:
            continue
        if rep.wssr > best_wssr:
            best_wssr, best_v = rep.wssr, adjusted
    if best_v is None:
        return variables, False
    return best_v, True


def _scalar_readjust(candidates: dict, variables: DesignVariables,
                     scene: Scene, opts: GiaOptions):
    """Re-solve the subproblem over per-user scaling factors only."""
    cfg = scene.config
    problem = SceneProblem(scene, theta=candidates, fixed=variables)
    base = variables.copy()
    # find a feasible uniform scale to expand around
    v0 = None
    for s in np.logspace(0, -12, 25):
        cand = base.copy()
        for m in scene.dl_users:
            cand.w_tilde[m] = s * candidates[m]
        if scene_violation(scene, cand) <= 1e-9:
            v0 = cand
            break
    if v0 is None:
        return None
    z_prev = None
    obj_prev = None
    sopts = SolverOptions(**{**opts.solver.__dict__, "max_inner_iters": 200})
    for _ in range(30):
        try:
            spec = problem.build(v0)
        except ExpansionPointError:
            return None
        spec.interior_point = spec.expansion_point.copy()
        res = solve(spec, warm_start=z_prev, opts=sopts)
        if res.status == "infeasible":
            return None
        v0 = res.variables
        z_prev = res.z
        if obj_prev is not None and abs(res.objective - obj_prev) \
                <= opts.eps * max(1.0, abs(res.objective)):
            break
        obj_prev = res.objective
    return v0
