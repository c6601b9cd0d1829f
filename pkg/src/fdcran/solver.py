"""Log-barrier interior-point solver for the materialized subproblems.

Each constraint row "affine - log2 det(B(z)) <= 0" contributes -ln(slack) to
the barrier and every variable block a -ln det term, so the centering
problems are smooth convex minimizations solved by damped Newton steps with
exact gradients and Hessians.  All row matrices are padded to a common size
and evaluated through one stacked tensor contraction and one batched
Cholesky per point, which keeps the per-iteration cost dominated by BLAS.
The barrier weight decreases geometrically until the multipliers recovered
from the barrier terms certify the KKT conditions to tolerance.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .linalg import grad_to_vec, herm_basis, project_psd, vec_to_herm
from .subproblem import Row, SubproblemSpec, VarBlock

_LN2 = np.log(2.0)


@dataclass
class SolverOptions:
    feas_tol: float = 1e-8
    kkt_tol: float = 1e-6
    gap_tol: float = 3e-6             # relative duality-gap target nu/(t*scale)
    obj_gap: float = None             # absolute gap target; skips certification
    max_inner_iters: int = 800        # total Newton-step budget
    barrier_weight0: float = 1.0      # initial barrier weight 1/t
    barrier_decay: float = 0.05       # weight multiplier per stage
    max_stage_iters: int = 60
    newton_tol: float = 1e-12         # half squared Newton decrement cutoff
    frac_to_boundary: float = 0.99
    psd_floor: float = 1e-12
    aux_margin: float = 0.05          # slack re-opened on active aux rows
    keep_trace: bool = False

    def __post_init__(self):
        for name in ("feas_tol", "kkt_tol", "gap_tol", "barrier_weight0", "barrier_decay",
                     "newton_tol", "frac_to_boundary", "psd_floor", "aux_margin"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.obj_gap is not None and self.obj_gap <= 0:
            raise ValueError("obj_gap must be positive when set")


@dataclass
class SolverResult:
    z: np.ndarray
    status: str                  # optimal | max_iters | infeasible | failed
    objective: float
    kkt_residual: float
    iterations: int
    solve_time: float
    t_final: float = 0.0
    variables: object = None     # DesignVariables for network-built specs
    aux: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)
    message: str = ""


class _Work:
    """Stacked evaluation structures for one spec."""

    def __init__(self, spec: SubproblemSpec):
        self.spec = spec
        self.nz = spec.n_z
        self.c = spec.objective
        self.ld_rows = [r for r in spec.rows if r.mat_const is not None]
        self.aff_rows = [r for r in spec.rows if r.mat_const is None]
        rows = self.ld_rows + self.aff_rows
        self.n_rows = len(rows)
        self.n_ld = len(self.ld_rows)

        # stacked affine parts of every row (log-det rows first)
        self.A = np.zeros((self.n_rows, self.nz))
        self.b = np.zeros(self.n_rows)
        for i, row in enumerate(rows):
            self.A[i, row.aff_idx] += row.aff_val
            self.b[i] = row.aff_const

        # padded constants and one global response tensor for the matrices
        self.nmax = max((r.n for r in self.ld_rows), default=0)
        nm = self.nmax
        self.Cpad = np.zeros((self.n_ld, nm, nm), dtype=complex)
        tg = np.zeros((self.n_ld * nm * nm, self.nz), dtype=complex)
        self.row_aux = []
        for k, row in enumerate(self.ld_rows):
            n = row.n
            self.Cpad[k, :n, :n] = row.mat_const
            self.Cpad[k, n:, n:] = np.eye(nm - n)
            self.row_aux.append({
                "n": n, "D": row.mat_idx.size, "idx": row.mat_idx,
                "T": row.mat_tensor,
                "Tsw": np.ascontiguousarray(
                    row.mat_tensor.transpose(0, 2, 1).reshape(row.mat_idx.size, n * n))
                if row.mat_idx.size else None,
                "ix": np.ix_(row.mat_idx, row.mat_idx) if row.mat_idx.size else None,
            })
        # fill the global tensor (row-major pad layout)
        for k, row in enumerate(self.ld_rows):
            n, d = row.n, row.mat_idx.size
            if not d:
                continue
            local = (np.arange(n)[:, None] * nm + np.arange(n)[None, :]).ravel()
            rows_idx = k * nm * nm + local
            tg[np.ix_(rows_idx, row.mat_idx)] += row.mat_tensor.reshape(d, n * n).T
        # real/imag split: two float GEMVs beat one upcast complex GEMV
        self.Tg_re = np.ascontiguousarray(tg.real)
        self.Tg_im = np.ascontiguousarray(tg.imag)

        self.blocks = []
        for blk in spec.blocks:
            basis = herm_basis(blk.p)
            p2 = blk.p * blk.p
            self.blocks.append({
                "blk": blk, "basis": basis,
                "basis_swap": np.ascontiguousarray(
                    basis.transpose(0, 2, 1).reshape(p2, p2)),
            })
        self.nu = self.n_rows + sum(b.p for b in spec.blocks)
        # problem data norm: residuals are reported relative to this scale
        data = [1.0, float(np.abs(self.c).max(initial=0.0))]
        for row in spec.rows:
            data.append(abs(row.aff_const))
            if row.aff_val.size:
                data.append(float(np.abs(row.aff_val).max()))
            if row.mat_const is not None:
                data.append(float(np.abs(row.mat_const).max()))
        self.data_scale = max(data)

    # -- stacked evaluations ----------------------------------------------------
    def matrices(self, z: np.ndarray) -> np.ndarray:
        if self.n_ld == 0:
            return np.zeros((0, self.nmax, self.nmax), dtype=complex)
        flat = self.Tg_re @ z + 1j * (self.Tg_im @ z)
        return self.Cpad + flat.reshape(self.n_ld, self.nmax, self.nmax)

    def slacks(self, z: np.ndarray, mats: np.ndarray = None):
        """(slacks, cholesky stack or None); slack -inf where undefined."""
        vals = self.A @ z + self.b
        s = -vals
        chols = None
        if self.n_ld:
            try:
                chols = np.linalg.cholesky(self.matrices(z) if mats is None else mats)
            except np.linalg.LinAlgError:
                s[:self.n_ld] = -np.inf
                return s, None
            diags = np.real(np.einsum("kii->ki", chols))
            s[:self.n_ld] += 2.0 * np.sum(np.log(diags), axis=1) / _LN2
        return s, chols

    def block_matrices(self, z: np.ndarray):
        return [vec_to_herm(z[info["blk"].sl], info["blk"].p)
                for info in self.blocks]

    def strictly_feasible(self, z: np.ndarray) -> bool:
        s, chols = self.slacks(z)
        if self.n_ld and chols is None:
            return False
        if np.any(s <= 0.0) or not np.all(np.isfinite(s)):
            return False
        for y in self.block_matrices(z):
            try:
                np.linalg.cholesky(y)
            except np.linalg.LinAlgError:
                return False
        return True

    def barrier_state(self, z: np.ndarray):
        """(slacks, cone log-det sum, matrices) or None outside the domain."""
        mats = self.matrices(z) if self.n_ld else None
        s, chols = self.slacks(z, mats)
        if (self.n_ld and chols is None) or np.any(s <= 0.0) \
                or not np.all(np.isfinite(s)):
            return None
        cone = 0.0
        for y in self.block_matrices(z):
            try:
                chol = np.linalg.cholesky(y)
            except np.linalg.LinAlgError:
                return None
            cone += 2.0 * float(np.sum(np.log(np.real(np.diag(chol)))))
        return s, cone, mats

    def psi(self, z: np.ndarray, t: float) -> float:
        state = self.barrier_state(z)
        if state is None:
            return np.inf
        s, cone, _ = state
        return -t * float(self.c @ z) - float(np.sum(np.log(s))) - cone

    def barrier_gradient(self, z: np.ndarray) -> np.ndarray:
        g, _, _ = self._barrier_parts(z, need_hess=False)
        return g

    def _barrier_parts(self, z: np.ndarray, need_hess: bool = True,
                       mats: np.ndarray = None):
        """Gradient (and Hessian) of the pure barrier; raises off-domain."""
        if mats is None and self.n_ld:
            mats = self.matrices(z)
        s, chols = self.slacks(z, mats)
        if (self.n_ld and chols is None) or np.any(s <= 0.0):
            raise FloatingPointError("barrier evaluated at infeasible point")
        gf = self.A.copy()                      # (n_rows, nz) row gradients
        h = np.zeros((self.nz, self.nz)) if need_hess else None
        if self.n_ld:
            binv_all = np.linalg.inv(mats)
            # flush subnormal magnitudes: they cost 10-100x in the BLAS kernels
            np.copyto(binv_all, 0.0, where=np.abs(binv_all) < 1e-140)
        for k in range(self.n_ld):
            aux = self.row_aux[k]
            if aux["D"] == 0:
                continue
            n = aux["n"]
            binv = binv_all[k, :n, :n]
            gf[k, aux["idx"]] -= np.real(aux["Tsw"] @ binv.ravel()) / _LN2
            if need_hess:
                kk = np.matmul(np.matmul(binv, aux["T"]), binv)
                hf = np.real(kk.reshape(aux["D"], n * n) @ aux["Tsw"].T) / _LN2
                h[aux["ix"]] += 0.5 * (hf + hf.T) / s[k]
        w = 1.0 / s
        g = gf.T @ w
        if need_hess:
            gw = gf * w[:, None]
            h += gw.T @ gw
        for info in self.blocks:
            blk = info["blk"]
            y = vec_to_herm(z[blk.sl], blk.p)
            yinv = np.linalg.inv(y)
            yinv = 0.5 * (yinv + yinv.conj().T)
            g[blk.sl] -= grad_to_vec(yinv)
            if need_hess:
                p2 = blk.p * blk.p
                kk = np.matmul(np.matmul(yinv, info["basis"]), yinv)
                hb = np.real(kk.reshape(p2, p2) @ info["basis_swap"].T)
                h[blk.sl, blk.sl] += 0.5 * (hb + hb.T)
        return g, h, s

    def grad_hess(self, z: np.ndarray, t: float, mats: np.ndarray = None):
        g, h, _ = self._barrier_parts(z, need_hess=True, mats=mats)
        return g - t * self.c, h


def _repair_aux(work: _Work, z: np.ndarray, margin_rel: float) -> np.ndarray:
    """Re-open slack on rows that bind only through an auxiliary variable."""
    spec = work.spec
    base = spec.n_z - spec.n_aux
    z = z.copy()
    rows = work.ld_rows + work.aff_rows
    for j in range(base, spec.n_z):
        lo, hi = -np.inf, np.inf
        touched = False
        for row in rows:
            pos = np.nonzero(row.aff_idx == j)[0]
            if pos.size == 0:
                continue
            coeff = float(row.aff_val[pos[0]])
            if coeff == 0.0:
                continue
            fval = row.value(z)
            if not np.isfinite(fval):
                continue
            f_wo = fval - coeff * z[j]
            touched = True
            if coeff > 0:
                hi = min(hi, -f_wo / coeff)
            else:
                lo = max(lo, -f_wo / coeff)
        if not touched:
            continue
        ref = min(abs(lo) if np.isfinite(lo) else np.inf,
                  abs(hi) if np.isfinite(hi) else np.inf)
        delta = margin_rel * (1.0 + (ref if np.isfinite(ref) else 0.0))
        if np.isfinite(hi) and np.isfinite(lo):
            z[j] = np.clip(z[j], lo + delta, hi - delta) \
                if hi - lo > 2 * delta else 0.5 * (lo + hi)
        elif np.isfinite(hi):
            z[j] = min(z[j], hi - delta)
        elif np.isfinite(lo):
            z[j] = max(z[j], lo + delta)
    return z


def _find_start(work: _Work, warm, opts: SolverOptions):
    """Strictly feasible start: warm start, aux repair, interior mixing."""
    spec = work.spec
    candidates = []
    if warm is not None:
        candidates.append(np.asarray(warm, dtype=float))
    if spec.expansion_point is not None:
        candidates.append(spec.expansion_point)
    interior = spec.interior_point
    for cand in candidates:
        z = _repair_aux(work, cand, opts.aux_margin)
        if work.strictly_feasible(z):
            return z
        if interior is not None:
            for theta in (1e-4, 1e-3, 1e-2, 0.1, 0.3, 0.6, 1.0):
                mix = _repair_aux(work, (1 - theta) * cand + theta * interior,
                                  opts.aux_margin)
                if work.strictly_feasible(mix):
                    return mix
    if interior is not None:
        z = _repair_aux(work, interior, opts.aux_margin)
        if work.strictly_feasible(z):
            return z
    return None


def _newton_stage(work: _Work, z, t, opts: SolverOptions, budget: int,
                  trace: list, loose: bool = False):
    """Damped Newton on the barrier at fixed t; returns (z, steps, converged).

    The Armijo test compares barrier differences term by term (objective
    step, slack ratios, cone log-det difference), which stays accurate when
    t * objective dwarfs the per-step decrease.  ``loose`` relaxes the
    decrement target for path-following stages that do not certify.
    """
    steps = 0
    converged = False
    stall = 0
    prev_dec2 = np.inf
    state0 = work.barrier_state(z)
    if state0 is None:
        raise FloatingPointError("Newton stage started outside the domain")
    stat_target = 0.5 * opts.kkt_tol * t * _scale(work, z)
    dec_target = opts.newton_tol if not loose else 1e-9
    chol = dscale = None
    reuse_ok = False
    last_alpha = 0.0
    while steps < min(opts.max_stage_iters, budget):
        reuse = reuse_ok and chol is not None and last_alpha >= 0.9
        if reuse:
            g = work.barrier_gradient(z) - t * work.c
            reuse_ok = False   # at most one gradient-only step in a row
        else:
            g, h = work.grad_hess(z, t, mats=state0[2])
        if float(np.abs(g).max(initial=0.0)) <= stat_target:
            converged = True   # stationarity already certifiable at this t
            break
        if not reuse:
            # Jacobi equilibration keeps the factorization accurate across
            # the ~20 orders of magnitude the barrier curvature spans
            dscale = 1.0 / np.sqrt(np.maximum(np.abs(np.diag(h)), 1e-300))
            hs = h * dscale[:, None] * dscale[None, :]
            np.copyto(hs, 0.0, where=np.abs(hs) < 1e-150)
            gs = g * dscale
            reg = 0.0
            for _ in range(16):
                try:
                    chol = sla.cho_factor(
                        hs if reg == 0.0 else hs + reg * np.eye(work.nz),
                        lower=True)
                    break
                except np.linalg.LinAlgError:
                    reg = max(reg * 100.0, 1e-14)
            else:
                raise FloatingPointError("Newton system not positive definite")
        d = dscale * sla.cho_solve(chol, -(g * dscale))
        dec2 = float(-g @ d)
        if dec2 <= 0 and reuse:
            # stale curvature produced a non-descent direction: rebuild
            g, h = work.grad_hess(z, t, mats=state0[2])
            dscale = 1.0 / np.sqrt(np.maximum(np.abs(np.diag(h)), 1e-300))
            hs = h * dscale[:, None] * dscale[None, :]
            np.copyto(hs, 0.0, where=np.abs(hs) < 1e-150)
            chol = sla.cho_factor(hs, lower=True)
            d = dscale * sla.cho_solve(chol, -(g * dscale))
            dec2 = float(-g @ d)
        if dec2 / 2.0 <= dec_target:
            converged = True
            break
        stall = stall + 1 if dec2 >= 0.5 * prev_dec2 and dec2 / 2.0 <= 1e-7 else 0
        if stall >= 4:
            converged = True   # decrement pinned at the floating-point floor
            break
        prev_dec2 = dec2
        steps += 1
        s0, cone0, _ = state0
        c_step = float(work.c @ d)
        alpha = opts.frac_to_boundary
        accepted = False
        for _ in range(60):
            state1 = work.barrier_state(z + alpha * d)
            if state1 is not None:
                s1, cone1, _ = state1
                dpsi = (-t * alpha * c_step
                        - float(np.sum(np.log(s1 / s0)))
                        - (cone1 - cone0))
                if dpsi <= -0.01 * alpha * dec2:
                    z = z + alpha * d
                    state0 = state1
                    accepted = True
                    break
            alpha *= 0.5
        last_alpha = alpha if accepted else 0.0
        reuse_ok = accepted and alpha >= 0.9 and dec2 <= 0.3 * prev_dec2
        if trace is not None:
            trace.append({"t": t, "decrement2": dec2, "alpha": alpha,
                          "objective": float(work.c @ z)})
        if not accepted:
            # no measurable descent left at this barrier weight
            return z, steps, True
    return z, steps, converged


def _kkt_components(work: _Work, z, t):
    s, chols = work.slacks(z)
    feas = float(np.max(-s)) if s.size else 0.0
    for y in work.block_matrices(z):
        feas = max(feas, float(-np.linalg.eigvalsh(y).min()))
    g_bar = work.barrier_gradient(z)
    stat = float(np.abs(-work.c + g_bar / t).max(initial=0.0))
    comp_unit = max([1.0] + [b.p for b in work.spec.blocks])
    return max(feas, 0.0), stat, comp_unit / t


def _scale(work: _Work, z) -> float:
    return work.data_scale


def kkt_residual(spec: SubproblemSpec, z: np.ndarray, t: float = None) -> float:
    """Scaled KKT residual with multipliers recovered from the barrier terms
    (lambda_i = 1/(t s_i), cone duals Y^{-1}/t); when t is not given the
    residual is minimized over the recovery weight."""
    work = spec if isinstance(spec, _Work) else _Work(spec)
    scale = _scale(work, z)
    ts = [t] if t is not None else np.logspace(0, 14, 29)
    best = np.inf
    for t_try in ts:
        try:
            feas, stat, comp = _kkt_components(work, z, t_try)
        except FloatingPointError:
            return np.inf
        best = min(best, max(feas, stat, comp) / scale)
    return float(best)


def _herm_vec_identity(p: int) -> np.ndarray:
    v = np.zeros(p * p)
    v[:p] = 1.0
    return v


def _phase1(spec: SubproblemSpec, opts: SolverOptions, box: float = 1e8):
    """Feasibility search: minimize a shared slack s over all rows.

    All variables are boxed at +-box to keep the search bounded; the log-det
    arguments must be definable at the identity probe point (true for every
    network subproblem, whose conditioning terms carry noise floors).
    """
    aug_rows = []
    s_idx = spec.n_z
    for row in spec.rows:
        aug_rows.append(Row(
            name=row.name, aff_const=row.aff_const,
            aff_idx=np.concatenate([row.aff_idx, [s_idx]]).astype(int),
            aff_val=np.concatenate([row.aff_val, [-1.0]]),
            mat_const=row.mat_const, mat_tensor=row.mat_tensor,
            mat_idx=row.mat_idx))
    for j in range(spec.n_z):
        aug_rows.append(Row(f"_box+{j}", -box, np.array([j]), np.array([1.0])))
        aug_rows.append(Row(f"_box-{j}", -box, np.array([j]), np.array([-1.0])))
    objective = np.zeros(spec.n_z + 1)
    objective[s_idx] = -1.0  # maximize -s
    aug = SubproblemSpec(blocks=spec.blocks, aux_names=spec.aux_names + ["_s"],
                         objective=objective, rows=aug_rows, n_z=spec.n_z + 1)
    work = _Work(aug)
    work.data_scale = _Work(spec).data_scale  # box rows are not problem data
    z = np.zeros(spec.n_z + 1)
    for blk in spec.blocks:
        z[blk.sl] = _herm_vec_identity(blk.p)
    s_vals, chols = work.slacks(z)
    if work.n_ld and chols is None:
        return None  # log-det rows undefined at the probe point
    # set s above the worst violation of the original rows
    worst = float(np.max(-s_vals[:len(spec.rows)], initial=-1.0))
    z[s_idx] = worst + 1.0
    t = 1.0
    budget = opts.max_inner_iters
    for _ in range(40):
        z, steps, _ = _newton_stage(work, z, t, opts, budget, None)
        budget -= steps
        if z[s_idx] < -10 * opts.feas_tol:
            return z[:spec.n_z]
        if work.nu / t < 0.01 * opts.feas_tol or budget <= 0:
            break
        t /= opts.barrier_decay
    return z[:spec.n_z] if z[s_idx] < -opts.feas_tol else None


def solve(spec: SubproblemSpec, warm_start: np.ndarray = None,
          opts: SolverOptions = None, t0: float = None) -> SolverResult:
    """Solve one subproblem to KKT-certified accuracy.

    Returns status 'optimal' only when the recovered multipliers certify the
    KKT conditions within ``opts.kkt_tol`` (scaled) and the point is
    feasible within ``opts.feas_tol``; an infeasible spec is detected by a
    phase-I slack minimization.  ``t0`` overrides the initial barrier weight
    (used for warm starts across outer iterations).
    """
    opts = opts or SolverOptions()
    tic = time.perf_counter()
    work = _Work(spec)
    trace = [] if opts.keep_trace else None

    z = _find_start(work, warm_start, opts)
    if z is None:
        z = _phase1(spec, opts)
        if z is None:
            return SolverResult(z=np.zeros(spec.n_z), status="infeasible",
                                objective=-np.inf, kkt_residual=np.inf,
                                iterations=0,
                                solve_time=time.perf_counter() - tic,
                                message="phase-I found no strictly feasible point")
        z = _repair_aux(work, z, opts.aux_margin)

    t = t0 if t0 is not None else 1.0 / opts.barrier_weight0
    iters = 0
    status = "max_iters"
    obj_floor = -np.inf if warm_start is None \
        else float(work.c @ np.asarray(warm_start)) - opts.feas_tol
    best = {"kkt": np.inf, "z": z, "t": t}
    if opts.obj_gap is not None:
        # gap-targeted mode: push t until the duality gap is small enough,
        # no KKT certificate is attempted (outer loops refine later)
        for _stage in range(44):
            z, steps, _ = _newton_stage(work, z, t, opts,
                                        min(25, opts.max_inner_iters - iters),
                                        trace)
            iters += steps
            if work.nu / t <= opts.obj_gap or iters >= opts.max_inner_iters:
                break
            t /= opts.barrier_decay
        kkt = kkt_residual(work, z, t)
        result = SolverResult(z=z, status="max_iters",
                              objective=float(work.c @ z),
                              kkt_residual=float(kkt), iterations=iters,
                              solve_time=time.perf_counter() - tic, t_final=t,
                              trace=trace or [],
                              message="stopped at requested objective gap")
        problem = spec.meta.get("problem")
        if problem is not None:
            result.variables = problem.z_to_vars(z)
        result.aux = spec.aux_values(z)
        return result
    for attempt in range(2):
        degrade = 0
        for _stage in range(44):
            z, steps, _ = _newton_stage(work, z, t, opts,
                                        opts.max_inner_iters - iters, trace)
            iters += steps
            scale = _scale(work, z)
            gap_ok = work.nu / t <= opts.gap_tol * scale
            if gap_ok and float(work.c @ z) >= obj_floor:
                feas, stat, comp = _kkt_components(work, z, t)
                kkt = max(feas, stat, comp) / scale
                if kkt < best["kkt"]:
                    best = {"kkt": kkt, "z": z.copy(), "t": t}
                    degrade = 0
                else:
                    degrade += 1
            if best["kkt"] <= opts.kkt_tol:
                status = "optimal"
                break
            if iters >= opts.max_inner_iters or degrade >= 3:
                break  # larger t only loses precision; keep the certificate
            comp_unit = max([1.0] + [b.p for b in spec.blocks])
            if comp_unit / (t * scale) <= 10.0 * opts.kkt_tol:
                t *= 3.0   # sample the narrow certification zone densely
            else:
                t /= opts.barrier_decay
        if status == "optimal" or iters >= opts.max_inner_iters:
            break
        # polish restart: re-center slightly and re-approach the best t
        if best["z"] is not None and spec.interior_point is not None:
            z = 0.99 * best["z"] + 0.01 * spec.interior_point
            z = _repair_aux(work, z, opts.aux_margin)
            if not work.strictly_feasible(z):
                z = best["z"]
            t = max(1.0, best["t"] / 400.0)
        else:
            break

    z, kkt, t = best["z"], best["kkt"], best["t"]
    result = SolverResult(z=z, status=status, objective=float(work.c @ z),
                          kkt_residual=float(kkt), iterations=iters,
                          solve_time=time.perf_counter() - tic, t_final=t,
                          trace=trace or [])
    problem = spec.meta.get("problem")
    if problem is not None:
        result.variables = problem.z_to_vars(z)
    result.aux = spec.aux_values(z)
    return result


__all__ = ["SolverOptions", "SolverResult", "solve", "kkt_residual",
           "project_psd"]
