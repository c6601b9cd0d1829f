"""Convex inner approximation of the secrecy-rate program.

Every non-convex constraint is a difference of log-dets of affine matrix
maps.  The concave log-det that appears with the wrong sign is replaced by
its tight affine Taylor upper bound

    phi(X, X0) = log2|X0| + tr(X0^{-1} (X - X0)) / ln 2,

while the other log-det is kept exact, which turns each row into
"affine - log-det <= 0": a convex constraint the barrier solver handles
natively.  Rebuilding at the solution point and re-solving is the outer
iteration of the optimizer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channels import ChannelRealization
from .config import NetworkConfig
from .linalg import (JITTER, grad_to_vec, herm_basis, hermitize, logdet2,
                     _chol_logdet2)
from .rates import DesignVariables
from .scenes import Scene, scene_fd_joint
from .subproblem import Row, SubproblemSpec, VarBlock

_LN2 = np.log(2.0)


class ExpansionPointError(ValueError):
    """The expansion point violates the relaxed constraint set."""


# -- affine matrix maps -------------------------------------------------------

@dataclass
class Congruence:
    """X -> a X a^H contribution of one operand."""

    operand: str
    a: np.ndarray

    def apply_matrix(self, x: np.ndarray) -> np.ndarray:
        return self.a @ x @ self.a.conj().T

    def apply_dirs(self, dirs: np.ndarray) -> np.ndarray:
        return np.einsum("ij,tjk,lk->til", self.a, dirs, self.a.conj(),
                         optimize=True)

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        return self.a.conj().T @ y @ self.a


@dataclass
class LambdaTerm:
    """X -> pre Lambda(X) pre^T, the residual self-interference map.

    Lambda(X) = kappa H diag(X) H^H + beta diag(H X H^H) with H the full
    inter-RU channel; linear in X, so each covariance in the transmit sum
    contributes one such term.
    """

    operand: str
    pre: np.ndarray
    h: np.ndarray
    kappa: float
    beta: float

    def _lam(self, x: np.ndarray) -> np.ndarray:
        t1 = self.kappa * (self.h @ np.diag(np.diag(x)) @ self.h.conj().T)
        t2 = self.beta * np.diag(np.diag(self.h @ x @ self.h.conj().T))
        return t1 + t2

    def apply_matrix(self, x: np.ndarray) -> np.ndarray:
        return self.pre @ self._lam(x) @ self.pre.T

    def apply_dirs(self, dirs: np.ndarray) -> np.ndarray:
        n = self.h.shape[1]
        eye_tx = np.eye(n, dtype=bool)
        d_tx = np.where(eye_tx[None], dirs, 0.0)
        t1 = self.kappa * np.einsum("ij,tjk,lk->til", self.h, d_tx,
                                    self.h.conj(), optimize=True)
        hxh = np.einsum("ij,tjk,lk->til", self.h, dirs, self.h.conj(),
                        optimize=True)
        m = self.h.shape[0]
        t2 = self.beta * np.where(np.eye(m, dtype=bool)[None], hxh, 0.0)
        return np.einsum("ij,tjk,lk->til", self.pre, t1 + t2, self.pre,
                         optimize=True)

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        z = self.pre.T @ y @ self.pre
        t1 = self.kappa * np.diag(np.diag(self.h.conj().T @ z @ self.h))
        t2 = self.beta * (self.h.conj().T @ np.diag(np.diag(z)) @ self.h)
        return t1 + t2


@dataclass
class MatMap:
    """const + sum of term contributions; jitter is baked into const."""

    n: int
    const: np.ndarray
    terms: list

    def value(self, assign: dict) -> np.ndarray:
        out = self.const.copy()
        for term in self.terms:
            out += term.apply_matrix(assign[term.operand])
        return hermitize(out)

    def operands(self) -> list:
        seen = []
        for term in self.terms:
            if term.operand not in seen:
                seen.append(term.operand)
        return seen


@dataclass
class AffineForm:
    """Tight affine upper bound of log2|B(V)| around an expansion point.

    value = constant + sum_i Re tr(G_i (X_i - X_i^0)) / ln 2, with one
    Hermitian coefficient matrix per operand; ``constant`` is log2|B(V0)|,
    so the form is exact at the expansion point.
    """

    constant: float
    coeffs: dict
    ref: dict

    def value(self, assign: dict) -> float:
        out = self.constant
        for name, g in self.coeffs.items():
            out += float(np.real(np.trace(g @ (assign[name] - self.ref[name])))) / _LN2
        return out


def linearize_logdet(x0: np.ndarray, var_map: MatMap, at: dict) -> AffineForm:
    """Affine upper bound of log2|var_map(V)| at the point ``at``.

    ``x0`` is the (jittered) matrix value at the expansion point; it must be
    positive definite.  The gradient x0^{-1} is pulled back through each
    term's adjoint.
    """
    x0 = hermitize(x0)
    try:
        chol = np.linalg.cholesky(x0)
    except np.linalg.LinAlgError as exc:
        raise ExpansionPointError(
            "expansion matrix is not positive definite after jitter") from exc
    n = x0.shape[0]
    inv = np.linalg.solve(x0, np.eye(n, dtype=complex))
    inv = hermitize(inv)
    constant = float(2.0 * np.sum(np.log(np.real(np.diag(chol)))) / _LN2)
    coeffs, ref = {}, {}
    for term in var_map.terms:
        g = term.adjoint(inv)
        if term.operand in coeffs:
            coeffs[term.operand] = coeffs[term.operand] + g
        else:
            coeffs[term.operand] = g
            ref[term.operand] = at[term.operand]
    coeffs = {k: hermitize(v) for k, v in coeffs.items()}
    return AffineForm(constant=constant, coeffs=coeffs, ref=ref)


# -- row templates -------------------------------------------------------------

@dataclass
class RowTemplate:
    name: str
    kind: str            # rate_dl rate_ul leak_dl_ru leak_dl_eve leak_ul_ru leak_ul_eve fh_dl fh_ul
    exact_map: MatMap    # log-det kept exact
    phi_map: MatMap      # log-det replaced by the affine bound
    aux: str = None
    rhs: float = 0.0
    exact_tensor: np.ndarray = None
    exact_idx: np.ndarray = None


@dataclass
class TraceRow:
    name: str
    coeffs: dict         # operand -> Hermitian full-space coefficient
    rhs: float


class SceneProblem:
    """Variable layout, constraint templates and cached response tensors for
    one scene (optionally with rank cuts or a scalar-rescaling restriction).

    ``rank_cuts`` maps DL user index -> PSD matrix J whose range is removed
    from the feasible column space of that user's transmit covariance.
    ``theta`` switches to the scalar-readjustment problem: each DL covariance
    is theta_m * candidate_m with every other operand frozen at ``fixed``.
    """

    def __init__(self, scene: Scene, rank_cuts: dict = None,
                 theta: dict = None, fixed: DesignVariables = None):
        self.scene = scene
        self.config = scene.config
        self.real = scene.real
        self.rank_cuts = {m: j.copy() for m, j in (rank_cuts or {}).items()}
        self.theta = theta
        self.fixed_vars = fixed
        self.blocks: list = []
        self.operand_blocks: dict = {}
        self.fixed_values: dict = {}
        self._build_blocks()
        self.aux_names, self.objective_aux = self._build_aux()
        self.templates = self._build_templates()
        self.trace_rows = self._build_trace_rows()
        self._build_tensors()
        self.n_block_params = sum(b.n_params for b in self.blocks)
        self.n_z = self.n_block_params + len(self.aux_names)

    # -- variable layout ------------------------------------------------------
    def _face_lift(self, mask, cut: np.ndarray, full: int) -> np.ndarray:
        """Orthonormal basis of the masked subspace orthogonal to a cut."""
        if mask is None:
            p_mask = np.eye(full, dtype=complex)
        else:
            p_mask = np.eye(full, dtype=complex)[:, list(mask)]
        if cut is None or not np.any(cut):
            return None if p_mask.shape[1] == full else p_mask
        j_red = p_mask.conj().T @ cut @ p_mask
        w, v = np.linalg.eigh(hermitize(j_red))
        keep = w <= 1e-9 * max(1.0, w.max())
        lift = p_mask @ v[:, keep]
        return lift

    def _build_blocks(self):
        cfg, scene = self.config, self.scene
        n_tx, n_rx = cfg.total_tx_ru, cfg.total_rx_ru
        offset = 0

        def add(name, full, p, lift=None, scaled=None):
            nonlocal offset
            blk = VarBlock(name=name, full=full, p=p, lift=lift,
                           scaled=scaled, offset=offset)
            offset += blk.n_params
            self.blocks.append(blk)
            return blk

        for m in scene.dl_users:
            op = f"W{m}"
            if self.theta is not None:
                cand = self.theta[m]
                self.operand_blocks[op] = [add(f"theta{m}", n_tx, 1, scaled=cand)]
                continue
            lift = self._face_lift(scene.w_mask, self.rank_cuts.get(m), n_tx)
            p = n_tx if lift is None else lift.shape[1]
            if p == 0:
                raise ValueError(f"rank cuts eliminated the whole space of W{m}")
            self.operand_blocks[op] = [add(op, n_tx, p, lift=lift)]

        for k in scene.ul_users:
            op = f"F{k}"
            if self.theta is not None:
                self.fixed_values[op] = self.fixed_vars.f_tilde[k]
                self.operand_blocks[op] = []
                continue
            nk = int(cfg.tx_antennas_ul[k])
            self.operand_blocks[op] = [add(op, nk, nk)]

        if self.theta is not None:
            self.fixed_values["Qdl"] = self.fixed_vars.q_dl
            self.fixed_values["Qul"] = self.fixed_vars.q_ul
            self.operand_blocks["Qdl"] = []
            self.operand_blocks["Qul"] = []
            return

        if scene.qdl_structure == "fixed":
            self.fixed_values["Qdl"] = scene.qdl_fixed
            self.operand_blocks["Qdl"] = []
        elif scene.qdl_structure == "blockdiag":
            blocks = []
            off = cfg.tx_offsets
            for r in range(cfg.n_ru):
                cols = [i for i in range(off[r], off[r + 1])
                        if scene.qdl_mask is None or i in scene.qdl_mask]
                if not cols:
                    continue
                lift = np.eye(n_tx, dtype=complex)[:, cols]
                blocks.append(add(f"Qdl{r}", n_tx, len(cols), lift=lift))
            self.operand_blocks["Qdl"] = blocks
        else:
            lift = self._face_lift(scene.qdl_mask, None, n_tx)
            p = n_tx if lift is None else lift.shape[1]
            self.operand_blocks["Qdl"] = [add("Qdl", n_tx, p, lift=lift)]

        qul_blocks = []
        off = cfg.rx_offsets
        for r in scene.obs_rus:
            cols = list(range(off[r], off[r + 1]))
            lift = np.eye(n_rx, dtype=complex)[:, cols]
            qul_blocks.append(add(f"Qul{r}", n_rx, len(cols), lift=lift))
        self.operand_blocks["Qul"] = qul_blocks

    def _build_aux(self):
        scene, cfg = self.scene, self.config
        names, coeffs = [], []
        has_adv = bool(scene.adversaries())
        for m in scene.dl_users:
            names.append(f"rate_dl{m}")
            coeffs.append(float(cfg.w_dl[m]))
        for k in scene.ul_users:
            names.append(f"rate_ul{k}")
            coeffs.append(float(cfg.w_ul[k]))
        if has_adv:
            for m in scene.dl_users:
                names.append(f"leak_dl{m}")
                coeffs.append(-float(cfg.w_dl[m]))
            for k in scene.ul_users:
                names.append(f"leak_ul{k}")
                coeffs.append(-float(cfg.w_ul[k]))
        return names, np.array(coeffs)

    # -- constraint templates ---------------------------------------------------
    def _noise_ul(self, rows=None) -> np.ndarray:
        cfg = self.config
        diag = np.concatenate([np.full(int(mr), cfg.noise_ul[r])
                               for r, mr in enumerate(cfg.rx_antennas_ru)])
        if rows is not None:
            diag = diag[rows]
        return np.diag(diag.astype(complex))

    def _jit(self, m: np.ndarray) -> np.ndarray:
        return m.astype(complex) + JITTER * np.eye(m.shape[0])

    def _lambda_terms(self, pre: np.ndarray) -> list:
        cfg = self.config
        if cfg.kappa == 0.0 and cfg.beta == 0.0:
            return []
        out = [LambdaTerm("Qdl", pre, self.real.h_rr_full, cfg.kappa, cfg.beta)]
        for m in self.scene.dl_users:
            out.append(LambdaTerm(f"W{m}", pre, self.real.h_rr_full,
                                  cfg.kappa, cfg.beta))
        return out

    def _build_templates(self) -> list:
        scene, cfg, real = self.scene, self.config, self.real
        templates = []
        has_adv = bool(scene.adversaries())

        # achievable-rate rows: exact numerator, phi on the denominator
        for m in scene.dl_users:
            h = real.h_dl[m]
            nm = h.shape[0]
            base_terms = [Congruence("Qdl", h)]
            base_terms += [Congruence(f"F{k}", real.h_ud[k][m]) for k in scene.ul_users]
            const = self._jit(cfg.noise_dl[m] * np.eye(nm))
            num = MatMap(nm, const, base_terms + [Congruence(f"W{i}", h)
                                                  for i in scene.dl_users])
            den = MatMap(nm, const.copy(), base_terms + [Congruence(f"W{i}", h)
                                                         for i in scene.dl_users if i != m])
            templates.append(RowTemplate(name=f"rate_dl{m}", kind="rate_dl",
                                         exact_map=num, phi_map=den,
                                         aux=f"rate_dl{m}"))
        if scene.has_ul:
            obs = scene.obs_rows
            s_obs = np.eye(cfg.total_rx_ru)[list(obs)]
            n_obs = s_obs.shape[0]
            const = self._jit(s_obs @ self._noise_ul() @ s_obs.T)
            lam = self._lambda_terms(s_obs)
            qul = [Congruence("Qul", s_obs)] if self.operand_blocks["Qul"] or "Qul" in self.fixed_values else []
            sig = [Congruence(f"F{i}", s_obs @ real.h_ul[i]) for i in scene.ul_users]
            for k in scene.ul_users:
                num = MatMap(n_obs, const.copy(), sig + lam + qul)
                den_terms = [Congruence(f"F{i}", s_obs @ real.h_ul[i])
                             for i in scene.ul_users if i != k] + lam + qul
                den = MatMap(n_obs, const.copy(), den_terms)
                templates.append(RowTemplate(name=f"rate_ul{k}", kind="rate_ul",
                                             exact_map=num, phi_map=den,
                                             aux=f"rate_ul{k}"))

        # leakage rows: phi on the numerator, exact denominator
        if has_adv:
            for m in scene.dl_users:
                for r in scene.ru_adversaries:
                    if scene.dl_ru_observation == "combined":
                        g = real.h_eq(r, cfg)
                        n_r = real.s_dl[r].shape[0]
                        noise = np.zeros((g.shape[0], g.shape[0]), dtype=complex)
                        noise[n_r:, n_r:] = cfg.noise_ul[r] * np.eye(g.shape[0] - n_r)
                    elif scene.dl_ru_observation == "wireless":
                        g = real.h_rr_row(r, cfg)
                        noise = cfg.noise_ul[r] * np.eye(g.shape[0]).astype(complex)
                    else:  # fronthaul-only (half-duplex DL phase)
                        g = real.s_dl[r].astype(complex)
                        noise = np.zeros((g.shape[0], g.shape[0]), dtype=complex)
                    den = MatMap(g.shape[0], self._jit(noise), [Congruence("Qdl", g)])
                    num = MatMap(g.shape[0], self._jit(noise),
                                 [Congruence("Qdl", g), Congruence(f"W{m}", g)])
                    templates.append(RowTemplate(
                        name=f"leak_dl{m}_ru{r}", kind="leak_dl_ru",
                        exact_map=den, phi_map=num, aux=f"leak_dl{m}"))
                for l in range(cfg.n_eves):
                    g = real.h_re[l]
                    noise = self._jit(cfg.noise_eve[l] * np.eye(g.shape[0]))
                    den = MatMap(g.shape[0], noise, [Congruence("Qdl", g)])
                    num = MatMap(g.shape[0], noise.copy(),
                                 [Congruence("Qdl", g), Congruence(f"W{m}", g)])
                    templates.append(RowTemplate(
                        name=f"leak_dl{m}_eve{l}", kind="leak_dl_eve",
                        exact_map=den, phi_map=num, aux=f"leak_dl{m}"))
            for k in scene.ul_users:
                for r in scene.ru_adversaries:
                    s_r = real.s_ul[r]
                    h_kr = s_r @ real.h_ul[k]
                    noise = self._jit(cfg.noise_ul[r] * np.eye(s_r.shape[0]))
                    cond = self._lambda_terms(s_r) + \
                        [Congruence("Qdl", real.h_rr_row(r, cfg))]
                    den = MatMap(s_r.shape[0], noise, list(cond))
                    num = MatMap(s_r.shape[0], noise.copy(),
                                 list(cond) + [Congruence(f"F{k}", h_kr)])
                    templates.append(RowTemplate(
                        name=f"leak_ul{k}_ru{r}", kind="leak_ul_ru",
                        exact_map=den, phi_map=num, aux=f"leak_ul{k}"))
                for l in range(cfg.n_eves):
                    noise = self._jit(cfg.noise_eve[l] * np.eye(real.h_re[l].shape[0]))
                    cond = [Congruence("Qdl", real.h_re[l])]
                    den = MatMap(noise.shape[0], noise, list(cond))
                    num = MatMap(noise.shape[0], noise.copy(),
                                 list(cond) + [Congruence(f"F{k}", real.h_ue[k][l])])
                    templates.append(RowTemplate(
                        name=f"leak_ul{k}_eve{l}", kind="leak_ul_eve",
                        exact_map=den, phi_map=num, aux=f"leak_ul{k}"))

        # fronthaul rows: phi on the loaded side, exact reference
        conv = cfg.fronthaul_convention
        for r in scene.fronthaul_dl_rus:
            s = real.s_dl[r].astype(complex)
            n_r = s.shape[0]
            w_terms = [Congruence(f"W{i}", s) for i in scene.dl_users]
            num = MatMap(n_r, self._jit(np.zeros((n_r, n_r))),
                         w_terms + [Congruence("Qdl", s)])
            ref_terms = w_terms if conv == "paper" else [Congruence("Qdl", s)]
            den = MatMap(n_r, self._jit(np.zeros((n_r, n_r))), list(ref_terms))
            templates.append(RowTemplate(
                name=f"fh_dl{r}", kind="fh_dl", exact_map=den, phi_map=num,
                rhs=float(cfg.c_dl[r])))
        for r in scene.fronthaul_ul_rus:
            s = real.s_ul[r]
            n_r = s.shape[0]
            const = self._jit(cfg.noise_ul[r] * np.eye(n_r))
            received = [Congruence(f"F{i}", s @ real.h_ul[i]) for i in scene.ul_users]
            received += self._lambda_terms(s)
            h_row = s @ real.h_rr
            received += [Congruence(f"W{i}", h_row) for i in scene.dl_users]
            received += [Congruence("Qdl", h_row)]
            num = MatMap(n_r, const, received + [Congruence("Qul", s)])
            if conv == "paper":
                den = MatMap(n_r, const.copy(), list(received))
            else:
                den = MatMap(n_r, self._jit(np.zeros((n_r, n_r))),
                             [Congruence("Qul", s)])
            templates.append(RowTemplate(
                name=f"fh_ul{r}", kind="fh_ul", exact_map=den, phi_map=num,
                rhs=float(cfg.c_ul[r])))
        return templates

    def _build_trace_rows(self) -> list:
        scene, cfg = self.scene, self.config
        rows = []
        off = cfg.tx_offsets
        for r in scene.power_rus:
            d = np.zeros(cfg.total_tx_ru)
            d[off[r]:off[r + 1]] = 1.0
            g = np.diag(d).astype(complex)
            coeffs = {"Qdl": g}
            for m in scene.dl_users:
                coeffs[f"W{m}"] = g
            rows.append(TraceRow(name=f"power_dl{r}", coeffs=coeffs,
                                 rhs=float(cfg.p_dl_max[r])))
        for k in scene.ul_users:
            nk = int(cfg.tx_antennas_ul[k])
            rows.append(TraceRow(name=f"power_ul{k}",
                                 coeffs={f"F{k}": np.eye(nk, dtype=complex)},
                                 rhs=float(cfg.p_ul_max[k])))
        return rows

    def _build_tensors(self):
        """Response tensor of every exact-side log-det, built once."""
        for tpl in self.templates:
            chunks, idx = [], []
            for op in tpl.exact_map.operands():
                for blk in self.operand_blocks.get(op, []):
                    dirs = blk.basis_dirs()
                    contrib = np.zeros((dirs.shape[0], tpl.exact_map.n,
                                        tpl.exact_map.n), dtype=complex)
                    for term in tpl.exact_map.terms:
                        if term.operand == op:
                            contrib += term.apply_dirs(dirs)
                    chunks.append(contrib)
                    idx.append(np.arange(blk.offset, blk.offset + blk.n_params))
            if chunks:
                tpl.exact_tensor = np.concatenate(chunks, axis=0)
                tpl.exact_idx = np.concatenate(idx)
            else:
                tpl.exact_tensor = np.zeros((0, tpl.exact_map.n, tpl.exact_map.n),
                                            dtype=complex)
                tpl.exact_idx = np.zeros(0, dtype=int)

    # -- assignments and parameter vectors ---------------------------------------
    def assignment(self, v: DesignVariables) -> dict:
        assign = {}
        for m in self.scene.dl_users:
            assign[f"W{m}"] = v.w_tilde[m]
        for k in self.scene.ul_users:
            assign[f"F{k}"] = v.f_tilde[k]
        assign["Qdl"] = v.q_dl
        assign["Qul"] = v.q_ul
        assign.update(self.fixed_values)
        return assign

    def vars_to_z(self, v: DesignVariables, aux: dict = None) -> np.ndarray:
        z = np.zeros(self.n_z)
        assign = self.assignment(v)
        for op, blocks in self.operand_blocks.items():
            for blk in blocks:
                z[blk.sl] = blk.reduce(assign[op])
        if aux:
            for name, value in aux.items():
                z[self.n_block_params + self.aux_names.index(name)] = value
        return z

    def z_to_vars(self, z: np.ndarray) -> DesignVariables:
        cfg = self.config
        v = DesignVariables.zeros(cfg)
        if "Qdl" in self.fixed_values:
            v.q_dl = self.fixed_values["Qdl"].copy()
        if "Qul" in self.fixed_values:
            v.q_ul = self.fixed_values["Qul"].copy()
        if self.fixed_vars is not None:
            for k in self.scene.ul_users:
                v.f_tilde[k] = self.fixed_vars.f_tilde[k].copy()
        for op, blocks in self.operand_blocks.items():
            if not blocks:
                continue
            total = None
            for blk in blocks:
                x = blk.expand(z)
                total = x if total is None else total + x
            if op.startswith("W"):
                v.w_tilde[int(op[1:])] = hermitize(total)
            elif op.startswith("F"):
                v.f_tilde[int(op[1:])] = hermitize(total)
            elif op == "Qdl":
                v.q_dl = hermitize(total)
            elif op == "Qul":
                v.q_ul = hermitize(total)
        return v

    # -- materialization -----------------------------------------------------------
    def _phi_affine(self, form: AffineForm, phi_map: MatMap):
        """Absolute affine representation (const, idx, val) of an AffineForm."""
        const = form.constant
        idx_parts, val_parts = [], []
        for op, g in form.coeffs.items():
            const -= float(np.real(np.trace(g @ form.ref[op]))) / _LN2
            for blk in self.operand_blocks.get(op, []):
                if blk.scaled is not None:
                    coeff = float(np.real(np.trace(g @ blk.scaled))) / _LN2
                    idx_parts.append(np.array([blk.offset]))
                    val_parts.append(np.array([coeff]))
                else:
                    g_red = g if blk.lift is None else blk.lift.conj().T @ g @ blk.lift
                    idx_parts.append(np.arange(blk.offset, blk.offset + blk.n_params))
                    val_parts.append(grad_to_vec(hermitize(g_red)) / _LN2)
            if op in self.fixed_values:
                const += float(np.real(np.trace(g @ self.fixed_values[op]))) / _LN2
        idx = np.concatenate(idx_parts) if idx_parts else np.zeros(0, dtype=int)
        val = np.concatenate(val_parts) if val_parts else np.zeros(0)
        return const, idx, val

    def exact_row_values(self, v: DesignVariables) -> dict:
        """Exact constraint-function values at a point, from the row maps."""
        assign = self.assignment(v)
        out = {}
        for tpl in self.templates:
            exact = _chol_logdet2(tpl.exact_map.value(assign))
            phi_side = _chol_logdet2(tpl.phi_map.value(assign))
            if tpl.kind.startswith("rate"):
                out[tpl.name] = exact - phi_side          # the rate itself
            else:
                out[tpl.name] = phi_side - exact          # leakage or load
        for tr in self.trace_rows:
            val = sum(float(np.real(np.trace(g @ assign[op])))
                      for op, g in tr.coeffs.items())
            out[tr.name] = val
        return out

    def _exact_const(self, tpl: RowTemplate) -> np.ndarray:
        """Constant part of the exact-side matrix map (fixed operands folded in)."""
        out = tpl.exact_map.const.copy()
        for term in tpl.exact_map.terms:
            if term.operand in self.fixed_values:
                out += term.apply_matrix(self.fixed_values[term.operand])
        return hermitize(out)

    def build(self, v0: DesignVariables, feas_tol: float = 1e-7) -> SubproblemSpec:
        """Materialize the inner-approximated convex program at ``v0``."""
        assign0 = self.assignment(v0)
        values0 = self.exact_row_values(v0)

        # reject infeasible expansion points with diagnostics
        complaints = []
        for tpl in self.templates:
            if tpl.kind.startswith("fh") and values0[tpl.name] > tpl.rhs + feas_tol:
                complaints.append(f"{tpl.name}: load {values0[tpl.name]:.6g} "
                                  f"> capacity {tpl.rhs:.6g}")
        for tr in self.trace_rows:
            if values0[tr.name] > tr.rhs + feas_tol:
                complaints.append(f"{tr.name}: {values0[tr.name]:.6g} > {tr.rhs:.6g}")
        for op, blocks in self.operand_blocks.items():
            for blk in blocks:
                if blk.scaled is not None:
                    continue
                y = hermitize(blk.lift.conj().T @ assign0[op] @ blk.lift
                              if blk.lift is not None else assign0[op])
                lam_min = float(np.linalg.eigvalsh(y).min())
                if lam_min < -feas_tol:
                    complaints.append(f"{blk.name}: min eigenvalue {lam_min:.3g}")
        if complaints:
            raise ExpansionPointError(
                "expansion point is infeasible: " + "; ".join(complaints))

        rows = []
        aux_base = self.n_block_params
        for tpl in self.templates:
            x0 = tpl.phi_map.value(assign0)
            form = linearize_logdet(x0, tpl.phi_map, assign0)
            const, idx, val = self._phi_affine(form, tpl.phi_map)
            if tpl.kind.startswith("rate"):
                a_idx = np.concatenate([idx, [aux_base + self.aux_names.index(tpl.aux)]])
                a_val = np.concatenate([val, [1.0]])
            elif tpl.kind.startswith("leak"):
                a_idx = np.concatenate([idx, [aux_base + self.aux_names.index(tpl.aux)]])
                a_val = np.concatenate([val, [-1.0]])
            else:
                a_idx, a_val = idx, val
                const -= tpl.rhs
            rows.append(Row(name=tpl.name, aff_const=const,
                            aff_idx=a_idx.astype(int), aff_val=a_val,
                            mat_const=self._exact_const(tpl),
                            mat_tensor=tpl.exact_tensor, mat_idx=tpl.exact_idx))

        for tr in self.trace_rows:
            idx_parts, val_parts = [], []
            const = -tr.rhs
            for op, g in tr.coeffs.items():
                for blk in self.operand_blocks.get(op, []):
                    if blk.scaled is not None:
                        idx_parts.append(np.array([blk.offset]))
                        val_parts.append(np.array([
                            float(np.real(np.trace(g @ blk.scaled)))]))
                    else:
                        g_red = g if blk.lift is None else blk.lift.conj().T @ g @ blk.lift
                        idx_parts.append(np.arange(blk.offset, blk.offset + blk.n_params))
                        val_parts.append(grad_to_vec(hermitize(g_red)))
                if op in self.fixed_values:
                    const += float(np.real(np.trace(g @ self.fixed_values[op])))
            idx = np.concatenate(idx_parts).astype(int) if idx_parts \
                else np.zeros(0, dtype=int)
            val = np.concatenate(val_parts) if val_parts else np.zeros(0)
            rows.append(Row(name=tr.name, aff_const=const,
                            aff_idx=idx, aff_val=val))

        objective = np.zeros(self.n_z)
        objective[aux_base:] = self.objective_aux

        aux0 = {}
        for tpl in self.templates:
            if tpl.kind.startswith("rate"):
                aux0[tpl.aux] = values0[tpl.name]
            elif tpl.kind.startswith("leak"):
                aux0[tpl.aux] = max(aux0.get(tpl.aux, -np.inf), values0[tpl.name])
        z0 = self.vars_to_z(v0, aux=aux0)

        return SubproblemSpec(blocks=self.blocks, aux_names=self.aux_names,
                              objective=objective, rows=rows,
                              expansion_point=z0,
                              meta={"problem": self, "mode": self.scene.mode,
                                    "rank_cuts": self.rank_cuts})


def build_subproblem(v0: DesignVariables, real: ChannelRealization,
                     config: NetworkConfig, rank_cuts: dict = None,
                     scene: Scene = None) -> SubproblemSpec:
    """Materialize the inner approximation of the joint design problem at v0."""
    scene = scene or scene_fd_joint(config, real)
    return SceneProblem(scene, rank_cuts=rank_cuts).build(v0)
