"""Materialized convex program instances.

A subproblem is a linear objective over a real parameter vector ``z``
(Hermitian variable blocks in a compact real parameterization, followed by
auxiliary scalars) subject to rows of the form

    aff_const + aff_val . z[aff_idx] - log2 det(mat_const + T . z[mat_idx]) <= 0

(affine-only rows drop the log-det part) plus a PSD cone on every variable
block.  The solver consumes exactly this structure; the builder in
:mod:`fdcran.approximation` produces it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import herm_basis, herm_to_vec, vec_to_herm


@dataclass
class VarBlock:
    """One Hermitian PSD variable block.

    ``lift`` embeds the reduced p x p Hermitian variable into the full space
    (X_full = lift Y lift^H); identity when None.  A block with ``scaled``
    set is a 1x1 nonnegative scalar multiplying a fixed full-space matrix.
    """

    name: str
    full: int
    p: int
    lift: np.ndarray = None
    scaled: np.ndarray = None
    offset: int = 0

    @property
    def n_params(self) -> int:
        return self.p * self.p

    @property
    def sl(self) -> slice:
        return slice(self.offset, self.offset + self.n_params)

    def basis_dirs(self) -> np.ndarray:
        """(n_params, full, full) full-space response to each basis element."""
        if self.scaled is not None:
            return self.scaled[None]
        basis = herm_basis(self.p)
        if self.lift is None:
            return basis
        return np.einsum("ab,tbc,dc->tad", self.lift, basis, self.lift.conj())

    def expand(self, z: np.ndarray) -> np.ndarray:
        """Full-space matrix value of this block at z."""
        if self.scaled is not None:
            return float(z[self.offset]) * self.scaled
        y = vec_to_herm(z[self.sl], self.p)
        if self.lift is None:
            return y
        return self.lift @ y @ self.lift.conj().T

    def reduce(self, x_full: np.ndarray) -> np.ndarray:
        """Parameter vector representing a full-space matrix (exact when the
        matrix lies in the block's face)."""
        if self.scaled is not None:
            denom = float(np.real(np.vdot(self.scaled, self.scaled)))
            coef = float(np.real(np.vdot(self.scaled, x_full))) / max(denom, 1e-300)
            return np.array([coef])
        y = x_full if self.lift is None else self.lift.conj().T @ x_full @ self.lift
        return herm_to_vec(y)


@dataclass
class Row:
    """One constraint row, f(z) <= 0 (see module docstring)."""

    name: str
    aff_const: float
    aff_idx: np.ndarray
    aff_val: np.ndarray
    mat_const: np.ndarray = None     # (n, n) complex, jitter included
    mat_tensor: np.ndarray = None    # (D, n, n) complex
    mat_idx: np.ndarray = None       # (D,)

    @property
    def n(self) -> int:
        return 0 if self.mat_const is None else self.mat_const.shape[0]

    def matrix(self, z: np.ndarray) -> np.ndarray:
        b = self.mat_const.copy()
        if self.mat_tensor is not None and self.mat_idx.size:
            b = b + np.tensordot(z[self.mat_idx], self.mat_tensor, axes=(0, 0))
        return b

    def value(self, z: np.ndarray) -> float:
        """f(z); +inf when the log-det argument is not PD."""
        v = self.aff_const + float(self.aff_val @ z[self.aff_idx])
        if self.mat_const is None:
            return v
        b = self.matrix(z)
        try:
            chol = np.linalg.cholesky(b)
        except np.linalg.LinAlgError:
            return np.inf
        return v - float(2.0 * np.sum(np.log(np.real(np.diag(chol)))) / np.log(2.0))


@dataclass
class SubproblemSpec:
    """A fully materialized convex program instance.

    ``rows`` mixes the linearized rate/leakage/fronthaul rows with the
    affine trace rows; ``blocks`` double as the PSD cone memberships; rank
    cuts are realized through the block lifts and recorded in ``meta``.
    """

    blocks: list
    aux_names: list
    objective: np.ndarray
    rows: list
    n_z: int = 0
    expansion_point: np.ndarray = None
    interior_point: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.n_z:
            self.n_z = sum(b.n_params for b in self.blocks) + len(self.aux_names)

    @property
    def n_aux(self) -> int:
        return len(self.aux_names)

    def aux_index(self, name: str) -> int:
        base = sum(b.n_params for b in self.blocks)
        return base + self.aux_names.index(name)

    def aux_values(self, z: np.ndarray) -> dict:
        base = sum(b.n_params for b in self.blocks)
        return {name: float(z[base + i]) for i, name in enumerate(self.aux_names)}

    def block(self, name: str) -> VarBlock:
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(name)

    def objective_value(self, z: np.ndarray) -> float:
        return float(self.objective @ z)

    def max_violation(self, z: np.ndarray) -> float:
        """Largest row value and cone violation at z (<= 0 means feasible)."""
        worst = 0.0
        for row in self.rows:
            worst = max(worst, row.value(z))
        for b in self.blocks:
            y = vec_to_herm(z[b.sl], b.p) if b.scaled is None else np.array([[z[b.offset]]])
            worst = max(worst, float(-np.linalg.eigvalsh(y).min()))
        return worst

    def dump(self) -> str:
        """Constraint-by-constraint text dump for debugging and golden tests."""
        out = []
        out.append(f"subproblem n_z={self.n_z} blocks={len(self.blocks)} "
                   f"rows={len(self.rows)} aux={len(self.aux_names)}")
        for b in self.blocks:
            kind = "scaled" if b.scaled is not None else ("lifted" if b.lift is not None else "plain")
            out.append(f"block {b.name} p={b.p} full={b.full} kind={kind} offset={b.offset}")
        out.append("objective " + " ".join(
            f"{i}:{v:+.12e}" for i, v in enumerate(self.objective) if v != 0.0))
        for row in self.rows:
            head = f"row {row.name} aff_const={row.aff_const:+.12e}"
            aff = " ".join(f"{i}:{v:+.12e}" for i, v in zip(row.aff_idx, row.aff_val))
            if row.mat_const is None:
                out.append(f"{head} affine [{aff}]")
            else:
                out.append(f"{head} n={row.n} D={0 if row.mat_idx is None else row.mat_idx.size} "
                           f"|C|={np.abs(row.mat_const).sum():.12e} "
                           f"|T|={np.abs(row.mat_tensor).sum():.12e} [{aff}]")
        return "\n".join(out)
