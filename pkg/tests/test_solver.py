import numpy as np
import pytest

from fdcran.approximation import SceneProblem
from fdcran.channels import draw_realization
from fdcran.config import NetworkConfig
from fdcran.linalg import JITTER
from fdcran.rates import DesignVariables
from fdcran.scenes import scene_fd_joint
from fdcran.solver import SolverOptions, kkt_residual, solve
from fdcran.subproblem import Row, SubproblemSpec, VarBlock


def scalar_sdp():
    """maximize t  s.t.  t <= log2(1 + q), tr(q) <= 1, q psd (scalar)."""
    blocks = [VarBlock(name="q", full=1, p=1, offset=0)]
    rows = [
        Row("epigraph", 0.0, np.array([1]), np.array([1.0]),
            mat_const=np.array([[1.0 + JITTER]], dtype=complex),
            mat_tensor=np.array([[[1.0]]], dtype=complex),
            mat_idx=np.array([0])),
        Row("power", -1.0, np.array([0]), np.array([1.0])),
    ]
    return SubproblemSpec(blocks=blocks, aux_names=["t"],
                          objective=np.array([0.0, 1.0]), rows=rows)


def waterfill_sdp(c=2.0):
    """maximize t  s.t.  t <= log2 det(I + Q), tr(Q) <= c, Q psd (2x2).

    Optimum: Q = (c/2) I, t = 2 log2(1 + c/2)."""
    basis_idx = np.arange(4)
    from fdcran.linalg import herm_basis
    tensor = herm_basis(2).copy()
    rows = [
        Row("epigraph", 0.0, np.array([4]), np.array([1.0]),
            mat_const=np.eye(2, dtype=complex) + JITTER * np.eye(2),
            mat_tensor=tensor, mat_idx=basis_idx),
        Row("power", -c, np.array([0, 1]), np.array([1.0, 1.0])),
    ]
    return SubproblemSpec(blocks=[VarBlock(name="Q", full=2, p=2, offset=0)],
                          aux_names=["t"],
                          objective=np.array([0.0, 0.0, 0.0, 0.0, 1.0]),
                          rows=rows)


TIGHT = SolverOptions(gap_tol=1e-7)


def test_scalar_analytic_optimum():
    res = solve(scalar_sdp(), opts=TIGHT)
    assert res.status == "optimal"
    assert res.z[0] == pytest.approx(1.0, abs=1e-6)
    assert res.z[1] == pytest.approx(1.0, abs=1e-6)
    assert res.kkt_residual <= 1e-6


def test_waterfilling_matrix_optimum():
    c = 2.0
    res = solve(waterfill_sdp(c), opts=TIGHT)
    assert res.status == "optimal"
    q = np.array([[res.z[0], res.z[2] + 1j * res.z[3]],
                  [res.z[2] - 1j * res.z[3], res.z[1]]])
    assert np.allclose(q, (c / 2) * np.eye(2), atol=1e-5)
    assert res.z[4] == pytest.approx(2 * np.log2(2.0), abs=1e-6)


def test_warm_start_fixed_point():
    spec = scalar_sdp()
    res = solve(spec, opts=TIGHT)
    # restarting at the optimum and its barrier weight must not move it
    res2 = solve(spec, warm_start=res.z, opts=TIGHT, t0=res.t_final)
    assert res2.status == "optimal"
    assert res2.objective == pytest.approx(res.objective, abs=1e-8)
    assert res2.iterations <= res.iterations


def test_objective_floor_respected():
    spec = scalar_sdp()
    res = solve(spec, opts=TIGHT)
    res2 = solve(spec, warm_start=res.z, opts=TIGHT)
    assert res2.objective >= res.objective - 1e-8


def test_contradictory_rows_infeasible():
    spec = SubproblemSpec(
        blocks=[], aux_names=["t"], objective=np.array([1.0]),
        rows=[Row("le", 1.0, np.array([0]), np.array([1.0])),    # t <= -1
              Row("ge", 0.0, np.array([0]), np.array([-1.0]))])  # t >= 0
    assert solve(spec).status == "infeasible"


def test_kkt_residual_at_optimum_and_interior():
    spec = scalar_sdp()
    res = solve(spec, opts=TIGHT)
    assert kkt_residual(spec, res.z, res.t_final) <= 1e-6
    # strictly interior, clearly non-optimal point
    assert kkt_residual(spec, np.array([0.5, 0.2])) > 1e-3


def test_determinism_bit_for_bit():
    spec = scalar_sdp()
    a = solve(spec, opts=TIGHT)
    b = solve(spec, opts=TIGHT)
    assert np.array_equal(a.z, b.z)
    assert a.iterations == b.iterations


def test_merit_monotone_within_stage():
    opts = SolverOptions(gap_tol=1e-7, keep_trace=True)
    res = solve(scalar_sdp(), opts=opts)
    by_t = {}
    for rec in res.trace:
        by_t.setdefault(rec["t"], []).append(rec["decrement2"])
    # within each barrier stage the decrement shrinks overall
    for t, decs in by_t.items():
        if len(decs) >= 3:
            assert decs[-1] <= decs[0] * 10.0


def test_gap_mode_stops_early():
    opts = SolverOptions(obj_gap=0.05)
    res = solve(scalar_sdp(), opts=opts)
    assert res.status == "max_iters"
    assert res.objective <= 1.0 + 1e-9
    assert res.objective >= 0.8  # within the requested coarse gap


def test_network_subproblem_certified():
    cfg = NetworkConfig.defaults()
    real = draw_realization(cfg, 11, 0)
    problem = SceneProblem(scene_fd_joint(cfg, real))
    v0 = DesignVariables.zeros(cfg)
    for m in range(2):
        v0.w_tilde[m] = 20.0 * np.eye(8, dtype=complex)
    for k in range(2):
        v0.f_tilde[k] = 100.0 * np.eye(2, dtype=complex)
    v0.q_dl = 5.0 * np.eye(8, dtype=complex)
    v0.q_ul = 0.01 * np.eye(8, dtype=complex)
    spec = problem.build(v0)
    spec.interior_point = spec.expansion_point.copy()
    res = solve(spec)
    assert res.status == "optimal"
    assert res.kkt_residual <= 1e-6
    assert spec.max_violation(res.z) <= 1e-8
    assert res.objective >= spec.objective_value(spec.expansion_point) - 1e-7
    # solution satisfies the exact constraint set (inner approximation)
    exact = problem.exact_row_values(res.variables)
    for tpl in problem.templates:
        if tpl.kind.startswith("fh"):
            assert exact[tpl.name] <= tpl.rhs + 1e-6
    for tr in problem.trace_rows:
        assert exact[tr.name] <= tr.rhs + 1e-6
