import numpy as np
import pytest
from pydantic import ValidationError
from spinfrac.solvers import (
    AmConfig,
    MonolithicConfig,
    NewtonConfig,
    SolverError,
    SubproblemError,
    am_solve,
    am_step,
    monolithic_solve,
)


@pytest.fixture()
def reference(pulled_model, initial_state):
    """Coupled Newton solution to a tolerance far below the AM ones."""
    config = MonolithicConfig(
        variant="ND", eps_rel_glob_nonl=1e-12, eps_abs_glob_nonl=1e-14
    )
    state, stats = monolithic_solve(pulled_model, initial_state, config)
    assert stats.converged
    return state


@pytest.mark.parametrize("variant", ["ND", "NK", "INK"])
def test_am_converges(pulled_model, initial_state, tight_newton, reference, variant):
    config = AmConfig(
        variant=variant,
        eps_rel_glob_nonl=1e-9,
        eps_abs_glob_nonl=0.0,
        subproblem=tight_newton,
    )
    state, stats = am_solve(pulled_model, initial_state, config)
    residual = np.linalg.norm(pulled_model.residual(state))
    assert stats.converged
    assert stats.reason == "residual"
    assert residual <= 1e-9 * stats.residual_norm0
    assert stats.residual_norm == pytest.approx(residual)
    assert stats.iterations == len(stats.records) > 1
    assert stats.nl_u >= 1
    assert stats.lin_u >= stats.nl_u
    assert np.allclose(state.C, reference.C, atol=1e-5)
    assert np.allclose(state.U, reference.U, atol=1e-7)
    # The pull damages the patch almost uniformly.
    assert 0.1 < state.C.min() <= state.C.max() < 0.4
    # Dirichlet values are untouched.
    constrained = pulled_model.dofmap.constrained_dofs
    assert np.array_equal(state.x[constrained], initial_state.x[constrained])


def test_am_staggered(pulled_model, initial_state, reference):
    config = AmConfig(variant="ST")
    assert config.subproblem_config.variant == "ND"
    state, stats = am_solve(pulled_model, initial_state, config)
    assert stats.converged
    assert stats.reason == "change"
    last = stats.records[-1]
    assert last.c_change <= config.eps_c_diff
    assert last.u_change <= config.disp_diff_tol
    assert np.allclose(state.C, reference.C, atol=1e-4)


def test_am_staggered_skips_converged_state(pulled_model, reference):
    state, stats = am_solve(pulled_model, reference, AmConfig(variant="ST"))
    assert stats.converged
    assert stats.iterations == 0
    assert state is reference


def test_am_energy_decreases(pulled_model, initial_state):
    config = AmConfig(variant="ND", eps_rel_glob_nonl=1e-8)
    _, stats = am_solve(pulled_model, initial_state, config)
    merits = [record.merit for record in stats.records]
    assert all(b <= a + 1e-14 for a, b in zip(merits[:-1], merits[1:]))


def test_am_step(pulled_model, initial_state):
    sweep = am_step(pulled_model, initial_state, NewtonConfig(variant="ND"))
    U, C, C_prev = sweep.state.U, sweep.state.C, sweep.state.C_prev
    residual_c = pulled_model.residual_c(U, C, C_prev)
    residual_u = pulled_model.residual_u(U, initial_state.C)
    assert np.linalg.norm(residual_c) <= 1e-6 * sweep.c.stats.residual_norm0 + 1e-7
    assert np.linalg.norm(residual_u) <= 1e-6 * sweep.u.stats.residual_norm0 + 1e-7
    assert sweep.u.stats.iterations >= 1
    assert sweep.c.stats.iterations >= 1


def test_am_iteration_limit(pulled_model, initial_state):
    config = AmConfig(variant="ND", eps_rel_glob_nonl=1e-12, max_outer_iters=1)
    with pytest.raises(SolverError, match="AM-ND: no convergence in 1"):
        am_solve(pulled_model, initial_state, config)


def test_am_subproblem_failure(pulled_model, initial_state):
    # A zero tolerance cannot be met in a single iteration.
    newton = NewtonConfig(
        variant="ND", max_iters=1, eps_abs_sub_nonl=0.0, eps_rel_sub_nonl=0.0
    )
    with pytest.raises(SubproblemError, match=r"\[u\]") as err:
        am_solve(pulled_model, initial_state, AmConfig(variant="ND", subproblem=newton))
    assert err.value.field == "u"


def test_am_config():
    with pytest.raises(ValidationError):
        AmConfig(variant="ST", eps_c_diff=0.0)
    config = AmConfig(variant="NK", subproblem=NewtonConfig(variant="ND"))
    assert config.subproblem_config.variant == "NK"


def test_am_step_tolerance_keeps_residual_verdict(pulled_model, initial_state):
    config = AmConfig(
        variant="INK", eps_rel_glob_nonl=1e-12, eps_abs_glob_nonl=0.0, stol=10.0
    )
    _, stats = am_solve(pulled_model, initial_state, config)
    assert stats.iterations == 1
    assert stats.reason == "stol"
    assert not stats.converged
    assert stats.residual_norm == stats.records[-1].residual_norm
