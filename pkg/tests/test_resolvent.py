import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, strategies as st

from mlfsi.assembly import apply_generator, junction_flux_sum, junction_flux_table
from mlfsi.diagnostics import manufactured_resolvent_case
from mlfsi.errors import DimensionError, DomainError
from mlfsi.hspace import StateH, energy, random_state
from mlfsi.resolvent import (
    assemble_b_form,
    coercivity_constant,
    rhs_f_lambda,
    solve_monolithic,
    solve_resolvent,
    solve_static,
    static_inverse_bound,
)


def test_b_form_symmetric_positive(mesh1, pencil1):
    system = assemble_b_form(mesh1, 1.0, pencil=pencil1)
    B = system.B
    assert abs(B - B.T).max() == 0.0
    sla.cholesky(B.toarray())


def test_b_form_mass_dominates_for_large_lambda(mesh1, pencil1):
    lam = 1e6
    system = assemble_b_form(mesh1, lam, pencil=pencil1)
    mass = system.Mv
    heat = pencil1.Af[system.dofs.velocity_slots][:, system.dofs.velocity_slots]
    diff = system.B - lam * mass - heat
    assert np.linalg.norm(diff.toarray()) <= 1e-4 * np.linalg.norm((lam * mass).toarray())


@pytest.mark.parametrize("lam", [0.0, -1.0, 1e-7, float("nan")])
def test_lambda_guard(mesh0, lam):
    with pytest.raises(DomainError):
        assemble_b_form(mesh0, lam)


def test_rhs_zero_and_locality(pencil1):
    dofs = pencil1.dofs
    assert not np.any(rhs_f_lambda(StateH.zeros(dofs), 1.0))
    c = np.zeros(dofs.total_dim)
    c[dofs.offsets["u_interior"]] = 1.0
    rhs = rhs_f_lambda(StateH(dofs, c), 1.0)
    vo = dofs.velocity_offsets
    assert np.any(rhs[vo["u_interior"]])
    assert not np.any(rhs[vo["w1_interior"]])


@given(
    a=st.floats(-10.0, 10.0, allow_nan=False),
    b=st.floats(-10.0, 10.0, allow_nan=False),
    lam=st.floats(1e-3, 1e3, allow_nan=False),
    seed=st.integers(0, 2**32 - 1),
)
def test_rhs_linear(pencil1, a, b, lam, seed):
    dofs = pencil1.dofs
    rng = np.random.default_rng(seed)
    x, y = random_state(dofs, rng), random_state(dofs, rng)
    lhs = rhs_f_lambda(x * a + y * b, lam)
    rhs = a * rhs_f_lambda(x, lam) + b * rhs_f_lambda(y, lam)
    scale = np.linalg.norm(rhs_f_lambda(x, lam)) * abs(a) + np.linalg.norm(rhs_f_lambda(y, lam)) * abs(b)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * max(scale, 1.0)


def test_zero_data(pencil1):
    zero = StateH.zeros(pencil1.dofs)
    assert not np.any(solve_resolvent(zero, 1.0).coeffs)
    assert not np.any(solve_static(zero, pencil1).coeffs)


@pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
def test_manufactured_round_trip(mesh2, pencil2, lam):
    x, phi = manufactured_resolvent_case(mesh2, lam, seed=7, pencil=pencil2)
    got = solve_resolvent(phi, lam)
    assert np.linalg.norm(got.coeffs - x.coeffs) <= 1e-8 * np.linalg.norm(x.coeffs)
    mono = solve_monolithic(phi, lam)
    assert np.linalg.norm(got.coeffs - mono.coeffs) <= 1e-9 * np.linalg.norm(mono.coeffs)


@pytest.mark.parametrize("lam", [0.1, 1.0])
def test_contraction_bound(pencil1, rng, lam):
    M = pencil1.M
    for _ in range(20):
        phi = random_state(pencil1.dofs, rng)
        x = solve_resolvent(phi, lam)
        assert np.sqrt(energy(x, M)) <= (1.0 / lam) * np.sqrt(energy(phi, M)) * (1.0 + 1e-10)


def test_static_round_trip(pencil2, rng):
    for _ in range(5):
        x = random_state(pencil2.dofs, rng)
        got = solve_static(apply_generator(pencil2, x), pencil2)
        assert np.linalg.norm(got.coeffs - x.coeffs) <= 1e-8 * np.linalg.norm(x.coeffs)


def test_static_inverse_bound(mesh1):
    report = static_inverse_bound(mesh1, draws=10, seed=3)
    assert report["draws"] == 10
    assert 0.0 < report["mean_ratio"] <= report["max_ratio"] < np.inf


@pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
def test_coercivity(mesh1, pencil1, lam):
    c = coercivity_constant(assemble_b_form(mesh1, lam, pencil=pencil1))
    assert c >= min(lam, 1.0 / lam) * (1.0 - 1e-9)


def test_layout_mismatch(mesh0, pencil1):
    system = assemble_b_form(mesh0, 1.0)
    with pytest.raises(DimensionError):
        system.solve(StateH.zeros(pencil1.dofs))


def test_resolvent_identity(pencil1, rng):
    # R(λ₁) − R(λ₂) = (λ₂ − λ₁) R(λ₁) R(λ₂)
    lam1, lam2 = 0.5, 2.0
    for _ in range(10):
        phi = random_state(pencil1.dofs, rng)
        r1, r2 = solve_resolvent(phi, lam1), solve_resolvent(phi, lam2)
        r12 = solve_resolvent(r2, lam1)
        lhs = r1 - r2
        rhs = (lam2 - lam1) * r12
        assert np.sqrt(energy(lhs - rhs, pencil1.M)) <= 1e-8 * np.sqrt(energy(r1, pencil1.M))


def test_static_solution_cancels_junction_fluxes(pencil2, rng):
    for _ in range(5):
        x = solve_static(random_state(pencil2.dofs, rng), pencil2)
        table = junction_flux_table(pencil2, x)
        h1 = dict(zip(pencil2.dofs.gamma.tolist(), x.h1))
        scale = sum((abs(r.flux_in) + abs(r.flux_out)) * abs(h1[int(r.node)]) for r in table.itertuples())
        assert abs(junction_flux_sum(pencil2, x)) <= 1e-13 * max(scale, 1.0)
        assert np.abs(table["sum"]).max() <= 1e-12 * max(np.abs(table["flux_in"]).max(), 1.0)
