import numpy as np
import pytest
from pydantic import ValidationError

from mlfsi.config import resolve_config
from mlfsi.core import (
    AssemblyConsistencyError,
    BoundsError,
    CompatibilityError,
    DomainError,
    FsiError,
    InvariantViolation,
    MeshValidationError,
    NumericError,
    ParseError,
    SimulationService,
    exit_code_for,
    normalize_error,
)
from mlfsi.errors import LedgerViolation, MeshParseError
from mlfsi.hspace import energy
from mlfsi.schemas import RunConfig


@pytest.mark.parametrize(
    "exc,code",
    [
        (BoundsError("x"), 2),
        (DomainError("x"), 2),
        (MeshParseError("x", line=3), 2),
        (MeshValidationError("x", entity="node", entity_id=1), 2),
        (InvariantViolation("x", step=4), 3),
        (LedgerViolation("x", step=4), 3),
        (AssemblyConsistencyError("x", deviation=1.0), 3),
        (CompatibilityError("x", condition="i"), 3),
        (NumericError("x", residual=1e-3), 4),
        (np.linalg.LinAlgError("x"), 4),
        (KeyError("x"), 1),
    ],
)
def test_exit_codes(exc, code):
    assert exit_code_for(exc) == code


def test_normalize_validation_error():
    with pytest.raises(ValidationError) as info:
        RunConfig(refinement=12)
    err = normalize_error(info.value)
    assert isinstance(err, BoundsError)
    assert isinstance(normalize_error(RuntimeError("Factor is exactly singular")), NumericError)
    other = KeyError("k")
    assert normalize_error(other) is other


def test_error_context():
    assert InvariantViolation("能量上升", step=7).step == 7
    assert "第 7 步" in str(InvariantViolation("能量上升", step=7))
    err = ParseError("坏行", line=2, section="NODES")
    assert err.line == 2 and "NODES" in str(err)
    assert issubclass(BoundsError, ValueError) and issubclass(BoundsError, FsiError)


def service(tmp_path, **values):
    cfg, defaults = resolve_config({}, {"out": str(tmp_path), **values})
    return SimulationService(cfg, defaults)


def test_initial_state_unit_energy(tmp_path, pencil1):
    svc = service(tmp_path, refinement=1, seed=4)
    x = svc.initial_state(pencil1)
    assert energy(x, pencil1.M) == pytest.approx(1.0, rel=1e-12)
    zero = service(tmp_path, initial="zero").initial_state(pencil1)
    assert not np.any(zero.coeffs)


def test_geometry_from_file(tmp_path, mesh0):
    from mlfsi.geometry import save_mesh

    path = tmp_path / "base.mesh"
    path.write_text(save_mesh(mesh0), encoding="utf-8")
    mesh = service(tmp_path, geometry=str(path), refinement=1).build_mesh()
    assert mesh.n_nodes == 81
    with pytest.raises(BoundsError):
        service(tmp_path, geometry=str(tmp_path / "missing.mesh")).build_mesh()


def test_check_report(tmp_path):
    report = service(tmp_path, refinement=0).check()
    assert report.passed, [r.line() for r in report.results]
    assert [r.name for r in report.results] == [
        "dissipation_identity",
        "junction_cancellation",
        "adjoint_identity",
        "resolvent_round_trip",
        "static_round_trip",
        "compatibility_validation",
        "contraction_ledger",
        "coercivity",
    ]


def test_simulate_summary(tmp_path):
    summary = service(tmp_path, refinement=0, dt=0.1, t_end=1.0).simulate()
    assert summary.steps == 10
    assert summary.initial_energy == pytest.approx(1.0)
    assert summary.final_energy < summary.initial_energy
    assert summary.compat_drift == 0.0
    assert (tmp_path / "final.state").exists()
