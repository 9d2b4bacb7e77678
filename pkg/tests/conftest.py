import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from parareal_md.core import REDUCED, ParticleSystem

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def fd_forces(energy, system, step=1e-5):
    """Minus the central-difference gradient of ``energy(system)``."""
    pos = system.positions
    out = np.zeros_like(pos)
    for a in range(system.n):
        for ax in range(3):
            plus = pos.copy()
            minus = pos.copy()
            plus[a, ax] += step
            minus[a, ax] -= step
            out[a, ax] = -(energy(system.with_positions(plus))
                           - energy(system.with_positions(minus))) / (2 * step)
    return out


def rel_norm_error(f, ref):
    return float(np.linalg.norm(f - ref) / np.linalg.norm(ref))


def make_system(positions, charges=None, masses=None, velocities=None, bonds=(), box=None,
                units=REDUCED):
    pos = np.asarray(positions, float).reshape(-1, 3)
    n = len(pos)
    return ParticleSystem(
        pos,
        np.zeros((n, 3)) if velocities is None else velocities,
        np.zeros(n) if charges is None else charges,
        np.ones(n) if masses is None else masses,
        box if box is not None else [max(10.0, float(np.ptp(pos)) + 10.0)] * 3,
        tuple(bonds),
        units=units,
    )


@pytest.fixture
def system_factory():
    return make_system


# -- acceptance report --------------------------------------------------------

ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = {}


@pytest.fixture
def acceptance():
    """Record ``(criterion, part, ok, detail)``; a summary line per criterion is printed at the end."""
    def record(criterion: int, part: str, ok: bool, detail: str = "") -> bool:
        ACCEPTANCE.setdefault(criterion, []).append((part, bool(ok), detail))
        return bool(ok)
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[criterion]
        status = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {criterion}")
        for part, ok, detail in parts:
            terminalreporter.write_line(f"    {'ok  ' if ok else 'FAIL'} {part}: {detail}")
