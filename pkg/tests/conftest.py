import numpy as np
import pytest


def split_step(psi0, x, dt, steps, potential):
    """Strang split-step for i d_t psi = (-1/2 d_x^2 + V) psi, psi shape (N,) or (N, 2).

    potential(x) returns V as (N,) or (N, 2, 2) Hermitian.
    """
    n = len(x)
    dx = x[1] - x[0]
    k = 2 * np.pi * np.fft.fftfreq(n, d=dx)
    kin = np.exp(-0.5j * k * k * dt)
    V = potential(x)
    if V.ndim == 1:
        half = np.exp(-0.5j * V * dt)
    else:
        w, U = np.linalg.eigh(V)
        half = np.einsum("nij,nj,nkj->nik", U, np.exp(-0.5j * w * dt), U.conj())
    psi = np.array(psi0, dtype=complex)

    def apply_half(p):
        return half * p if V.ndim == 1 else np.einsum("nij,nj->ni", half, p)

    for _ in range(steps):
        psi = apply_half(psi)
        f = np.fft.fft(psi, axis=0)
        f = f * (kin if psi.ndim == 1 else kin[:, None])
        psi = np.fft.ifft(f, axis=0)
        psi = apply_half(psi)
    return psi


@pytest.fixture(scope="session")
def scenario():
    from multibohm.hardy import build_scenario

    return build_scenario()


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
