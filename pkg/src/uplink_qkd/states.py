"""Two-qubit polarization states and measurement probabilities.

The joint basis ordering is {HH, HV, VH, VV} everywhere (first slot:
satellite/up-link photon, second slot: fibre photon).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-12
EIGENVALUE_TOL = -1e-10

# Jones vectors of the six canonical polarization analyzer settings.
_SQ2 = 1.0 / math.sqrt(2.0)
PROJECTOR_STATES: dict[str, np.ndarray] = {
    "H": np.array([1.0, 0.0], dtype=complex),
    "V": np.array([0.0, 1.0], dtype=complex),
    "D": np.array([_SQ2, _SQ2], dtype=complex),
    "A": np.array([_SQ2, -_SQ2], dtype=complex),
    "L": np.array([_SQ2, 1j * _SQ2], dtype=complex),
    "R": np.array([_SQ2, -1j * _SQ2], dtype=complex),
}

BASIS_SETTINGS = {"Z": ("H", "V"), "X": ("D", "A"), "Y": ("L", "R")}


@dataclass(frozen=True)
class TwoQubitState:
    """Validated 4x4 density operator over {HH, HV, VH, VV}."""

    density_matrix: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        rho = np.array(self.density_matrix, dtype=complex)
        if rho.shape != (4, 4):
            raise ValueError(f"density matrix must be 4x4, got {rho.shape}")
        if np.max(np.abs(rho - rho.conj().T)) > HERMITICITY_TOL:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(rho).real - 1.0) > TRACE_TOL or abs(np.trace(rho).imag) > TRACE_TOL:
            raise ValueError("density matrix trace must be 1")
        if np.min(np.linalg.eigvalsh(rho)) < EIGENVALUE_TOL:
            raise ValueError("density matrix is not positive semidefinite")
        rho.flags.writeable = False
        object.__setattr__(self, "density_matrix", rho)

    def marginal(self, party: int) -> np.ndarray:
        """Single-qubit reduced density matrix; party 0 = satellite arm."""
        rho = self.density_matrix.reshape(2, 2, 2, 2)
        if party == 0:
            return np.einsum("ikjk->ij", rho)
        if party == 1:
            return np.einsum("kikj->ij", rho)
        raise ValueError("party must be 0 or 1")


def _projector(setting: str) -> np.ndarray:
    try:
        v = PROJECTOR_STATES[setting]
    except KeyError:
        raise ValueError(
            f"unknown analyzer setting {setting!r}; expected one of "
            f"{sorted(PROJECTOR_STATES)}"
        ) from None
    return np.outer(v, v.conj())


def make_phi_plus(
    alpha: float,
    phi: float,
    visibility_z: float = 1.0,
    visibility_x: float = 1.0,
) -> TwoQubitState:
    """Entangled state cos(a)|HH> + sin(a)e^{i phi}|VV> with basis noise.

    Imperfections are modeled as two independent admixtures: a one-sided
    bit flip (weight (1-visibility_z)/2) producing Z-basis anti-correlations,
    and a one-sided phase flip (weight (1-visibility_x)/2) producing X-basis
    errors.  For the balanced state (alpha=pi/4, phi=0) the resulting
    Z-error and X-error probabilities equal those weights exactly.
    """
    if not (math.isfinite(alpha) and math.isfinite(phi)):
        raise ValueError("alpha and phi must be finite")
    for name, v in (("visibility_z", visibility_z), ("visibility_x", visibility_x)):
        if not (math.isfinite(v) and 0.0 <= v <= 1.0):
            raise ValueError(f"{name} must be in [0, 1]")

    psi = np.zeros(4, dtype=complex)
    psi[0] = math.cos(alpha)                              # HH
    psi[3] = math.sin(alpha) * np.exp(1j * phi)           # VV
    rho0 = np.outer(psi, psi.conj())

    # One-sided Pauli X / Z on the satellite qubit.
    x1 = np.kron(np.array([[0, 1], [1, 0]], dtype=complex), np.eye(2))
    z1 = np.kron(np.array([[1, 0], [0, -1]], dtype=complex), np.eye(2))

    p_z = (1.0 - visibility_z) / 2.0   # bit-flip weight -> Z errors
    p_x = (1.0 - visibility_x) / 2.0   # phase-flip weight -> X errors
    rho = (
        (1.0 - p_z - p_x) * rho0
        + p_z * (x1 @ rho0 @ x1.conj().T)
        + p_x * (z1 @ rho0 @ z1.conj().T)
    )
    # Symmetrize away last-bit float asymmetry before validation.
    rho = 0.5 * (rho + rho.conj().T)
    return TwoQubitState(rho)


def projection_probability(state: TwoQubitState, setting_a: str, setting_b: str) -> float:
    """P(click behind setting_a, click behind setting_b) = Tr(rho Pa x Pb)."""
    proj = np.kron(_projector(setting_a), _projector(setting_b))
    return float(np.trace(state.density_matrix @ proj).real)


def basis_error_probability(state: TwoQubitState, basis: str) -> float:
    """Anti-correlation probability within one basis ('Z' or 'X')."""
    lo, hi = BASIS_SETTINGS[basis]
    anti = (projection_probability(state, lo, hi)
            + projection_probability(state, hi, lo))
    total = anti + (projection_probability(state, lo, lo)
                    + projection_probability(state, hi, hi))
    return anti / total


def purity(state: TwoQubitState) -> float:
    """Tr(rho^2), between 1/4 (maximally mixed) and 1 (pure)."""
    rho = state.density_matrix
    return float(np.trace(rho @ rho).real)
