"""Dense Lindblad master-equation evolution.

The generator d rho/dt = -i[H, rho] + sum_j (L_j rho L_j^dag
- {L_j^dag L_j, rho}/2) is applied matrix-free on the raveled density
matrix, so no dim^2 x dim^2 superoperator is ever materialized.
"""

from __future__ import annotations

import warnings

import numpy as np

from ..errors import IntegrationError, ValidationError
from ..hilbert import DensityMatrix, OperatorHandle
from .integrators import IntegratorConfig, Propagator

# Above this dimension the per-output positivity eigensolve is skipped
# (still performed on the final state).
_POSITIVITY_CHECK_DIM = 512


def lindblad_rhs(h: OperatorHandle, jumps) -> callable:
    """Matrix-free RHS acting on the raveled density matrix."""
    hmat = h.matrix
    ops = [op.matrix for op in jumps]
    normal = [(op, (op.conjugate().T @ op).tocsr()) for op in ops]
    dim = h.space.dim

    def rhs(vec: np.ndarray) -> np.ndarray:
        # Right multiplications X @ M are written (M^dag @ X^dag)^dag to keep
        # every product sparse @ dense; the identities hold for arbitrary
        # (not necessarily Hermitian) X, so numerical Hermiticity drift of
        # rho is propagated faithfully rather than amplified.
        rho = vec.reshape(dim, dim)
        out = -1j * (hmat @ rho - (hmat @ rho.conj().T).conj().T)
        for op, ldl in normal:
            lrho = op @ rho
            out += (op @ lrho.conj().T).conj().T  # L rho L^dag
            out -= 0.5 * (ldl @ rho + (ldl @ rho.conj().T).conj().T)
        return out.reshape(-1)

    return rhs


def evolve_lindblad(
    rho: DensityMatrix,
    h: OperatorHandle,
    jumps,
    cfg: IntegratorConfig,
) -> list[tuple[float, DensityMatrix]]:
    """Density matrices on the output grid under the Lindblad equation.

    Hermiticity is restored by symmetrization at each output step; the trace
    must stay within 10*rel_tol (warning) and 100*rel_tol (abort), and the
    smallest eigenvalue is monitored against -1e-6.
    """
    if rho.space != h.space:
        raise ValidationError("state and Hamiltonian live on different spaces")
    for op in jumps:
        if op.space != h.space:
            raise ValidationError("jump operator on a different space")
    if not h.hermitian:
        raise ValidationError("evolve_lindblad expects a Hermitian Hamiltonian")

    dim = h.space.dim
    rhs = lindblad_rhs(h, jumps)
    prop = Propagator(cfg, apply_rhs=rhs, hermitian=False)
    vecs = prop.to_grid(rho.matrix.reshape(-1), cfg.output_grid)

    trace0 = float(np.real(np.trace(rho.matrix)))
    out = []
    for i, t in enumerate(cfg.output_grid):
        mat = vecs[i].reshape(dim, dim)
        mat = 0.5 * (mat + mat.conj().T)
        tr = float(np.real(np.trace(mat)))
        drift = abs(tr - trace0)
        if drift > 100.0 * cfg.rel_tol:
            raise IntegrationError(
                f"trace drift {drift:.2e} at t = {t:.6g} exceeds 100*rel_tol",
                time=float(t),
            )
        if drift > 10.0 * cfg.rel_tol:
            warnings.warn(
                f"Lindblad trace drift {drift:.2e} at t = {t:.6g}", stacklevel=2
            )
        if dim <= _POSITIVITY_CHECK_DIM or i == len(cfg.output_grid) - 1:
            lo = float(np.linalg.eigvalsh(mat)[0])
            if lo < -1e-6:
                warnings.warn(
                    f"Lindblad state lost positivity (min eigenvalue {lo:.2e} "
                    f"at t = {t:.6g})",
                    stacklevel=2,
                )
        out.append((float(t), DensityMatrix(h.space, mat)))
    return out
