"""su(2) as R^3.

An element x corresponds to x_a t_a with t_a = -i sigma_a, so that
[t_a, t_b] = 2 eps_abc t_c.  The pointwise norm is the Euclidean norm of x,
which equals the modulus of the eigenvalues of x_a t_a.  The invariant
inner product used for energies is -tr(XY) = 2 x.y.
"""

import numpy as np

TRACE_FACTOR = 2.0

_PAULI = np.array(
    [[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex
)
BASIS = -1j * _PAULI


def bracket(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return 2.0 * np.cross(x, y)


def to_matrix(x: np.ndarray) -> np.ndarray:
    return np.einsum("...a,aij->...ij", x, BASIS)


def from_matrix(m: np.ndarray) -> np.ndarray:
    # x_a = -tr(m t_a)/2 ... using tr(t_a t_b) = -2 delta_ab
    return np.real(-0.5 * np.einsum("...ij,aji->...a", m, BASIS))


def group_element(x: np.ndarray) -> np.ndarray:
    """exp(x_a t_a) in SU(2)."""
    x = np.asarray(x, dtype=float)
    th = np.linalg.norm(x, axis=-1)
    safe = np.where(th > 0, th, 1.0)
    s = np.where(th > 0, np.sin(th) / safe, 1.0)
    eye = np.broadcast_to(np.eye(2, dtype=complex), x.shape[:-1] + (2, 2))
    return np.cos(th)[..., None, None] * eye + s[..., None, None] * to_matrix(x)


def adjoint_action(g: np.ndarray, x: np.ndarray) -> np.ndarray:
    """g x g^{-1} for x in su(2) (vector form)."""
    gi = np.conj(np.swapaxes(g, -1, -2))
    return from_matrix(g @ to_matrix(x) @ gi)


def split_parallel(x: np.ndarray, direction: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split x into parts parallel and transverse to a unit direction."""
    par = np.sum(x * direction, axis=-1, keepdims=True) * direction
    return par, x - par
