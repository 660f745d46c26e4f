"""Symplectic transforms for QND, beamsplitter and squeezing couplings, plus
homodyne conditioning.

A transform stores the matrix ``S`` acting on covariance matrices as
``sigma -> S.T @ sigma @ S``. Equivalently the Heisenberg-picture map of the
quadrature vector is ``R -> S.T @ R``, so column ``j`` of ``S`` lists the
input quadratures that make up output quadrature ``j``. Builders below write
down the Heisenberg map ``M`` of the bilinear Hamiltonian (with
``[x, p] = i``, ``dR/dt = i[H, R]``) and store ``S = M.T``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .state import GaussianState, InvalidArgument, symplectic_form

log = logging.getLogger(__name__)

SYMPLECTIC_TOL = 1e-10


def symplectic_residual(matrix: np.ndarray) -> float:
    """``max |S^T Omega S - Omega|`` for a square even-dimensional matrix."""
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] % 2:
        raise InvalidArgument(f"expected a 2N x 2N matrix, got shape {m.shape}")
    omega = symplectic_form(m.shape[0] // 2)
    return float(np.max(np.abs(m.T @ omega @ m - omega)))


def is_symplectic(matrix: np.ndarray, tol: float = SYMPLECTIC_TOL) -> bool:
    m = np.asarray(matrix, dtype=float)
    scale = max(1.0, float(np.max(np.abs(m))) ** 2)
    return symplectic_residual(m) <= tol * scale


@dataclass(frozen=True, eq=False)
class SymplecticTransform:
    """A certified symplectic matrix; construction fails if ``S^T Omega S != Omega``."""

    matrix: np.ndarray
    description: str = ""

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64, copy=True)
        if not np.all(np.isfinite(m)):
            raise InvalidArgument("transform has non-finite entries")
        if not is_symplectic(m):
            raise InvalidArgument(
                f"matrix is not symplectic (residual {symplectic_residual(m):.3e}): {self.description}"
            )
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_modes(self) -> int:
        return self.dim // 2

    @property
    def heisenberg(self) -> np.ndarray:
        """The map ``R -> M R`` on quadrature operators (``M = S.T``)."""
        return self.matrix.T

    def then(self, other: "SymplecticTransform") -> "SymplecticTransform":
        """This transform followed by ``other``."""
        if other.dim != self.dim:
            raise InvalidArgument(f"dimension mismatch {self.dim} vs {other.dim}")
        desc = "; ".join(d for d in (self.description, other.description) if d)
        return SymplecticTransform(self.matrix @ other.matrix, desc)

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "matrix": [[float(v) for v in row] for row in self.matrix],
            "description": self.description,
        }

    @classmethod
    def from_json(cls, data: dict) -> "SymplecticTransform":
        t = cls(np.array(data["matrix"], dtype=float), data.get("description", ""))
        if data.get("dim", t.dim) != t.dim:
            raise InvalidArgument("dim does not match matrix size")
        return t


def identity(n: int) -> SymplecticTransform:
    return SymplecticTransform(np.eye(2 * n), "identity")


def compose(*transforms: SymplecticTransform) -> SymplecticTransform:
    """Compose transforms in application order."""
    if not transforms:
        raise InvalidArgument("compose needs at least one transform")
    out = transforms[0]
    for t in transforms[1:]:
        out = out.then(t)
    return out


def _check_modes(n: int, *modes: int) -> None:
    if n < 1:
        raise InvalidArgument(f"need at least one mode, got {n}")
    for m in modes:
        if not isinstance(m, (int, np.integer)) or not 0 <= m < n:
            raise InvalidArgument(f"mode {m!r} out of range for {n} modes")
    if len(set(modes)) != len(modes):
        raise InvalidArgument(f"modes must be distinct, got {modes}")


def _from_heisenberg(m: np.ndarray, description: str) -> SymplecticTransform:
    return SymplecticTransform(m.T, description)


def qnd_general(n: int, atom: int, light: int, kappa: float, alpha: float) -> SymplecticTransform:
    """Coupling ``H = kappa p_L (p_A cos(alpha) + x_A sin(alpha))``.

    ``p_L`` and the atomic combination ``p_A cos + x_A sin`` are both conserved,
    so the exponential of the generator terminates after the linear term::

        x_A -> x_A + kappa cos(alpha) p_L
        p_A -> p_A - kappa sin(alpha) p_L
        x_L -> x_L + kappa (p_A cos(alpha) + x_A sin(alpha))
    """
    _check_modes(n, atom, light)
    c, s = np.cos(alpha), np.sin(alpha)
    xa, pa, xl, pl = 2 * atom, 2 * atom + 1, 2 * light, 2 * light + 1
    m = np.eye(2 * n)
    m[xa, pl] += kappa * c
    m[pa, pl] -= kappa * s
    m[xl, pa] += kappa * c
    m[xl, xa] += kappa * s
    return _from_heisenberg(m, f"qnd_general(A={atom}, L={light}, kappa={kappa:g}, alpha={alpha:g})")


def qnd_xp(n: int, atom: int, pulse: int, kappa: float) -> SymplecticTransform:
    """``H = kappa x_A p_i``: the pulse's x picks up ``kappa x_A``; ``p_A`` gets ``-kappa p_i``."""
    _check_modes(n, atom, pulse)
    m = np.eye(2 * n)
    m[2 * pulse, 2 * atom] += kappa
    m[2 * atom + 1, 2 * pulse + 1] -= kappa
    return _from_heisenberg(m, f"qnd_xp(A={atom}, i={pulse}, kappa={kappa:g})")


def qnd_xx(n: int, atom: int, pulse: int, kappa: float) -> SymplecticTransform:
    """``H = kappa x_A x_i``: both momenta pick up ``-kappa`` times the other position."""
    _check_modes(n, atom, pulse)
    m = np.eye(2 * n)
    m[2 * atom + 1, 2 * pulse] -= kappa
    m[2 * pulse + 1, 2 * atom] -= kappa
    return _from_heisenberg(m, f"qnd_xx(A={atom}, i={pulse}, kappa={kappa:g})")


def beamsplitter_xx(n: int, light: int, pulse: int) -> SymplecticTransform:
    """Effective ``H = x_L x_i`` realised with a beamsplitter and squeezers (unit coupling)."""
    _check_modes(n, light, pulse)
    t = qnd_xx(n, light, pulse, 1.0)
    return SymplecticTransform(t.matrix, f"beamsplitter_xx(L={light}, i={pulse})")


def squeezer(n: int, mode: int, r: float) -> SymplecticTransform:
    """``x -> e^r x``, ``p -> e^-r p``; positive ``r`` squeezes momentum."""
    _check_modes(n, mode)
    if not np.isfinite(r):
        raise InvalidArgument(f"squeezing must be finite, got {r}")
    m = np.eye(2 * n)
    m[2 * mode, 2 * mode] = np.exp(r)
    m[2 * mode + 1, 2 * mode + 1] = np.exp(-r)
    return _from_heisenberg(m, f"squeezer(mode={mode}, r={r:g})")


def rotation(n: int, mode: int, theta: float) -> SymplecticTransform:
    """Phase rotation: ``x -> x cos + p sin``, ``p -> p cos - x sin``."""
    _check_modes(n, mode)
    c, s = np.cos(theta), np.sin(theta)
    m = np.eye(2 * n)
    i = 2 * mode
    m[i:i + 2, i:i + 2] = [[c, s], [-s, c]]
    return _from_heisenberg(m, f"rotation(mode={mode}, theta={theta:g})")


def two_mode_squeezer(n: int, a: int, b: int, r: float) -> SymplecticTransform:
    """Two-mode squeezer giving the familiar ``cosh(2r)``/``sinh(2r)`` vacuum correlations."""
    _check_modes(n, a, b)
    ch, sh = np.cosh(r), np.sinh(r)
    m = np.eye(2 * n)
    z = np.diag([1.0, -1.0])
    ia, ib = 2 * a, 2 * b
    m[ia:ia + 2, ia:ia + 2] = ch * np.eye(2)
    m[ib:ib + 2, ib:ib + 2] = ch * np.eye(2)
    m[ia:ia + 2, ib:ib + 2] = sh * z
    m[ib:ib + 2, ia:ia + 2] = sh * z
    return _from_heisenberg(m, f"two_mode_squeezer({a}, {b}, r={r:g})")


def apply(state: GaussianState, transform: SymplecticTransform) -> GaussianState:
    """``sigma -> S^T sigma S`` and ``mean -> S^T mean``."""
    if transform.dim != state.cm.shape[0]:
        raise InvalidArgument(f"transform is {transform.dim}-dimensional, state is {state.cm.shape[0]}")
    s = transform.matrix
    cm = s.T @ state.cm @ s
    cm = 0.5 * (cm + cm.T)
    return GaussianState(cm, s.T @ state.mean, state.modes)


# Mode layout for the two-mode composite protocol: atom, cluster light, two pulses.
A, L, I1, I2 = 0, 1, 2, 3


def s_int1(kappa: float) -> SymplecticTransform:
    """Pulse ``i1`` through the atom (``kappa x_A p_i1``), then the beamsplitter with ``L``."""
    return compose(qnd_xp(4, A, I1, kappa), beamsplitter_xx(4, L, I1))


def s_int2(kappa: float) -> SymplecticTransform:
    """Pulse ``i2`` on the beamsplitter with ``L``, then through the atom (``kappa x_A p_i2``)."""
    return compose(beamsplitter_xx(4, L, I2), qnd_xp(4, A, I2, kappa))


@dataclass(frozen=True, eq=False)
class HomodyneResult:
    post_state: GaussianState
    displacement: np.ndarray
    outcome: float
    quadrature: str
    measured: str


PINV_GUARD = 1e-12


def _homodyne(state: GaussianState, mode, outcome, rng, q: str) -> HomodyneResult:
    if state.n_modes < 2:
        raise InvalidArgument("homodyne needs at least two modes (one measured, one kept)")
    k = state.index(mode)
    row = 2 * k + (q == "p")
    keep = np.array([j for j in range(state.cm.shape[0]) if j // 2 != k])
    # (X B X)^+ for a single mode is rank one: 1/B_qq on the measured quadrature.
    var = float(state.cm[row, row])
    c = state.cm[keep, row]
    mu = float(state.mean[row])
    if outcome is None:
        gen = np.random.default_rng(0) if rng is None else rng
        outcome = float(gen.normal(mu, np.sqrt(max(var, 0.0))))
    outcome = float(outcome)
    if var < PINV_GUARD:
        # deterministic quadrature: pseudo-inverse is zero, nothing to condition on
        cm = state.cm[np.ix_(keep, keep)]
        disp = np.zeros(len(keep))
    else:
        cm = state.cm[np.ix_(keep, keep)] - np.outer(c, c) / var
        disp = c * (outcome - mu) / var
    cm = 0.5 * (cm + cm.T)
    modes = tuple(m for j, m in enumerate(state.modes) if j != k)
    post = GaussianState(cm, state.mean[keep] + disp, modes)
    disp.setflags(write=False)
    return HomodyneResult(post, disp, outcome, q, state.modes[k].label)


def homodyne_x(state: GaussianState, mode, outcome: float | None = None,
               rng: np.random.Generator | None = None) -> HomodyneResult:
    """Measure ``x`` of ``mode`` and condition the remaining modes on the result.

    The kept block becomes ``A - C (X B X)^+ C^T`` with ``X = diag(1, 0)``. The
    displacement is ``C (X B X)^+ (z - <x>, 0)``, which reduces to the usual
    zero-mean expression when the prior mean vanishes. When ``outcome`` is
    ``None`` it is drawn from the Born distribution of ``x`` using ``rng``
    (default: a fresh generator seeded with 0).
    """
    return _homodyne(state, mode, outcome, rng, "x")


def homodyne_p(state: GaussianState, mode, outcome: float | None = None,
               rng: np.random.Generator | None = None) -> HomodyneResult:
    """Momentum counterpart of :func:`homodyne_x` (``X = diag(0, 1)``)."""
    return _homodyne(state, mode, outcome, rng, "p")


def homodyne(state: GaussianState, mode, quadrature: str, outcome: float | None = None,
             rng: np.random.Generator | None = None) -> HomodyneResult:
    if quadrature not in ("x", "p"):
        raise InvalidArgument(f"quadrature must be 'x' or 'p', got {quadrature!r}")
    return _homodyne(state, mode, outcome, rng, quadrature)
