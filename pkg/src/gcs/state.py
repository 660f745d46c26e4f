"""Gaussian states in the covariance-matrix picture.

Quadratures are ordered ``(x_1, p_1, ..., x_N, p_N)`` everywhere in the package
and the vacuum has unit variance per quadrature, so the vacuum covariance
matrix is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

TOL_SYM = 1e-10
TOL_POS = 1e-9


class InvalidArgument(ValueError):
    """Raised when an operation receives arguments it cannot act on."""


class ModeKind(str, Enum):
    ATOMIC = "atomic"
    CLUSTER_LIGHT = "cluster_light"
    INTERACTION_PULSE = "interaction_pulse"


@dataclass(frozen=True)
class ModeTag:
    label: str
    kind: ModeKind = ModeKind.ATOMIC

    def to_json(self) -> dict:
        return {"label": self.label, "kind": self.kind.value}

    @classmethod
    def from_json(cls, data: dict) -> "ModeTag":
        return cls(str(data["label"]), ModeKind(data["kind"]))


def default_tags(n: int, start: int = 0) -> tuple[ModeTag, ...]:
    return tuple(ModeTag(f"m{i}") for i in range(start, start + n))


def symplectic_form(n: int) -> np.ndarray:
    """Return the block-diagonal symplectic form on ``n`` modes."""
    if n < 1:
        raise InvalidArgument(f"number of modes must be positive, got {n}")
    return np.kron(np.eye(n), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GaussianState:
    """Mean vector, covariance matrix and mode registry of an N-mode state.

    Construction checks shapes, finiteness and label uniqueness only. Symmetry
    and the uncertainty principle are reported by :func:`validate_state` so that
    unphysical matrices (e.g. partially transposed ones) can still be inspected.
    """

    cm: np.ndarray
    mean: np.ndarray = None
    modes: tuple[ModeTag, ...] = None

    def __post_init__(self):
        cm = _frozen(self.cm)
        if cm.ndim != 2 or cm.shape[0] != cm.shape[1] or cm.shape[0] % 2 or cm.shape[0] == 0:
            raise InvalidArgument(f"covariance matrix must be 2N x 2N with N >= 1, got shape {cm.shape}")
        n = cm.shape[0] // 2
        mean = np.zeros(2 * n) if self.mean is None else self.mean
        mean = _frozen(mean)
        if mean.shape != (2 * n,):
            raise InvalidArgument(f"mean must have length {2 * n}, got shape {mean.shape}")
        if not (np.all(np.isfinite(cm)) and np.all(np.isfinite(mean))):
            raise InvalidArgument("state contains non-finite entries")
        modes = default_tags(n) if self.modes is None else tuple(self.modes)
        if len(modes) != n:
            raise InvalidArgument(f"expected {n} mode tags, got {len(modes)}")
        labels = [m.label for m in modes]
        if len(set(labels)) != n:
            raise InvalidArgument(f"mode labels must be unique, got {labels}")
        object.__setattr__(self, "cm", cm)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "modes", modes)

    @property
    def n_modes(self) -> int:
        return self.cm.shape[0] // 2

    @property
    def labels(self) -> list[str]:
        return [m.label for m in self.modes]

    def index(self, mode: int | str) -> int:
        """Resolve a mode label or integer position to a position."""
        if isinstance(mode, (int, np.integer)) and not isinstance(mode, bool):
            if not 0 <= mode < self.n_modes:
                raise InvalidArgument(f"mode index {mode} out of range for {self.n_modes} modes")
            return int(mode)
        try:
            return self.labels.index(mode)
        except ValueError:
            raise InvalidArgument(f"unknown mode {mode!r}; known: {self.labels}") from None

    def kind(self, mode: int | str) -> ModeKind:
        return self.modes[self.index(mode)].kind

    def quad(self, mode: int | str, q: str) -> int:
        """Row of quadrature ``q`` ('x' or 'p') of ``mode`` in the phase-space vector."""
        if q not in ("x", "p"):
            raise InvalidArgument(f"quadrature must be 'x' or 'p', got {q!r}")
        return 2 * self.index(mode) + (q == "p")

    def block(self, mode: int | str) -> np.ndarray:
        i = 2 * self.index(mode)
        return self.cm[i:i + 2, i:i + 2]

    def relabel(self, modes: Sequence[ModeTag]) -> "GaussianState":
        return GaussianState(self.cm, self.mean, tuple(modes))

    def to_json(self) -> dict:
        return {
            "n_modes": self.n_modes,
            "ordering": "xpxp",
            "mean": [float(v) for v in self.mean],
            "cm": [[float(v) for v in row] for row in self.cm],
            "modes": [m.to_json() for m in self.modes],
        }

    @classmethod
    def from_json(cls, data: dict) -> "GaussianState":
        if data.get("ordering", "xpxp") != "xpxp":
            raise InvalidArgument(f"unsupported quadrature ordering {data.get('ordering')!r}")
        state = cls(
            np.array(data["cm"], dtype=float),
            np.array(data["mean"], dtype=float),
            tuple(ModeTag.from_json(m) for m in data["modes"]),
        )
        if "n_modes" in data and data["n_modes"] != state.n_modes:
            raise InvalidArgument("n_modes does not match covariance matrix size")
        return state


@dataclass(frozen=True)
class ValidationReport:
    symmetry_residual: float
    min_eigenvalue: float
    symmetric: bool
    positive: bool
    mean_length_ok: bool
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return self.symmetric and self.positive and self.mean_length_ok

    def __bool__(self) -> bool:
        return self.passed


def validate_state(s: GaussianState, tol_sym: float = TOL_SYM, tol_pos: float = TOL_POS) -> ValidationReport:
    """Check symmetry and ``sigma + i Omega >= 0``. Never raises."""
    notes = []
    try:
        cm = np.asarray(s.cm, dtype=float)
        n = cm.shape[0] // 2
        sym = float(np.max(np.abs(cm - cm.T)))
        herm = 0.5 * (cm + cm.T) + 1j * symplectic_form(n)
        min_eig = float(np.linalg.eigvalsh(herm).min())
        mean_ok = np.shape(s.mean) == (2 * n,)
    except Exception as exc:  # report-style: malformed input is a failed check
        return ValidationReport(float("inf"), float("-inf"), False, False, False, (repr(exc),))
    if sym > tol_sym:
        notes.append(f"asymmetric by {sym:.3e}")
    if min_eig < -tol_pos:
        notes.append(f"uncertainty principle violated, min eigenvalue {min_eig:.6g}")
    return ValidationReport(sym, min_eig, sym <= tol_sym, min_eig >= -tol_pos, bool(mean_ok), tuple(notes))


def vacuum_state(n: int, modes: Sequence[ModeTag] | None = None) -> GaussianState:
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidArgument(f"vacuum_state needs n >= 1, got {n!r}")
    return GaussianState(np.eye(2 * n), np.zeros(2 * n), None if modes is None else tuple(modes))


def thermal_state(nbar_var: float, mode: ModeTag | None = None) -> GaussianState:
    """Single-mode thermal state with variance ``nbar_var`` (>= 1) per quadrature."""
    if nbar_var < 1:
        raise InvalidArgument("thermal variance must be >= 1")
    return GaussianState(nbar_var * np.eye(2), None, None if mode is None else (mode,))


def tensor(s1: GaussianState, s2: GaussianState) -> GaussianState:
    """Direct sum of two independent systems; ``s1`` modes come first."""
    clash = set(s1.labels) & set(s2.labels)
    if clash:
        raise InvalidArgument(f"label collision in tensor: {sorted(clash)}")
    d1, d2 = s1.cm.shape[0], s2.cm.shape[0]
    cm = np.zeros((d1 + d2, d1 + d2))
    cm[:d1, :d1] = s1.cm
    cm[d1:, d1:] = s2.cm
    return GaussianState(cm, np.concatenate([s1.mean, s2.mean]), s1.modes + s2.modes)


def tensor_all(states: Iterable[GaussianState]) -> GaussianState:
    states = list(states)
    if not states:
        raise InvalidArgument("tensor_all needs at least one state")
    out = states[0]
    for s in states[1:]:
        out = tensor(out, s)
    return out


def _quad_rows(mode_positions: Sequence[int]) -> np.ndarray:
    return np.array([2 * m + q for m in mode_positions for q in (0, 1)], dtype=int)


def permute_modes(s: GaussianState, perm: Sequence[int]) -> GaussianState:
    """Reorder modes so that new mode ``j`` is old mode ``perm[j]`` (0-based)."""
    perm = list(perm)
    if sorted(perm) != list(range(s.n_modes)):
        raise InvalidArgument(f"{perm} is not a permutation of 0..{s.n_modes - 1}")
    rows = _quad_rows(perm)
    return GaussianState(s.cm[np.ix_(rows, rows)], s.mean[rows], tuple(s.modes[j] for j in perm))


def select_modes(s: GaussianState, modes: Iterable[int | str]) -> GaussianState:
    """Reduced state on ``modes`` in the given order."""
    keep = [s.index(m) for m in modes]
    if not keep:
        raise InvalidArgument("cannot select zero modes")
    if len(set(keep)) != len(keep):
        raise InvalidArgument("duplicate modes in selection")
    rows = _quad_rows(keep)
    return GaussianState(s.cm[np.ix_(rows, rows)], s.mean[rows], tuple(s.modes[j] for j in keep))


def trace_out(s: GaussianState, modes: Iterable[int | str]) -> GaussianState:
    """Partial trace: keep the complement of ``modes`` in their original order."""
    drop = {s.index(m) for m in modes}
    keep = [j for j in range(s.n_modes) if j not in drop]
    if not keep:
        raise InvalidArgument("cannot trace out every mode")
    return select_modes(s, keep)
