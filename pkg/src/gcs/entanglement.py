"""Symplectic spectra, partial transposition, PPT verdicts and nullifier variances."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .state import GaussianState, InvalidArgument, symplectic_form

ENTANGLEMENT_TOL = 1e-9
PAIR_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class SymplecticSpectrum:
    eigenvalues: np.ndarray

    @property
    def min(self) -> float:
        return float(self.eigenvalues[0])

    def __len__(self):
        return len(self.eigenvalues)


@dataclass(frozen=True, eq=False)
class PartialTranspose:
    """Momentum-flipped covariance matrix. Not required to be a physical state."""

    cm: np.ndarray
    party: tuple[str, ...]
    modes: tuple

    @property
    def n_modes(self) -> int:
        return self.cm.shape[0] // 2


@dataclass(frozen=True, eq=False)
class PptVerdict:
    min_symplectic_eigenvalue: float
    entangled: bool
    partition: tuple[tuple[str, ...], tuple[str, ...]]
    sufficient: bool
    pt_spectrum: np.ndarray


@dataclass(frozen=True, eq=False)
class NullifierSpec:
    coeffs: np.ndarray
    name: str = ""

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float, copy=True)
        if c.ndim != 1 or c.size % 2:
            raise InvalidArgument("nullifier coefficients must be a vector of even length")
        if not np.any(c):
            raise InvalidArgument("nullifier coefficients are all zero")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)


def nullifier(state: GaussianState, terms: Mapping[tuple[str, str], float], name: str = "") -> NullifierSpec:
    """Build a nullifier from ``{(label, 'x'|'p'): coefficient}`` against ``state``'s layout."""
    c = np.zeros(state.cm.shape[0])
    for (label, q), w in terms.items():
        c[state.quad(label, q)] += w
    return NullifierSpec(c, name)


def _cm_of(s) -> np.ndarray:
    cm = np.asarray(getattr(s, "cm", s), dtype=float)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1] or cm.shape[0] % 2:
        raise InvalidArgument(f"expected a 2N x 2N covariance matrix, got shape {cm.shape}")
    if np.max(np.abs(cm - cm.T)) > 1e-8 * max(1.0, np.max(np.abs(cm))):
        raise InvalidArgument("covariance matrix is not symmetric")
    return cm


def symplectic_spectrum(s) -> SymplecticSpectrum:
    """Symplectic eigenvalues from the moduli of the eigenvalues of ``i Omega sigma``.

    Accepts a :class:`GaussianState`, a :class:`PartialTranspose` or a raw matrix.
    Moduli come in equal pairs; each pair is collapsed to one value.
    """
    cm = _cm_of(s)
    n = cm.shape[0] // 2
    mods = np.sort(np.abs(np.linalg.eigvals(1j * symplectic_form(n) @ cm)))
    lo, hi = mods[0::2], mods[1::2]
    if np.any(np.abs(hi - lo) > PAIR_TOL * np.maximum(1.0, hi)):
        warnings.warn("symplectic eigenvalue moduli did not pair up cleanly", RuntimeWarning, stacklevel=2)
    nu = 0.5 * (lo + hi)
    nu.setflags(write=False)
    return SymplecticSpectrum(nu)


def _party_positions(s, party: Iterable) -> list[int]:
    if isinstance(party, (str, int)):
        party = [party]
    pos = sorted({s.index(m) for m in party})
    if not pos:
        raise InvalidArgument("party must be non-empty")
    if len(pos) >= s.n_modes:
        raise InvalidArgument("party must be a proper subset of the modes")
    return pos


def partial_transpose(s: GaussianState, party) -> PartialTranspose:
    """Flip the sign of the momenta of ``party`` (``P sigma P``)."""
    pos = _party_positions(s, party)
    flip = np.ones(s.cm.shape[0])
    for j in pos:
        flip[2 * j + 1] = -1.0
    cm = s.cm * np.outer(flip, flip)
    cm.setflags(write=False)
    return PartialTranspose(cm, tuple(s.modes[j].label for j in pos), s.modes)


def ppt_test(s: GaussianState, party) -> PptVerdict:
    """PPT criterion across ``party | rest``.

    The verdict is a certificate of entanglement whenever the smallest
    symplectic eigenvalue of the transposed matrix is below one. It is a full
    separability test only when one side holds a single mode; otherwise
    ``sufficient`` is False and a warning is issued.
    """
    pos = _party_positions(s, party)
    pt = partial_transpose(s, pos)
    spec = symplectic_spectrum(pt)
    rest = tuple(m.label for j, m in enumerate(s.modes) if j not in pos)
    sufficient = len(pos) == 1 or len(rest) == 1
    if not sufficient:
        warnings.warn(
            "PPT is only guaranteed necessary and sufficient for 1|N splits; "
            "a separable verdict here is not conclusive",
            RuntimeWarning,
            stacklevel=2,
        )
    nu_min = spec.min
    return PptVerdict(nu_min, nu_min < 1 - ENTANGLEMENT_TOL, (pt.party, rest), sufficient, spec.eigenvalues)


def log_negativity(s: GaussianState, party) -> float:
    pos = _party_positions(s, party)
    nu = symplectic_spectrum(partial_transpose(s, pos)).eigenvalues
    return float(np.sum(np.maximum(0.0, -np.log(nu))))


def nullifier_variance(s: GaussianState, n: NullifierSpec) -> float:
    """``c^T sigma c``; known displacements are excluded by construction."""
    if n.coeffs.shape[0] != s.cm.shape[0]:
        raise InvalidArgument(f"nullifier has {n.coeffs.shape[0]} coefficients, state has {s.cm.shape[0]} quadratures")
    return float(n.coeffs @ s.cm @ n.coeffs)


def entanglement_report(s: GaussianState, party) -> dict:
    pos = _party_positions(s, party)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        verdict = ppt_test(s, pos)
    return {
        "partition": [list(verdict.partition[0]), list(verdict.partition[1])],
        "spectrum": [float(v) for v in symplectic_spectrum(s).eigenvalues],
        "pt_spectrum": [float(v) for v in verdict.pt_spectrum],
        "nu_min": float(verdict.min_symplectic_eigenvalue),
        "entangled": bool(verdict.entangled),
        "log_negativity": log_negativity(s, pos),
        "ppt_sufficient": bool(verdict.sufficient),
    }
