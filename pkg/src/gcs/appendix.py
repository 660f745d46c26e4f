"""Reference matrices for the two-mode composite protocol and their comparison
with the simulator.

The reference matrices are stored symbolically in ``k`` (the coupling)
exactly as given, in mode order ``A, L, i1, i2`` with xpxp
quadratures:

* ``s_int1``, ``s_int2`` - the two interaction matrices;
* ``sigma_out`` - the 8x8 covariance after both interactions;
* ``sigma_fin`` - the 4x4 covariance after measuring both pulses.

Independently of the numpy pipeline, :func:`oracle_sigma_out` and
:func:`oracle_sigma_fin` recompute the protocol in extended precision with
mpmath: each coupling is the exponential of its quadratic-form generator
``Omega h``, and the measurement is an explicit Schur complement.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import mpmath
import numpy as np
import sympy

from . import symplectic as sp
from .entanglement import ppt_test
from .state import GaussianState, symplectic_form, vacuum_state

_K = sympy.Symbol("k")

REFERENCE_MATRICES: dict[str, list[list[str]]] = {
    "s_int1": [
        ["1", "0", "0", "0", "k", "0", "0", "0"],
        ["0", "1", "0", "0", "0", "0", "0", "0"],
        ["0", "k", "1", "0", "0", "-1", "0", "0"],
        ["0", "0", "0", "1", "0", "0", "0", "0"],
        ["0", "0", "0", "-1", "1", "0", "0", "0"],
        ["0", "k", "0", "0", "0", "1", "0", "0"],
        ["0", "0", "0", "0", "0", "0", "1", "0"],
        ["0", "0", "0", "0", "0", "0", "0", "1"],
    ],
    "s_int2": [
        ["1", "0", "0", "-k", "0", "0", "0", "0"],
        ["0", "1", "0", "0", "0", "0", "1", "0"],
        ["0", "0", "1", "0", "0", "0", "0", "-1"],
        ["0", "0", "0", "1", "0", "0", "0", "0"],
        ["0", "0", "0", "0", "1", "0", "0", "0"],
        ["0", "0", "0", "-1", "0", "1", "0", "0"],
        ["0", "k", "0", "0", "0", "0", "1", "0"],
        ["0", "0", "0", "0", "0", "0", "0", "1"],
    ],
    "sigma_out": [
        ["3*k**2 + 1", "0", "0", "-k", "2*k", "0", "2*k", "0"],
        ["0", "1", "k", "0", "0", "-k", "0", "-k"],
        ["0", "k", "k**2 + 3", "0", "0", "-(k**2 + 1)", "0", "-(k**2 + 1)"],
        ["-k", "0", "0", "1", "-1", "0", "-1", "0"],
        ["2*k", "0", "0", "-1", "2", "0", "1", "0"],
        ["0", "-k", "-(k**2 + 1)", "0", "0", "k**2 + 1", "0", "k**2"],
        ["2*k", "0", "0", "-1", "1", "0", "2", "0"],
        ["0", "-k", "-(k**2 + 1)", "0", "0", "k**2", "0", "k**2 + 1"],
    ],
    "sigma_fin": [
        ["1 + k**2/3", "-2*k*(1 + k**2)/3", "-8*k**2/3", "-k - 2*k*(1 + k**2)/3"],
        ["-2*k*(1 + k**2)/3", "1 + 2*k*(1 + k**2)**2/3", "k - 2*k*(1 + k**2)/3", "2*k*(1 + k**2)**2/3"],
        ["-8*k**2/3", "k - 2*k*(1 + k**2)/3", "3 - 5*k**2/3", "-2*k*(1 + k**2)/3"],
        ["-k - 2*k*(1 + k**2)/3", "2*k*(1 + k**2)**2/3", "-2*k*(1 + k**2)/3", "1 + 2*(1 + k**2)**2/3"],
    ],
}

APPENDIX_KAPPAS = (0.5, 0.8, 1.0)


@lru_cache(maxsize=None)
def reference_symbolic(name: str) -> sympy.Matrix:
    if name not in REFERENCE_MATRICES:
        raise KeyError(f"unknown reference matrix {name!r}; known: {sorted(REFERENCE_MATRICES)}")
    return sympy.Matrix([[sympy.sympify(e, locals={"k": _K}) for e in row] for row in REFERENCE_MATRICES[name]])


@lru_cache(maxsize=None)
def _lambdified(name: str):
    return sympy.lambdify(_K, reference_symbolic(name), "numpy")


def reference_matrix(name: str, kappa: float) -> np.ndarray:
    """Evaluate a stored reference matrix at coupling ``kappa``."""
    return np.array(_lambdified(name)(float(kappa)), dtype=float)


# ---------------------------------------------------------------------------
# Extended-precision oracle


def _mp_omega(n: int):
    om = mpmath.zeros(2 * n)
    for j in range(n):
        om[2 * j, 2 * j + 1] = 1
        om[2 * j + 1, 2 * j] = -1
    return om


def _mp_flow(n: int, terms: Iterable[tuple[int, int, object]]):
    """Heisenberg map ``expm(Omega h)`` for ``H = sum c * R_a R_b`` (``a != b``, commuting)."""
    h = mpmath.zeros(2 * n)
    for a, b, c in terms:
        h[a, b] += c
        h[b, a] += c
    return mpmath.expm(_mp_omega(n) * h)


def _mp_schur(cm, keep: Sequence[int], measured: Sequence[int]):
    a = cm.__class__([[cm[i, j] for j in keep] for i in keep])
    b = cm.__class__([[cm[i, j] for j in measured] for i in measured])
    c = cm.__class__([[cm[i, j] for j in measured] for i in keep])
    return a - c * mpmath.inverse(b) * c.T


def oracle_sigma_out(kappa: float, dps: int = 40) -> np.ndarray:
    """8x8 covariance after both interactions, from generator exponentials."""
    with mpmath.workdps(dps):
        return np.array(oracle_sigma_out_mp(kappa).tolist(), dtype=float)


def oracle_sigma_fin(kappa: float, dps: int = 40) -> np.ndarray:
    """4x4 covariance of ``A, L`` after measuring ``x`` of both pulses.

    With both pulse momenta discarded, ``(X B X)^+`` restricted to the
    measured positions is the inverse of their 2x2 covariance block.
    """
    with mpmath.workdps(dps):
        cm = mpmath.matrix(oracle_sigma_out_mp(kappa))
        fin = _mp_schur(cm, keep=[0, 1, 2, 3], measured=[4, 6])
        return np.array(fin.tolist(), dtype=float)


def oracle_sigma_out_mp(kappa: float):
    """Like :func:`oracle_sigma_out` but returns mpmath entries (current precision)."""
    k = mpmath.mpf(kappa)
    xa, xl, xi1, pi1, xi2, pi2 = 0, 2, 4, 5, 6, 7
    # i1 through the atom (k x_A p_i1), then the beamsplitter x_L x_i1;
    # i2 on the beamsplitter first, then through the atom.
    m = mpmath.eye(8)
    for step in (_mp_flow(4, [(xa, pi1, k)]), _mp_flow(4, [(xl, xi1, 1)]),
                 _mp_flow(4, [(xl, xi2, 1)]), _mp_flow(4, [(xa, pi2, k)])):
        m = step * m
    return m * m.T


# ---------------------------------------------------------------------------
# Pipeline side and comparison


def computed_matrix(name: str, kappa: float) -> np.ndarray:
    """The simulator's counterpart of a reference matrix."""
    from .protocols import build_two_mode_composite

    if name == "s_int1":
        return np.array(sp.s_int1(kappa).matrix)
    if name == "s_int2":
        return np.array(sp.s_int2(kappa).matrix)
    if name == "sigma_out":
        t = sp.compose(sp.s_int1(kappa), sp.s_int2(kappa))
        return np.array(sp.apply(vacuum_state(4), t).cm)
    if name == "sigma_fin":
        return np.array(build_two_mode_composite(kappa, 0.0).final_state.cm)
    raise KeyError(f"unknown matrix {name!r}")


@dataclass(frozen=True)
class DiscrepancyRow:
    kappa: float
    matrix_name: str
    i: int  # 1-based
    j: int  # 1-based
    paper_value: float
    computed_value: float
    delta: float


CSV_HEADER = ["kappa", "matrix_name", "i", "j", "paper_value", "computed_value", "delta"]


def discrepancy_rows(kappa: float, names: Sequence[str] = tuple(REFERENCE_MATRICES)) -> list[DiscrepancyRow]:
    rows = []
    for name in names:
        ref, got = reference_matrix(name, kappa), computed_matrix(name, kappa)
        for i in range(ref.shape[0]):
            for j in range(ref.shape[1]):
                rows.append(DiscrepancyRow(float(kappa), name, i + 1, j + 1, float(ref[i, j]),
                                           float(got[i, j]), float(got[i, j] - ref[i, j])))
    return rows


def rows_to_csv(rows: Iterable[DiscrepancyRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([repr(r.kappa), r.matrix_name, r.i, r.j, repr(r.paper_value),
                    repr(r.computed_value), repr(r.delta)])
    return buf.getvalue()


@dataclass(frozen=True)
class AppendixReport:
    kappas: tuple[float, ...]
    rows: tuple[DiscrepancyRow, ...]
    oracle_max_delta: dict  # kappa -> max |pipeline - oracle| over sigma_fin entries
    reference_max_delta: dict  # (name, kappa) -> max |computed - reference|
    reference_symplectic_residual: dict  # (name, kappa) -> |S^T Omega S - Omega|_max
    reference_min_eigenvalue: dict  # (name, kappa) -> min eig of sigma + i Omega
    tolerance: float

    @property
    def pipeline_matches_oracle(self) -> bool:
        return all(v <= self.tolerance for v in self.oracle_max_delta.values())

    def reference_matches(self, name: str, tol: float = 1e-9) -> bool:
        return all(v <= tol for (n, _), v in self.reference_max_delta.items() if n == name)

    def summary(self) -> dict:
        return {
            "kappas": list(self.kappas),
            "pipeline_matches_oracle": self.pipeline_matches_oracle,
            "oracle_max_delta": {repr(k): v for k, v in self.oracle_max_delta.items()},
            "reference_max_delta": {f"{n}@{k!r}": v for (n, k), v in self.reference_max_delta.items()},
            "reference_symplectic_residual": {f"{n}@{k!r}": v for (n, k), v in self.reference_symplectic_residual.items()},
            "reference_min_eigenvalue": {f"{n}@{k!r}": v for (n, k), v in self.reference_min_eigenvalue.items()},
            "reference_matches": {n: self.reference_matches(n) for n in REFERENCE_MATRICES},
        }


def verify_appendix(kappas: Sequence[float] = APPENDIX_KAPPAS, tolerance: float = 1e-9) -> AppendixReport:
    """Compare pipeline, oracle and reference matrices at each coupling."""
    from .state import validate_state

    rows, oracle, refd, resid, mineig = [], {}, {}, {}, {}
    for k in kappas:
        k = float(k)
        oracle[k] = float(np.max(np.abs(computed_matrix("sigma_fin", k) - oracle_sigma_fin(k))))
        krows = discrepancy_rows(k)
        rows.extend(krows)
        for name in REFERENCE_MATRICES:
            refd[(name, k)] = max(abs(r.delta) for r in krows if r.matrix_name == name)
            ref = reference_matrix(name, k)
            if name.startswith("s_"):
                resid[(name, k)] = sp.symplectic_residual(ref)
            else:
                mineig[(name, k)] = validate_state(GaussianState(ref)).min_eigenvalue
    return AppendixReport(tuple(float(k) for k in kappas), tuple(rows), oracle, refd, resid, mineig, tolerance)


# ---------------------------------------------------------------------------
# Diagnostics: where the reference numbers can be reproduced from


def conditioned_reference(kappa: float) -> GaussianState:
    """Measure ``x`` of both pulses on the reference ``sigma_out`` (Schur complement)."""
    s = GaussianState(reference_matrix("sigma_out", kappa))
    s = sp.homodyne_x(s, 2, 0.0).post_state
    return sp.homodyne_x(s, 2, 0.0).post_state


def exchanged_frame_sigma_out(kappa: float) -> np.ndarray:
    """Covariance after the same pulse sequence with ``x <-> p`` exchanged in the couplings.

    Atom couplings ``+k p_A x_i`` and light couplings ``-p_L p_i``, in the
    order: i1 through atom then light, i2 through light then atom.
    """
    n = 4
    xa, pa, xl, pl, xi1, pi1, xi2, pi2 = range(8)
    m = np.eye(8)
    for a, b, c in ((pa, xi1, kappa), (pl, pi1, -1.0), (pl, pi2, -1.0), (pa, xi2, kappa)):
        h = np.zeros((8, 8))
        h[a, b] = h[b, a] = c
        g = symplectic_form(n) @ h
        m = (np.eye(8) + g) @ m  # each generator squares to zero
    return m @ m.T


def reference_pt_minimum(name: str, kappa: float, party=0) -> float:
    """Smallest partially transposed symplectic eigenvalue of a 4x4 reference matrix (or its conditioned form)."""
    if name == "sigma_fin":
        s = GaussianState(reference_matrix("sigma_fin", kappa))
    elif name == "conditioned_sigma_out":
        s = conditioned_reference(kappa)
    else:
        raise KeyError(name)
    return ppt_test(s, party).min_symplectic_eigenvalue
