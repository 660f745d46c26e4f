"""Chains of small (4,1) cluster processors connected through their light modes.

A brick is the five-mode cluster ``A1..A4, L`` with edges ``A1-A2, A1-A3,
A2-A4, A3-A4, A4-L``. A single-mode input is carried through a brick as
follows:

* load: the input carrier is coupled to ``A1`` by the ``x x`` beamsplitter
  and its momentum is measured (one-bit teleportation onto ``A1``);
* transfer: ``x`` of ``A3`` is measured, which deletes it from the graph, and
  the momenta of ``A1``, ``A2`` and ``A4`` are measured in turn, teleporting
  the carried state along ``A1 -> A2 -> A4 -> L``.

Each teleport applies a Fourier transform to the carried mode. With the
sign conventions of the couplings the composed map is ``-1`` (a phase of
pi), which the final feed-forward undoes, so at unit coupling an ideal brick
is a wire. Displacements left over from building the brick are known and are
cancelled when the input is loaded.

Outcomes are corrected by feed-forward. The default ``unit`` mode uses gains
read off the noiselessly squeezed brick, which do not depend on the carried
state; the stage map is then the linear channel ``V -> T V T^T + N`` and noise
accumulates additively. ``conditional`` mode instead keeps the outcome-
conditioned state (plain homodyne Schur complement), whose effective gain
depends on the carried state.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from . import symplectic as sp
from .entanglement import symplectic_spectrum
from .protocols import InvariantViolation, ProtocolTrace, _check_kappa, _check_r, _run_41
from .state import (
    GaussianState,
    InvalidArgument,
    ModeKind,
    ModeTag,
    tensor,
    validate_state,
)

log = logging.getLogger(__name__)

INPUT_LABEL = "in"
LOAD_NODE = "A1"
OUTPUT_LIGHT = "L"
TRANSFER_SEQUENCE = (("A3", "x"), ("A1", "p"), ("A2", "p"), ("A4", "p"))


class ChainMode(str, Enum):
    FRESH_BRICKS = "fresh_bricks"
    SINGLE_BRICK_LOOP = "single_brick_loop"


class Feedforward(str, Enum):
    UNIT = "unit"
    CONDITIONAL = "conditional"


@dataclass(frozen=True, eq=False)
class Qubrick:
    """A built brick. ``reference`` is the same construction with ideal squeezing."""

    state: GaussianState
    reference: np.ndarray
    kappa: float
    r: float
    trace: ProtocolTrace | None = None
    input_node: str = LOAD_NODE
    output_light: str = OUTPUT_LIGHT

    def __post_init__(self):
        if self.state.n_modes != 5:
            raise InvalidArgument(f"a qubrick has 5 modes, got {self.state.n_modes}")
        if self.state.kind(self.output_light) is not ModeKind.CLUSTER_LIGHT:
            raise InvalidArgument(f"output {self.output_light!r} must be a cluster light mode")
        self.state.index(self.input_node)
        if self.reference.shape != self.state.cm.shape:
            raise InvalidArgument("reference matrix does not match the brick")


def make_qubrick(kappa: float, r: float, seed: int = 0, node_squeezing: float | None = None) -> Qubrick:
    """Build the (4,1) composite cluster and wrap it with input ``A1``, output ``L``."""
    kappa, r = _check_kappa(kappa), _check_r(r)
    rn = r if node_squeezing is None else _check_r(node_squeezing)
    trace = _run_41(kappa, r, rn, None, seed, ideal=False)
    ideal = _run_41(kappa, r, rn, None, seed, ideal=True)
    return Qubrick(trace.final_state, np.array(ideal.final_state.cm), kappa, r, trace)


@dataclass(frozen=True, eq=False)
class LoadedBrick:
    """Brick state after loading, with the matching ideal-squeezing reference."""

    state: GaussianState
    reference: np.ndarray
    outcomes: tuple[float, ...] = ()


def _measure(state: GaussianState, reference: np.ndarray, mode: str, q: str, feedforward: Feedforward,
             outcome, rng) -> tuple[GaussianState, np.ndarray, float]:
    k = state.index(mode)
    row = 2 * k + (q == "p")
    keep = np.array([j for j in range(state.cm.shape[0]) if j // 2 != k])
    b_ref = float(reference[row, row])
    c_ref = reference[keep, row]
    if b_ref < sp.PINV_GUARD:
        ref = reference[np.ix_(keep, keep)]
        gain = np.zeros(len(keep))
    else:
        ref = reference[np.ix_(keep, keep)] - np.outer(c_ref, c_ref) / b_ref
        gain = c_ref / b_ref
    ref = 0.5 * (ref + ref.T)

    if feedforward is Feedforward.CONDITIONAL:
        res = sp.homodyne(state, mode, q, outcome, rng)
        return res.post_state, ref, res.outcome

    cm, mean = state.cm, state.mean
    b = float(cm[row, row])
    c = cm[keep, row]
    if outcome is None:
        outcome = float(rng.normal(mean[row], np.sqrt(max(b, 0.0))))
    # Feed-forward displaces the kept modes by -gain * z, so the corrected
    # quadratures are R - g q: Cov = A - g c^T - c g^T + B g g^T, mean = <R> - g <q>.
    a = cm[np.ix_(keep, keep)]
    new = a - np.outer(gain, c) - np.outer(c, gain) + b * np.outer(gain, gain)
    new = 0.5 * (new + new.T)
    modes = tuple(m for j, m in enumerate(state.modes) if j != k)
    return GaussianState(new, mean[keep] - gain * mean[row], modes), ref, float(outcome)


def _as_feedforward(ff) -> Feedforward:
    try:
        return Feedforward(ff)
    except ValueError:
        raise InvalidArgument(f"unknown feed-forward mode {ff!r}") from None


def load_input(q: Qubrick, inp: GaussianState, outcome: float | None = None,
               rng: np.random.Generator | None = None, feedforward: str = "unit") -> LoadedBrick:
    """Teleport a single-mode state onto the brick's input node.

    The carrier is tensored in, coupled to ``A1`` by ``beamsplitter_xx`` and its
    momentum measured. The returned state has the five brick modes.

    Raises:
        InvalidArgument: if ``inp`` is not single-mode.
    """
    if not isinstance(inp, GaussianState) or inp.n_modes != 1:
        raise InvalidArgument("load_input needs a single-mode GaussianState")
    ff = _as_feedforward(feedforward)
    rng = np.random.default_rng(0) if rng is None else rng
    carrier = inp.relabel([ModeTag(INPUT_LABEL, ModeKind.INTERACTION_PULSE)])
    brick = q.state
    if ff is Feedforward.UNIT:
        # the displacements left by the brick's own construction are known; cancel them
        brick = GaussianState(brick.cm, None, brick.modes)
    state = tensor(brick, carrier)
    ref = np.zeros(state.cm.shape)
    ref[:10, :10] = q.reference  # the carried state itself is treated as unknown
    t = sp.beamsplitter_xx(state.n_modes, state.index(INPUT_LABEL), state.index(q.input_node))
    state = sp.apply(state, t)
    ref = t.matrix.T @ ref @ t.matrix
    state, ref, z = _measure(state, ref, INPUT_LABEL, "p", ff, outcome, rng)
    return LoadedBrick(state, ref, (z,))


def transfer_to_light(loaded: LoadedBrick, outcomes: Sequence[float] | None = None,
                      rng: np.random.Generator | None = None, feedforward: str = "unit") -> GaussianState:
    """Measure the four atomic nodes, leaving the carried state on ``L``.

    Raises:
        InvalidArgument: if the state is not a five-mode brick.
    """
    if not isinstance(loaded, LoadedBrick):
        raise InvalidArgument("transfer_to_light needs the LoadedBrick returned by load_input")
    state = loaded.state
    if state.n_modes != 5:
        raise InvalidArgument(f"transfer_to_light needs a 5-mode brick state, got {state.n_modes} modes")
    if outcomes is not None and len(outcomes) != len(TRANSFER_SEQUENCE):
        raise InvalidArgument(f"expected {len(TRANSFER_SEQUENCE)} outcomes, got {len(outcomes)}")
    ff = _as_feedforward(feedforward)
    rng = np.random.default_rng(0) if rng is None else rng
    ref = loaded.reference
    for j, (mode, q) in enumerate(TRANSFER_SEQUENCE):
        z = None if outcomes is None else outcomes[j]
        state, ref, _ = _measure(state, ref, mode, q, ff, z, rng)
    if ff is Feedforward.UNIT:
        # the teleport chain leaves a phase of pi on the mean (covariance is unaffected); undo it
        state = GaussianState(state.cm, -state.mean, state.modes)
    return state


@dataclass(frozen=True)
class QubrickChain:
    length: int
    kappa: float = 1.0
    r: float = 3.0
    mode: ChainMode = ChainMode.FRESH_BRICKS
    feedforward: Feedforward = Feedforward.UNIT
    node_squeezing: float | None = None

    def __post_init__(self):
        if not isinstance(self.length, (int, np.integer)) or self.length < 1:
            raise InvalidArgument(f"chain length must be a positive integer, got {self.length!r}")
        _check_kappa(self.kappa)
        _check_r(self.r)
        object.__setattr__(self, "mode", ChainMode(self.mode))
        object.__setattr__(self, "feedforward", _as_feedforward(self.feedforward))


@dataclass(frozen=True, eq=False)
class ChainStage:
    index: int
    output: GaussianState
    added_p_variance: float
    added_x_variance: float
    nu_min_out: float
    brick_nullifiers: dict


@dataclass(frozen=True, eq=False)
class ChainReport:
    chain: QubrickChain
    input_state: GaussianState
    stages: tuple[ChainStage, ...]
    model_table: "ScalingTable | None" = None

    @property
    def added_noise(self) -> np.ndarray:
        return np.array([s.added_p_variance for s in self.stages])

    @property
    def slope(self) -> float:
        """Added p-variance of the first stage."""
        return float(self.stages[0].added_p_variance)

    def linearity_deviation(self) -> float:
        """``max_k |added(k) - k * added(1)| / |k * added(1)|``."""
        d = self.slope
        k = np.arange(1, len(self.stages) + 1)
        if d == 0:
            return 0.0 if np.all(self.added_noise == 0) else float("inf")
        return float(np.max(np.abs(self.added_noise - k * d) / np.abs(k * d)))

    def to_json(self) -> dict:
        c = self.chain
        return {
            "chain": {"length": c.length, "kappa": c.kappa, "r": c.r, "mode": c.mode.value,
                      "feedforward": c.feedforward.value, "node_squeezing": c.node_squeezing},
            "input_cm": [[float(v) for v in row] for row in self.input_state.cm],
            "stages": [
                {
                    "index": s.index,
                    "added_p_variance": s.added_p_variance,
                    "added_x_variance": s.added_x_variance,
                    "nu_min_out": s.nu_min_out,
                    "output_cm": [[float(v) for v in row] for row in s.output.cm],
                    "brick_nullifiers": s.brick_nullifiers,
                }
                for s in self.stages
            ],
            "model_table": [] if self.model_table is None else self.model_table.to_json()["rows"],
        }

    def csv_rows(self) -> tuple[list[str], list[list]]:
        header = ["index", "added_p_variance", "added_x_variance", "nu_min_out", "var_x", "var_p", "cov_xp"]
        rows = [[s.index, s.added_p_variance, s.added_x_variance, s.nu_min_out,
                 float(s.output.cm[0, 0]), float(s.output.cm[1, 1]), float(s.output.cm[0, 1])]
                for s in self.stages]
        return header, rows


def run_chain(c: QubrickChain, inp: GaussianState, seed: int = 0,
              sizes: Sequence[int] | None = None) -> ChainReport:
    """Carry ``inp`` through ``c.length`` bricks (load, then transfer, per brick).

    ``FRESH_BRICKS`` builds a new brick per stage (build seed ``seed + stage``);
    ``SINGLE_BRICK_LOOP`` re-prepares one brick and feeds its own output back in.
    Measurement outcomes are drawn from one generator seeded with ``seed``.
    """
    if not isinstance(inp, GaussianState) or inp.n_modes != 1:
        raise InvalidArgument("run_chain needs a single-mode input state")
    rng = np.random.default_rng(seed)
    loop_brick = make_qubrick(c.kappa, c.r, seed, c.node_squeezing) if c.mode is ChainMode.SINGLE_BRICK_LOOP else None
    v0 = inp.cm
    carried = inp
    stages = []
    for k in range(1, c.length + 1):
        brick = loop_brick if loop_brick is not None else make_qubrick(c.kappa, c.r, seed + k, c.node_squeezing)
        loaded = load_input(brick, carried, rng=rng, feedforward=c.feedforward.value)
        out = transfer_to_light(loaded, rng=rng, feedforward=c.feedforward.value)
        report = validate_state(out)
        if not report.passed:
            raise InvariantViolation(f"stage {k}: output invalid ({'; '.join(report.notes)})")
        stages.append(ChainStage(
            k, out,
            float(out.cm[1, 1] - v0[1, 1]),
            float(out.cm[0, 0] - v0[0, 0]),
            symplectic_spectrum(out).min,
            brick.trace.nullifier_variances() if brick.trace is not None else {},
        ))
        log.debug("stage %d: added p-variance %.6g", k, stages[-1].added_p_variance)
        carried = out
    table = compare_error_scaling(ErrorScalingModel(), sizes) if sizes else None
    return ChainReport(c, inp, tuple(stages), table)


@dataclass(frozen=True)
class ErrorScalingModel:
    """Closed-form error model: ``error = constant * exp(exponent(n))``.

    Monolithic clusters pay an exponent set by the distance the information
    travels: ``2 (sqrt(n) - 1)`` across a square lattice, or ``n - 1`` along
    a line. A chain of bricks pays ``exponent_per_brick`` for each of the
    ``ceil(n / brick_size)`` bricks it needs. At ``n = 16`` the defaults give
    exponents 6 and 8.
    """

    monolithic_constant: float = 1.0
    qubrick_constant: float = 1.0
    geometry: str = "square"
    brick_size: int = 4
    exponent_per_brick: float = 2.0

    def __post_init__(self):
        if not (self.monolithic_constant > 0 and self.qubrick_constant > 0):
            raise InvalidArgument("error-model constants must be positive")
        if self.geometry not in ("square", "linear"):
            raise InvalidArgument(f"geometry must be 'square' or 'linear', got {self.geometry!r}")
        if self.brick_size < 1 or self.exponent_per_brick <= 0:
            raise InvalidArgument("brick size and per-brick exponent must be positive")

    def monolithic_exponent(self, n: float) -> float:
        if self.geometry == "square":
            return 2.0 * (math.sqrt(n) - 1.0)
        return float(n) - 1.0

    def qubrick_exponent(self, n: float, continuous: bool = False) -> float:
        bricks = n / self.brick_size if continuous else math.ceil(n / self.brick_size)
        return self.exponent_per_brick * bricks

    def monolithic_error(self, n: float) -> float:
        return self.monolithic_constant * math.exp(self.monolithic_exponent(n))

    def qubrick_error(self, n: float) -> float:
        return self.qubrick_constant * math.exp(self.qubrick_exponent(n))


@dataclass(frozen=True, eq=False)
class ScalingTable:
    model: ErrorScalingModel
    rows: tuple[tuple[int, float, float, float], ...]
    crossover: float | None = None

    def to_json(self) -> dict:
        return {
            "model": {"monolithic_constant": self.model.monolithic_constant,
                      "qubrick_constant": self.model.qubrick_constant,
                      "geometry": self.model.geometry, "brick_size": self.model.brick_size,
                      "exponent_per_brick": self.model.exponent_per_brick},
            "rows": [{"n": n, "monolithic_error": m, "qubrick_error": q, "ratio": r} for n, m, q, r in self.rows],
            "crossover": self.crossover,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "monolithic_error", "qubrick_error", "ratio"])
        for row in self.rows:
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
        return buf.getvalue()


def crossover_size(m: ErrorScalingModel, lo: float = 1.0, hi: float = 1e4) -> float | None:
    """Size where the two error curves meet (bricks counted continuously), if they cross in ``[lo, hi]``.

    Returns None when the log-error difference keeps one sign over the range,
    including the tangent case where the curves only touch.
    """
    shift = math.log(m.qubrick_constant / m.monolithic_constant)

    def f(n):
        return m.monolithic_exponent(n) - m.qubrick_exponent(n, continuous=True) - shift

    grid = np.geomspace(lo, hi, 400)
    vals = np.array([f(n) for n in grid])
    for j in range(len(grid) - 1):
        if vals[j] == 0:
            return float(grid[j])
        if vals[j] * vals[j + 1] < 0:
            return float(brentq(f, grid[j], grid[j + 1], xtol=1e-12))
    return None


def compare_error_scaling(m: ErrorScalingModel, sizes: Sequence[int]) -> ScalingTable:
    """Tabulate monolithic vs. chained-brick error for each size.

    Raises:
        InvalidArgument: if ``sizes`` is empty or contains non-positive sizes.
    """
    sizes = list(sizes or [])
    if not sizes:
        raise InvalidArgument("sizes must be non-empty")
    if any(n < 1 for n in sizes):
        raise InvalidArgument("sizes must be positive")
    rows = []
    for n in sizes:
        mono, qb = m.monolithic_error(n), m.qubrick_error(n)
        rows.append((int(n), mono, qb, qb / mono))
    return ScalingTable(m, tuple(rows), crossover_size(m))
