"""End-to-end cluster constructions from QND and beamsplitter couplings.

Every interaction pulse touches a set of cluster nodes through couplings of
the form ``x_node * q_pulse`` and is then measured in ``x``. Because every
generator is linear in a conserved node position, pulses never disturb each
other, and one pulse acts on the nodes like this:

* a node coupled through ``x_node x_i`` (``qnd_xx`` / beamsplitter) is an
  *x-type* visit: its momentum receives ``-k x_i``;
* a node coupled through ``x_node p_i`` (``qnd_xp``) is a *p-type* visit: its
  momentum receives ``-k p_i`` and ``x_i`` picks up ``k x_node``.

After the ``x`` measurement, an x-type visit followed later by a p-type visit
leaves a symmetric controlled-Z of weight ``k1 k2`` between the two nodes. A
p-type visit followed by an x-type one leaves only a known displacement.
Hence each edge must be "owned" by exactly one pulse that visits the far end
x-type first and then its own node p-type ("p-carrier"). The pulse of the
other endpoint visits its neighbours p-type and writes onto its own node
x-type ("x-carrier"), contributing only squeezed backaction. The two-mode
composite protocol is exactly one pulse of each kind, and the square cluster
alternates them around the square.

Light nodes only admit the ``x_L x_i`` beamsplitter coupling, so a light node
is always on the non-owning side of its edges.
"""

from __future__ import annotations

import json
import logging
import warnings
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import symplectic as sp
from .entanglement import NullifierSpec, nullifier, nullifier_variance
from .state import (
    GaussianState,
    InvalidArgument,
    ModeKind,
    ModeTag,
    tensor,
    tensor_all,
    validate_state,
    vacuum_state,
)

log = logging.getLogger(__name__)


class InvariantViolation(RuntimeError):
    """An operation produced a state that fails validation."""


class VertexKind(str, Enum):
    ATOMIC = "atomic"
    LIGHT = "light"


Terms = Mapping[tuple[str, str], float]


@dataclass(frozen=True)
class GraphSpec:
    vertices: tuple[tuple[str, VertexKind], ...]
    edges: tuple[tuple[str, str], ...]
    kappa: float | None = None
    squeezing: float | None = None

    def __post_init__(self):
        verts = tuple((str(lbl), VertexKind(kind)) for lbl, kind in self.vertices)
        labels = [v[0] for v in verts]
        if not labels:
            raise InvalidArgument("graph has no vertices")
        if len(set(labels)) != len(labels):
            raise InvalidArgument(f"duplicate vertex labels in {labels}")
        order = {lbl: i for i, lbl in enumerate(labels)}
        seen = set()
        edges = []
        for e in self.edges:
            if len(e) != 2:
                raise InvalidArgument(f"edge {e!r} must have two endpoints")
            a, b = str(e[0]), str(e[1])
            if a not in order or b not in order:
                raise InvalidArgument(f"edge {e!r} references an unknown vertex")
            if a == b:
                raise InvalidArgument(f"self-loop on {a!r}")
            key = frozenset((a, b))
            if key in seen:
                continue
            seen.add(key)
            edges.append(tuple(sorted((a, b), key=order.__getitem__)))
        edges.sort(key=lambda ab: (order[ab[0]], order[ab[1]]))
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "edges", tuple(edges))
        if self.kappa is not None and not (np.isfinite(self.kappa) and self.kappa >= 0):
            raise InvalidArgument(f"kappa must be finite and >= 0, got {self.kappa}")
        if self.squeezing is not None and not np.isfinite(self.squeezing):
            raise InvalidArgument("squeezing must be finite")
        if len(labels) > 1 and not self._connected():
            warnings.warn("graph is not connected", RuntimeWarning, stacklevel=3)

    @property
    def labels(self) -> list[str]:
        return [v[0] for v in self.vertices]

    def kind(self, label: str) -> VertexKind:
        return dict(self.vertices)[label]

    def neighbors(self, label: str) -> list[str]:
        nb = {b if a == label else a for a, b in self.edges if label in (a, b)}
        return [v for v in self.labels if v in nb]

    def _connected(self) -> bool:
        start = self.labels[0]
        seen, todo = {start}, [start]
        while todo:
            for nb in self.neighbors(todo.pop()):
                if nb not in seen:
                    seen.add(nb)
                    todo.append(nb)
        return len(seen) == len(self.labels)

    @classmethod
    def from_json(cls, data: dict) -> "GraphSpec":
        try:
            verts = tuple((v["label"], v.get("kind", "atomic")) for v in data["vertices"])
            edges = tuple(tuple(e) for e in data.get("edges", []))
        except (KeyError, TypeError) as exc:
            raise InvalidArgument(f"malformed graph description: {exc}") from None
        try:
            return cls(verts, edges, data.get("kappa"), data.get("squeezing"))
        except ValueError as exc:
            raise InvalidArgument(str(exc)) from None

    @classmethod
    def load(cls, path: str | Path) -> "GraphSpec":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidArgument(f"cannot read graph file {path}: {exc}") from None
        if not isinstance(data, dict):
            raise InvalidArgument("graph file must contain a JSON object")
        return cls.from_json(data)

    def to_json(self) -> dict:
        out = {
            "vertices": [{"label": lbl, "kind": k.value} for lbl, k in self.vertices],
            "edges": [list(e) for e in self.edges],
        }
        if self.kappa is not None:
            out["kappa"] = self.kappa
        if self.squeezing is not None:
            out["squeezing"] = self.squeezing
        return out


def path_graph(labels: Sequence[str], kinds: Sequence[str] | None = None) -> GraphSpec:
    kinds = kinds or ["atomic"] * len(labels)
    return GraphSpec(tuple(zip(labels, kinds)), tuple(zip(labels[:-1], labels[1:])))


def square_graph() -> GraphSpec:
    return GraphSpec(
        tuple((f"A{i}", "atomic") for i in range(1, 5)),
        (("A1", "A2"), ("A1", "A3"), ("A2", "A4"), ("A3", "A4")),
    )


def composite_41_graph() -> GraphSpec:
    g = square_graph()
    return GraphSpec(g.vertices + (("L", "light"),), g.edges + (("A4", "L"),))


def nullifier_terms(g: GraphSpec) -> list[tuple[str, dict]]:
    """``p_v - sum_{u ~ v} x_u`` for every vertex, as label terms."""
    out = []
    for v in g.labels:
        terms = {(v, "p"): 1.0}
        for u in g.neighbors(v):
            terms[(u, "x")] = -1.0
        out.append((_terms_name(terms), terms))
    return out


def _terms_name(terms: Terms) -> str:
    parts = []
    for (lbl, q), w in terms.items():
        sign = "-" if w < 0 else "+"
        mag = "" if abs(abs(w) - 1) < 1e-15 else f"{abs(w):g}*"
        parts.append(f"{sign} {mag}{q}_{lbl}")
    s = " ".join(parts)
    return s[2:] if s.startswith("+ ") else s


def nullifiers_for_graph(g: GraphSpec, state: GaussianState | None = None) -> list[NullifierSpec]:
    """One nullifier per vertex, laid out against ``state`` (default: the graph's own modes)."""
    if not isinstance(g, GraphSpec):
        raise InvalidArgument("expected a GraphSpec")
    if state is None:
        state = vacuum_state(len(g.labels), [ModeTag(v) for v in g.labels])
    return [nullifier(state, terms, name) for name, terms in nullifier_terms(g)]


@dataclass(frozen=True, eq=False)
class ProtocolStep:
    description: str
    kind: str
    transform: sp.SymplecticTransform | None = None
    measured: str | None = None
    outcome: float | None = None
    nullifier_variances: dict = field(default_factory=dict)
    state: GaussianState | None = None  # state after this step


@dataclass(frozen=True, eq=False)
class ProtocolTrace:
    name: str
    steps: tuple[ProtocolStep, ...]
    final_state: GaussianState
    nullifiers: tuple[tuple[str, dict], ...]
    params: dict = field(default_factory=dict)

    @property
    def outcomes(self) -> list[float]:
        return [s.outcome for s in self.steps if s.kind == "measurement"]

    def nullifier_specs(self) -> list[NullifierSpec]:
        return [nullifier(self.final_state, t, n) for n, t in self.nullifiers]

    def nullifier_variances(self) -> dict[str, float]:
        return {n.name: nullifier_variance(self.final_state, n) for n in self.nullifier_specs()}

    def to_json(self) -> dict:
        return {
            "protocol": self.name,
            "params": dict(self.params),
            "steps": [
                {
                    "index": i,
                    "kind": s.kind,
                    "description": s.description,
                    **({"measured": s.measured, "outcome": s.outcome} if s.kind == "measurement" else {}),
                    "nullifier_variances": s.nullifier_variances,
                }
                for i, s in enumerate(self.steps)
            ],
            "final_state": self.final_state.to_json(),
            "nullifiers": [{"name": k, "variance": v} for k, v in self.nullifier_variances().items()],
        }

    def nullifier_rows(self) -> tuple[list[str], list[list]]:
        names = [n for n, _ in self.nullifiers]
        rows = [[i, s.kind, s.description] + [s.nullifier_variances.get(n, "") for n in names]
                for i, s in enumerate(self.steps)]
        return ["step", "kind", "description"] + names, rows


class _Runner:
    """Accumulates a state, a step log and outcome bookkeeping for one protocol run."""

    def __init__(self, state: GaussianState, nullifiers, outcomes, seed):
        self.state = state
        self.nullifiers = list(nullifiers)
        self.steps: list[ProtocolStep] = []
        self.outcomes = None if outcomes is None else [float(z) for z in outcomes]
        self.rng = np.random.default_rng(seed)
        self._n_measured = 0

    def _audit(self) -> dict:
        have = set(self.state.labels)
        out = {}
        for name, terms in self.nullifiers:
            if all(lbl in have for lbl, _ in terms):
                out[name] = nullifier_variance(self.state, nullifier(self.state, terms, name))
        return out

    def add(self, extra: GaussianState, description: str):
        self.state = tensor(self.state, extra)
        self.steps.append(ProtocolStep(description, "prepare", nullifier_variances=self._audit(), state=self.state))

    def transform(self, t: sp.SymplecticTransform):
        self.state = sp.apply(self.state, t)
        self.steps.append(ProtocolStep(t.description, "transform", t, nullifier_variances=self._audit(),
                                       state=self.state))

    def measure_x(self, label: str):
        z = None
        if self.outcomes is not None:
            if self._n_measured >= len(self.outcomes):
                raise InvalidArgument(f"only {len(self.outcomes)} outcomes supplied")
            z = self.outcomes[self._n_measured]
        self._n_measured += 1
        res = sp.homodyne_x(self.state, label, z, rng=self.rng)
        self.state = res.post_state
        self.steps.append(ProtocolStep(f"homodyne_x({label})", "measurement", measured=label,
                                       outcome=res.outcome, nullifier_variances=self._audit(), state=self.state))

    def finish(self, name: str, params: dict, check: bool = True) -> ProtocolTrace:
        if self.outcomes is not None and self._n_measured != len(self.outcomes):
            raise InvalidArgument(f"expected {self._n_measured} outcomes, got {len(self.outcomes)}")
        report = validate_state(self.state)
        if check and not report.passed:
            raise InvariantViolation(f"{name}: final state invalid ({'; '.join(report.notes)})")
        return ProtocolTrace(name, tuple(self.steps), self.state, tuple(self.nullifiers), params)


def _check_kappa(kappa) -> float:
    if kappa is None or not np.isfinite(kappa) or kappa < 0:
        raise InvalidArgument(f"kappa must be finite and >= 0, got {kappa}")
    return float(kappa)


def _check_r(r) -> float:
    if r is None or not np.isfinite(r):
        raise InvalidArgument(f"squeezing must be finite, got {r}")
    return float(r)


def squeezed_modes(tags: Sequence[ModeTag], r: float, ideal: bool = False) -> GaussianState:
    """Product of momentum-squeezed vacua, ``diag(e^{2r}, e^{-2r})`` per mode.

    With ``ideal=True`` the squeezed variance is set to zero. The result is not
    a physical state; it is used to read off the noiseless correlation
    structure of a construction (e.g. feed-forward gains).
    """
    cm = np.kron(np.eye(len(tags)), np.diag([np.exp(2 * r), 0.0 if ideal else np.exp(-2 * r)]))
    return GaussianState(cm, None, tuple(tags))


def _atom(lbl):
    return ModeTag(lbl, ModeKind.ATOMIC)


def _light(lbl):
    return ModeTag(lbl, ModeKind.CLUSTER_LIGHT)


def _pulse(lbl):
    return ModeTag(lbl, ModeKind.INTERACTION_PULSE)


def _params(kappa, r, rn, seed, outcomes):
    return {"kappa": kappa, "squeezing": r, "node_squeezing": rn, "seed": seed,
            "outcomes": None if outcomes is None else [float(z) for z in outcomes]}


def build_two_mode_composite(kappa: float, r: float = 0.0, outcomes: Sequence[float] | None = None,
                             seed: int = 0, node_squeezing: float | None = None) -> ProtocolTrace:
    """Atom ``A`` plus cluster light ``L`` entangled by two interaction pulses.

    Modes start as ``A, L, i1, i2``; nodes are momentum-squeezed by
    ``node_squeezing`` (default ``r``) and the pulses by ``r``. At ``r = 0``
    this is the all-vacuum input.
    """
    kappa, r = _check_kappa(kappa), _check_r(r)
    rn = r if node_squeezing is None else _check_r(node_squeezing)
    g = path_graph(["A", "L"], ["atomic", "light"])
    run = _Runner(squeezed_modes([_atom("A"), _light("L")], rn), nullifier_terms(g), outcomes, seed)
    run.add(squeezed_modes([_pulse("i1"), _pulse("i2")], r), f"interaction pulses i1, i2 squeezed r={r:g}")
    t1, t2 = sp.s_int1(kappa), sp.s_int2(kappa)
    run.transform(sp.SymplecticTransform(t1.matrix, f"s_int1(kappa={kappa:g})"))
    run.transform(sp.SymplecticTransform(t2.matrix, f"s_int2(kappa={kappa:g})"))
    run.measure_x("i1")
    run.measure_x("i2")
    return run.finish("two-mode", _params(kappa, r, rn, seed, outcomes))


# pulse target, neighbours, and whether it owns its edges (p-carrier)
SQUARE_PULSES = (
    ("A1", ("A2", "A3"), True),
    ("A2", ("A1", "A4"), False),
    ("A3", ("A1", "A4"), False),
    ("A4", ("A2", "A3"), True),
)


def _square_into(run: _Runner, kappa: float, r: float, ideal: bool = False):
    pulses = [f"i{k}" for k in range(1, 5)]
    run.add(squeezed_modes([_pulse(p) for p in pulses], r, ideal), f"interaction pulses i1..i4 squeezed r={r:g}")
    for pulse, (target, nbs, owner) in zip(pulses, SQUARE_PULSES):
        s = run.state
        n, ip, it = s.n_modes, s.index(pulse), s.index(target)
        if owner:
            seq = [sp.qnd_xx(n, s.index(nb), ip, kappa) for nb in nbs] + [sp.qnd_xp(n, it, ip, kappa)]
        else:
            seq = [sp.qnd_xp(n, s.index(nb), ip, kappa) for nb in nbs] + [sp.qnd_xx(n, it, ip, kappa)]
        for t in seq:
            run.transform(_relabel(t, s))
    for p in pulses:
        run.measure_x(p)


def _relabel(t: sp.SymplecticTransform, s: GaussianState) -> sp.SymplecticTransform:
    """Swap positional mode indices in a builder description for labels."""
    desc = t.description
    name, _, args = desc.partition("(")
    parts = []
    for a in args.rstrip(")").split(", "):
        key, _, val = a.partition("=")
        if key in ("A", "i", "L", "mode") and val.isdigit():
            val = s.labels[int(val)]
        parts.append(f"{key}={val}" if _ else a)
    return sp.SymplecticTransform(t.matrix, f"{name}({', '.join(parts)})")


def build_four_mode_square(kappa: float, r: float = 0.0, outcomes: Sequence[float] | None = None,
                           seed: int = 0, node_squeezing: float | None = None) -> ProtocolTrace:
    """Square cluster on atoms ``A1..A4`` (edges 12, 13, 24, 34), one pulse per atom.

    Pulses ``i1`` and ``i4`` pick up their neighbours with ``qnd_xx`` and write
    onto their atom with ``qnd_xp``; ``i2`` and ``i3`` pick up with ``qnd_xp``
    and write with ``qnd_xx``. Every edge then carries weight ``kappa**2``.
    """
    kappa, r = _check_kappa(kappa), _check_r(r)
    rn = r if node_squeezing is None else _check_r(node_squeezing)
    run = _Runner(squeezed_modes([_atom(f"A{k}") for k in range(1, 5)], rn),
                  nullifier_terms(square_graph()), outcomes, seed)
    _square_into(run, kappa, r)
    return run.finish("square", _params(kappa, r, rn, seed, outcomes))


def build_41_composite(kappa: float, r: float = 0.0, outcomes: Sequence[float] | None = None,
                       seed: int = 0, node_squeezing: float | None = None) -> ProtocolTrace:
    """Square cluster plus a light mode ``L`` attached to ``A4`` by pulses ``i5``, ``i6``.

    The attachment repeats the two-mode composite sequence with ``A4`` as the
    atom. ``outcomes``, if given, lists the six pulse results ``i1..i6``.
    """
    kappa, r = _check_kappa(kappa), _check_r(r)
    rn = r if node_squeezing is None else _check_r(node_squeezing)
    return _run_41(kappa, r, rn, outcomes, seed, ideal=False)


def _run_41(kappa, r, rn, outcomes, seed, ideal: bool) -> ProtocolTrace:
    run = _Runner(squeezed_modes([_atom(f"A{k}") for k in range(1, 5)], rn, ideal),
                  nullifier_terms(composite_41_graph()), outcomes, seed)
    _square_into(run, kappa, r, ideal)
    run.add(squeezed_modes([_light("L")], rn, ideal), f"cluster light L squeezed r={rn:g}")
    run.add(squeezed_modes([_pulse("i5"), _pulse("i6")], r, ideal), f"interaction pulses i5, i6 squeezed r={r:g}")
    s = run.state
    n, a4, lm, i5, i6 = s.n_modes, s.index("A4"), s.index("L"), s.index("i5"), s.index("i6")
    for t in (sp.qnd_xp(n, a4, i5, kappa), sp.beamsplitter_xx(n, lm, i5),
              sp.beamsplitter_xx(n, lm, i6), sp.qnd_xp(n, a4, i6, kappa)):
        run.transform(_relabel(t, s))
    run.measure_x("i5")
    run.measure_x("i6")
    return run.finish("composite-41", _params(kappa, r, rn, seed, outcomes), check=not ideal)


def edge_owners(g: GraphSpec) -> dict[tuple[str, str], str]:
    """Assign every edge to the endpoint whose pulse realises it.

    Preferred: a two-colouring with light vertices on the non-owning side, so
    every pulse is purely a p-carrier or purely an x-carrier. Graphs that do
    not admit one fall back to the atomic endpoint for light edges and the
    earlier vertex for atom-atom edges.
    """
    color: dict[str, int] = {}
    ok = True
    for start in g.labels:
        if start in color:
            continue
        comp, todo = {start: 0}, deque([start])
        while todo:
            v = todo.popleft()
            for u in g.neighbors(v):
                if u not in comp:
                    comp[u] = 1 - comp[v]
                    todo.append(u)
                elif comp[u] == comp[v]:
                    ok = False
        light_colors = {comp[v] for v in comp if g.kind(v) is VertexKind.LIGHT}
        if light_colors == {0}:
            comp = {v: 1 - c for v, c in comp.items()}
        elif len(light_colors) > 1:
            ok = False
        color.update(comp)
    order = {v: i for i, v in enumerate(g.labels)}
    owners = {}
    for a, b in g.edges:
        if ok:
            owners[(a, b)] = a if color[a] == 0 else b
        elif g.kind(a) is VertexKind.LIGHT:
            owners[(a, b)] = b
        elif g.kind(b) is VertexKind.LIGHT:
            owners[(a, b)] = a
        else:
            owners[(a, b)] = min(a, b, key=order.__getitem__)
    return owners


def _check_buildable(g: GraphSpec):
    for a, b in g.edges:
        if g.kind(a) is VertexKind.LIGHT and g.kind(b) is VertexKind.LIGHT:
            raise InvalidArgument(f"edge {a}-{b} joins two light modes; only atom-light and atom-atom edges can be built")
    for v in g.labels:
        if g.kind(v) is VertexKind.LIGHT and not g.neighbors(v):
            raise InvalidArgument(f"light vertex {v!r} has no neighbours")


def build_general(g: GraphSpec, kappa: float | None = None, r: float | None = None,
                  outcomes: Sequence[float] | None = None, seed: int = 0,
                  node_squeezing: float | None = None) -> ProtocolTrace:
    """Cluster on an arbitrary graph with one interaction pulse per non-isolated vertex.

    ``kappa`` and ``r`` default to the graph's own values, then to 1 and 0.
    Atom couplings use strength ``kappa``; couplings to light vertices use the
    unit-strength beamsplitter. Pulses run in vertex order and are measured in
    the same order.
    """
    if not isinstance(g, GraphSpec):
        raise InvalidArgument("expected a GraphSpec")
    kappa = _check_kappa(kappa if kappa is not None else (g.kappa if g.kappa is not None else 1.0))
    r = _check_r(r if r is not None else (g.squeezing if g.squeezing is not None else 0.0))
    rn = r if node_squeezing is None else _check_r(node_squeezing)
    _check_buildable(g)
    owners = edge_owners(g)

    def owner(a, b):
        return owners.get((a, b), owners.get((b, a)))

    tags = [_light(v) if k is VertexKind.LIGHT else _atom(v) for v, k in g.vertices]
    run = _Runner(squeezed_modes(tags, rn), nullifier_terms(g), outcomes, seed)
    active = [v for v in g.labels if g.neighbors(v)]
    pulses = {v: f"i[{v}]" for v in active}
    if active:
        run.add(squeezed_modes([_pulse(pulses[v]) for v in active], r),
                f"interaction pulses for {', '.join(active)} squeezed r={r:g}")
    for v in active:
        s = run.state
        n, ip = s.n_modes, s.index(pulses[v])
        nbs = g.neighbors(v)
        owned = [u for u in nbs if owner(v, u) == v]
        other = [u for u in nbs if owner(v, u) != v]

        def xtype(u):
            if g.kind(u) is VertexKind.LIGHT:
                return sp.beamsplitter_xx(n, s.index(u), ip)
            return sp.qnd_xx(n, s.index(u), ip, kappa)

        seq = [sp.qnd_xp(n, s.index(u), ip, kappa) for u in other]
        if owned:
            seq += [xtype(u) for u in owned] + [sp.qnd_xp(n, s.index(v), ip, kappa)]
        else:
            seq += [xtype(v)]
        for t in seq:
            run.transform(_relabel(t, s))
    for v in active:
        run.measure_x(pulses[v])
    return run.finish("graph", _params(kappa, r, rn, seed, outcomes))
