"""Electric quantum walks as transducers.

The walk space is C^{E' ∪ E}: dangling edges E' (one per support vertex of
the initial distribution) form the public space, graph edges the private
space.  S_M = R_{B∖M} R_{A∖M}, each layer a product of local reflections
about ψ_u = Σ_{e∼u} √w_e |e⟩.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components
import scipy.sparse as sp

from .engine import RunReport, choose_schedule, phase_readout
from .errors import ShapeMismatch, Unreachable, ValidationError
from .linalg import SectorSpace
from .transducer import Transducer, TransductionCertificate

SIGMA_TOL = 1e-9


@dataclass(frozen=True)
class WalkInstance:
    A: tuple
    B: tuple
    edges: tuple  # (a, b, w) with a in A, b in B; repeats allowed
    sigma: dict
    marked: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "A", tuple(self.A))
        object.__setattr__(self, "B", tuple(self.B))
        object.__setattr__(self, "edges", tuple((a, b, float(w)) for a, b, w in self.edges))
        object.__setattr__(self, "sigma", {u: float(p) for u, p in self.sigma.items() if p > 0})
        object.__setattr__(self, "marked", frozenset(self.marked))
        A, B = set(self.A), set(self.B)
        if A & B:
            raise ShapeMismatch("parts A and B overlap")
        for a, b, w in self.edges:
            if a not in A or b not in B:
                raise ShapeMismatch(f"edge ({a}, {b}) does not join A to B")
            if w <= 0:
                raise ValidationError(f"edge ({a}, {b}) has non-positive weight")
        if not self.sigma or abs(sum(self.sigma.values()) - 1.0) > SIGMA_TOL:
            raise ValidationError("sigma must be a probability distribution")
        if set(self.sigma) - A:
            raise ShapeMismatch("sigma must be supported on A")
        if self.marked - A - B:
            raise ShapeMismatch("marked vertices must belong to the graph")

    @property
    def support(self) -> list:
        return [u for u in self.A if u in self.sigma]

    @property
    def total_weight(self) -> float:
        return float(sum(w for _, _, w in self.edges))

    @property
    def n_public(self) -> int:
        return len(self.support)

    def with_marked(self, marked) -> "WalkInstance":
        return replace(self, marked=frozenset(marked))

    def scaled(self, alpha: float) -> "WalkInstance":
        """All graph weights multiplied by alpha (dangling edges keep σ)."""
        return replace(self, edges=tuple((a, b, w * alpha) for a, b, w in self.edges))

    def xi(self) -> np.ndarray:
        return np.sqrt(np.array([self.sigma[u] for u in self.support], dtype=complex))

    def weights(self) -> np.ndarray:
        """Weights in walk-space order: dangling edges, then E."""
        return np.array([self.sigma[u] for u in self.support] + [w for _, _, w in self.edges])

    def incidence(self) -> dict:
        """Vertex -> list of walk-space coordinates of incident edges."""
        inc: dict = {u: [] for u in self.A + self.B}
        for k, u in enumerate(self.support):
            inc[u].append(k)
        h = self.n_public
        for j, (a, b, _) in enumerate(self.edges):
            inc[a].append(h + j)
            inc[b].append(h + j)
        return inc

    def to_json(self) -> dict:
        return {"A": list(self.A), "B": list(self.B),
                "edges": [{"u": a, "v": b, "w": w} for a, b, w in self.edges],
                "sigma": dict(self.sigma), "marked": sorted(self.marked, key=str)}

    @classmethod
    def from_json(cls, data: Mapping) -> "WalkInstance":
        return cls(tuple(data["A"]), tuple(data["B"]),
                   tuple((e["u"], e["v"], e.get("w", 1.0)) for e in data["edges"]),
                   dict(data["sigma"]), frozenset(data.get("marked", [])))


@dataclass
class FlowSolution:
    p: np.ndarray  # flow on E, oriented towards A
    energy: float
    potentials: dict = field(default_factory=dict)

    @property
    def R_sigma_M(self) -> float:
        return self.energy


def electrical_flow(inst: WalkInstance, marked=None) -> FlowSolution:
    """Unit electrical flow from σ to the marked set (marked set grounded)."""
    M = inst.marked if marked is None else frozenset(marked)
    if not M:
        raise Unreachable("no marked vertex to collect the flow")
    verts = list(inst.A + inst.B)
    pos = {u: k for k, u in enumerate(verts)}
    nv = len(verts)
    rows = [pos[a] for a, _, _ in inst.edges]
    cols = [pos[b] for _, b, _ in inst.edges]
    adj = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(nv, nv))
    _, comp = connected_components(adj, directed=False)
    good = {comp[pos[m]] for m in M}
    for u in inst.sigma:
        if comp[pos[u]] not in good:
            raise Unreachable(f"vertex {u!r} carries flow but cannot reach a marked vertex")
    lap = np.zeros((nv, nv))
    for a, b, w in inst.edges:
        i, j = pos[a], pos[b]
        lap[i, i] += w
        lap[j, j] += w
        lap[i, j] -= w
        lap[j, i] -= w
    free = [k for k, u in enumerate(verts) if u not in M and comp[k] in good]
    rhs = np.array([inst.sigma.get(verts[k], 0.0) for k in free])
    phi = np.zeros(nv)
    if free:
        sub = lap[np.ix_(free, free)]
        phi[free] = np.linalg.solve(sub, rhs)
    # current a -> b is w (phi_a - phi_b); the walk orients edges towards A
    p = np.array([-w * (phi[pos[a]] - phi[pos[b]]) for a, b, w in inst.edges])
    ws = np.array([w for _, _, w in inst.edges])
    energy = float(np.sum(p ** 2 / ws)) if ws.size else 0.0
    return FlowSolution(p, energy, {u: float(phi[pos[u]]) for u in verts})


def flow_energy(inst: WalkInstance, p: np.ndarray) -> float:
    ws = np.array([w for _, _, w in inst.edges])
    return float(np.sum(np.asarray(p) ** 2 / ws))


def is_feasible_flow(inst: WalkInstance, p: np.ndarray, marked=None, tol: float = 1e-9) -> bool:
    """Conservation at every unmarked vertex, σ_u injected at u."""
    M = inst.marked if marked is None else frozenset(marked)
    net = {u: inst.sigma.get(u, 0.0) for u in inst.A + inst.B}
    for (a, b, _), pe in zip(inst.edges, p):
        net[a] += pe  # edge carries pe from b into a
        net[b] -= pe
    return all(abs(net[u]) <= tol for u in net if u not in M)


def local_reflection(inst: WalkInstance, u, n: int) -> np.ndarray:
    w = inst.weights()
    idx = inst.incidence()[u]
    psi = np.zeros(n, dtype=complex)
    psi[idx] = np.sqrt(w[idx])
    out = np.eye(n, dtype=complex)
    if idx:
        out -= 2 * np.outer(psi, psi.conj()) / np.vdot(psi, psi).real
    return out


def layer(inst: WalkInstance, part: Sequence, marked=None) -> np.ndarray:
    M = inst.marked if marked is None else frozenset(marked)
    n = inst.n_public + len(inst.edges)
    out = np.eye(n, dtype=complex)
    for u in part:
        if u not in M:
            out = local_reflection(inst, u, n) @ out
    return out


def _space(inst: WalkInstance) -> SectorSpace:
    secs = [((("P", 0),), inst.n_public)]
    if inst.edges:
        secs.append(((("P", 1),), len(inst.edges)))
    return SectorSpace(tuple(secs))


def build_walk(inst: WalkInstance) -> Transducer:
    rA = layer(inst, inst.A)
    rB = layer(inst, inst.B)
    return Transducer(rB @ rA, _space(inst), ((("P", 0),),))


def walk_coupling(inst: WalkInstance) -> tuple[np.ndarray, np.ndarray]:
    """Declared (τ, ξ ⊕ v): all-√w state if M = ∅, flow state otherwise."""
    xi = inst.xi()
    if not inst.marked:
        return -xi, np.sqrt(inst.weights()).astype(complex)
    fl = electrical_flow(inst)
    ws = np.array([w for _, _, w in inst.edges])
    state = np.concatenate([xi, fl.p / np.sqrt(ws)]).astype(complex)
    return xi.copy(), state


def walk_certificate(inst: WalkInstance) -> TransductionCertificate:
    S = build_walk(inst)
    tau, state = walk_coupling(inst)
    h = inst.n_public
    target = state.copy()
    target[:h] = tau
    res = float(np.linalg.norm(S.op @ state - target))
    v = state[h:]
    return TransductionCertificate(state[:h], tau, v, float(np.vdot(v, v).real), res, res, "designer")


def layer_states(inst: WalkInstance) -> list:
    """The coupling after R_{A∖M} and after R_{B∖M}."""
    _, state = walk_coupling(inst)
    s1 = layer(inst, inst.A) @ state
    return [state, s1, layer(inst, inst.B) @ s1]


def max_resistance(inst: WalkInstance) -> float:
    """Maximum of R_{σ,M} over non-empty M (attained by single vertices)."""
    best = 0.0
    for u in inst.A + inst.B:
        try:
            best = max(best, electrical_flow(inst, {u}).energy)
        except Unreachable:
            continue
    return best


@dataclass
class Detection:
    decision: str
    sign: int
    K: int
    alpha: float
    W_scaled: float
    overlap: complex
    p0: float
    report: RunReport


def detect_marked(inst: WalkInstance, eps: float = 0.5, R_bound: float | None = None,
                  W_bound: float | None = None) -> Detection:
    """Decide M ≠ ∅ from the sign of the transduction action.

    Weights are rescaled by α = √(R/W) (geometric mean of the bounds), so both
    transduction complexities are at most √(RW); K is then chosen for error
    ε from that value.
    """
    W0 = inst.total_weight if W_bound is None else float(W_bound)
    R = max_resistance(inst) if R_bound is None else float(R_bound)
    alpha = float(np.sqrt(R / W0)) if R > 0 and W0 > 0 else 1.0
    scaled = inst.scaled(alpha)
    Wsc = float(np.sqrt(R * W0)) if R > 0 else scaled.total_weight
    K = choose_schedule(Wsc, [], eps).K
    S = build_walk(scaled)
    ro = phase_readout(S, scaled.xi(), K)
    return Detection("nonempty" if ro.sign > 0 else "empty", ro.sign, K, alpha, Wsc,
                     ro.overlap, ro.p0, ro.report)


# -- fixtures ----------------------------------------------------------------


def path2(w: float = 4.0, marked=()) -> WalkInstance:
    return WalkInstance(("a",), ("b",), (("a", "b", w),), {"a": 1.0}, frozenset(marked))


def figure_graph(marked=("b2",)) -> WalkInstance:
    """The 4 + 3 vertex graph with two support vertices and one marked B-vertex."""
    A = ("u1", "u2", "a3", "a4")
    B = ("b1", "b2", "b3")
    E = (("u1", "b1", 1.0), ("u1", "b3", 1.0), ("u2", "b2", 1.0), ("u2", "b3", 1.0),
         ("a3", "b1", 1.0), ("a3", "b2", 1.0), ("a3", "b3", 1.0), ("a4", "b1", 1.0), ("a4", "b2", 1.0))
    return WalkInstance(A, B, E, {"u1": 0.5, "u2": 0.5}, frozenset(marked))
