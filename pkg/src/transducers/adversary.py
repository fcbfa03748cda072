"""Transducers from feasible adversary-bound solutions, and their composition.

Function transducers use the state-generating convention: variable ``i``
is read through two oracle slots, ``x<i>`` (the forward oracle
O_{x,i}: |0> -> |x_i>) and ``x<i>*`` (its inverse).  The ↑/↓ direction
register of the bidirectional oracle is therefore carried by the slot name,
and the identification of O* with O under ↑/↓ swap is the slot relabelling
``x <-> x*`` done by :func:`transducers.canonical.invert`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .canonical import (
    CanonicalTransducer,
    OracleSlot,
    conj_name,
    invert,
    parallel,
    rename_slots,
    span_family,
)
from .compose import functional
from .errors import ShapeMismatch, SizeCap
from .linalg import (
    complete_unitary_from_pairs,
    matrix_from_json,
    matrix_to_json,
    permutation_matrix,
    vector_from_json,
    vector_to_json,
)

FEAS_TOL = 1e-8


def var_slot(label) -> str:
    return f"x{label}"


# -- state conversion --------------------------------------------------------


@dataclass
class StateConversionSolution:
    """ξ_x, τ_x in H, oracles O_x on M and witnesses v_x in W ⊗ M
    (flattened with index w·dim(M) + m)."""

    xis: list
    taus: list
    oracles: list
    witnesses: list

    @property
    def dimW(self) -> int:
        m = self.oracles[0].shape[0]
        return len(self.witnesses[0]) // m

    def violations(self) -> np.ndarray:
        n = len(self.xis)
        out = np.zeros((n, n))
        for x, y in itertools.product(range(n), repeat=2):
            lhs = np.vdot(self.xis[x], self.xis[y]) - np.vdot(self.taus[x], self.taus[y])
            vx = np.asarray(self.witnesses[x]).reshape(-1, self.oracles[x].shape[0])
            vy = np.asarray(self.witnesses[y]).reshape(-1, self.oracles[y].shape[0])
            ox, oy = self.oracles[x], self.oracles[y]
            rhs = np.vdot(vx, vy) - np.vdot(vx @ ox.T, vy @ oy.T)
            out[x, y] = abs(lhs - rhs)
        return out

    def to_json(self) -> dict:
        return {"kind": "state", "xi": [vector_to_json(v) for v in self.xis],
                "tau": [vector_to_json(v) for v in self.taus],
                "oracles": [matrix_to_json(o) for o in self.oracles],
                "witnesses": [vector_to_json(v) for v in self.witnesses]}

    @classmethod
    def from_json(cls, data: Mapping) -> "StateConversionSolution":
        return cls([vector_from_json(v) for v in data["xi"]], [vector_from_json(v) for v in data["tau"]],
                   [matrix_from_json(o) for o in data["oracles"]],
                   [vector_from_json(v) for v in data["witnesses"]])


@dataclass
class FunctionAdversarySolution:
    """f: D -> [p] with D ⊆ [q]^n and vectors u_{x,i}, v_{x,i} in W."""

    f: dict
    q: int
    n: int
    u: dict
    v: dict
    p: int = 0

    def __post_init__(self):
        self.f = {tuple(int(a) for a in x): int(val) for x, val in self.f.items()}
        self.u = {tuple(x): np.atleast_2d(np.asarray(a, dtype=complex)) for x, a in self.u.items()}
        self.v = {tuple(x): np.atleast_2d(np.asarray(a, dtype=complex)) for x, a in self.v.items()}
        if not self.p:
            self.p = max(self.f.values(), default=0) + 1
        for x in self.f:
            if len(x) != self.n or any(not 0 <= a < self.q for a in x):
                raise ShapeMismatch(f"input {x} is not in [{self.q}]^{self.n}")
            if self.u[x].shape != self.v[x].shape or self.u[x].shape[0] != self.n:
                raise ShapeMismatch(f"u/v for {x} must be n x dim(W)")

    @property
    def domain(self) -> list:
        return list(self.f)

    @property
    def dimW(self) -> int:
        x = next(iter(self.f))
        return self.u[x].shape[1]

    def v_up(self, x) -> np.ndarray:
        return (self.u[x] + self.v[x]) / 2

    def v_down(self, x) -> np.ndarray:
        return (self.u[x] - self.v[x]) / 2

    def objective_at(self, x) -> float:
        return float(0.5 * (np.sum(np.abs(self.u[x]) ** 2) + np.sum(np.abs(self.v[x]) ** 2)))

    @property
    def objective(self) -> float:
        return max((self.objective_at(x) for x in self.f), default=0.0)

    def partial(self, x, i: int) -> float:
        return float(0.5 * (np.sum(np.abs(self.u[x][i]) ** 2) + np.sum(np.abs(self.v[x][i]) ** 2)))

    def violations(self) -> dict:
        out = {}
        for x, y in itertools.product(self.f, repeat=2):
            lhs = float(self.f[x] != self.f[y])
            rhs = sum(np.vdot(self.u[x][i], self.v[y][i]) for i in range(self.n) if x[i] != y[i])
            out[(x, y)] = abs(lhs - rhs)
        return out

    def to_json(self) -> dict:
        enc = lambda a: [[[float(z.real), float(z.imag)] for z in row] for row in a]
        xs = list(self.f)
        return {"kind": "function", "q": self.q, "n": self.n, "p": self.p,
                "f": [{"x": list(x), "value": self.f[x]} for x in xs],
                "u": [enc(self.u[x]) for x in xs], "v": [enc(self.v[x]) for x in xs]}

    @classmethod
    def from_json(cls, data: Mapping) -> "FunctionAdversarySolution":
        xs = [tuple(e["x"]) for e in data["f"]]
        f = {x: e["value"] for x, e in zip(xs, data["f"])}
        dec = lambda a: np.array([vector_from_json(row) for row in a]) if len(a) else np.zeros((0, 0))
        u = {x: dec(a) for x, a in zip(xs, data["u"])}
        v = {x: dec(a) for x, a in zip(xs, data["v"])}
        return cls(f, int(data["q"]), int(data["n"]), u, v, int(data.get("p", 0)))


def solution_from_json(data: Mapping):
    if data.get("kind", "function") == "state":
        return StateConversionSolution.from_json(data)
    return FunctionAdversarySolution.from_json(data)


@dataclass
class FeasibilityReport:
    max_violation: float
    feasible: bool
    objective: float | None = None
    worst: tuple | None = None


def validate(sol, tol: float = FEAS_TOL) -> FeasibilityReport:
    if isinstance(sol, StateConversionSolution):
        if not sol.xis:
            return FeasibilityReport(0.0, True)
        viol = sol.violations()
        k = np.unravel_index(int(np.argmax(viol)), viol.shape)
        m = float(viol[k])
        return FeasibilityReport(m, m <= tol, None, tuple(int(a) for a in k))
    viol = sol.violations()
    if not viol:
        return FeasibilityReport(0.0, True, 0.0)
    worst = max(viol, key=viol.get)
    m = float(viol[worst])
    return FeasibilityReport(m, m <= tol, sol.objective, worst)


# -- builders ----------------------------------------------------------------


def build_state_transducer(sol: StateConversionSolution, slot: str = "O") -> CanonicalTransducer:
    """L° empty; S° maps ξ_x ⊕ (I⊗O_x)v_x to τ_x ⊕ v_x for all x."""
    h = len(sol.xis[0])
    m = sol.oracles[0].shape[0]
    w = sol.dimW
    src, dst = [], []
    for xi, tau, o, v in zip(sol.xis, sol.taus, sol.oracles, sol.witnesses):
        vq = (np.asarray(v, dtype=complex).reshape(w, m) @ o.T).reshape(-1)
        src.append(np.concatenate([xi, vq]))
        dst.append(np.concatenate([tau, v]))
    work = complete_unitary_from_pairs(list(zip(src, dst)))
    S = CanonicalTransducer(h, 0, (OracleSlot(slot, m, w),), work, name="adv-state")

    def cols(oracles):
        o = oracles.get(slot)
        if o is None:
            return None
        hit = [k for k, ox in enumerate(sol.oracles) if np.abs(ox - o).max() <= 1e-9]
        if not hit:
            return None
        X = np.array([sol.xis[k] for k in hit], dtype=complex).T
        T = np.array([sol.taus[k] for k in hit], dtype=complex).T
        V = np.array([dst[k] for k in hit], dtype=complex).T
        V[:h] = X
        return X, T, V

    S.family = span_family(cols, fallback=S)
    S.meta["T"] = 1
    return S


def shift_oracle(q: int, a: int) -> np.ndarray:
    """|k> -> |k + a mod q>; maps |0> to |a>."""
    return permutation_matrix([(k + a) % q for k in range(q)]).toarray().astype(complex)


def input_oracles(x, q: int, labels: Sequence | None = None) -> dict:
    """Bidirectional state-generating oracles for the string x."""
    labels = list(range(len(x))) if labels is None else list(labels)
    out = {}
    for lab, a in zip(labels, x):
        o = shift_oracle(q, int(a))
        out[var_slot(lab)] = o
        out[var_slot(lab) + "*"] = o.conj().T
    return out


def standard_oracle(x, q: int) -> np.ndarray:
    """XOR-convention oracle |i>|b> -> |i>|b + x_i mod q> on C^n ⊗ C^q.

    Provided for convenience; the constructions here use the
    state-generating slots of :func:`input_oracles`.
    """
    n = len(x)
    perm = [i * q + (b + int(x[i])) % q for i in range(n) for b in range(q)]
    return permutation_matrix(perm).toarray().astype(complex)


def read_input(oracles: Mapping, labels: Sequence, q: int, tol: float = 1e-8):
    """Recover x from the forward oracles (None if they do not encode one)."""
    x = []
    for lab in labels:
        o = oracles.get(var_slot(lab))
        if o is None:
            return None
        col = np.asarray(o)[:, 0]
        k = int(np.argmax(np.abs(col)))
        if abs(abs(col[k]) - 1) > tol:
            return None
        x.append(k)
    return tuple(x)


def build_function_transducer(sol: FunctionAdversarySolution, labels: Sequence | None = None) -> CanonicalTransducer:
    """Canonical S_f with |0> ⇝ |f(x)> on the bidirectional input oracle.

    The catalyst puts v↑_{x,i} on |0> in slot x<i> and v↓_{x,i} on |x_i> in
    slot x<i>*.
    """
    labels = [str(i) for i in range(sol.n)] if labels is None else [str(l) for l in labels]
    q, p, w, n = sol.q, sol.p, sol.dimW, sol.n
    slots = []
    for lab in labels:
        slots.append(OracleSlot(var_slot(lab), q, w, "zero"))
        slots.append(OracleSlot(var_slot(lab) + "*", q, w, "zero_inv"))
    size = 2 * n * w * q
    dim = p + size

    def coupling(x):
        state = np.zeros(dim, dtype=complex)
        state[0] = 1
        up, down = sol.v_up(x), sol.v_down(x)
        pos = p
        for i in range(n):
            blk = np.zeros((w, q), dtype=complex)
            blk[:, 0] = up[i]
            state[pos:pos + w * q] = blk.reshape(-1)
            pos += w * q
            blk = np.zeros((w, q), dtype=complex)
            blk[:, x[i]] = down[i]
            state[pos:pos + w * q] = blk.reshape(-1)
            pos += w * q
        return state

    src, dst = [], []
    for x in sol.f:
        st = coupling(x)
        after = st.copy()
        pos = p
        for i in range(n):
            o = shift_oracle(q, x[i])
            for blk_o in (o, o.conj().T):
                blk = after[pos:pos + w * q].reshape(w, q)
                after[pos:pos + w * q] = (blk @ blk_o.T).reshape(-1)
                pos += w * q
        tgt = st.copy()
        tgt[:p] = 0
        tgt[sol.f[x]] = 1
        src.append(after)
        dst.append(tgt)
    if src:
        work = complete_unitary_from_pairs(list(zip(src, dst)))
    else:
        work = np.eye(dim, dtype=complex)
    adm = np.zeros((p, p), dtype=complex)
    adm[0, 0] = 1
    S = CanonicalTransducer(p, 0, slots, work, admissible=adm, name="adv-fn",
                            meta={"T": 1, "vars": labels, "q": q, "p": p})

    def cols(oracles):
        x = read_input(oracles, labels, q)
        if x is None or x not in sol.f:
            return None
        X = np.zeros((p, 1), dtype=complex)
        X[0, 0] = 1
        T = np.zeros((p, 1), dtype=complex)
        T[sol.f[x], 0] = 1
        return X, T, coupling(x)[:, None]

    S.family = span_family(cols, fallback=S)
    S.solution = sol
    return S


# -- composition -------------------------------------------------------------


def bidirectional(S: CanonicalTransducer) -> CanonicalTransducer:
    """↔S = S ⊕ S⁻¹ with the direction as the most significant public bit."""
    B = parallel([S, invert(S)], "shared", name=f"bi({S.name})")
    B.meta.update({k: S.meta[k] for k in ("vars", "q", "p") if k in S.meta})
    return B


def _relabel(S: CanonicalTransducer, prefix: str) -> CanonicalTransducer:
    def f(name: str) -> str:
        star = name.endswith("*")
        base = name[:-1] if star else name
        return var_slot(prefix + "." + base[1:]) + ("*" if star else "")

    out = rename_slots(S, f)
    out.meta = dict(S.meta)
    out.meta["vars"] = [f"{prefix}.{v}" for v in S.meta["vars"]]
    return out


def compose_functions(S_f: CanonicalTransducer, S_g: CanonicalTransducer,
                      max_dim: int | None = None) -> CanonicalTransducer:
    """S_{f∘g}: every variable i of f is replaced by a copy of ↔S_g reading
    the variables i.j; the copies are attached one functional composition
    at a time."""
    from .compose import MAX_DIM

    cap = MAX_DIM if max_dim is None else max_dim
    bi = bidirectional(S_g)
    S = S_f
    for lab in S_f.meta["vars"]:
        inner = _relabel(bi, lab)
        S = functional(S, inner, [var_slot(lab), var_slot(lab) + "*"])
        if S.n > cap:
            raise SizeCap(f"composed dimension {S.n} exceeds {cap}")
    S.meta.update({"vars": [f"{i}.{j}" for i in S_f.meta["vars"] for j in S_g.meta["vars"]],
                   "q": S_g.meta["q"], "p": S_f.meta["p"], "outer": S_f, "inner": S_g})
    S.name = f"{S_f.name}∘{S_g.name}"
    return S


def iterate(S_f: CanonicalTransducer, d: int, max_dim: int | None = None) -> CanonicalTransducer:
    """f^(d) = f^(d-1) ∘ f, built by repeated ``compose_functions``."""
    if d < 1:
        raise ValueError("d must be at least 1")
    S = S_f
    for _ in range(d - 1):
        S = compose_functions(S, S_f, max_dim)
    return S


def evaluate(S: CanonicalTransducer, x) -> tuple[np.ndarray, "object"]:
    """Declared output and certificate of S on the input string x (given in
    the order of ``S.meta['vars']``)."""
    labels = S.meta["vars"]
    om = input_oracles(x, S.meta["q"], labels)
    om = {k: v for k, v in om.items() if k in S.slot_names()}
    xi = np.zeros(S.h, dtype=complex)
    xi[0] = 1
    c = S.certificate(om, xi)
    return c.tau, c


def variable_partials(cert, labels: Sequence) -> dict:
    """L^(i): the forward and backward slot of variable i together."""
    return {lab: cert.L_partial.get(var_slot(lab), 0.0) + cert.L_partial.get(var_slot(lab) + "*", 0.0)
            for lab in labels}


# -- fixtures ----------------------------------------------------------------


def identity_solution(scale_u: float = 1.0, scale_v: float = 1.0) -> FunctionAdversarySolution:
    """f(x) = x on one bit; u = v = 1 is feasible with objective 1."""
    f = {(0,): 0, (1,): 1}
    u = {x: np.array([[scale_u]]) for x in f}
    v = {x: np.array([[scale_v]]) for x in f}
    return FunctionAdversarySolution(f, 2, 1, u, v, 2)


def or2_solution() -> FunctionAdversarySolution:
    """OR on two bits with one-dimensional W and objective √2.

    With a = 2^{-1/4}: x = 00 uses a on both variables; 01, 10 use 1/a on
    the variable that is set; 11 uses 1/a on the first variable.
    """
    a = 2 ** -0.25
    f = {(0, 0): 0, (0, 1): 1, (1, 0): 1, (1, 1): 1}
    vec = {(0, 0): [a, a], (0, 1): [0, 1 / a], (1, 0): [1 / a, 0], (1, 1): [1 / a, 0]}
    u = {x: np.array(vec[x], dtype=complex)[:, None] for x in f}
    return FunctionAdversarySolution(f, 2, 2, u, {x: u[x].copy() for x in f}, 2)


def constant_solution(n: int = 1) -> FunctionAdversarySolution:
    f = {x: 0 for x in itertools.product(range(2), repeat=n)}
    z = {x: np.zeros((n, 1)) for x in f}
    return FunctionAdversarySolution(f, 2, n, z, {x: a.copy() for x, a in z.items()}, 2)


def identity_state_conversion() -> StateConversionSolution:
    """|0> -> |x> on one bit with the bidirectional oracle O_x ⊕ O_x* on B ⊗ Q."""
    xis, taus, ors, ws = [], [], [], []
    for x in (0, 1):
        o = shift_oracle(2, x)
        big = np.zeros((4, 4), dtype=complex)
        big[:2, :2] = o
        big[2:, 2:] = o.conj().T
        xis.append(np.array([1, 0], dtype=complex))
        taus.append(np.eye(2, dtype=complex)[x])
        ors.append(big)
        ws.append(np.array([1, 0, 0, 0], dtype=complex))
    return StateConversionSolution(xis, taus, ors, ws)
