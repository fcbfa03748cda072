"""Quantum programs with aligned queries and their conversion to transducers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .canonical import CanonicalTransducer, OracleSlot, gate, parallel, _product
from .compose import sequential_seq
from .errors import DimMismatch, NotAligned, ShapeMismatch, SlotMismatch
from .linalg import SectorSpace, embed, matrix_from_json, permutation_matrix


@dataclass(frozen=True)
class QuerySite:
    """Where a slot's oracle acts: ``index[u, k]`` is the coordinate of copy u,
    oracle basis state k."""

    index: np.ndarray
    domain: str | None = None

    @property
    def mult(self) -> int:
        return int(self.index.shape[0])

    @property
    def dim(self) -> int:
        return int(self.index.shape[1])


def site_from_block(offset: int, mult: int, dim: int, domain=None) -> QuerySite:
    return QuerySite(offset + np.arange(mult * dim).reshape(mult, dim), domain)


@dataclass
class QuantumProgram:
    """A(O) = U_Q Õ U_{Q-1} ... Õ U_0 on a space of dimension ``dim``.

    ``steps`` holds ``("gate", U)`` and ``("query", slot)`` entries in
    execution order.  All queries to a slot act on its fixed ``QuerySite``,
    which is what makes them aligned.
    """

    dim: int
    slots: dict
    steps: list
    space: SectorSpace | None = None
    name: str = ""

    def __post_init__(self):
        for nm, site in self.slots.items():
            idx = np.asarray(site.index)
            if idx.ndim != 2 or idx.min(initial=0) < 0 or idx.max(initial=0) >= self.dim:
                raise ShapeMismatch(f"site of slot {nm!r} is out of range")
            if np.unique(idx).size != idx.size:
                raise ShapeMismatch(f"site of slot {nm!r} repeats a coordinate")
        for kind, arg in self.steps:
            if kind == "gate":
                if arg.shape != (self.dim, self.dim):
                    raise DimMismatch(f"gate of shape {arg.shape} on a {self.dim}-dim space")
            elif kind == "query":
                if arg not in self.slots:
                    raise NotAligned(f"query to undeclared slot {arg!r}")
            else:
                raise ShapeMismatch(f"unknown step kind {kind!r}")

    @property
    def n_queries(self) -> int:
        return sum(1 for k, _ in self.steps if k == "query")

    def rounds(self) -> list:
        """Alternative form G_{m-1} Õ^{b_{m-1}} ... Õ^{b_1} G_0 as a list of
        (slot queried before the gate or None, gate); identity gates are
        inserted where two queries meet or the program starts/ends with one."""
        out, pending = [], None
        eye = np.eye(self.dim, dtype=complex)
        started = False
        for kind, arg in self.steps:
            if kind == "gate":
                out.append((pending, arg))
                pending, started = None, True
            else:
                if not started:
                    out.append((None, eye))
                    started = True
                if pending is not None:
                    out.append((pending, eye))
                pending = arg
        if pending is not None or not out:
            out.append((pending, eye))
        return out

    @property
    def T(self) -> int:
        return len(self.rounds())


@dataclass
class ProgramTrace:
    states: list
    query_states: list  # (slot, vector of length mult*dim) before each query
    q: dict = field(default_factory=dict)

    @property
    def L(self) -> float:
        return float(sum(np.vdot(v, v).real for _, v in self.query_states))

    @property
    def L_partial(self) -> dict:
        out: dict = {}
        for s, v in self.query_states:
            out[s] = out.get(s, 0.0) + float(np.vdot(v, v).real)
        return out


def _site_apply(psi: np.ndarray, site: QuerySite, o: np.ndarray) -> None:
    blk = psi[site.index]
    psi[site.index] = blk @ np.asarray(o).T


def run_program(A: QuantumProgram, oracles, xi: np.ndarray):
    """Execute A(O) on xi, recording the state in front of every query."""
    xi = np.asarray(xi, dtype=complex).reshape(-1)
    if xi.size != A.dim:
        raise DimMismatch(f"input of length {xi.size} for a {A.dim}-dim program")
    oracles = dict(oracles or {})
    for nm, site in A.slots.items():
        if nm in oracles and oracles[nm].shape != (site.dim, site.dim):
            raise DimMismatch(f"oracle {nm!r} has shape {oracles[nm].shape}")
    psi = xi.copy()
    states, qs = [psi.copy()], []
    for kind, arg in A.steps:
        if kind == "gate":
            psi = arg @ psi
        else:
            if arg not in oracles:
                raise SlotMismatch(f"missing oracle for slot {arg!r}")
            site = A.slots[arg]
            qs.append((arg, psi[site.index].reshape(-1).copy()))
            _site_apply(psi, site, oracles[arg])
        states.append(psi.copy())
    q: dict = {}
    for s, v in qs:
        q.setdefault(s, []).append(v)
    q = {s: np.concatenate(v) for s, v in q.items()}
    return psi, ProgramTrace(states, qs, q)


def program_matrix(A: QuantumProgram, oracles) -> np.ndarray:
    cols = [run_program(A, oracles, e)[0] for e in np.eye(A.dim, dtype=complex)]
    return np.array(cols).T


def query_transducer(dim: int, slot: str, site: QuerySite) -> CanonicalTransducer:
    """One query as a transducer: the copy L• of the site holds the catalyst,
    the work unitary swaps the site with it (W = ‖ξ•‖²)."""
    k = site.index.size
    n = dim + k
    perm = np.arange(n)
    src = site.index.reshape(-1)
    dst = dim + np.arange(k)
    perm[src], perm[dst] = dst, src
    work = permutation_matrix(perm)

    def family(oracles, xi):
        state = np.zeros(n, dtype=complex)
        state[:dim] = xi
        state[dim:] = xi[src]
        tau = xi.copy()
        _site_apply(tau, site, oracles[slot])
        return tau, state

    return CanonicalTransducer(dim, 0, (OracleSlot(slot, site.dim, site.mult, site.domain),), work,
                               family=family, meta={"T": 1}, name=f"Q[{slot}]")


def to_transducer_circuit(A: QuantumProgram) -> CanonicalTransducer:
    """Sequential composition of gate transducers and one query transducer
    per query; the catalyst is the query state of A, so W = L(A)."""
    parts = []
    for kind, arg in A.steps:
        if kind == "gate":
            parts.append(gate(arg))
        else:
            parts.append(query_transducer(A.dim, arg, A.slots[arg]))
    if not parts:
        parts.append(gate(np.eye(A.dim, dtype=complex)))
    S = sequential_seq(parts, name=f"circ({A.name})")
    S.meta.update({"model": "circuit", "T": len(A.steps)})
    return S


def to_transducer_qrag(A: QuantumProgram) -> CanonicalTransducer:
    """History-state transducer: the catalyst holds the states in front of
    rounds 1..m-1; the work applies G_t on copy t and shifts t -> t+1.
    Query slots of copy t are guarded so only the stored history is queried."""
    rounds = A.rounds()
    m, N = len(rounds), A.dim
    work_dim = 0
    site_of = []
    for t, (b, _) in enumerate(rounds):
        site_of.append(A.slots[b] if b is not None else None)
        if t == 0:
            continue
        work_dim += N - (site_of[t].index.size if b is not None else 0)
    mults: dict = {}
    for t, (b, _) in enumerate(rounds):
        if t and b is not None:
            mults[b] = mults.get(b, 0) + A.slots[b].mult
    slot_order = [nm for nm in A.slots if nm in mults]
    slots = [OracleSlot(nm, A.slots[nm].dim, mults[nm], A.slots[nm].domain) for nm in slot_order]
    n = N + work_dim + sum(s.size for s in slots)
    base, pos = {}, N + work_dim
    for s in slots:
        base[s.name] = pos
        pos += s.size
    copies = [np.arange(N)]
    wpos, used = N, {nm: 0 for nm in slot_order}
    for t in range(1, m):
        b = rounds[t][0]
        idx = np.empty(N, dtype=int)
        if b is None:
            idx[:] = wpos + np.arange(N)
            wpos += N
        else:
            site = A.slots[b]
            sidx = site.index.reshape(-1)
            rest = np.setdiff1d(np.arange(N), sidx)
            idx[rest] = wpos + np.arange(rest.size)
            wpos += rest.size
            idx[sidx] = base[b] + used[b] + np.arange(sidx.size)
            used[b] += sidx.size
        copies.append(idx)
    ops = [embed(sp.csr_matrix(g), copies[t], n) for t, (_, g) in enumerate(rounds)]
    perm = np.arange(n)
    for t in range(m):
        perm[copies[t]] = copies[(t + 1) % m]
    ops.append(permutation_matrix(perm))
    work = _product(ops, n)

    def family(oracles, xi):
        state = np.zeros(n, dtype=complex)
        x = np.array(xi, dtype=complex)
        for t, (b, g) in enumerate(rounds):
            if t:
                state[copies[t]] = x
                if b is not None:
                    _site_apply(x, A.slots[b], oracles[b])
            x = g @ x
        state[:N] = xi
        return x, state

    meta = {"kind": "qrag", "model": "qrag", "T": 1, "T_R": 1, "rounds": m, "guard": True}
    S = CanonicalTransducer(N, work_dim, slots, work, family=family, meta=meta, name=f"qrag({A.name})")
    S.copies = copies
    return S


def parallel_programs(programs: Sequence[QuantumProgram]) -> CanonicalTransducer:
    """Direct sum of the QRAG transducers of several programs (shared oracle)."""
    if len(programs) == 1:
        return to_transducer_qrag(programs[0])
    S = parallel([to_transducer_qrag(a) for a in programs], "shared")
    S.meta.update({"model": "qrag", "T_R": 1})
    return S


@dataclass
class CompressedCircuit:
    """Runnable query-compressed version of a program."""

    program: QuantumProgram
    transducer: CanonicalTransducer
    schedule: object
    eps: float

    def run(self, oracles, xi: np.ndarray):
        from .engine import run_scheduled

        ref = run_program(self.program, oracles, xi)[0]
        return run_scheduled(self.transducer, self.schedule, oracles, xi, reference=ref)


def query_compress(A: QuantumProgram, eps: float, L_bounds, model: str = "qrag",
                   norm: float = 1.0) -> CompressedCircuit:
    """Compress A to roughly L^(i)/eps² queries per oracle.

    ``L_bounds`` maps slot names (or lists, in slot order) to upper bounds on
    the partial Las Vegas complexities for unit inputs.  Oracles whose
    schedule would query them only once are dropped, as in the final step of
    the compression argument; the total error stays within eps.
    """
    from .engine import choose_schedule

    S = to_transducer_qrag(A) if model == "qrag" else to_transducer_circuit(A)
    names = S.slot_names()
    if not isinstance(L_bounds, Mapping):
        L_bounds = dict(zip([nm for nm in A.slots], L_bounds))
    Ls = [float(L_bounds.get(nm, 0.0)) * norm ** 2 for nm in names]
    if model == "qrag":
        W = (S.meta["rounds"] - 1) * norm ** 2
    else:
        W = sum(Ls)
    sched = choose_schedule(W, Ls, eps, names=names, drop_single=True)
    return CompressedCircuit(A, S, sched, eps)


# -- JSON -------------------------------------------------------------------


def program_from_json(data: Mapping) -> QuantumProgram:
    space = SectorSpace.from_json(data["space"]) if "space" in data and "sectors" in data["space"] else None
    dim = space.total_dim if space is not None else int(data["dim"])
    mats = {k: matrix_from_json(v) for k, v in data.get("matrices", {}).items()}
    slots = {}
    order = []
    for s in data.get("oracle_slots", []):
        nm = str(s["name"])
        if "index" in s:
            idx = np.asarray(s["index"], dtype=int)
        else:
            idx = site_from_block(int(s["offset"]), int(s.get("mult", 1)), int(s["dim"])).index
        slots[nm] = QuerySite(idx.reshape(-1, idx.shape[-1]) if idx.ndim > 1 else idx.reshape(1, -1),
                              s.get("domain"))
        order.append(nm)
    steps = []
    if "rounds" in data:
        # alternative form: G_{m-1} Õ^{b_{m-1}} ... Õ^{b_1} G_0, b_t ∈ {0,1} per slot
        for t, rd in enumerate(data["rounds"]):
            b = rd.get("b", {})
            if not isinstance(b, Mapping):
                b = dict(zip(order, b))
            for nm in order:
                if int(b.get(nm, 0)):
                    steps.append(("query", nm))
            g = rd.get("gate")
            if g is not None:
                steps.append(("gate", mats[g] if isinstance(g, str) else matrix_from_json(g)))
        return QuantumProgram(dim, slots, steps, space, str(data.get("name", "")))
    for st in data["steps"]:
        if "gate" in st:
            g = st["gate"]
            steps.append(("gate", mats[g] if isinstance(g, str) else matrix_from_json(g)))
        elif "query" in st:
            q = st["query"]
            nm = order[q] if isinstance(q, int) else str(q)
            if "targets" in st:
                tgt = np.asarray(st["targets"], dtype=int)
                if nm not in slots or tgt.size != slots[nm].index.size or \
                        not np.array_equal(tgt.reshape(-1), slots[nm].index.reshape(-1)):
                    raise NotAligned(f"query to {nm!r} targets different registers than its slot")
            steps.append(("query", nm))
        else:
            raise ShapeMismatch(f"bad step {st!r}")
    return QuantumProgram(dim, slots, steps, space, str(data.get("name", "")))
