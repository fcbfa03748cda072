"""Canonical-form transducers: one joint oracle query, then a work unitary.

Coordinates of a canonical transducer are laid out flat as

    [ H (public) | L° (work) | L•_1 | ... | L•_r ]

where the query sector of slot i is L↑_i ⊗ M^(i), stored copy-major (index
``u * dim + k``).  Oracles are addressed by slot name.  A slot named ``x*``
stands for the inverse of the oracle on slot ``x``; inversion of a transducer
swaps the two names, which is how bidirectional access is modelled.

Every transducer carries a *coupling*: a linear rule that, given oracles and
an initial vector xi, returns a declared target tau and the full state
xi ⊕ v.  Builders register designer couplings; when none applies, the minimal
catalyst of the one-pass unitary is used.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import (
    DimMismatch,
    InadmissibleInitialState,
    NotAligned,
    NotUnitary,
    SlotMismatch,
)
from .linalg import SectorSpace, dense, embed, pseudoinverse, unitarity_defect, vector_to_json
from .transducer import Transducer, TransductionCertificate

ADMISSIBLE_TOL = 1e-9

Oracles = Mapping[str, np.ndarray]
Family = Callable[[Oracles, np.ndarray], "tuple[np.ndarray, np.ndarray] | None"]


def conj_name(name: str) -> str:
    return name[:-1] if name.endswith("*") else name + "*"


def with_adjoints(oracles: Oracles) -> dict:
    """Add ``name*`` = O^dagger for every oracle lacking its partner."""
    out = dict(oracles)
    for k, o in list(oracles.items()):
        out.setdefault(conj_name(k), np.asarray(o).conj().T)
    return out


@dataclass(frozen=True)
class OracleSlot:
    """An oracle slot: ``mult`` copies of an oracle acting on ``dim`` dims.

    ``domain`` optionally declares the admissible inputs of the oracle:
    ``"zero"`` means span{|0>}, ``"zero_inv"`` means span{O^dagger |0>}
    (the backward half of a state-generating oracle).
    """

    name: str
    dim: int
    mult: int
    domain: str | None = None

    @property
    def size(self) -> int:
        return self.dim * self.mult


@dataclass
class CanonicalCertificate(TransductionCertificate):
    v_work: np.ndarray = None
    q: dict = field(default_factory=dict)
    L: float = 0.0
    L_partial: dict = field(default_factory=dict)
    target: np.ndarray = None
    state: np.ndarray = None
    admissibility_violation: float = 0.0

    @property
    def query_state(self) -> np.ndarray:
        parts = [self.q[k] for k in self.q]
        return np.concatenate(parts) if parts else np.zeros(0, dtype=complex)

    def to_json(self) -> dict:
        d = super().to_json()
        d.update({"L": self.L, "L_partial": dict(self.L_partial),
                  "q": {k: vector_to_json(v) for k, v in self.q.items()}})
        return d


class CanonicalTransducer:
    """Canonical transducer with explicit flat layout (see module docstring)."""

    def __init__(self, h: int, work_dim: int, slots: Sequence[OracleSlot], work,
                 family: Family | None = None, admissible: np.ndarray | None = None,
                 meta: dict | None = None, name: str = ""):
        self.h = int(h)
        self.work_dim = int(work_dim)
        self.slots = tuple(slots)
        names = [s.name for s in self.slots]
        if len(set(names)) != len(names):
            raise NotAligned(f"duplicate slot names {names}")
        self.n = self.h + self.work_dim + sum(s.size for s in self.slots)
        if work.shape != (self.n, self.n):
            raise DimMismatch(f"work unitary is {work.shape}, layout needs {self.n}")
        self.work = work
        self.family = family
        self.admissible = admissible
        self.meta = dict(meta or {})
        self.name = name
        self._offsets = {}
        pos = self.h + self.work_dim
        for s in self.slots:
            self._offsets[s.name] = pos
            pos += s.size

    # -- layout ------------------------------------------------------------

    def slot(self, name: str) -> OracleSlot:
        for s in self.slots:
            if s.name == name:
                return s
        raise SlotMismatch(f"no slot named {name!r}")

    def slot_names(self) -> list:
        return [s.name for s in self.slots]

    def slot_range(self, name: str) -> np.ndarray:
        o = self._offsets[name]
        return np.arange(o, o + self.slot(name).size)

    @property
    def pub(self) -> np.ndarray:
        return np.arange(self.h)

    @property
    def private(self) -> np.ndarray:
        return np.arange(self.h, self.n)

    @property
    def work_range(self) -> np.ndarray:
        return np.arange(self.h, self.h + self.work_dim)

    @property
    def space(self) -> SectorSpace:
        secs = []
        if self.h:
            secs.append(((("P", 0), ("R", 0)), self.h))
        if self.work_dim:
            secs.append(((("P", 1), ("R", 0)), self.work_dim))
        for i, s in enumerate(self.slots, 1):
            secs.append(((("P", 1), ("R", i), ("slot", s.name)), s.size))
        return SectorSpace(tuple(secs))

    def split(self, state: np.ndarray):
        q = {s.name: state[self.slot_range(s.name)] for s in self.slots}
        return state[: self.h], state[self.h: self.h + self.work_dim], q

    # -- oracle application -------------------------------------------------

    def oracle_map(self, oracles) -> dict:
        if oracles is None:
            oracles = {}
        if not isinstance(oracles, Mapping):
            oracles = list(oracles)
            if len(oracles) != len(self.slots):
                raise SlotMismatch(f"{len(oracles)} oracles for {len(self.slots)} slots")
            oracles = {s.name: o for s, o in zip(self.slots, oracles)}
        out = {}
        for s in self.slots:
            if s.name not in oracles:
                raise SlotMismatch(f"missing oracle for slot {s.name!r}")
            o = oracles[s.name]
            if o.shape != (s.dim, s.dim):
                raise DimMismatch(f"oracle {s.name!r} is {o.shape}, slot needs {s.dim}")
            out[s.name] = o
        return out

    def query_apply(self, oracles, state: np.ndarray) -> np.ndarray:
        om = self.oracle_map(oracles)
        out = np.array(state, dtype=complex, copy=True)
        for s in self.slots:
            r = self.slot_range(s.name)
            blk = out[r].reshape(s.mult, s.dim)
            out[r] = (blk @ np.asarray(om[s.name]).T).reshape(-1)
        return out

    def query_matrix(self, oracles):
        om = self.oracle_map(oracles)
        parts = [sp.identity(self.h + self.work_dim, dtype=complex, format="csr")]
        for s in self.slots:
            parts.append(sp.kron(sp.identity(s.mult, format="csr"), sp.csr_matrix(om[s.name]), format="csr"))
        return sp.block_diag(parts, format="csr")

    def one_pass(self, oracles):
        w = self.work
        q = self.query_matrix(oracles)
        if sp.issparse(w):
            return (w @ q).tocsr()
        return w @ q.toarray()

    def apply(self, oracles, state: np.ndarray) -> np.ndarray:
        return self.work @ self.query_apply(oracles, state)

    def check_unitary(self, tol: float = 1e-9) -> None:
        d = unitarity_defect(self.work)
        if d > tol:
            raise NotUnitary(f"work unitary defect {d:.3e}")

    # -- couplings ----------------------------------------------------------

    def minimal(self, oracles, xi: np.ndarray):
        """Minimal catalyst of the one-pass unitary on xi (columns allowed)."""
        u = dense(self.one_pass(oracles))
        p, q = self.pub, self.private
        xi2 = xi.reshape(self.h, -1)
        m = np.eye(q.size) - u[np.ix_(q, q)]
        v = pseudoinverse(m) @ (u[np.ix_(q, p)] @ xi2)
        tau = u[np.ix_(p, p)] @ xi2 + u[np.ix_(p, q)] @ v
        state = np.vstack([xi2, v])
        if xi.ndim == 1:
            return tau[:, 0], state[:, 0]
        return tau, state

    def couple(self, oracles, xi: np.ndarray, minimal: bool = False):
        """Declared (tau, xi ⊕ v) and which catalyst was used."""
        xi = np.asarray(xi, dtype=complex).reshape(-1)
        if xi.size != self.h:
            raise DimMismatch(f"xi has length {xi.size}, public dim is {self.h}")
        if not minimal and self.family is not None:
            got = self.family(oracles, xi)
            if got is not None:
                return got[0], got[1], "designer"
        tau, state = self.minimal(oracles, xi)
        return tau, state, "minimal"

    def declared_action(self, oracles) -> np.ndarray:
        cols = [self.couple(oracles, e)[0] for e in np.eye(self.h, dtype=complex)]
        return np.array(cols).T.reshape(self.h, self.h)

    def true_action(self, oracles) -> np.ndarray:
        tau, _ = self.minimal(oracles, np.eye(self.h, dtype=complex))
        return tau

    def check_admissible(self, xi: np.ndarray) -> None:
        if self.admissible is None:
            return
        r = np.linalg.norm(xi - self.admissible @ xi)
        if r > ADMISSIBLE_TOL * max(1.0, np.linalg.norm(xi)):
            raise InadmissibleInitialState(f"initial state leaves the admissible subspace by {r:.3e}")

    def admissibility_violation(self, oracles, q: Mapping) -> float:
        om = self.oracle_map(oracles)
        worst = 0.0
        for s in self.slots:
            if s.domain is None:
                continue
            blk = q[s.name].reshape(s.mult, s.dim)
            if s.domain == "zero":
                g = np.zeros(s.dim, dtype=complex)
                g[0] = 1
            else:
                g = np.asarray(om[s.name]).conj().T[:, 0]
            resid = blk - np.outer(blk @ g.conj(), g)
            worst = max(worst, float(np.linalg.norm(resid)))
        return worst

    def certificate(self, oracles, xi: np.ndarray, minimal: bool = False) -> CanonicalCertificate:
        xi = np.asarray(xi, dtype=complex).reshape(-1)
        self.check_admissible(xi)
        tau, state, kind = self.couple(oracles, xi, minimal=minimal)
        out = self.apply(oracles, state)
        target = state.copy()
        target[: self.h] = tau
        delta = float(np.linalg.norm(out - target))
        _, vw, q = self.split(state)
        v = state[self.h:]
        lp = {k: float(np.vdot(x, x).real) for k, x in q.items()}
        return CanonicalCertificate(
            xi=xi, tau=tau, catalyst=v, W=float(np.vdot(v, v).real), residual=delta,
            delta=delta, kind=kind, v_work=vw, q=q, L=float(sum(lp.values())),
            L_partial=lp, target=target, state=state,
            admissibility_violation=self.admissibility_violation(oracles, q))

    def as_transducer(self, oracles) -> Transducer:
        """The one-pass unitary as a plain transducer."""
        return Transducer.from_matrix(dense(self.one_pass(oracles)), self.h)

    def to_json(self) -> dict:
        from .linalg import matrix_to_json

        d = {"space": self.space.to_json(),
             "public_sectors": [{"P": 0, "R": 0}] if self.h else [],
             "unitary": matrix_to_json(self.work),
             "oracle_slots": [{"name": s.name, "dim": s.dim, "mult": s.mult, "R": i}
                              for i, s in enumerate(self.slots, 1)]}
        if self.admissible is not None:
            d["admissible_projector"] = matrix_to_json(self.admissible)
        return d

    def __repr__(self) -> str:
        sl = ", ".join(f"{s.name}:{s.mult}x{s.dim}" for s in self.slots)
        return f"CanonicalTransducer({self.name or '?'}, h={self.h}, work={self.work_dim}, slots=[{sl}], n={self.n})"


# -- helpers for builders ---------------------------------------------------


def span_family(fn: Callable[[Oracles], "tuple | None"], fallback: "CanonicalTransducer | None" = None) -> Family:
    """Coupling defined by columns (X, T, V): inputs, targets and full states.

    Inputs outside span(X) are handled by adding the minimal coupling of the
    remainder, which keeps the rule linear.
    """

    def family(oracles, xi):
        got = fn(oracles)
        if got is None:
            return None
        x, t, v = got
        c = pseudoinverse(x) @ xi
        r = xi - x @ c
        tau, state = t @ c, v @ c
        if np.linalg.norm(r) > 1e-12 * max(1.0, np.linalg.norm(xi)):
            if fallback is None:
                return None
            t2, s2 = fallback.minimal(oracles, r)
            tau, state = tau + t2, state + s2
        return tau, state

    return family


def from_unitary(u, h: int, name: str = "") -> CanonicalTransducer:
    """A transducer with no oracle: its work unitary is ``u``."""
    u = u if sp.issparse(u) else np.asarray(u, dtype=complex)
    return CanonicalTransducer(h, u.shape[0] - h, (), u, name=name)


def gate(u, name: str = "gate") -> CanonicalTransducer:
    """A gate as a transducer with empty private space (W = 0)."""
    u = u if sp.issparse(u) else np.asarray(u, dtype=complex)

    def family(oracles, xi):
        return u @ xi, xi.copy()

    return CanonicalTransducer(u.shape[0], 0, (), u, family=family, name=name, meta={"T": 1})


def apply_canonical(S: CanonicalTransducer, oracles, state: np.ndarray) -> np.ndarray:
    """S° · Ĩ(O) · state."""
    return S.apply(oracles, np.asarray(state, dtype=complex))


def certificate(S: CanonicalTransducer, oracles, xi: np.ndarray, minimal: bool = False) -> CanonicalCertificate:
    return S.certificate(oracles, xi, minimal=minimal)


# -- structural operations --------------------------------------------------


def rename_slots(S: CanonicalTransducer, mapping) -> CanonicalTransducer:
    """Rename oracle slots (``mapping`` is a dict or a callable on names)."""
    f = mapping if callable(mapping) else (lambda k: mapping.get(k, k))
    slots = tuple(OracleSlot(f(s.name), s.dim, s.mult, s.domain) for s in S.slots)
    back = {f(s.name): s.name for s in S.slots}
    fam = None
    if S.family is not None:
        def fam(oracles, xi):
            return S.family({back[k]: v for k, v in oracles.items() if k in back}, xi)
    return CanonicalTransducer(S.h, S.work_dim, slots, S.work, family=fam,
                               admissible=S.admissible, meta=S.meta, name=S.name)


def invert(S: CanonicalTransducer) -> CanonicalTransducer:
    """Inverse transducer: work (S°)*, queries to the conjugate oracles.

    If S maps xi ⊕ v° ⊕ v• to tau ⊕ v° ⊕ v• after querying O, the inverse
    maps tau ⊕ v° ⊕ O v• to xi ⊕ v° ⊕ O v• after querying O*.
    """
    slots = tuple(OracleSlot(conj_name(s.name), s.dim, s.mult,
                             {"zero": "zero_inv", "zero_inv": "zero"}.get(s.domain) if s.domain else None)
                  for s in S.slots)
    work = S.work.conj().T
    if sp.issparse(work):
        work = work.tocsr()

    def family(oracles, tau):
        orig = {conj_name(k): np.asarray(v).conj().T for k, v in oracles.items()}
        a = S.declared_action(orig)
        xi = pseudoinverse(a) @ tau
        if np.linalg.norm(a @ xi - tau) > 1e-9 * max(1.0, np.linalg.norm(tau)):
            return None
        _, state, _ = S.couple(orig, xi)
        new = S.query_apply(orig, state)
        new[: S.h] = tau
        return xi, new

    meta = dict(S.meta)
    meta["inverse_of"] = S.name
    return CanonicalTransducer(S.h, S.work_dim, slots, work, family=family, meta=meta,
                               name=f"inv({S.name})")


class _Assembler:
    """Collect coordinates of a composite layout.

    Children register where their coordinates go; slots with equal names are
    merged (shared oracle) and must agree in dimension.
    """

    def __init__(self, h: int):
        self.h = h
        self.work_dim = 0
        self.slot_dims: dict = {}
        self.slot_domain: dict = {}
        self.slot_chunks: dict = {}  # name -> list of (owner, tag, mult)

    def add_work(self, k: int) -> np.ndarray:
        r = np.arange(self.h + self.work_dim, self.h + self.work_dim + k)
        self.work_dim += k
        return r

    def add_slot_chunk(self, slot: OracleSlot, owner) -> None:
        if slot.name in self.slot_dims and self.slot_dims[slot.name] != slot.dim:
            raise NotAligned(f"slot {slot.name!r} has dims {self.slot_dims[slot.name]} and {slot.dim}")
        self.slot_dims.setdefault(slot.name, slot.dim)
        dom = self.slot_domain.get(slot.name, slot.domain)
        self.slot_domain[slot.name] = dom if dom == slot.domain else None
        self.slot_chunks.setdefault(slot.name, []).append((owner, slot.mult))

    def finalize(self):
        slots, pos, where = [], self.h + self.work_dim, {}
        for name, chunks in self.slot_chunks.items():
            d = self.slot_dims[name]
            mult = 0
            for owner, m in chunks:
                where[(owner, name)] = np.arange(pos + mult * d, pos + (mult + m) * d)
                mult += m
            slots.append(OracleSlot(name, d, mult, self.slot_domain[name]))
            pos += mult * d
        return tuple(slots), pos, where


def _child_index(child: CanonicalTransducer, pub_idx, work_idx, where, owner) -> np.ndarray:
    idx = np.empty(child.n, dtype=int)
    idx[: child.h] = pub_idx
    idx[child.h: child.h + child.work_dim] = work_idx
    for s in child.slots:
        idx[child.slot_range(s.name)] = where[(owner, s.name)]
    return idx


def _product(ops, n: int):
    """ops applied in order: ops[0] first."""
    out = sp.identity(n, dtype=complex, format="csr")
    for o in ops:
        out = (o @ out).tocsr()
    return out


def _restrict(oracles, child: CanonicalTransducer) -> dict:
    if oracles is None:
        return {}
    if not isinstance(oracles, Mapping):
        raise SlotMismatch("composite transducers take oracles by slot name")
    return {s.name: oracles[s.name] for s in child.slots if s.name in oracles}


def parallel(children: Sequence[CanonicalTransducer], oracle_mode: str = "shared",
             name: str = "") -> CanonicalTransducer:
    """Direct sum over a J register (public space is j-major)."""
    children = list(children)
    if oracle_mode == "per-branch":
        seen: set = set()
        fixed = []
        for j, c in enumerate(children):
            if seen & set(c.slot_names()):
                c = rename_slots(c, lambda k, j=j: f"{k}@{j}")
            seen |= set(c.slot_names())
            fixed.append(c)
        children = fixed
    elif oracle_mode != "shared":
        raise ValueError(f"unknown oracle mode {oracle_mode!r}")
    h = sum(c.h for c in children)
    asm = _Assembler(h)
    works = [asm.add_work(c.work_dim) for c in children]
    for j, c in enumerate(children):
        for s in c.slots:
            asm.add_slot_chunk(s, j)
    slots, n, where = asm.finalize()
    offs = np.cumsum([0] + [c.h for c in children])
    idxs = [_child_index(c, np.arange(offs[j], offs[j + 1]), works[j], where, j)
            for j, c in enumerate(children)]
    work = _product([embed(c.work, idxs[j], n) for j, c in enumerate(children)], n)

    def family(oracles, xi):
        tau = np.zeros(h, dtype=complex)
        state = np.zeros(n, dtype=complex)
        for j, c in enumerate(children):
            t, s, _ = c.couple(_restrict(oracles, c), xi[offs[j]: offs[j + 1]])
            tau[offs[j]: offs[j + 1]] = t
            state[idxs[j]] = s
        return tau, state

    meta = {"kind": "parallel", "T": max((c.meta.get("T", 1) for c in children), default=0)}
    adm = None
    if any(c.admissible is not None for c in children):
        from .linalg import direct_sum

        adm = direct_sum(*[c.admissible if c.admissible is not None else np.eye(c.h) for c in children])
    out = CanonicalTransducer(h, asm.work_dim, slots, work, family=family, meta=meta, admissible=adm,
                              name=name or "par(" + ",".join(c.name for c in children) + ")")
    out.children = children
    out.child_index = idxs
    out.offsets = offs
    return out


def extend_identity(S: CanonicalTransducer, E: int) -> CanonicalTransducer:
    """I_E ⊗ S as the direct sum of E copies sharing the oracle."""
    if E == 1:
        return S
    return parallel([S] * E, "shared", name=f"I{E}x({S.name})")


def canonicalize(T, public: Sequence[int] | None = None, family=None, name: str = "") -> CanonicalTransducer:
    """Canonical form of a gate/query sequence on a space X.

    ``T`` provides ``dim``, ``steps`` (``("gate", U)`` or ``("query", slot)``)
    and ``slots`` (slot name -> ``QuerySite`` with ``index`` of shape
    mult x dim into X).  ``public`` lists the coordinates of X forming H
    (default: all of X); the remaining coordinates of X become work space.

    Every query gets a fresh copy of its slot sector.  The catalyst stores the
    state that will be queried there; the work unitary swaps it in at the
    moment the sequence queries, so one upfront query replaces all of them.
    ``family(oracles, xi)`` may supply a declared (tau, state on X) for the
    non-canonical transducer; otherwise the minimal catalyst of T is used.
    """
    N = int(T.dim)
    public = np.arange(N) if public is None else np.asarray(public, dtype=int)
    privx = np.setdiff1d(np.arange(N), public)
    h, w = public.size, privx.size
    xmap = np.empty(N, dtype=int)
    xmap[public] = np.arange(h)
    xmap[privx] = h + np.arange(w)
    sites = T.slots
    counts: dict = {}
    for kind, arg in T.steps:
        if kind == "query":
            if arg not in sites:
                raise NotAligned(f"query to unknown slot {arg!r}")
            counts[arg] = counts.get(arg, 0) + 1
    slots, pos, base = [], h + w, {}
    for sname, site in sites.items():
        c = counts.get(sname, 0)
        if not c:
            continue
        m, d = site.index.shape
        slots.append(OracleSlot(sname, d, m * c, getattr(site, "domain", None)))
        base[sname] = pos
        pos += m * d * c
    n = pos
    ops, used = [], {k: 0 for k in counts}
    for kind, arg in T.steps:
        if kind == "gate":
            ops.append(embed(sp.csr_matrix(arg) if not sp.issparse(arg) else arg, xmap, n))
        else:
            site = sites[arg]
            src = xmap[site.index.reshape(-1)]
            k = site.index.size
            dst = base[arg] + used[arg] * k + np.arange(k)
            used[arg] += 1
            perm = np.arange(n)
            perm[src], perm[dst] = dst, src
            ops.append(sp.csr_matrix((np.ones(n, dtype=complex), (perm, np.arange(n))), shape=(n, n)))
    work = _product(ops, n)

    def _run(oracles, xstate):
        """Execute T on xstate, collecting the state before every query."""
        psi = np.array(xstate, dtype=complex)
        qs = {k: [] for k in counts}
        for kind, arg in T.steps:
            if kind == "gate":
                psi = arg @ psi
            else:
                site = sites[arg]
                blk = psi[site.index]
                qs[arg].append(blk.reshape(-1).copy())
                psi[site.index] = blk @ np.asarray(oracles[arg]).T
        return psi, qs

    def _minimal_x(oracles, xi):
        u = np.eye(N, dtype=complex)
        u = np.array([_run(oracles, col)[0] for col in u.T]).T
        tt = Transducer.from_matrix(u[np.ix_(np.concatenate([public, privx]), np.concatenate([public, privx]))], h)
        from .transducer import _minimal

        tau, v = _minimal(tt, xi[:, None])
        xs = np.zeros(N, dtype=complex)
        xs[public] = xi
        xs[privx] = v[:, 0]
        return tau[:, 0], xs

    def fam(oracles, xi):
        got = family(oracles, xi) if family is not None else None
        if got is None:
            if w == 0:
                xs = np.zeros(N, dtype=complex)
                xs[public] = xi
                tau = _run(oracles, xs)[0][public]
            else:
                tau, xs = _minimal_x(oracles, xi)
        else:
            tau, xs = got
        _, qs = _run(oracles, xs)
        state = np.zeros(n, dtype=complex)
        state[xmap] = xs
        for sname, lst in qs.items():
            k = sites[sname].index.size
            for t, qv in enumerate(lst):
                state[base[sname] + t * k: base[sname] + (t + 1) * k] = qv
        return tau, state

    meta = {"kind": "canonicalized", "T": len(T.steps), "guard": True}
    out = CanonicalTransducer(h, w, slots, work, family=fam, meta=meta, name=name or "canon")
    out.run_source = _run
    return out
