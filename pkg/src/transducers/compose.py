"""Sequential and functional composition, predictions and composition trees.

Parallel composition (direct sums) lives in :mod:`transducers.canonical`
next to ``extend_identity``; it is re-exported here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .canonical import (
    CanonicalTransducer,
    OracleSlot,
    _Assembler,
    _child_index,
    _product,
    _restrict,
    extend_identity,
    parallel,
)
from .errors import InadmissibleQueries, LayoutMismatch, SizeCap, SlotMismatch
from .linalg import embed, permutation_matrix

__all__ = [
    "parallel", "extend_identity", "sequential_seq", "sequential_par", "functional",
    "Prediction", "predicted_certificate", "composition_tree", "TreeNode", "MAX_DIM",
]

MAX_DIM = 4096
BLOCK_TOL = 1e-9


def _check_same_public(children):
    hs = {c.h for c in children}
    if len(hs) != 1:
        raise LayoutMismatch(f"children have public dims {sorted(hs)}")
    return hs.pop()


def sequential_seq(children: Sequence[CanonicalTransducer], name: str = "") -> CanonicalTransducer:
    """S_m ... S_1 with one joint query upfront; catalyst = ⊕ catalysts."""
    children = list(children)
    h = _check_same_public(children)
    asm = _Assembler(h)
    works = [asm.add_work(c.work_dim) for c in children]
    for t, c in enumerate(children):
        for s in c.slots:
            asm.add_slot_chunk(s, t)
    slots, n, where = asm.finalize()
    idxs = [_child_index(c, np.arange(h), works[t], where, t) for t, c in enumerate(children)]
    work = _product([embed(c.work, idxs[t], n) for t, c in enumerate(children)], n)

    def family(oracles, xi):
        state = np.zeros(n, dtype=complex)
        psi = xi
        for t, c in enumerate(children):
            tau, s, _ = c.couple(_restrict(oracles, c), psi)
            state[idxs[t][h:]] = s[h:]
            psi = tau
        state[:h] = xi
        return psi, state

    meta = {"kind": "seq_sequential", "T": sum(c.meta.get("T", 1) for c in children) + len(children)}
    out = CanonicalTransducer(h, asm.work_dim, slots, work, family=family, meta=meta,
                              admissible=children[0].admissible,
                              name=name or "seq(" + ",".join(c.name for c in children) + ")")
    out.children = children
    out.child_index = idxs
    return out


def sequential_par(children: Sequence[CanonicalTransducer], name: str = "") -> CanonicalTransducer:
    """All S°_t at once on copies H_1..H_m of the public space, then a cyclic
    shift H_t -> H_{t+1}, H_m -> H_1.  The intermediate states psi_2..psi_m
    become part of the catalyst."""
    children = list(children)
    h = _check_same_public(children)
    m = len(children)
    asm = _Assembler(h)
    copies = [np.arange(h)] + [asm.add_work(h) for _ in range(m - 1)]
    works = [asm.add_work(c.work_dim) for c in children]
    for t, c in enumerate(children):
        for s in c.slots:
            asm.add_slot_chunk(s, t)
    slots, n, where = asm.finalize()
    idxs = [_child_index(c, copies[t], works[t], where, t) for t, c in enumerate(children)]
    perm = np.arange(n)
    for t in range(m):
        perm[copies[t]] = copies[(t + 1) % m]
    ops = [embed(c.work, idxs[t], n) for t, c in enumerate(children)]
    ops.append(permutation_matrix(perm))
    work = _product(ops, n)

    def family(oracles, xi):
        state = np.zeros(n, dtype=complex)
        psi = xi
        for t, c in enumerate(children):
            tau, s, _ = c.couple(_restrict(oracles, c), psi)
            state[idxs[t]] = s
            psi = tau
        return psi, state

    meta = {"kind": "seq_parallel", "T": max(c.meta.get("T", 1) for c in children) + 1}
    out = CanonicalTransducer(h, asm.work_dim, slots, work, family=family, meta=meta,
                              admissible=children[0].admissible,
                              name=name or "seqp(" + ",".join(c.name for c in children) + ")")
    out.children = children
    out.child_index = idxs
    return out


def _split_blocks(op: np.ndarray, dims: Sequence[int], names: Sequence[str]) -> dict:
    offs = np.cumsum([0] + list(dims))
    off_diag = op.copy()
    out = {}
    for j, nm in enumerate(names):
        sl = slice(offs[j], offs[j + 1])
        out[nm] = op[sl, sl]
        off_diag[sl, sl] = 0
    if np.abs(off_diag).max(initial=0.0) > BLOCK_TOL:
        raise SlotMismatch("the inner action mixes the merged oracle slots")
    return out


def functional(S_A: CanonicalTransducer, S_B: CanonicalTransducer, slot, name: str = "",
               check_admissible: bool = True) -> CanonicalTransducer:
    """S_A ∘ S_B: the oracle(s) ``slot`` of S_A are implemented by S_B.

    ``slot`` is a slot name or a list of names with equal multiplicity; their
    oracle spaces are concatenated and must match the public space of S_B.
    The former query sector of those slots becomes work space L'; S_B acts on
    each of its copies.
    """
    names = [slot] if isinstance(slot, str) else list(slot)
    merged = [S_A.slot(nm) for nm in names]
    mults = {s.mult for s in merged}
    if len(mults) != 1:
        raise SlotMismatch(f"merged slots have multiplicities {sorted(mults)}")
    u = mults.pop()
    dims = [s.dim for s in merged]
    mp = sum(dims)
    if mp != S_B.h:
        raise SlotMismatch(f"slot space has dim {mp}, inner public space has {S_B.h}")
    others = [s for s in S_A.slots if s.name not in names]
    asm = _Assembler(S_A.h)
    work_a = asm.add_work(S_A.work_dim)
    lprime = asm.add_work(u * mp)
    work_b = [asm.add_work(S_B.work_dim) for _ in range(u)]
    for s in others:
        asm.add_slot_chunk(s, "A")
    for k in range(u):
        for s in S_B.slots:
            asm.add_slot_chunk(s, ("B", k))
    slots, n, where = asm.finalize()

    idx_a = np.empty(S_A.n, dtype=int)
    idx_a[: S_A.h] = np.arange(S_A.h)
    idx_a[S_A.h: S_A.h + S_A.work_dim] = work_a
    for s in others:
        idx_a[S_A.slot_range(s.name)] = where[("A", s.name)]
    offs = np.cumsum([0] + dims)
    for j, s in enumerate(merged):
        r = S_A.slot_range(s.name).reshape(u, s.dim)
        for k in range(u):
            r_k = r[k]
            idx_a[r_k] = lprime[k * mp + offs[j]: k * mp + offs[j] + s.dim]
    idx_b = [_child_index(S_B, lprime[k * mp:(k + 1) * mp], work_b[k], where, ("B", k)) for k in range(u)]
    ops = [embed(S_B.work, idx_b[k], n) for k in range(u)]
    ops.append(embed(S_A.work, idx_a, n))
    work = _product(ops, n)

    def inner_oracles(oracles):
        ob = _restrict(oracles, S_B)
        oprime = S_B.declared_action(ob)
        oa = {s.name: oracles[s.name] for s in others}
        oa.update(_split_blocks(oprime, dims, names))
        return oa, ob

    def family(oracles, xi):
        oa, ob = inner_oracles(oracles)
        tau, sa, _ = S_A.couple(oa, xi)
        state = np.zeros(n, dtype=complex)
        state[idx_a] = sa
        for k in range(u):
            vk = state[lprime[k * mp:(k + 1) * mp]]
            if check_admissible and S_B.admissible is not None:
                r = np.linalg.norm(vk - S_B.admissible @ vk)
                if r > 1e-8 * max(1.0, np.linalg.norm(vk)):
                    raise InadmissibleQueries(f"copy {k} queries the inner transducer outside its admissible space ({r:.3e})")
            _, sb, _ = S_B.couple(ob, vk)
            state[idx_b[k]] = sb
        return tau, state

    meta = {"kind": "functional", "T": S_A.meta.get("T", 1) + S_B.meta.get("T", 1)}
    out = CanonicalTransducer(S_A.h, asm.work_dim, slots, work, family=family, meta=meta,
                              admissible=S_A.admissible,
                              name=name or f"{S_A.name}∘{S_B.name}")
    out.children = [S_A, S_B]
    out.functional_info = {"names": names, "u": u, "mp": mp, "lprime": lprime,
                           "inner_oracles": inner_oracles}
    return out


# -- predictions ------------------------------------------------------------


@dataclass
class Prediction:
    tau: np.ndarray
    W: float
    q: dict = field(default_factory=dict)
    delta: float = 0.0
    exact: bool = True

    @property
    def L(self) -> float:
        return float(sum(np.vdot(v, v).real for v in self.q.values()))

    @property
    def L_partial(self) -> dict:
        return {k: float(np.vdot(v, v).real) for k, v in self.q.items()}


def _cat(parts: Mapping, order: Sequence[str]) -> dict:
    out = {}
    for nm in order:
        chunks = [p[nm] for p in parts if nm in p]
        out[nm] = np.concatenate(chunks) if chunks else np.zeros(0, dtype=complex)
    return out


def predicted_certificate(S: CanonicalTransducer, oracles, xi: np.ndarray) -> Prediction:
    """Closed-form (W, q, delta bound) of a composite from its children's
    certificates, one level down."""
    kind = S.meta.get("kind")
    order = S.slot_names()
    xi = np.asarray(xi, dtype=complex)
    if kind == "parallel":
        offs = S.offsets
        certs = [c.certificate(_restrict(oracles, c), xi[offs[j]:offs[j + 1]])
                 for j, c in enumerate(S.children)]
        return Prediction(np.concatenate([c.tau for c in certs]), sum(c.W for c in certs),
                          _cat([c.q for c in certs], order),
                          float(np.sqrt(sum(c.delta ** 2 for c in certs))))
    if kind in ("seq_sequential", "seq_parallel"):
        psi, certs, extra = xi, [], 0.0
        for t, c in enumerate(S.children):
            if t and kind == "seq_parallel":
                extra += float(np.vdot(psi, psi).real)
            ct = c.certificate(_restrict(oracles, c), psi)
            certs.append(ct)
            psi = ct.tau
        return Prediction(psi, extra + sum(c.W for c in certs), _cat([c.q for c in certs], order),
                          sum(c.delta for c in certs))
    if kind == "functional":
        S_A, S_B = S.children
        info = S.functional_info
        oa, ob = info["inner_oracles"](oracles)
        ca = S_A.certificate(oa, xi)
        u, mp, names = info["u"], info["mp"], info["names"]
        pieces = [ca.q[nm].reshape(u, -1) for nm in names]
        q1 = np.concatenate(pieces, axis=1)
        cbs = [S_B.certificate(ob, q1[k]) for k in range(u)]
        qa = {k: v for k, v in ca.q.items() if k not in names}
        return Prediction(ca.tau, ca.W + sum(c.W for c in cbs), _cat([qa] + [c.q for c in cbs], order),
                          ca.delta + float(np.sqrt(sum(c.delta ** 2 for c in cbs))))
    c = S.certificate(oracles, xi)
    return Prediction(c.tau, c.W, dict(c.q), c.delta)


# -- composition trees ------------------------------------------------------


@dataclass
class TreeNode:
    """A node of a composition tree: a transducer (or a program, converted
    with the QRAG construction) whose named slots are implemented by
    sub-trees; unlisted slots query the common oracle."""

    item: object
    children: dict = field(default_factory=dict)

    def transducer(self) -> CanonicalTransducer:
        from .program import QuantumProgram, to_transducer_qrag

        if isinstance(self.item, QuantumProgram):
            return to_transducer_qrag(self.item)
        return self.item

    def cost(self) -> float:
        """Per-unit transduction cost T of this node (m - 1 for programs)."""
        from .program import QuantumProgram

        if isinstance(self.item, QuantumProgram):
            return float(len(self.item.rounds()) - 1)
        return float("nan")


def composition_tree(tree: TreeNode, oracles=None, xi=None, max_dim: int = MAX_DIM):
    """Compose a tree by functional composition, innermost layers first.

    Returns the composed transducer and, when ``xi`` is given, the predicted
    transduction complexity  Σ_nodes T(node) ‖ξ_node‖²  computed from the
    measured query states handed to every node.
    """

    def build(node: TreeNode) -> CanonicalTransducer:
        S = node.transducer()
        for slot_name, sub in node.children.items():
            S = functional(S, build(sub), slot_name)
            if S.n > max_dim:
                raise SizeCap(f"composed dimension {S.n} exceeds {max_dim}")
        return S

    S = build(tree)
    if xi is None:
        return S, None

    def predict(node: TreeNode, inputs: list) -> float:
        total = 0.0
        base = node.transducer()
        # actions of the sub-trees act as the oracles of this node
        sub_ops = {nm: build(sub).declared_action(_restrict(oracles, build(sub)))
                   for nm, sub in node.children.items()}
        om = dict(oracles or {})
        om.update(sub_ops)
        cost = node.cost()
        child_inputs = {nm: [] for nm in node.children}
        for x in inputs:
            c = base.certificate(_restrict(om, base), x)
            total += (cost * float(np.vdot(x, x).real)) if cost == cost else c.W
            for nm in node.children:
                blk = c.q[nm].reshape(base.slot(nm).mult, -1)
                child_inputs[nm].extend(list(blk))
        for nm, sub in node.children.items():
            total += predict(sub, child_inputs[nm])
        return total

    return S, predict(tree, [np.asarray(xi, dtype=complex)])
