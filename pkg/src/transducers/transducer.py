"""Plain transducers: a unitary on H (+) L and its transduction action."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DimMismatch, NotUnitary, SubspaceMismatch
from .linalg import (
    SectorSpace,
    dense,
    fixed_subspace_projector,
    matrix_from_json,
    matrix_to_json,
    pseudoinverse,
    unitarity_defect,
)

CERT_TOL = 1e-9


@dataclass(frozen=True)
class Transducer:
    """Unitary ``op`` on ``space``; ``public`` lists the sectors making up H."""

    op: object
    space: SectorSpace
    public: tuple
    pub: np.ndarray = field(init=False, repr=False, compare=False)
    priv: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.space.total_dim
        if self.op.shape != (n, n):
            raise DimMismatch(f"unitary is {self.op.shape}, space has dim {n}")
        labels = [lab for lab, _ in self.space.sectors]
        pubs = tuple(tuple(p) if not isinstance(p, tuple) else p for p in self.public)
        from .linalg import as_label

        pubs = tuple(as_label(p) for p in pubs)
        for p in pubs:
            if p not in labels:
                raise SubspaceMismatch(f"public sector {p} not in space")
        object.__setattr__(self, "public", pubs)
        pub = self.space.indices([l for l in labels if l in pubs])
        priv = self.space.indices([l for l in labels if l not in pubs])
        object.__setattr__(self, "pub", pub)
        object.__setattr__(self, "priv", priv)

    @classmethod
    def from_matrix(cls, op, h: int) -> "Transducer":
        """Transducer whose first ``h`` coordinates are public."""
        n = op.shape[0]
        secs = [((("P", 0),), h)] if h else []
        if n - h:
            secs.append(((("P", 1),), n - h))
        return cls(op, SectorSpace(tuple(secs)), ((("P", 0),),) if h else ())

    @property
    def h(self) -> int:
        return int(self.pub.size)

    def blocks(self):
        s = dense(self.op)
        p, q = self.pub, self.priv
        return s[np.ix_(p, p)], s[np.ix_(p, q)], s[np.ix_(q, p)], s[np.ix_(q, q)]

    def join(self, xi: np.ndarray, v: np.ndarray) -> np.ndarray:
        out = np.zeros(self.space.total_dim, dtype=complex)
        out[self.pub] = xi
        out[self.priv] = v
        return out

    def check_unitary(self, tol: float = 1e-9) -> None:
        d = unitarity_defect(self.op)
        if d > tol:
            raise NotUnitary(f"unitarity defect {d:.3e}")

    def to_json(self) -> dict:
        return {"space": self.space.to_json(),
                "public_sectors": [dict(p) for p in self.public],
                "unitary": matrix_to_json(self.op)}

    @classmethod
    def from_json(cls, data: Mapping) -> "Transducer":
        space = SectorSpace.from_json(data["space"])
        return cls(matrix_from_json(data["unitary"]), space,
                   tuple(tuple(p.items()) for p in data["public_sectors"]))


@dataclass
class TransductionCertificate:
    xi: np.ndarray
    tau: np.ndarray
    catalyst: np.ndarray
    W: float
    residual: float
    delta: float = 0.0
    kind: str = "minimal"

    def to_json(self) -> dict:
        from .linalg import vector_to_json

        return {"xi": vector_to_json(self.xi), "tau": vector_to_json(self.tau),
                "catalyst": vector_to_json(self.catalyst), "W": self.W,
                "residual": self.residual, "delta": self.delta, "kind": self.kind}


def _minimal(S: Transducer, xi_cols: np.ndarray):
    hh, hl, lh, ll = S.blocks()
    m = np.eye(ll.shape[0]) - ll
    v = pseudoinverse(m) @ (lh @ xi_cols)
    tau = hh @ xi_cols + hl @ v
    return tau, v


def solve_catalyst(S: Transducer, xi: np.ndarray) -> TransductionCertificate:
    """Minimal catalyst v = (Pi - Pi S Pi)^+ Pi S xi and the resulting tau."""
    S.check_unitary()
    xi = np.asarray(xi, dtype=complex).reshape(-1)
    if xi.size != S.h:
        raise DimMismatch(f"xi has length {xi.size}, public dim is {S.h}")
    tau, v = _minimal(S, xi[:, None])
    tau, v = tau[:, 0], v[:, 0]
    res = np.linalg.norm(S.op @ S.join(xi, v) - S.join(tau, v))
    return TransductionCertificate(xi, tau, v, float(np.vdot(v, v).real), float(res))


def transduction_map(S: Transducer) -> np.ndarray:
    """Matrix of xi -> tau on the public space."""
    S.check_unitary()
    tau, _ = _minimal(S, np.eye(S.h, dtype=complex))
    return tau


@dataclass
class CertificateReport:
    residual: float
    norm_gap: float
    fixed_overlap: float
    ok: bool
    flags: list


def verify_certificate(S: Transducer, cert: TransductionCertificate, tol: float = CERT_TOL) -> CertificateReport:
    """Recompute the residual, the norm balance and orthogonality to the fixed space."""
    state = S.join(cert.xi, cert.catalyst)
    res = float(np.linalg.norm(S.op @ state - S.join(cert.tau, cert.catalyst)))
    gap = float(abs(np.linalg.norm(cert.tau) - np.linalg.norm(cert.xi)))
    _, _, _, ll = S.blocks()
    proj = fixed_subspace_projector(ll)
    overlap = float(np.linalg.norm(proj @ cert.catalyst))
    flags = []
    if res > tol:
        flags.append("residual")
    if gap > tol:
        flags.append("norm")
    if overlap > 1e-8:
        flags.append("fixed-space")
    return CertificateReport(res, gap, overlap, not flags, flags)


def _rel_positions(S: Transducer, inner) -> np.ndarray:
    if len(inner) and not isinstance(inner[0], (int, np.integer)):
        idx = S.space.indices(inner)
    else:
        idx = np.asarray(inner, dtype=int)
    pos = {int(g): k for k, g in enumerate(S.pub)}
    try:
        return np.array([pos[int(g)] for g in idx], dtype=int)
    except KeyError as e:
        raise SubspaceMismatch(f"coordinate {e} is not public") from None


def with_public(S: Transducer, inner: Sequence) -> Transducer:
    """The same unitary with the public space shrunk to ``inner``."""
    rel = _rel_positions(S, inner)
    glob = S.pub[rel]
    rest = S.pub[np.setdiff1d(np.arange(S.h), rel)]
    order = np.concatenate([glob, rest, S.priv])
    op = dense(S.op)[np.ix_(order, order)]
    return Transducer.from_matrix(op, glob.size)


def transduce_nested(S: Transducer, inner_public: Sequence) -> Transducer:
    """The transduction action of S on its public space H1, with public part
    shrunk to ``inner_public`` (a subset of H1) and the rest made private."""
    rel = _rel_positions(S, inner_public)
    t = transduction_map(S)
    rest = np.setdiff1d(np.arange(S.h), rel)
    order = np.concatenate([rel, rest])
    return Transducer.from_matrix(t[np.ix_(order, order)], rel.size)


def nested_catalyst(S: Transducer, inner_public: Sequence, xi: np.ndarray) -> np.ndarray:
    """Catalyst of S on H via the two-step route: first the action on H1,
    then S on H1 with the intermediate catalyst appended to xi.

    Coordinates are ordered (H1 minus H, then L) to match ``with_public``.
    """
    rel = _rel_positions(S, inner_public)
    rest = np.setdiff1d(np.arange(S.h), rel)
    outer = transduce_nested(S, inner_public)
    c1 = solve_catalyst(outer, xi)
    full = np.zeros(S.h, dtype=complex)
    full[rel] = xi
    full[rest] = c1.catalyst
    c2 = solve_catalyst(S, full)
    return np.concatenate([c1.catalyst, c2.catalyst])


def example_reflection() -> Transducer:
    """Reflection about |0> − |1> − |2>, public space span{|0>}."""
    u = np.array([1.0, -1.0, -1.0])
    op = np.eye(3, dtype=complex) - 2 * np.outer(u, u) / 3
    return Transducer.from_matrix(op, 1)
