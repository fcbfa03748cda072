"""Complex linear algebra over sector-labelled spaces.

Vectors and matrices are plain numpy arrays (``complex128``).  Large,
structured operators (permutations, block diagonals) may also be
``scipy.sparse`` matrices; every helper here accepts both.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.stats import unitary_group

from .errors import GramMismatch, NotAContraction, ShapeMismatch

RANK_RTOL = 1e-9
UNITARY_TOL = 1e-9

Label = tuple  # tuple of (register, value) pairs


def as_label(label) -> Label:
    if isinstance(label, Mapping):
        return tuple(label.items())
    if isinstance(label, tuple):
        return label
    return (("S", label),)


@dataclass(frozen=True)
class SectorSpace:
    """Ordered direct sum of labelled sectors."""

    sectors: tuple[tuple[Label, int], ...]
    register_names: tuple[str, ...] = ()
    _offsets: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        sectors = tuple((as_label(lab), int(d)) for lab, d in self.sectors)
        object.__setattr__(self, "sectors", sectors)
        offsets, pos = {}, 0
        for lab, d in sectors:
            if d <= 0:
                raise ShapeMismatch(f"sector {lab} has non-positive dim {d}")
            if lab in offsets:
                raise ShapeMismatch(f"duplicate sector label {lab}")
            offsets[lab] = pos
            pos += d
        object.__setattr__(self, "_offsets", offsets)
        if not self.register_names:
            names: list[str] = []
            for lab, _ in sectors:
                for reg, _v in lab:
                    if reg not in names:
                        names.append(reg)
            object.__setattr__(self, "register_names", tuple(names))

    @property
    def total_dim(self) -> int:
        return sum(d for _, d in self.sectors)

    def dim(self, label) -> int:
        lab = as_label(label)
        for l2, d in self.sectors:
            if l2 == lab:
                return d
        raise KeyError(lab)

    def offset(self, label) -> int:
        return self._offsets[as_label(label)]

    def slice(self, label) -> slice:
        o = self.offset(label)
        return slice(o, o + self.dim(label))

    def index(self, label, k: int) -> int:
        if not 0 <= k < self.dim(label):
            raise IndexError(k)
        return self.offset(label) + k

    def locate(self, index: int) -> tuple[Label, int]:
        for lab, d in self.sectors:
            o = self._offsets[lab]
            if o <= index < o + d:
                return lab, index - o
        raise IndexError(index)

    def indices(self, labels: Iterable) -> np.ndarray:
        out = [np.arange(self.offset(l), self.offset(l) + self.dim(l)) for l in labels]
        return np.concatenate(out) if out else np.zeros(0, dtype=int)

    def to_json(self) -> dict:
        return {
            "registers": list(self.register_names),
            "sectors": [{"label": dict(lab), "dim": d} for lab, d in self.sectors],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "SectorSpace":
        secs = tuple((as_label(s["label"]), int(s["dim"])) for s in data["sectors"])
        return cls(secs, tuple(data.get("registers", ())))


@dataclass(frozen=True)
class Operator:
    space: SectorSpace
    matrix: object  # ndarray or sparse

    def __post_init__(self):
        n = self.space.total_dim
        if self.matrix.shape != (n, n):
            raise ShapeMismatch(f"operator shape {self.matrix.shape} vs space dim {n}")

    def is_unitary(self, tol: float = UNITARY_TOL) -> bool:
        return unitarity_defect(self.matrix) <= tol


# -- numerics ---------------------------------------------------------------


def dense(m) -> np.ndarray:
    if sp.issparse(m):
        return m.toarray()
    return np.asarray(m, dtype=complex)


def unitarity_defect(m) -> float:
    n = m.shape[0]
    if m.shape[0] != m.shape[1]:
        return np.inf
    if sp.issparse(m):
        g = (m.conj().T @ m - sp.identity(n, format="csr")).tocoo()
        return float(np.abs(g.data).max()) if g.nnz else 0.0
    g = m.conj().T @ m - np.eye(n)
    return float(np.abs(g).max()) if n else 0.0


def pseudoinverse(m, rtol: float = RANK_RTOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse; singular values below rtol*s_max are zeroed."""
    a = dense(m)
    if a.size == 0:
        return np.zeros((a.shape[1], a.shape[0]), dtype=complex)
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros((a.shape[1], a.shape[0]), dtype=complex)
    keep = s > rtol * s[0]
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return (vh.conj().T * inv) @ u.conj().T


def fixed_subspace_projector(m, tol: float = 1e-9) -> np.ndarray:
    """Orthogonal projector onto the 1-eigenspace of a contraction."""
    a = dense(m)
    n = a.shape[0]
    if n == 0:
        return np.zeros((0, 0), dtype=complex)
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] > 1 + 1e-6:
        raise NotAContraction(f"largest singular value {s[0]:.12g} exceeds 1")
    _, s2, vh = np.linalg.svd(a - np.eye(n))
    thr = tol * max(1.0, s2[0] if s2.size else 0.0)
    null = vh[s2 <= thr].conj().T
    return null @ null.conj().T


def orthonormal_complement(basis: np.ndarray, n: int, tol: float = 1e-8) -> np.ndarray:
    """Complete ``basis`` (n x r, orthonormal columns) lowest-index-first."""
    cols = [basis[:, j] for j in range(basis.shape[1])]
    out = []
    for k in range(n):
        if len(cols) == n:
            break
        v = np.zeros(n, dtype=complex)
        v[k] = 1.0
        for _ in range(2):
            for c in cols:
                v = v - c * np.vdot(c, v)
        nv = np.linalg.norm(v)
        if nv > tol:
            v = v / nv
            cols.append(v)
            out.append(v)
    return np.array(out).T.reshape(n, len(out))


def _pivoted_gs(vecs: np.ndarray, order: Sequence[int] | None, tol: float):
    """Gram-Schmidt over the columns of ``vecs``.

    With ``order=None`` the pivot is the column with the largest residual
    (ties to the lowest index); the chosen order is returned so that a second
    collection can be orthonormalized with the same pivots.
    """
    n, k = vecs.shape
    resid = vecs.astype(complex).copy()
    basis, pivots = [], []
    remaining = list(range(k))
    scale = max((np.linalg.norm(vecs[:, j]) for j in range(k)), default=0.0)
    steps = order if order is not None else None
    i = 0
    while remaining:
        if steps is not None:
            if i >= len(steps):
                break
            p = steps[i]
        else:
            norms = [np.linalg.norm(resid[:, j]) for j in remaining]
            best = max(norms)
            if best <= tol * max(scale, 1.0):
                break
            p = remaining[norms.index(best)]
        v = resid[:, p]
        nv = np.linalg.norm(v)
        e = v / nv if nv > 0 else v
        basis.append(e)
        pivots.append(p)
        remaining.remove(p)
        for j in remaining:
            resid[:, j] -= e * np.vdot(e, resid[:, j])
        i += 1
    b = np.array(basis).T.reshape(n, len(basis))
    return b, pivots


def complete_unitary_from_pairs(pairs: Sequence[tuple[np.ndarray, np.ndarray]],
                                gram_tol: float = 1e-8,
                                rtol: float = RANK_RTOL) -> np.ndarray:
    """Unitary U with U a_x = b_x for all pairs, completed deterministically."""
    if not pairs:
        raise ShapeMismatch("no pairs given")
    a = np.array([np.asarray(p[0], dtype=complex) for p in pairs]).T
    b = np.array([np.asarray(p[1], dtype=complex) for p in pairs]).T
    if a.shape != b.shape:
        raise ShapeMismatch(f"pair shapes {a.shape} vs {b.shape}")
    n = a.shape[0]
    ga = a.conj().T @ a
    gb = b.conj().T @ b
    diff = np.abs(ga - gb)
    if diff.size and diff.max() > gram_tol:
        x, y = np.unravel_index(int(np.argmax(diff)), diff.shape)
        raise GramMismatch(int(x), int(y), float(diff[x, y]))
    ea, piv = _pivoted_gs(a, None, rtol)
    eb, _ = _pivoted_gs(b, piv, rtol)
    ca = orthonormal_complement(ea, n)
    cb = orthonormal_complement(eb, n)
    return eb @ ea.conj().T + cb @ ca.conj().T


def assemble_block(space: SectorSpace, blocks: Mapping, identity_diagonal: bool = False) -> Operator:
    """Place blocks keyed by (row-label, col-label) at their sector offsets."""
    n = space.total_dim
    m = np.zeros((n, n), dtype=complex)
    filled = set()
    for (rl, cl), blk in blocks.items():
        blk = dense(blk)
        rs, cs = space.slice(rl), space.slice(cl)
        want = (rs.stop - rs.start, cs.stop - cs.start)
        if blk.shape != want:
            raise ShapeMismatch(f"block {rl},{cl} has shape {blk.shape}, expected {want}")
        m[rs, cs] = blk
        if as_label(rl) == as_label(cl):
            filled.add(as_label(rl))
    if identity_diagonal:
        for lab, d in space.sectors:
            if lab not in filled:
                s = space.slice(lab)
                m[s, s] = np.eye(d)
    return Operator(space, m)


def direct_sum(*ms):
    """Block diagonal matrix; sparse if any input is sparse."""
    if any(sp.issparse(m) for m in ms):
        return sp.block_diag([sp.csr_matrix(m) for m in ms], format="csr")
    if not ms:
        return np.zeros((0, 0), dtype=complex)
    from scipy.linalg import block_diag

    return block_diag(*[np.asarray(m, dtype=complex) for m in ms])


def permutation_matrix(perm: Sequence[int]):
    """Sparse P with P e_j = e_{perm[j]}."""
    perm = np.asarray(perm, dtype=int)
    n = perm.size
    return sp.csr_matrix((np.ones(n, dtype=complex), (perm, np.arange(n))), shape=(n, n))


def embed(op, idx: Sequence[int], n: int):
    """Sparse n x n operator acting as ``op`` on coordinates ``idx``, identity elsewhere."""
    idx = np.asarray(idx, dtype=int)
    k = idx.size
    if op.shape != (k, k):
        raise ShapeMismatch(f"embedded op shape {op.shape} vs {k} coordinates")
    rest = np.setdiff1d(np.arange(n), idx)
    c = sp.coo_matrix(op) if not sp.issparse(op) else op.tocoo()
    rows = np.concatenate([idx[c.row], rest])
    cols = np.concatenate([idx[c.col], rest])
    data = np.concatenate([c.data.astype(complex), np.ones(rest.size, dtype=complex)])
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def kron(*ms):
    out = ms[0]
    for m in ms[1:]:
        if sp.issparse(out) or sp.issparse(m):
            out = sp.kron(out, m, format="csr")
        else:
            out = np.kron(out, m)
    return out


def reflection(u: np.ndarray) -> np.ndarray:
    """I - 2 uu*/|u|^2."""
    u = np.asarray(u, dtype=complex)
    return np.eye(u.size) - 2 * np.outer(u, u.conj()) / np.vdot(u, u).real


def subspace_reflection(basis: np.ndarray) -> np.ndarray:
    """2P - I where P projects onto the column span of ``basis``."""
    q, r = np.linalg.qr(np.asarray(basis, dtype=complex))
    rank = int(np.sum(np.abs(np.diag(r)) > 1e-12))
    q = q[:, :rank]
    return 2 * q @ q.conj().T - np.eye(basis.shape[0])


def state_prep_unitary(psi: np.ndarray) -> np.ndarray:
    """Deterministic unitary mapping e_0 to the unit vector psi."""
    psi = np.asarray(psi, dtype=complex)
    e0 = np.zeros_like(psi)
    e0[0] = 1
    return complete_unitary_from_pairs([(e0, psi / np.linalg.norm(psi))])


# -- random objects ---------------------------------------------------------


def rng_from(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def haar_unitary(n: int, seed=None) -> np.ndarray:
    if n == 1:
        return np.exp(2j * np.pi * rng_from(seed).random()) * np.ones((1, 1))
    return unitary_group.rvs(n, random_state=rng_from(seed))


def random_state(n: int, seed=None) -> np.ndarray:
    g = rng_from(seed)
    v = g.normal(size=n) + 1j * g.normal(size=n)
    return v / np.linalg.norm(v)


# -- serialization ----------------------------------------------------------


def matrix_to_json(m) -> dict:
    a = dense(m)
    flat = a.reshape(-1)
    return {"rows": a.shape[0], "cols": a.shape[1],
            "entries": [[float(z.real), float(z.imag)] for z in flat]}


def matrix_from_json(data: Mapping) -> np.ndarray:
    rows, cols = int(data["rows"]), int(data["cols"])
    ent = np.asarray(data["entries"], dtype=float).reshape(-1, 2)
    if ent.shape[0] != rows * cols:
        raise ShapeMismatch(f"{ent.shape[0]} entries for a {rows}x{cols} matrix")
    return (ent[:, 0] + 1j * ent[:, 1]).reshape(rows, cols)


def vector_to_json(v) -> list:
    return [[float(z.real), float(z.imag)] for z in np.asarray(v, dtype=complex).reshape(-1)]


def vector_from_json(data) -> np.ndarray:
    ent = np.asarray(data, dtype=float).reshape(-1, 2)
    return ent[:, 0] + 1j * ent[:, 1]
