"""Purifiers: constant-query transducers that turn bounded-error oracles
into (nearly) exact ones.

The Boolean purifier is a walk on the truncated line 0 - 1 - ... - D over
the space D-qudit ⊗ M^{⊗(D-1)}.  Every local reflection moves its copy of M
to one fixed site before querying, so all queries are aligned and the
circuit can be canonicalised with one query sector per query.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .adversary import bidirectional
from .canonical import CanonicalTransducer, canonicalize, gate, parallel, rename_slots, with_adjoints
from .compose import functional, sequential_seq
from .errors import ParamsInvalid
from .linalg import permutation_matrix, state_prep_unitary
from .program import QuantumProgram, QuerySite, site_from_block, to_transducer_circuit, to_transducer_qrag

INADMISSIBLE = "inadmissible"
GAP_MIN = 1e-6


@dataclass(frozen=True)
class PurifierParams:
    c: float
    d: float
    D: int
    dimN: int = 1
    p: int = 2

    def __post_init__(self):
        c, d = self.c, self.d
        if not (0 <= c - d < c + d <= 1):
            raise ParamsInvalid("need 0 <= c - d < c + d <= 1")
        if c - d < GAP_MIN or 1 - c - d < GAP_MIN:
            raise ParamsInvalid("c - d and 1 - c - d must be at least 1e-6")
        if self.D < 1:
            raise ParamsInvalid("D must be positive")
        if self.dimN < 1 or self.p < 2:
            raise ParamsInvalid("dimN >= 1 and p >= 2 required")

    @property
    def a(self) -> float:
        return ((1 - self.c + self.d) / (1 - self.c - self.d)) ** 0.25

    @property
    def b(self) -> float:
        return ((self.c + self.d) / (self.c - self.d)) ** 0.25

    @property
    def mu(self) -> float:
        return float(np.sqrt((1 - self.c) ** 2 - self.d ** 2) + np.sqrt(self.c ** 2 - self.d ** 2))

    @property
    def dimM(self) -> int:
        return 2 * self.dimN

    @property
    def nominal_delta_bound(self) -> float:
        """2 μ^{D-1}, the perturbation bound as stated for the construction."""
        return 2 * self.mu ** (self.D - 1)

    @property
    def chain_delta_bound(self) -> float:
        """2 μ^{(D-1)/2}: what the ψ̃-chain coupling guarantees, since only
        ‖ψ̃‖² (not ‖ψ̃‖) is bounded by μ."""
        return 2 * self.mu ** ((self.D - 1) / 2)

    @property
    def L_bound(self) -> float:
        return 2 / (1 - self.mu)

    @property
    def W_bound(self) -> float:
        return 1 / (1 - self.mu) + self.L_bound

    def to_json(self) -> dict:
        return {"c": self.c, "d": self.d, "D": self.D, "dimN": self.dimN, "p": self.p}

    @classmethod
    def from_json(cls, data) -> "PurifierParams":
        return cls(float(data.get("c", 0.5)), float(data["d"]), int(data["D"]),
                   int(data.get("dimN", 1)), int(data.get("p", 2)))


def classify(psi: np.ndarray, params: PurifierParams, p: int | None = None):
    """Label of ψ (B register most significant), or ``INADMISSIBLE``.

    With p = 2 the Boolean promise (‖ψ₁‖² ≤ c−d or ≥ c+d) is used; for
    larger p the label j must satisfy ‖ψ_j‖² ≥ ½ + d.
    """
    p = params.p if p is None else p
    psi = np.asarray(psi, dtype=complex).reshape(p, -1)
    mass = np.sum(np.abs(psi) ** 2, axis=1)
    tol = 1e-12
    if p == 2:
        if mass[1] <= params.c - params.d + tol:
            return 0
        if mass[1] >= params.c + params.d - tol:
            return 1
        return INADMISSIBLE
    good = [j for j in range(p) if mass[j] >= 0.5 + params.d - tol]
    return good[0] if good else INADMISSIBLE


def psi_tilde(psi: np.ndarray, f: int, params: PurifierParams) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).reshape(2, -1)
    a, b = params.a, params.b
    s0, s1 = (1 / a, b) if f == 0 else (a, 1 / b)
    return np.concatenate([s0 * psi[0], s1 * psi[1]])


def oracle_for(psi: np.ndarray) -> dict:
    """Bidirectional slots O, O* for O_ψ: |0> -> ψ."""
    return with_adjoints({"O": state_prep_unitary(psi)})


class _Line:
    """Index arithmetic on D-qudit ⊗ M^{⊗(D-1)} (first factor most significant)."""

    def __init__(self, D: int, m: int):
        self.D, self.m, self.k = D, m, D - 1
        self.block = m ** self.k
        self.N = D * self.block

    def digits(self):
        """Array of shape (N, 1 + k): the D value then the factor values."""
        idx = np.arange(self.N)
        out = np.empty((self.N, 1 + self.k), dtype=int)
        out[:, 0] = idx // self.block
        rest = idx % self.block
        for f in range(self.k):
            out[:, 1 + f] = (rest // self.m ** (self.k - 1 - f)) % self.m
        return out

    def index(self, dig: np.ndarray) -> np.ndarray:
        idx = dig[:, 0] * self.block
        for f in range(self.k):
            idx = idx + dig[:, 1 + f] * self.m ** (self.k - 1 - f)
        return idx

    def swap_perm(self, i: int) -> np.ndarray:
        """Exchange D = i-1 with D = 0 and factor i with factor 1."""
        dig = self.digits()
        new = dig.copy()
        dv = dig[:, 0]
        new[dv == i - 1, 0] = 0
        new[dv == 0, 0] = i - 1
        if i > 1:
            new[:, 1], new[:, i] = dig[:, i], dig[:, 1]
        return self.index(new)


def _vertex_reflection(line: _Line, i: int, params: PurifierParams) -> sp.csr_matrix:
    """2P - I on A ⊗ B^(i) inside span{D=i-1, D=i}, identity elsewhere."""
    a, b = params.a, params.b
    u1 = np.array([a, 0, 1, 0], dtype=complex)  # (a|0>+|1>)_A |0>_B, basis |A B>
    u2 = np.array([0, 1, 0, b], dtype=complex)  # (|0>+b|1>)_A |1>_B
    P = np.outer(u1, u1) / (a * a + 1) + np.outer(u2, u2) / (1 + b * b)
    R = 2 * P - np.eye(4)
    dig = line.digits()
    nb = line.m // 2
    rows, cols, vals = [], [], []
    inside = (dig[:, 0] == i - 1) | (dig[:, 0] == i)
    for x in np.nonzero(~inside)[0]:
        rows.append(x)
        cols.append(x)
        vals.append(1.0)
    for x in np.nonzero(inside)[0]:
        A = int(dig[x, 0] == i)
        Bv = dig[x, i] // nb
        cin = 2 * A + Bv
        for cout in range(4):
            if abs(R[cout, cin]) < 1e-15:
                continue
            nd = dig[x].copy()
            nd[0] = i - 1 + cout // 2
            nd[i] = (cout % 2) * nb + dig[x, i] % nb
            rows.append(int(line.index(nd[None, :])[0]))
            cols.append(x)
            vals.append(R[cout, cin])
    return sp.csr_matrix((np.array(vals, dtype=complex), (rows, cols)), shape=(line.N, line.N))


def _chain_sequence(params: PurifierParams):
    """Gates and aligned queries of R₂R₁ as a one-register program."""
    D, m = params.D, params.dimM
    line = _Line(D, m)
    N = line.N
    steps = []
    if D >= 2:
        mult = m ** (D - 2)
        site_idx = np.array([[k * mult + u for k in range(m)] for u in range(mult)])
    else:
        site_idx = np.zeros((0, m), dtype=int)
    sites = {"O": QuerySite(site_idx, "zero"), "O*": QuerySite(site_idx, "zero_inv")} if D >= 2 else {}

    def local(i):
        P = ("gate", permutation_matrix(line.swap_perm(i)))
        wrap = (lambda q: [P, q, P]) if i > 1 else (lambda q: [q])
        return wrap(("query", "O")) + [("gate", _vertex_reflection(line, i, params))] + wrap(("query", "O*"))

    odd = [i for i in range(1, D) if i % 2 == 1]
    even = [i for i in range(1, D) if i % 2 == 0]
    for i in odd + even:
        steps.extend(local(i))
    return line, sites, steps


class _Steps:
    def __init__(self, dim, slots, steps):
        self.dim, self.slots, self.steps = dim, slots, steps


def chain_coupling(psi: np.ndarray, params: PurifierParams) -> tuple[int, np.ndarray]:
    """(f, ξ ⊕ v) with v the ψ̃-chain Σ_i (−1)^{i f} |i> ψ̃^{⊗i} |0>^{rest}."""
    f = classify(psi, params, 2)
    if f == INADMISSIBLE:
        return f, None
    line = _Line(params.D, params.dimM)
    wt = psi_tilde(psi, f, params)
    e0 = np.zeros(params.dimM, dtype=complex)
    e0[0] = 1
    out = np.zeros(line.N, dtype=complex)
    for i in range(params.D):
        vec = np.ones(1, dtype=complex)
        for k in range(params.D - 1):
            vec = np.kron(vec, wt if k < i else e0)
        out[i * line.block:(i + 1) * line.block] = (-1) ** (i * f) * vec
    return f, out


def build_boolean_purifier(params: PurifierParams, name: str = "purifier") -> CanonicalTransducer:
    """Canonical Boolean purifier; its coupling is the ψ̃-chain.

    Slots: ``O`` (forward, queried on |0>) and ``O*`` (backward, queried on
    ψ).  The public space is one-dimensional.
    """
    line, sites, steps = _chain_sequence(params)
    T = _Steps(line.N, sites, steps)

    def family(oracles, xi):
        o = oracles.get("O")
        if o is None:
            return None
        psi = np.asarray(o)[:, 0]
        f, state = chain_coupling(psi, params)
        if f == INADMISSIBLE:
            return None
        return (-1) ** f * xi, state * xi[0]

    S = canonicalize(T, public=[0], family=family, name=name)
    S.meta.update({"kind_detail": "boolean-purifier", "params": params, "T": len(steps)})
    return S


# -- non-Boolean -----------------------------------------------------------


def _parity(a: int, b: int) -> int:
    return bin(a & b).count("1") % 2


def hadamard(p: int) -> np.ndarray:
    ell = int(np.log2(p))
    h1 = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
    out = np.ones((1, 1), dtype=complex)
    for _ in range(ell):
        out = np.kron(out, h1)
    return out


def _embed_state_generator(gen: QuantumProgram | None, dimM: int):
    """Program on Z ⊗ M (Z most significant) preparing the state generated
    on M, or a single query to ``psi`` when ``gen`` is None."""
    if gen is None:
        site = QuerySite(np.array([[z * dimM + k for k in range(dimM)] for z in range(2)]))
        return {"psi": site}, [("query", "psi")]
    if gen.dim != dimM:
        raise ParamsInvalid(f"state generator acts on {gen.dim} dims, expected {dimM}")
    slots = {nm: QuerySite(np.concatenate([s.index, s.index + dimM]), s.domain) for nm, s in gen.slots.items()}
    steps = []
    for kind, arg in gen.steps:
        if kind == "gate":
            steps.append(("gate", np.kron(np.eye(2), np.asarray(arg))))
        else:
            steps.append(("query", arg))
    return slots, steps


def evaluator_program(i: int, p: int, dimN: int, gen: QuantumProgram | None = None) -> QuantumProgram:
    """E^(i): |0>_M |0>_Z -> Σ_j |i⊙j>_Z |j>_B |ψ_j>_N."""
    dimM = p * dimN
    n = 2 * dimM
    perm = np.empty(n, dtype=int)
    for z in range(2):
        for j in range(p):
            for k in range(dimN):
                src = z * dimM + j * dimN + k
                perm[src] = ((z + _parity(i, j)) % 2) * dimM + j * dimN + k
    slots, steps = _embed_state_generator(gen, dimM)
    steps = steps + [("gate", permutation_matrix(perm).toarray().astype(complex))]
    return QuantumProgram(n, slots, steps, name=f"E{i}")


def evaluator_transducer(i: int, p: int, dimN: int, gen: QuantumProgram | None = None,
                         model: str = "circuit") -> CanonicalTransducer:
    A = evaluator_program(i, p, dimN, gen)
    S = to_transducer_qrag(A) if model == "qrag" else to_transducer_circuit(A)
    adm = np.zeros((S.h, S.h), dtype=complex)
    adm[0, 0] = 1
    S.admissible = adm
    return S


def build_general_purifier(p: int, d: float, D: int, dimN: int = 1,
                           generator: QuantumProgram | None = None,
                           model: str = "circuit") -> CanonicalTransducer:
    """|b> ⇝ |b ⊕ f(ψ)> on C^p: Hadamard, ⊕_i purifier'∘↔S_E^(i), Hadamard.

    ``generator`` optionally replaces the state-generating oracle by a
    program on M whose output plays the role of ψ.  ``model`` picks the
    conversion of the evaluators E^(i) ("circuit" or "qrag").
    """
    if model not in ("circuit", "qrag"):
        raise ParamsInvalid(f"unknown model {model!r}")
    if p < 2 or p & (p - 1):
        raise ParamsInvalid("p must be a power of 2")
    if not 0 < d < 0.5:
        raise ParamsInvalid("d must lie in (0, 1/2)")
    inner = PurifierParams(0.5, d, D, p * dimN, 2)
    P1 = build_boolean_purifier(inner, name="purifier'")
    branches = []
    for i in range(p):
        bi = bidirectional(evaluator_transducer(i, p, dimN, generator, model))
        branches.append(functional(P1, bi, ["O", "O*"], name=f"pur∘E{i}"))
    par = parallel(branches, "shared", name="⊕pur∘E")
    H = hadamard(p)
    S = sequential_seq([gate(H, "H"), par, gate(H, "H")], name="general-purifier")
    S.meta.update({"params": PurifierParams(0.5, d, D, dimN, p), "inner_params": inner,
                   "parallel": par, "model": model})
    return S


def general_oracles(psi: np.ndarray) -> dict:
    return with_adjoints({"psi": state_prep_unitary(psi)})


def purified_program(inner, params: PurifierParams) -> CanonicalTransducer:
    """Purifier over a bounded-error state generator.

    ``inner`` is either a QuantumProgram on M = B ⊗ N (its output on |0> is
    the state to be purified) or a canonical transducer on M; in the latter
    case its bidirectional version is attached by functional composition.
    """
    if isinstance(inner, QuantumProgram):
        return build_general_purifier(params.p, params.d, params.D, params.dimN, generator=inner)
    S = build_general_purifier(params.p, params.d, params.D, params.dimN)
    return functional(S, bidirectional(inner), ["psi", "psi*"], name="purified")


def noisy_bit_program(error: float = 1 / 3) -> QuantumProgram:
    """One-bit state generator: |0> -> √(1−e)|x> + √e|1−x> with one query to
    the bit-flip oracle ``x``."""
    th = np.arcsin(np.sqrt(error))
    ry = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]], dtype=complex)
    return QuantumProgram(2, {"x": site_from_block(0, 1, 2)}, [("gate", ry), ("query", "x")], name="noisy-bit")


def bit_oracle(x: int) -> dict:
    o = np.array([[0, 1], [1, 0]], dtype=complex) if x else np.eye(2, dtype=complex)
    return {"x": o, "x*": o.conj().T}


def walk_operator(params: PurifierParams, psi: np.ndarray) -> np.ndarray:
    """R₂R₁ on D ⊗ M^{⊗(D-1)} with O_ψ plugged in (before canonicalisation)."""
    line, sites, steps = _chain_sequence(params)
    O = state_prep_unitary(psi)
    U = np.eye(line.N, dtype=complex)
    for kind, arg in steps:
        if kind == "gate":
            U = arg @ U
        else:
            idx = sites[arg].index
            Q = np.eye(line.N, dtype=complex)
            blk = O if arg == "O" else O.conj().T
            for row in idx:
                Q[np.ix_(row, row)] = blk
            U = Q @ U
    return U


def expected_final_state(psi: np.ndarray, params: PurifierParams) -> np.ndarray:
    """S(ξ ⊕ v) in closed form: ξ ⊕ v when f = 0, and
    −ξ ⊕ v − 2(−1)^{D−1} |D−1⟩ψ̃^{⊗(D−1)} when f = 1 (even D)."""
    f, state = chain_coupling(psi, params)
    if f == INADMISSIBLE:
        raise ParamsInvalid("oracle outside the promise")
    if f == 0:
        return state
    if params.D % 2:
        raise ParamsInvalid("the closed form is derived for even D only")
    line = _Line(params.D, params.dimM)
    out = state.copy()
    out[0] = -out[0]
    last = slice((params.D - 1) * line.block, params.D * line.block)
    out[last] -= 2 * state[last]
    return out


def branch_residual(psi: np.ndarray, params: PurifierParams) -> float:
    """Distance between the simulated walk output and its closed form."""
    _, state = chain_coupling(psi, params)
    return float(np.linalg.norm(walk_operator(params, psi) @ state - expected_final_state(psi, params)))


def noisy_xor_program(error: float = 1 / 3) -> QuantumProgram:
    """g(y₀, y₁) = y₀ ⊕ y₁ with error ``error``: a rotation, then both
    bit-flip oracles applied to the same qubit."""
    th = np.arcsin(np.sqrt(error))
    ry = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]], dtype=complex)
    site = site_from_block(0, 1, 2)
    return QuantumProgram(2, {"y0": site, "y1": site},
                          [("gate", ry), ("query", "y0"), ("query", "y1")], name="noisy-xor")


def composed_or_of_xor(params: PurifierParams, error: float = 1 / 3) -> CanonicalTransducer:
    """OR₂ ∘ (purified noisy XOR₂): the outer adversary transducer reads each
    variable i through ↔(purified g) on the bits y<i>.0, y<i>.1."""
    from .adversary import build_function_transducer, or2_solution, var_slot

    S = build_function_transducer(or2_solution())
    g = purified_program(noisy_xor_program(error), params)
    bi = bidirectional(g)
    for lab in S.meta["vars"]:
        def ren(nm, lab=lab):
            star = nm.endswith("*")
            return f"y{lab}.{nm[1:].rstrip('*')}" + ("*" if star else "")
        S = functional(S, rename_slots(bi, ren), [var_slot(lab), var_slot(lab) + "*"], name="or∘xor")
    S.meta.update({"vars": [f"{i}.{j}" for i in range(2) for j in range(2)], "p": 2})
    return S


def xor_bits_oracles(y) -> dict:
    """Oracles y<i>.<j> for the 4-bit string y (ordered 0.0, 0.1, 1.0, 1.1)."""
    out = {}
    for (i, j), bit in zip([(0, 0), (0, 1), (1, 0), (1, 1)], y):
        for k, v in bit_oracle(bit).items():
            out[f"y{i}.{j}" + ("*" if k.endswith("*") else "")] = v
    return out
