"""Implementation of transducers by pumping, and its query-optimal variant.

The simulator works on the full K ⊗ (H ⊕ L) state.  Each sector (public
space, work space, the query sector of every oracle) is stored as a K-row
array together with a cyclic offset: adding a constant to the counter
register conditioned on a sector is a change of that offset, which is an
exact, cheap stand-in for the permutation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .canonical import CanonicalTransducer
from .errors import BadSchedule, DimMismatch
from .linalg import vector_to_json
from .transducer import Transducer, solve_catalyst


def _is_pow2(k: int) -> bool:
    return k >= 1 and (k & (k - 1)) == 0


@dataclass
class PumpingSchedule:
    """K executions of S°; oracle ``name`` is queried ``Ki[name]`` times.

    ``Ki[name] == 0`` marks an oracle that is dropped altogether.
    """

    K: int
    Ki: dict = field(default_factory=dict)

    def D(self, name: str) -> int:
        k = self.Ki.get(name, self.K)
        return self.K // k if k else self.K

    def validate(self, names: Sequence[str] | None = None) -> None:
        if self.K < 1 or not _is_pow2(self.K):
            raise BadSchedule(f"K = {self.K} is not a power of 2")
        for nm, k in self.Ki.items():
            if k == 0:
                continue
            if not _is_pow2(k) or k > self.K or self.K % k:
                raise BadSchedule(f"K^({nm}) = {k} does not divide K = {self.K}")
        if names is not None:
            extra = set(self.Ki) - set(names)
            if extra:
                raise BadSchedule(f"schedule names unknown oracles {sorted(extra)}")

    def queries(self, name: str) -> int:
        return self.Ki.get(name, self.K)

    def to_json(self) -> dict:
        return {"K": self.K, "K_i": {k: self.Ki[k] for k in self.Ki}}


@dataclass
class RunReport:
    output: np.ndarray
    s_invocations: int
    oracle_queries: dict
    measured_error: float
    predicted_bound: float
    reference: np.ndarray | None = None
    schedule: PumpingSchedule | None = None
    W: float = 0.0
    delta: float = 0.0
    trace: list | None = None
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"output": vector_to_json(self.output),
                "counters": {"s_invocations": self.s_invocations,
                             "oracle_queries": dict(self.oracle_queries)},
                "measured_error": self.measured_error,
                "predicted_bound": self.predicted_bound,
                "schedule": self.schedule.to_json() if self.schedule else None}


def bound_formula(W: float, K: int, L_partial: Mapping | None = None,
                  schedule: PumpingSchedule | None = None, delta: float = 0.0) -> float:
    """(2/√K)·√(W + Σ(K/K^(i) − 1)L^(i)) + √K·δ."""
    extra = 0.0
    if schedule is not None and L_partial:
        extra = sum((schedule.D(nm) - 1) * L for nm, L in L_partial.items())
    return float(2.0 / np.sqrt(K) * np.sqrt(max(W + extra, 0.0)) + np.sqrt(K) * delta)


def _reference(S, oracles, xi):
    if isinstance(S, CanonicalTransducer):
        c = S.certificate(oracles, xi)
        return c.tau, c.W, c.delta, c.L_partial, c.state[S.h:]
    c = solve_catalyst(S, xi)
    return c.tau, c.W, 0.0, {}, c.catalyst


def _finish(rows: list, xi, tau, K):
    f0 = np.concatenate([r.sum(axis=0) for r in rows]) / np.sqrt(K)
    h = tau.size
    target = np.zeros_like(f0)
    target[:h] = tau
    # weight off the counter-0 Fourier mode, computed without cancellation
    rest = float(sum(np.sum(np.abs(r - r.mean(axis=0)) ** 2) for r in rows))
    err = float(np.sqrt(np.linalg.norm(f0 - target) ** 2 + rest))
    return f0[:h], err


def run_uniform(S, K: int, xi: np.ndarray, oracles=None, reference=None,
                catalyst: np.ndarray | None = None, record: bool = False) -> RunReport:
    """Pumping: K conditional executions of S (the one-pass unitary for a
    canonical transducer) against a 1/√K-spread public input.

    ``catalyst`` optionally seeds the private register with v/√K on the
    counter value 0, which turns the proof's idealised state into the actual
    one (the invariant can then be checked from ``trace``).
    """
    if K < 1:
        raise BadSchedule("K must be positive")
    xi = np.asarray(xi, dtype=complex).reshape(-1)
    if isinstance(S, CanonicalTransducer):
        op, h = S.one_pass(oracles), S.h
        names = S.slot_names()
    elif isinstance(S, Transducer):
        order = np.concatenate([S.pub, S.priv])
        op = S.op if order.tolist() == list(range(order.size)) else S.op[np.ix_(order, order)]
        h, names = S.h, []
    else:
        raise TypeError("expected a Transducer or CanonicalTransducer")
    if xi.size != h:
        raise DimMismatch(f"xi has length {xi.size}, public dim is {h}")
    n = op.shape[0]
    if reference is None:
        tau, W, delta, _, _ = _reference(S, oracles, xi)
    else:
        tau, W, delta = reference[0], reference[1], (reference[2] if len(reference) > 2 else 0.0)
    pub = np.tile(xi / np.sqrt(K), (K, 1))
    priv = np.zeros((K, n - h), dtype=complex)
    if catalyst is not None:
        priv[0] = np.asarray(catalyst, dtype=complex) / np.sqrt(K)
    off, invocations, trace = 0, 0, [] if record else None
    for t in range(K):
        q = (t - off) % K
        y = op @ np.concatenate([pub[t], priv[q]])
        invocations += 1
        pub[t], priv[q] = y[:h], y[h:]
        off += 1  # private part moves t -> t+1
        if record:
            trace.append(priv[(t + 1 - off) % K].copy() * np.sqrt(K))
    out, err = _finish([pub, priv], xi, tau, K)
    counts = {nm: K for nm in names}
    return RunReport(out, invocations, counts, err, bound_formula(W, K, delta=delta), tau,
                     PumpingSchedule(K, dict(counts)), W, delta, trace)


def run_scheduled(S: CanonicalTransducer, schedule: PumpingSchedule, oracles, xi: np.ndarray,
                  reference=None, catalyst: np.ndarray | None = None) -> RunReport:
    """Query-optimal implementation: oracle i is applied to its whole query
    sector once every D^(i) iterations; the counter of that sector advances
    by D^(i) at the same rate."""
    names = S.slot_names()
    schedule.validate(names)
    K = schedule.K
    xi = np.asarray(xi, dtype=complex).reshape(-1)
    if xi.size != S.h:
        raise DimMismatch(f"xi has length {xi.size}, public dim is {S.h}")
    S.check_admissible(xi)
    om = S.oracle_map(oracles)
    if reference is None:
        tau, W, delta, Lp, _ = _reference(S, om, xi)
    else:
        tau = np.asarray(reference, dtype=complex)
        c = S.certificate(om, xi)
        W, delta, Lp = c.W, c.delta, c.L_partial
    h, wd = S.h, S.work_dim
    pub = np.tile(xi / np.sqrt(K), (K, 1))
    work = np.zeros((K, wd), dtype=complex)
    sect = {s.name: np.zeros((K, s.size), dtype=complex) for s in S.slots}
    if catalyst is not None:
        v = np.asarray(catalyst, dtype=complex)
        work[0] = v[:wd] / np.sqrt(K)
        pos = wd
        for s in S.slots:
            for t in range(schedule.D(s.name)):
                sect[s.name][t] = v[pos:pos + s.size] / np.sqrt(K)
            pos += s.size
    off_w = 0
    off = {s.name: 0 for s in S.slots}
    D = {s.name: schedule.D(s.name) for s in S.slots}
    queried = {s.name: 0 for s in S.slots}
    invocations = 0
    Sw = S.work
    for t in range(K):
        for s in S.slots:
            if schedule.queries(s.name) and t % D[s.name] == 0:
                blk = sect[s.name].reshape(K, s.mult, s.dim)
                sect[s.name] = (blk @ np.asarray(om[s.name]).T).reshape(K, s.size)
                queried[s.name] += 1
        qw = (t - off_w) % K
        rows = {s.name: (t - off[s.name]) % K for s in S.slots}
        x = np.concatenate([pub[t], work[qw]] + [sect[s.name][rows[s.name]] for s in S.slots])
        y = Sw @ x
        invocations += 1
        pub[t], work[qw] = y[:h], y[h:h + wd]
        pos = h + wd
        for s in S.slots:
            sect[s.name][rows[s.name]] = y[pos:pos + s.size]
            pos += s.size
        off_w += 1
        for s in S.slots:
            if (t + 1) % D[s.name] == 0:
                off[s.name] += D[s.name]
    out, err = _finish([pub, work] + [sect[s.name] for s in S.slots], xi, tau, K)
    return RunReport(out, invocations, queried, err, bound_formula(W, K, Lp, schedule, delta),
                     tau, schedule, W, delta)


def choose_schedule(W: float, L_list, eps: float, names: Sequence[str] | None = None,
                    drop_single: bool = False) -> PumpingSchedule:
    """Schedule for query compression.

    K is the smallest power of 2 exceeding 32(r+1)W/ε² (K = 1 when
    W < ε²/16), and K^(i) the largest power of 2 not exceeding
    max(1, K·L^(i)/W).  With ``drop_single`` oracles that would be queried
    only once are not queried at all.
    """
    if eps <= 0:
        raise BadSchedule("eps must be positive")
    if isinstance(L_list, Mapping):
        names = list(L_list) if names is None else list(names)
        Ls = [float(L_list.get(nm, 0.0)) for nm in names]
    else:
        Ls = [float(x) for x in L_list]
        names = list(names) if names is not None else [str(i) for i in range(len(Ls))]
    r = len(Ls)
    if W < eps ** 2 / 16:
        K, Ki = 1, {nm: 1 for nm in names}
    else:
        Ls = [min(L, W) for L in Ls]
        thr = 32 * (r + 1) * W / eps ** 2
        K = 1
        while K <= thr:
            K *= 2
        Ki = {}
        for nm, L in zip(names, Ls):
            x = max(1.0, K * L / W)
            k = 1
            while 2 * k <= x * (1 + 1e-12):
                k *= 2
            Ki[nm] = min(k, K)
    if drop_single:
        Ki = {nm: (0 if k == 1 else k) for nm, k in Ki.items()}
    return PumpingSchedule(K, Ki)


def error_bound(S, oracles, xi: np.ndarray, schedule: PumpingSchedule) -> float:
    """The closed-form error bound for running ``schedule`` on (S, O, ξ)."""
    if isinstance(S, CanonicalTransducer):
        c = S.certificate(oracles, xi)
        return bound_formula(c.W, schedule.K, c.L_partial, schedule, c.delta)
    c = solve_catalyst(S, xi)
    return bound_formula(c.W, schedule.K)


@dataclass
class PhaseReadout:
    sign: int
    p0: float
    overlap: complex
    report: RunReport

    @property
    def success_probability(self) -> float:
        return self.p0 if self.sign > 0 else 1.0 - self.p0


def phase_readout(S, xi: np.ndarray, K: int, oracles=None) -> PhaseReadout:
    """Hadamard test around the pumping circuit: an ancilla in |+> controls
    the circuit, and P(ancilla = 0) = (1 + Re⟨ξ, out⟩)/2 for unit ξ."""
    xi = np.asarray(xi, dtype=complex)
    rep = run_uniform(S, K, xi, oracles)
    ov = complex(np.vdot(xi, rep.output) / max(np.vdot(xi, xi).real, 1e-300))
    p0 = float(np.clip((1.0 + ov.real) / 2.0, 0.0, 1.0))
    return PhaseReadout(1 if p0 >= 0.5 else -1, p0, ov, rep)
