"""Binary quadratic programs for the separation and covering problems.

The separation builder penalizes adjacent pairs so that minimizers are
exactly the maximum-weight independent sets; the covering builder encodes
minimum-cost dense subsets with binary slack variables. Solvers include an
exhaustive enumerator for small residual problems and a restart-based
single-flip Metropolis annealer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import GuardError, ValidationError
from .graph import NeighborhoodGraph

MAX_EXACT_QUBO = 25
_ENUM_BLOCK = 1 << 18


@dataclass(frozen=True)
class QuboProblem:
    """Minimize sum_{i<=j} coeffs[i,j]*s_i*s_j + offset over s in {0,1}^n_vars.

    Diagonal keys (i, i) hold linear terms. fixed maps variables removed by
    preprocessing to their pinned bit; fixed variables never appear in
    coeffs. var_origin tags each variable with its source, e.g.
    ("vertex", 3) or ("slack", i, k).
    """

    n_vars: int
    coeffs: dict
    offset: float = 0.0
    fixed: dict = field(default_factory=dict)
    var_origin: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_vars < 0:
            raise ValidationError("n_vars must be non-negative")
        for (i, j), v in self.coeffs.items():
            if not (0 <= i <= j < self.n_vars):
                raise ValidationError(f"coefficient key ({i}, {j}) out of range")
            if not math.isfinite(v):
                raise ValidationError(f"non-finite coefficient at ({i}, {j})")
        pinned = set(self.fixed)
        for i, j in self.coeffs:
            if i in pinned or j in pinned:
                raise ValidationError(f"fixed variable appears in coefficients: ({i}, {j})")
        for v, b in self.fixed.items():
            if not 0 <= v < self.n_vars:
                raise ValidationError(f"fixed variable {v} out of range")
            if b not in (0, 1):
                raise ValidationError(f"fixed value for variable {v} must be 0 or 1")

    @property
    def free_vars(self) -> list[int]:
        return [v for v in range(self.n_vars) if v not in self.fixed]


def energy(p: QuboProblem, bits) -> float:
    """Objective value of a full assignment (fixed bits must match)."""
    bits = np.asarray(bits, dtype=np.int64).ravel()
    if bits.size != p.n_vars:
        raise ValidationError(f"expected {p.n_vars} bits, got {bits.size}")
    if np.any((bits != 0) & (bits != 1)):
        raise ValidationError("bits must be 0 or 1")
    for v, b in p.fixed.items():
        if bits[v] != b:
            raise ValidationError(f"bit {v} contradicts its fixed value {b}")
    total = p.offset
    for (i, j), val in p.coeffs.items():
        if bits[i] and bits[j]:
            total += val
    return float(total)


def build_mwis_qubo(g: NeighborhoodGraph, gamma: float = 0.1) -> QuboProblem:
    """Separation program: diagonal -w_i, edge penalty (1+gamma)*max(w_i, w_j).

    Any gamma > 0 makes every penalty strictly exceed both endpoint weights,
    which is exactly the condition under which minimizers coincide with
    maximum-weight independent sets.
    """
    if gamma <= 0:
        raise ValidationError(f"gamma must be positive, got {gamma}")
    coeffs: dict = {}
    for i in range(g.n):
        coeffs[(i, i)] = -float(g.weights[i])
    rows, cols = np.nonzero(np.triu(g.adjacency, k=1))
    for i, j in zip(rows.tolist(), cols.tolist()):
        coeffs[(i, j)] = (1.0 + gamma) * float(max(g.weights[i], g.weights[j]))
    origin = {i: ("vertex", i) for i in range(g.n)}
    return QuboProblem(g.n, coeffs, var_origin=origin)


def reduce_qubo(p: QuboProblem) -> QuboProblem:
    """Pin isolated negative-diagonal variables to 1 and fold them into offset.

    A variable with no quadratic couplings and a negative diagonal is set by
    every minimizer, so it can be removed up front. Intended for problems
    from build_mwis_qubo, where isolated graph vertices produce exactly this
    pattern.
    """
    coupled = set()
    for i, j in p.coeffs:
        if i != j:
            coupled.add(i)
            coupled.add(j)
    fixable = [
        v
        for v in p.free_vars
        if v not in coupled and p.coeffs.get((v, v), 0.0) < 0.0
    ]
    if not fixable:
        return p
    coeffs = dict(p.coeffs)
    offset = p.offset
    fixed = dict(p.fixed)
    for v in fixable:
        offset += coeffs.pop((v, v))
        fixed[v] = 1
    return QuboProblem(p.n_vars, coeffs, offset, fixed, dict(p.var_origin))


def _full_bits(p: QuboProblem, free: list[int], free_bits: np.ndarray) -> np.ndarray:
    bits = np.zeros(p.n_vars, dtype=np.int8)
    for v, b in p.fixed.items():
        bits[v] = b
    bits[free] = free_bits
    return bits


def solve_qubo_exact(p: QuboProblem) -> tuple[np.ndarray, float]:
    """Exhaustive minimization over the free variables.

    Guarded to MAX_EXACT_QUBO free variables. Energy ties resolve to the
    lexicographically smallest bitstring (variable 0 most significant), so
    an all-zero objective yields the all-zeros assignment. Returns the full
    bitstring including fixed variables, and its energy.
    """
    free = p.free_vars
    m = len(free)
    if m > MAX_EXACT_QUBO:
        raise GuardError(
            f"solve_qubo_exact handles at most {MAX_EXACT_QUBO} free variables, got {m}; "
            "reduce the problem or use the annealer"
        )
    if m == 0:
        bits = _full_bits(p, free, np.zeros(0, dtype=np.int8))
        return bits, energy(p, bits)

    index_of = {v: k for k, v in enumerate(free)}
    mat = np.zeros((m, m))
    for (i, j), val in p.coeffs.items():
        if i == j:
            mat[index_of[i], index_of[i]] += val
        else:
            a, b = index_of[i], index_of[j]
            mat[a, b] += val / 2.0
            mat[b, a] += val / 2.0

    # variable 0 as the most significant bit makes numeric enumeration
    # order coincide with lexicographic bitstring order
    shifts = np.array([m - 1 - k for k in range(m)], dtype=np.int64)
    best_energy = np.inf
    best_state = 0
    for lo in range(0, 1 << m, _ENUM_BLOCK):
        states = np.arange(lo, min(lo + _ENUM_BLOCK, 1 << m), dtype=np.int64)
        bits_block = ((states[:, None] >> shifts) & 1).astype(np.float64)
        energies = np.einsum("ij,jk,ik->i", bits_block, mat, bits_block)
        k = int(np.argmin(energies))
        if energies[k] < best_energy:
            best_energy = float(energies[k])
            best_state = int(states[k])

    free_bits = ((best_state >> shifts) & 1).astype(np.int8)
    bits = _full_bits(p, free, free_bits)
    return bits, energy(p, bits)


@dataclass(frozen=True)
class AnnealSchedule:
    """Geometric temperature ladder plus restart and seeding knobs.

    t_initial=None is resolved per problem as 10 * max|coefficient|.
    """

    sweeps: int = 2000
    restarts: int = 10
    t_initial: float | None = None
    t_final: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.sweeps < 1 or self.restarts < 1:
            raise ValidationError("sweeps and restarts must be >= 1")
        if self.t_final <= 0:
            raise ValidationError("t_final must be positive")
        if self.t_initial is not None and self.t_initial <= self.t_final:
            raise ValidationError("t_initial must exceed t_final")


@njit(cache=True, nogil=True)
def _metropolis(couplings, diag, temps, uniforms, bits):  # pragma: no cover
    m = bits.size
    local = np.zeros(m)
    for i in range(m):
        acc = 0.0
        for j in range(m):
            if bits[j] == 1:
                acc += couplings[i, j]
        local[i] = acc
    e = 0.0
    for i in range(m):
        if bits[i] == 1:
            e += diag[i]
            for j in range(i + 1, m):
                if bits[j] == 1:
                    e += couplings[i, j]
    best_e = e
    best_bits = bits.copy()
    for t in range(temps.size):
        temp = temps[t]
        for i in range(m):
            delta = diag[i] + local[i]
            if bits[i] == 1:
                delta = -delta
            if delta <= 0.0 or uniforms[t, i] < math.exp(-delta / temp):
                bits[i] = 1 - bits[i]
                sign = 1.0 if bits[i] == 1 else -1.0
                for j in range(m):
                    c = couplings[i, j]
                    if c != 0.0:
                        local[j] += sign * c
                e += delta
                if e < best_e:
                    best_e = e
                    best_bits[:] = bits
    # quench: zero-temperature descent from the best visited state, so the
    # returned sample is a single-flip local minimum
    bits[:] = best_bits
    for i in range(m):
        acc = 0.0
        for j in range(m):
            if bits[j] == 1:
                acc += couplings[i, j]
        local[i] = acc
    improved = True
    while improved:
        improved = False
        for i in range(m):
            delta = diag[i] + local[i]
            if bits[i] == 1:
                delta = -delta
            if delta < 0.0:
                bits[i] = 1 - bits[i]
                sign = 1.0 if bits[i] == 1 else -1.0
                for j in range(m):
                    c = couplings[i, j]
                    if c != 0.0:
                        local[j] += sign * c
                improved = True
    return bits


def solve_qubo_anneal(p: QuboProblem, schedule: AnnealSchedule | None = None) -> tuple[np.ndarray, float]:
    """Simulated annealing with restarts; deterministic given the seed.

    Each restart runs single-bit-flip Metropolis down the temperature
    ladder with incremental energy updates, then quenches to a local
    minimum. The incumbent starts at the all-zeros assignment, so a
    degenerate problem with nothing to improve returns all zeros. Returns
    the best full bitstring and its energy.
    """
    if schedule is None:
        schedule = AnnealSchedule()
    free = p.free_vars
    m = len(free)
    best_bits = _full_bits(p, free, np.zeros(m, dtype=np.int8))
    best_energy = energy(p, best_bits)
    if m == 0:
        return best_bits, best_energy

    index_of = {v: k for k, v in enumerate(free)}
    couplings = np.zeros((m, m))
    diag = np.zeros(m)
    largest = 0.0
    for (i, j), val in p.coeffs.items():
        largest = max(largest, abs(val))
        if i == j:
            diag[index_of[i]] += val
        else:
            couplings[index_of[i], index_of[j]] += val
            couplings[index_of[j], index_of[i]] += val

    t_hi = schedule.t_initial if schedule.t_initial is not None else 10.0 * largest
    t_hi = max(t_hi, 10.0 * schedule.t_final)  # keep the ladder decreasing
    t_lo = schedule.t_final
    if schedule.sweeps == 1:
        temps = np.array([t_hi])
    else:
        steps = np.arange(schedule.sweeps) / (schedule.sweeps - 1)
        temps = t_hi * (t_lo / t_hi) ** steps

    streams = np.random.SeedSequence(schedule.seed).spawn(schedule.restarts)
    for stream in streams:
        rng = np.random.default_rng(stream)
        state = rng.integers(0, 2, m).astype(np.int8)
        uniforms = rng.random((schedule.sweeps, m))
        final = _metropolis(couplings, diag, temps, uniforms, state)
        bits = _full_bits(p, free, final)
        e = energy(p, bits)
        if e < best_energy:
            best_energy = e
            best_bits = bits
    return best_bits, best_energy


@dataclass(frozen=True)
class IsingModel:
    """Spin model over {-1,+1} variables equivalent to a source QUBO.

    var_ids records which QUBO variable each spin index stands for.
    """

    h: np.ndarray
    J: dict
    offset: float
    var_ids: tuple

    def energy(self, spins) -> float:
        spins = np.asarray(spins, dtype=np.int64).ravel()
        if spins.size != self.h.size:
            raise ValidationError(f"expected {self.h.size} spins, got {spins.size}")
        if np.any((spins != 1) & (spins != -1)):
            raise ValidationError("spins must be -1 or +1")
        total = self.offset
        for k, hk in enumerate(self.h):
            total += hk * spins[k]
        for (a, b), j in self.J.items():
            total += j * spins[a] * spins[b]
        return float(total)


def to_ising(p: QuboProblem) -> IsingModel:
    """Change of variables s = (x + 1) / 2 over the free variables.

    The returned model satisfies ising.energy(x) == energy(p, s(x)) for
    every spin assignment, with fixed-variable contributions already inside
    the QUBO offset.
    """
    free = p.free_vars
    index_of = {v: k for k, v in enumerate(free)}
    h = np.zeros(len(free))
    J: dict = {}
    offset = p.offset
    for (i, j), val in p.coeffs.items():
        if i == j:
            h[index_of[i]] += val / 2.0
            offset += val / 2.0
        else:
            a, b = sorted((index_of[i], index_of[j]))
            J[(a, b)] = J.get((a, b), 0.0) + val / 4.0
            h[index_of[i]] += val / 4.0
            h[index_of[j]] += val / 4.0
            offset += val / 4.0
    h.setflags(write=False)
    return IsingModel(h, J, float(offset), tuple(free))


def slack_coeffs(n_states: int) -> tuple[int, ...]:
    """Binary expansion coefficients covering exactly {0, ..., n_states - 1}.

    Powers of two up to the floor log, then one residual coefficient that
    tops the range off at n_states - 1. A trailing zero residual (n_states a
    power of two) is dropped as a degenerate free bit, except for the
    single-state encoding (0,), which pins the slack to zero.
    """
    if n_states < 1:
        raise ValidationError(f"n_states must be >= 1, got {n_states}")
    exp = n_states.bit_length() - 1
    gammas = [1 << k for k in range(exp)] + [n_states - (1 << exp)]
    if len(gammas) > 1 and gammas[-1] == 0:
        gammas.pop()
    return tuple(gammas)


def build_msc_qubo(g: NeighborhoodGraph, costs, lam: float | None = None) -> QuboProblem:
    """Covering program: select a minimum-cost subset within epsilon of all.

    Coverage counts a point's own selection bit (the neighborhood matrix has
    a unit diagonal). Each covering constraint becomes a squared penalty
    with binary-encoded slack; zero slack coefficients get no variable.
    lam defaults to n * max(costs) + 1 and must exceed n * max(costs), the
    threshold above which penalty minima are exactly the feasible covers.
    """
    n = g.n
    costs = np.asarray(costs, dtype=np.float64).ravel()
    if costs.size != n:
        raise ValidationError(f"expected {n} costs, got {costs.size}")
    if np.any(costs <= 0) or not np.all(np.isfinite(costs)):
        raise ValidationError("costs must be finite and positive")
    bound = n * float(costs.max())
    if lam is None:
        lam = bound + 1.0
    if lam <= bound:
        raise ValidationError(f"lam must exceed n * max(costs) = {bound}, got {lam}")

    cover = g.adjacency | np.eye(n, dtype=bool)
    origin = {i: ("vertex", i) for i in range(n)}
    forms = []  # (constraint terms, slack vars come after all selection vars)
    next_var = n
    for i in range(n):
        terms = [(int(j), 1.0) for j in np.flatnonzero(cover[i])]
        n_states = len(terms)
        for k, gamma in enumerate(slack_coeffs(n_states)):
            if gamma == 0:
                continue
            origin[next_var] = ("slack", i, k)
            terms.append((next_var, -float(gamma)))
            next_var += 1
        forms.append(terms)

    acc: dict = {(i, i): float(costs[i]) for i in range(n)}
    offset = 0.0
    for terms in forms:
        # expand lam * (sum_t c_t v_t - 1)^2
        offset += lam
        for t, (vt, ct) in enumerate(terms):
            acc[(vt, vt)] = acc.get((vt, vt), 0.0) + lam * (ct * ct - 2.0 * ct)
            for vu, cu in terms[t + 1 :]:
                key = (vt, vu) if vt < vu else (vu, vt)
                acc[key] = acc.get(key, 0.0) + 2.0 * lam * ct * cu
    coeffs = {k: acc[k] for k in sorted(acc) if acc[k] != 0.0}
    return QuboProblem(next_var, coeffs, offset, var_origin=origin)


def decode_selection(p: QuboProblem, bits) -> tuple[int, ...]:
    """Source vertices whose selection bit is set in a full assignment."""
    bits = np.asarray(bits, dtype=np.int64).ravel()
    if bits.size != p.n_vars:
        raise ValidationError(f"expected {p.n_vars} bits, got {bits.size}")
    chosen = [
        origin[1]
        for var, origin in p.var_origin.items()
        if origin[0] == "vertex" and bits[var] == 1
    ]
    return tuple(sorted(chosen))


def write_qubo_text(p: QuboProblem, path) -> None:
    """Write 'n offset' then one 'i j value' line per nonzero coefficient."""
    lines = [f"{p.n_vars} {p.offset!r}"]
    for (i, j) in sorted(p.coeffs):
        v = p.coeffs[(i, j)]
        if v != 0.0:
            lines.append(f"{i} {j} {v!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
