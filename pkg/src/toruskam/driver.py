"""Orchestration of the iterative normal-form scheme.

One level of the iteration: split the perturbation at weighted degree 2,
solve the four homological equation classes at the level's mode cutoff,
push the Hamiltonian through the time-1 flow of the generator, re-extract
the normal form (tangent frequencies and the quadratic coefficient matrix,
re-symmetrized with the defect folded back into the perturbation), and
measure the new low-order norm.  The schedule fixes the targets
eps_l = A^{-(4/3)^l} and the analyticity-loss ladder; at desk scale the mode
cutoffs are capped, so contraction is asserted against measured norms and
the schedule targets are reported side by side.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .atlas import (ParameterAtlas, ScanReport, diophantine_ok,
                    nonresonance_predicate, pave_and_filter)
from .fourier import FourierSeries
from .greens import invert_direct, neumann_transfer, variation_delta, \
    CertificateGateError
from .homological import (HomologicalSolution, NearSingularError,
                          SmallDivisorError, build_T, solve_homological)
from .jets import (HamiltonianJet, NormalForm, check_reality, lie_transform,
                   matrix_zzbar, split_low_high, vf_norm)


class ParameterExcluded(Exception):
    """The active parameter hit a resonance; callers re-select."""

    def __init__(self, xi, level, reason):
        self.xi = np.asarray(xi, dtype=float)
        self.level = level
        self.reason = reason
        super().__init__(f"parameter {tuple(self.xi)} excluded at level "
                         f"{level}: {reason}")


# ----------------------------------------------------------------------
# schedule
# ----------------------------------------------------------------------

DEFAULT_CONSTANTS = (2, 3, 17, 4, 5, 14, 11, 16, 12)   # C0 .. C8

_ZETA2 = math.pi ** 2 / 6.0


def check_constant_ordering(C):
    C0, C1, C2, C3, C4, C5, C6, C7, C8 = C
    rules = [(C1 > C0, "C1 > C0"), (C2 > 2 * C1 + 10, "C2 > 2 C1 + 10"),
             (C4 > C3, "C4 > C3"), (C3 > C1, "C3 > C1"),
             (C5 > C6 + 2, "C5 > C6 + 2"), (C6 > 2 * C4, "C6 > 2 C4"),
             (C7 > max(C4 + 10, C5), "C7 > max(C4 + 10, C5)")]
    bad = [name for ok, name in rules if not ok]
    if bad:
        raise ValueError(f"constant ordering violated: {', '.join(bad)}")


@dataclass(frozen=True)
class KamSchedule:
    A: float
    tau: float
    C: tuple
    l_star: int
    s0: float = 1.0
    r0: float = 0.5
    N_max: int = 16

    def eps(self, l: int) -> float:
        return self.A ** -((4.0 / 3.0) ** l)

    def e(self, l: int) -> float:
        ks = np.arange(1, l + 1, dtype=float)
        return float((ks ** -2).sum() / (2.0 * _ZETA2))

    def s(self, l: int) -> float:
        return self.s0 * (1.0 - self.e(l))

    def r(self, l: int) -> float:
        return self.r0 * (1.0 - self.e(l))

    def s_inter(self, l: int, j: int) -> float:
        if not 0 <= j <= 100:
            raise ValueError("intermediate index in 0..100")
        return self.s(l) + (self.s(l + 1) - self.s(l)) * j / 100.0

    def r_inter(self, l: int, j: int) -> float:
        if not 0 <= j <= 100:
            raise ValueError("intermediate index in 0..100")
        return self.r(l) + (self.r(l + 1) - self.r(l)) * j / 100.0

    def N(self, l: int) -> int:
        nominal = self.A ** (l + 1)
        if nominal > self.N_max:
            warnings.warn(f"mode cutoff capped at {self.N_max} "
                          f"(nominal {nominal:.3g})")
            return self.N_max
        return max(int(round(nominal)), 1)

    # scale-ladder quantities derived from a window size N
    def M0(self, N: int) -> float:
        return math.log(N) ** self.C[0]

    def logK(self, N: int) -> float:
        return math.log(self.M0(N)) ** self.C[7]

    def l0(self, N: int) -> float:
        return self.C[8] * math.log(self.M0(N))

    def l1(self, N: int) -> float:
        return self.logK(N) / math.log(self.A)


def make_schedule(A: float, eps0: float, d: int, tau: float | None = None,
                  C=DEFAULT_CONSTANTS, s0: float = 1.0, r0: float = 0.5,
                  N_max: int = 16) -> KamSchedule:
    if A <= 1:
        raise ValueError("A > 1 required")
    check_constant_ordering(C)
    tau = float(d + 2) if tau is None else float(tau)
    # A^{tau l*} = eps^{-1/3}, rounded up
    l_star = max(int(math.ceil(-math.log(eps0) / (3.0 * tau * math.log(A)))),
                 1)
    return KamSchedule(A=float(A), tau=tau, C=tuple(C), l_star=l_star,
                       s0=s0, r0=r0, N_max=N_max)


# ----------------------------------------------------------------------
# states and results
# ----------------------------------------------------------------------

@dataclass
class KamState:
    level: int
    nf: NormalForm
    P: HamiltonianJet
    xi: np.ndarray
    eps_meas: float
    eps_high: float
    extra: dict = field(default_factory=dict)


@dataclass
class TorusResult:
    omega_star: np.ndarray
    B_final: FourierSeries
    generators: list          # HomologicalSolution per accepted level
    residual: float
    atlas: ParameterAtlas | None
    rows: list                # per-level log dictionaries
    exponent: float | None    # measured contraction exponent
    final_low_norm: float


def _jet_kw(P: HamiltonianJet) -> dict:
    return dict(max_degree=P.max_degree, cutoff_cap=P.cutoff_cap,
                s_ref=P.s_ref, r_ref=P.r_ref)


def gamma_floor(gamma: float, tau: float):
    """Divisor exclusion floor |<k, omega>| > gamma |k|_1^{-tau}."""
    def floor(k):
        return gamma * max(sum(abs(c) for c in k), 1) ** -tau
    return floor


def invariance_residual(P: HamiltonianJet, s: float, r: float) -> float:
    """Norm bound for the vector-field defect on the torus y = z = 0.

    Only terms that survive at the origin obstruct invariance: the
    x-dependent scalar part, the y-linear part, and the z / zbar linear
    parts.  Their joint vf_norm dominates the defect.
    """
    d, n = P.d, P.n
    keep = {}
    for sig, f in P.terms.items():
        a, b, c = sig
        da, db, dc = sum(a), sum(b), sum(c)
        if (da, db, dc) in ((0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)):
            keep[sig] = f
    sub = P._like(keep, tail=0.0)
    return vf_norm(sub, s, r)


def state_variation(a: KamState, b: KamState, s: float, N: int):
    """Perturbation envelope between the lattice operators of two states."""
    Ta = build_T(a.nf.omega, a.nf.Omega, a.nf.B,
                 matrix_zzbar(split_low_high(a.P).low), N)
    Tb = build_T(b.nf.omega, b.nf.Omega, b.nf.B,
                 matrix_zzbar(split_low_high(b.P).low), N)
    return variation_delta(Ta, Tb, s)


# ----------------------------------------------------------------------
# the iteration
# ----------------------------------------------------------------------

def initial_step(nf: NormalForm, P: HamiltonianJet, schedule: KamSchedule,
                 gamma: float | None = None, exclusion_N: int = 8,
                 ambient_half_width: float = 0.5) -> tuple:
    """Measure the input, build the surviving-parameter atlas at the first
    level, and return the starting state (with the frequency vector as the
    active parameter) plus the atlas."""
    ok, worst = check_reality(P)
    if not ok:
        raise ValueError(f"input violates the reality condition: {worst:.3e}")
    l = schedule.l_star
    sp = split_low_high(P)
    eps0 = vf_norm(sp.low, schedule.s(l), schedule.r(l))
    eps_high = vf_norm(sp.high, schedule.s(l), schedule.r(l))
    if gamma is None:
        gamma = 0.5 * math.sqrt(max(eps0, 1e-300))
    pred = nonresonance_predicate(nf.Omega, exclusion_N, gamma, schedule.tau)
    root = ParameterAtlas.root(tuple(nf.omega), ambient_half_width,
                               A=10.0, size_exponent=1)
    atlas, removed = pave_and_filter(root, 1, pred)
    if not atlas.boxes:
        raise ParameterExcluded(nf.omega, l, "empty atlas: every sampled "
                                "parameter hits a resonance")
    if pred(nf.omega[None, :])[0]:
        xi = np.array(nf.omega, dtype=float)
    else:
        centers = np.array([b.center for b in atlas.boxes])
        xi = centers[np.argmin(np.abs(centers - nf.omega).sum(axis=1))]
        nf = NormalForm(xi.copy(), nf.Omega, nf.B)
    # level-entry certificate for the lattice operator, Neumann-transferred
    # from the unperturbed diagonal when the perturbation is small enough
    N = schedule.N(l)
    Z = FourierSeries.zero(nf.d, shape=(nf.n, nf.n))
    T0 = build_T(nf.omega, nf.Omega, Z, Z, N)
    T = build_T(nf.omega, nf.Omega, nf.B, matrix_zzbar(sp.low), N)
    _, cert0 = invert_direct(T0, threshold=2)
    try:
        cert = neumann_transfer(cert0, variation_delta(T0, T, s=0.25))
    except CertificateGateError:
        _, cert = invert_direct(T, threshold=2)
    state = KamState(level=l, nf=nf, P=P, xi=xi, eps_meas=eps0,
                     eps_high=eps_high,
                     extra={"gamma": gamma, "removed_measure": removed,
                            "greens": cert})
    return state, atlas


def kam_step(state: KamState, schedule: KamSchedule,
             lie_order: int = 3, cond_cap: float = 1e12,
             strict_schedule: bool = False) -> tuple:
    """One full level: solve, transform, re-extract the normal form."""
    l = state.level
    nf, P = state.nf, state.P
    d, n = P.d, P.n
    N = schedule.N(l)
    floor = gamma_floor(0.5 * state.extra.get("gamma", 0.0), schedule.tau)
    try:
        sol = solve_homological(nf.omega, nf.Omega, nf.B, P, N,
                                divisor_floor=floor, cond_cap=cond_cap)
    except (SmallDivisorError, NearSingularError) as err:
        raise ParameterExcluded(state.xi, l, str(err)) from err
    F = sol.generator_jet(d, n, **_jet_kw(P))
    H = nf.to_jet(**_jet_kw(P)) + P
    lie = lie_transform(H, F, order=lie_order)
    Hp = lie.jet

    omega_new = nf.omega + np.real(np.asarray(sol.freq_shift))
    M = matrix_zzbar(Hp)
    Bfull = M - FourierSeries.constant(d, np.diag(nf.Omega)).pad(M.cutoff)
    Bsym = 0.5 * (Bfull + Bfull.transpose())
    B_new = 0.5 * (Bsym + Bsym.conj_function())
    fold_defect = (Bfull - B_new).max_abs_coeff()
    nf_new = NormalForm(omega_new, nf.Omega, B_new)

    P_new = Hp - nf_new.to_jet(**_jet_kw(P))
    # drop the irrelevant constant energy shift
    sig0 = ((0,) * d, (0,) * n, (0,) * n)
    if sig0 in P_new.terms:
        f = P_new.terms[sig0]
        mean = FourierSeries.constant(d, f.coeff((0,) * d)).pad(f.cutoff)
        P_new.terms[sig0] = f - mean

    sp = split_low_high(P_new)
    s1, r1 = schedule.s(l + 1), schedule.r(l + 1)
    eps_new = vf_norm(sp.low, s1, r1)
    eps_high = vf_norm(sp.high, s1, r1)

    drift = float(np.abs(omega_new - nf.omega).max())
    if drift > math.sqrt(max(state.eps_meas, 1e-300)):
        raise ParameterExcluded(state.xi, l,
                                f"frequency drift {drift:.3e} beyond "
                                f"sqrt(eps) = {math.sqrt(state.eps_meas):.3e}")
    bdrift = (B_new - nf.B.pad(B_new.cutoff)).max_abs_coeff()
    if bdrift > max(state.eps_meas, 1e-300) ** 0.1:
        warnings.warn(f"normal-form drift {bdrift:.3e} beyond eps^(1/10)")
    if eps_new > schedule.eps(l + 1):
        msg = (f"measured low norm {eps_new:.3e} misses the schedule target "
               f"{schedule.eps(l + 1):.3e} at level {l + 1}")
        if strict_schedule:
            raise ValueError(msg)
        warnings.warn(msg)

    _, reality_err = check_reality(P_new, tol=0.0)
    new = KamState(level=l + 1, nf=nf_new, P=P_new, xi=state.xi,
                   eps_meas=eps_new, eps_high=eps_high,
                   extra={**state.extra,
                          "omega_shift": drift,
                          "B_drift": bdrift,
                          "B_symmetry_err": nf_new.symmetry_error(),
                          "B_fold_defect": float(fold_defect),
                          "reality_err": float(reality_err),
                          "lie_tail": lie.tail_bound})
    return new, sol


def contraction_exponent(eps_values) -> float | None:
    """Least-squares slope through the origin of log eps_{l+1} vs log eps_l."""
    pairs = [(a, b) for a, b in zip(eps_values, eps_values[1:])
             if 0 < a < 1 and 0 < b < 1]
    if not pairs:
        return None
    x = np.log([a for a, _ in pairs])
    y = np.log([b for _, b in pairs])
    return float((x @ y) / (x @ x))


def run(nf: NormalForm, P: HamiltonianJet, schedule: KamSchedule,
        max_levels: int = 6, stop_threshold: float = 1e-14,
        lie_order: int = 3, cond_cap: float = 1e12, gamma: float | None = None,
        exclusion_N: int = 8, strict_schedule: bool = False) -> TorusResult:
    state, atlas = initial_step(nf, P, schedule, gamma=gamma,
                                exclusion_N=exclusion_N)
    rows = [{"level": state.level, "eps_meas": state.eps_meas,
             "eps_sched": schedule.eps(state.level), "omega_shift": 0.0,
             "B_symmetry_err": state.nf.symmetry_error(),
             "residual": invariance_residual(P, schedule.s(state.level),
                                             schedule.r(state.level))}]
    generators = []
    eps_seq = [state.eps_meas]
    steps = 0
    while steps < max_levels and state.eps_meas > stop_threshold:
        state, sol = kam_step(state, schedule, lie_order=lie_order,
                              cond_cap=cond_cap,
                              strict_schedule=strict_schedule)
        generators.append(sol)
        eps_seq.append(state.eps_meas)
        rows.append({"level": state.level, "eps_meas": state.eps_meas,
                     "eps_sched": schedule.eps(state.level),
                     "omega_shift": state.extra["omega_shift"],
                     "B_symmetry_err": state.extra["B_symmetry_err"],
                     "residual": invariance_residual(
                         state.P, schedule.s(state.level),
                         schedule.r(state.level))})
        steps += 1
    residual = rows[-1]["residual"]
    return TorusResult(omega_star=state.nf.omega, B_final=state.nf.B,
                       generators=generators, residual=residual,
                       atlas=atlas, rows=rows,
                       exponent=contraction_exponent(eps_seq),
                       final_low_norm=state.eps_meas)


def log_csv(rows) -> str:
    """Deterministic per-level CSV."""
    header = "level,eps_meas,eps_sched,omega_shift,B_symmetry_err,residual"
    lines = [header]
    for r in rows:
        lines.append(",".join([str(int(r["level"]))]
                              + [f"{float(r[k]):.17e}"
                                 for k in ("eps_meas", "eps_sched",
                                           "omega_shift", "B_symmetry_err",
                                           "residual")]))
    return "\n".join(lines) + "\n"
