"""Drive schedules for selective controlled-phase gates and their verification.

A selective CZ between two dots is obtained by driving both with the same
two-photon detuning ``delta0`` for a time ``t`` satisfying two simultaneous
conditions:

* phase condition: ``2 eta t / hbar = pi`` with ``eta = lambda0^2 / delta0``,
  so the |gg> branch accumulates a conditional pi;
* closure condition: ``delta0 t / hbar = k pi`` for integer ``k``, so pairs
  driven at *different* detunings accumulate no net conditional phase (their
  cross term integrates to a sine that vanishes there) and the mode's
  displacement loop closes.

Both hold at ``t = pi hbar delta0 / (2 lambda0^2)`` once
``delta0 = lambda0 sqrt(2k)``; the planner picks the smallest ``k`` whose
``sqrt(2k)`` clears the requested detuning/drive ratio.  Parallel gates on
disjoint pairs use group detunings ``delta_J = J delta0`` with drives
``lambda_J = sqrt(J) lambda0``, which equalizes every group's phase rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .evolve import (
    DriveSegment,
    EvolutionSpec,
    NumericalFailure,
    eff1_vacuum_amplitudes,
    register_phases,
    _batched_matpow,
    schrodinger_evolve,
)
from .model import (
    DotParams,
    EffectiveDot,
    HBAR_MEV_NS,
    as_effective,
    build_full_hamiltonian,
    derive_couplings,
    lambda_coeff,
)
from .operators import HilbertSpace, QuantumState

#: Population allowed outside a state's original basis ray before phase
#: extraction refuses to report (signals a regime violation, not a bug).
LEAKAGE_MAX = 0.01


class LeakageError(RuntimeError):
    """Evolved state strayed too far from its basis ray to carry a phase."""


def wrap_phase(x: float) -> float:
    """Map a phase to [-pi, pi)."""
    return float((x + math.pi) % (2 * math.pi) - math.pi)


@dataclass(frozen=True)
class DotDrive:
    """Drive assignment of one dot within one schedule segment."""

    active: bool
    lam: complex = 0j
    delta: float = 0.0
    group: int = 0


@dataclass(frozen=True)
class ScheduleSegment:
    t_start: float
    t_end: float
    drives: tuple[DotDrive, ...]
    delta0: float | None = None

    def __post_init__(self):
        if self.t_end < self.t_start:
            raise ValueError("segment must have t_end >= t_start")
        object.__setattr__(self, "drives", tuple(self.drives))
        groups: dict[int, float] = {}
        for d in self.drives:
            if not d.active:
                continue
            if d.group in groups and groups[d.group] != d.delta:
                raise ValueError(
                    f"dots in group {d.group} carry different detunings"
                )
            groups[d.group] = d.delta

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


@dataclass(frozen=True)
class DriveSchedule:
    """Time-ordered drive segments; optionally tagged with the closure integer."""

    segments: tuple[ScheduleSegment, ...]
    k_integer: int | None = None
    lambda0: float | None = None
    delta0: float | None = None

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ValueError("schedule needs at least one segment")
        n = len(segs[0].drives)
        for a, b in zip(segs, segs[1:]):
            if b.t_start < a.t_end:
                raise ValueError("segments must be non-overlapping and ordered")
        if any(len(s.drives) != n for s in segs):
            raise ValueError("all segments must cover the same dots")
        if self.k_integer is not None and self.delta0:
            target = self.k_integer * math.pi
            for s in segs:
                if s.duration == 0:
                    continue
                phase = self.delta0 * s.duration / HBAR_MEV_NS
                if abs(phase / target - 1.0) > 1e-12:
                    raise ValueError(
                        f"segment phase {phase} != k*pi within 1e-12 relative"
                    )

    @property
    def num_dots(self) -> int:
        return len(self.segments[0].drives)

    @property
    def t_total(self) -> float:
        return sum(s.duration for s in self.segments)

    def active_dots(self) -> tuple[int, ...]:
        idx = set()
        for s in self.segments:
            idx.update(j for j, d in enumerate(s.drives) if d.active)
        return tuple(sorted(idx))

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "k_integer": self.k_integer,
            "lambda0_meV": self.lambda0,
            "delta0_meV": self.delta0,
            "segments": [
                {
                    "t_start_ns": s.t_start,
                    "t_end_ns": s.t_end,
                    "delta0_meV": s.delta0,
                    "drives": [
                        {
                            "active": d.active,
                            "lambda_meV": [d.lam.real, d.lam.imag],
                            "delta_meV": d.delta,
                            "group": d.group,
                        }
                        for d in s.drives
                    ],
                }
                for s in self.segments
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DriveSchedule":
        segs = []
        for s in data["segments"]:
            drives = tuple(
                DotDrive(
                    active=bool(d["active"]),
                    lam=complex(d["lambda_meV"][0], d["lambda_meV"][1]),
                    delta=float(d["delta_meV"]),
                    group=int(d["group"]),
                )
                for d in s["drives"]
            )
            segs.append(
                ScheduleSegment(
                    t_start=float(s["t_start_ns"]),
                    t_end=float(s["t_end_ns"]),
                    drives=drives,
                    delta0=s.get("delta0_meV"),
                )
            )
        return cls(
            segments=tuple(segs),
            k_integer=data.get("k_integer"),
            lambda0=data.get("lambda0_meV"),
            delta0=data.get("delta0_meV"),
        )


@dataclass(frozen=True)
class GateResult:
    """Outcome of a two-dot truth-table run."""

    phases: tuple[float, float, float, float]  # ff, fg, gf, gg (corrected)
    conditional_phase: float  # wrapped to [-pi, pi)
    fidelity_vs_ideal_cz: float
    tier: str
    t_gate_ns: float


def closure_integer(ratio_min: float) -> int:
    """Smallest k with sqrt(2k) >= ratio_min."""
    if ratio_min < 1:
        raise ValueError("ratio_min must be >= 1")
    k = max(1, math.ceil(ratio_min**2 / 2.0))
    while math.sqrt(2 * k) < ratio_min:
        k += 1
    return k


def plan_scz(
    pairs: Sequence[tuple[int, int]],
    lambda0: float,
    ratio_min: float = 100.0,
    num_dots: int | None = None,
    groups: Sequence[int] | None = None,
) -> DriveSchedule:
    """Single-segment schedule realizing CZ on each listed (disjoint) pair.

    Pair i is assigned group ``groups[i]`` (default 1, 2, ...); group J dots
    are driven at ``delta_J = J delta0`` with ``lambda_J = sqrt(J) lambda0``.
    """
    if lambda0 <= 0:
        raise ValueError("lambda0 must be > 0")
    used: set[int] = set()
    for m, n in pairs:
        if m == n or m in used or n in used:
            raise ValueError("pairs must be disjoint")
        used.update((m, n))
    if groups is None:
        groups = tuple(range(1, len(pairs) + 1))
    elif len(groups) != len(pairs) or len(set(groups)) != len(groups):
        raise ValueError("need one distinct group index per pair")
    if any(g < 1 for g in groups):
        raise ValueError("group indices are 1-based")
    n_dots = num_dots if num_dots is not None else (max(used) + 1 if used else 0)
    if used and max(used) >= n_dots:
        raise ValueError("pair index outside the dot register")

    k = closure_integer(ratio_min)
    delta0 = lambda0 * math.sqrt(2 * k)
    t_gate = k * math.pi * HBAR_MEV_NS / delta0

    drives = [DotDrive(active=False) for _ in range(n_dots)]
    for (m, n), J in zip(pairs, groups):
        d = DotDrive(
            active=True,
            lam=complex(math.sqrt(J) * lambda0),
            delta=J * delta0,
            group=J,
        )
        drives[m] = d
        drives[n] = d
    seg = ScheduleSegment(0.0, t_gate, tuple(drives), delta0=delta0)
    return DriveSchedule(
        segments=(seg,), k_integer=k, lambda0=lambda0, delta0=delta0
    )


def plan_uniform_scz(
    active_dots: Sequence[int],
    num_dots: int,
    lambda0: float,
    ratio_min: float = 100.0,
) -> DriveSchedule:
    """One segment driving every listed dot identically (group 1).

    Every pair of driven dots then accumulates the conditional pi, which
    realizes the all-pairs controlled-phase layer used for fully connected
    entangled states in a single step.
    """
    if lambda0 <= 0:
        raise ValueError("lambda0 must be > 0")
    k = closure_integer(ratio_min)
    delta0 = lambda0 * math.sqrt(2 * k)
    t_gate = k * math.pi * HBAR_MEV_NS / delta0
    active = set(active_dots)
    if active and max(active) >= num_dots:
        raise ValueError("dot index outside the register")
    drives = tuple(
        DotDrive(active=j in active, lam=complex(lambda0) if j in active else 0j,
                 delta=delta0 if j in active else 0.0, group=1 if j in active else 0)
        for j in range(num_dots)
    )
    seg = ScheduleSegment(0.0, t_gate, drives, delta0=delta0)
    return DriveSchedule(segments=(seg,), k_integer=k, lambda0=lambda0, delta0=delta0)


def segment_drives(segment: ScheduleSegment, dots: Sequence[DotParams] | None = None):
    """EffectiveDot list for one segment (idle dots get lam = 0).

    When physical dots are supplied their dispersive mode-shift coefficients
    ride along; otherwise the shift is 0, which only matters at the
    (lambda/delta)^2 level of the virtual photon population.
    """
    eff = []
    for j, d in enumerate(segment.drives):
        stark = dots[j].stark_coeff if dots is not None else 0.0
        if d.active:
            eff.append(EffectiveDot(lam=d.lam, delta=d.delta, stark=stark))
        else:
            eff.append(EffectiveDot(lam=0j, delta=d.delta, stark=stark))
    return eff


def engine_segments(
    schedules: Sequence[DriveSchedule], dots: Sequence[DotParams] | None = None
) -> list[DriveSegment]:
    """Flatten schedules into blockwise-engine segments, dropping empty ones."""
    segs: list[DriveSegment] = []
    for sched in schedules:
        for s in sched.segments:
            if s.duration == 0:
                continue
            eff = segment_drives(s, dots)
            segs.append(
                DriveSegment(
                    duration=s.duration,
                    lam=tuple(e.lam for e in eff),
                    delta=tuple(e.delta for e in eff),
                    stark=tuple(e.stark for e in eff),
                    base_delta=s.delta0,
                )
            )
    return segs


def local_phase_correction(
    state: QuantumState, eta_jj: Sequence[float], t: float
) -> QuantumState:
    """Undo the single-dot Stark phases: amplitude of |s> gains
    exp(+i sum_j s_j eta_jj t / hbar)."""
    space = state.space
    if space.levels_per_dot != 2 or space.has_cavity:
        raise ValueError("phase correction acts on the bare qubit register")
    n = space.num_dots
    if len(eta_jj) != n:
        raise ValueError("need one eta_jj per dot")
    r = np.arange(2**n)
    bits = (r[:, None] >> np.arange(n - 1, -1, -1)[None, :]) & 1
    phases = bits @ (np.asarray(eta_jj, dtype=float) * t / HBAR_MEV_NS)
    factors = np.exp(1j * phases)
    if state.kind == "pure":
        return QuantumState.pure(space, state.amplitudes * factors)
    rho = state.amplitudes * factors[:, None] * factors.conj()[None, :]
    return QuantumState.density(space, rho)


def single_dot_corrections(
    schedules: Sequence[DriveSchedule], dots: Sequence[DotParams] | None = None
) -> np.ndarray:
    """Accumulated per-dot correction phases sum(eta_jj * dur) / hbar."""
    total = np.zeros(schedules[0].num_dots)
    for sched in schedules:
        for s in sched.segments:
            if s.duration == 0:
                continue
            eff = segment_drives(s, dots)
            cpl = derive_couplings(eff)
            total = total + cpl.eta.diagonal() * s.duration / HBAR_MEV_NS
    return total


def extract_conditional_phase(states: Sequence[QuantumState]) -> float:
    """Conditional phase phi_gg - phi_fg - phi_gf + phi_ff of four evolved
    basis states (ff, fg, gf, gg order), wrapped to [-pi, pi).

    Each state must still lie dominantly (population >= 0.99) on its basis
    ray, i.e. the original two-dot level pair with the mode in vacuum;
    anything worse signals a regime violation and raises
    :class:`LeakageError`.
    """
    if len(states) != 4:
        raise ValueError("need the four basis-state evolutions")
    phases = []
    for (s1, s2), st in zip(((0, 0), (0, 1), (1, 0), (1, 1)), states):
        if st.kind != "pure":
            raise ValueError("phase extraction needs pure states")
        if st.space.num_dots != 2:
            raise ValueError("phase extraction is defined for two-dot states")
        amp = st.amplitudes[st.space.basis_index((s1, s2), 0)]
        pop = abs(amp) ** 2
        if pop < 1.0 - LEAKAGE_MAX:
            raise LeakageError(
                f"population {pop:.4f} on basis ray ({s1},{s2}) below "
                f"{1 - LEAKAGE_MAX}; dispersive conditions violated"
            )
        phases.append(math.atan2(amp.imag, amp.real))
    return wrap_phase(phases[3] - phases[2] - phases[1] + phases[0])


def _cz_fidelity(phases: Sequence[float]) -> float:
    """|<CZ, U>|/4 for the diagonal gate with the given corrected phases."""
    z = (
        np.exp(1j * phases[0])
        + np.exp(1j * phases[1])
        + np.exp(1j * phases[2])
        - np.exp(1j * phases[3])
    )
    return float(abs(z) / 4.0)


def _full_tier_basis_amplitudes(
    schedule: DriveSchedule,
    dots: Sequence[DotParams],
    targets: tuple[int, int],
    fock_cutoff: int,
    period_hint: float | None,
    rel_tol: float,
    abs_tol: float,
) -> list[complex]:
    """Evolve the four register basis states under the full Hamiltonian."""
    if sum(1 for s in schedule.segments if s.duration > 0) != 1:
        raise ValueError(
            "full-tier truth tables support single-segment schedules only"
        )
    n = schedule.num_dots
    space = HilbertSpace(n, 3, fock_cutoff)
    dim = space.dim

    def levels_for(s1, s2):
        lv = [0] * n
        lv[targets[0]], lv[targets[1]] = s1, s2
        return lv

    amps = []
    for seg in schedule.segments:
        if seg.duration == 0:
            continue
        for j, d in enumerate(seg.drives):
            if not d.active:
                continue
            lam_phys = lambda_coeff(dots[j])
            if abs(lam_phys - d.lam) > 1e-6 * abs(d.lam):
                raise ValueError(
                    f"dot {j}: physical drive {lam_phys} does not match the "
                    f"scheduled {d.lam}; calibrate the dots to the schedule"
                )
            if abs(dots[j].delta_small - d.delta) > 1e-9 * abs(d.delta):
                raise ValueError(
                    f"dot {j}: physical detuning {dots[j].delta_small} does "
                    f"not match the scheduled {d.delta}"
                )

    def hbuilder(t):
        return build_full_hamiltonian(dots, space, t)

    # one propagator serves all four basis states
    if period_hint is not None and schedule.t_total > period_hint:
        dur = schedule.t_total
        q = int(math.floor(dur / period_hint + 1e-9))
        rem = dur - q * period_hint

        def rhs(t, y):
            return (
                (-1j / HBAR_MEV_NS) * (hbuilder(t).matrix @ y.reshape(dim, dim))
            ).ravel()

        from scipy.integrate import solve_ivp

        sol = solve_ivp(
            rhs,
            (0.0, period_hint),
            np.eye(dim, dtype=complex).ravel(),
            method="DOP853",
            rtol=min(rel_tol, 1e-11),
            atol=min(abs_tol, 1e-13),
        )
        if not sol.success:
            raise NumericalFailure(sol.message)
        u = _batched_matpow(sol.y[:, -1].reshape(1, dim, dim), q)[0]
        if rem > 1e-9 * period_hint:
            sol = solve_ivp(
                rhs,
                (0.0, rem),
                np.eye(dim, dtype=complex).ravel(),
                method="DOP853",
                rtol=min(rel_tol, 1e-11),
                atol=min(abs_tol, 1e-13),
            )
            u = sol.y[:, -1].reshape(dim, dim) @ u
        for s1, s2 in ((0, 0), (0, 1), (1, 0), (1, 1)):
            idx = space.basis_index(levels_for(s1, s2), 0)
            amps.append(complex(u[idx, idx]))
        return amps

    spec = EvolutionSpec(
        t_final=schedule.t_total, model_tier="full", rel_tol=rel_tol, abs_tol=abs_tol
    )
    for s1, s2 in ((0, 0), (0, 1), (1, 0), (1, 1)):
        psi0 = QuantumState.basis(space, levels_for(s1, s2), 0)
        psi = schrodinger_evolve(hbuilder, psi0, spec)[-1]
        idx = space.basis_index(levels_for(s1, s2), 0)
        amps.append(complex(psi.amplitudes[idx]))
    return amps


def cz_truth_table(
    schedule: DriveSchedule,
    tier: str,
    dots: Sequence[DotParams] | None = None,
    fock_cutoff: int = 4,
    period_hint: float | None = None,
    rel_tol: float = 1e-10,
    abs_tol: float = 1e-12,
) -> GateResult:
    """Propagate the four basis states of the schedule's target pair.

    The schedule must drive exactly two dots.  Phases are reported after the
    single-dot corrections; fidelity compares the corrected diagonal against
    diag(1, 1, 1, -1).  The ``full`` tier needs physical ``dots`` consistent
    with the schedule; ``period_hint`` enables propagator powering when the
    full Hamiltonian is periodic (commensurate energies).
    """
    targets = schedule.active_dots()
    if len(targets) != 2:
        raise ValueError(f"schedule drives {len(targets)} dots, expected 2")
    n = schedule.num_dots

    def bits_for(s1, s2):
        b = [0] * n
        b[targets[0]], b[targets[1]] = s1, s2
        return tuple(b)

    basis = ((0, 0), (0, 1), (1, 0), (1, 1))
    corrections = single_dot_corrections([schedule], dots)

    if tier == "eff":
        raw = np.zeros(4)
        for seg in schedule.segments:
            if seg.duration == 0:
                continue
            eff = segment_drives(seg, dots)
            ph = register_phases(eff, n, seg.duration)
            for i, (s1, s2) in enumerate(basis):
                b = bits_for(s1, s2)
                ridx = sum(bit << (n - 1 - j) for j, bit in enumerate(b))
                raw[i] -= ph[ridx]  # evolution phase factor is e^{-i phi}
        amps = np.exp(1j * raw)
    elif tier == "eff1":
        segs = engine_segments([schedule], dots)
        amps = np.asarray(
            eff1_vacuum_amplitudes(
                segs, [bits_for(s1, s2) for s1, s2 in basis], fock_cutoff
            )
        )
    elif tier == "full":
        if dots is None:
            raise ValueError("full tier needs physical DotParams")
        amps = np.asarray(
            _full_tier_basis_amplitudes(
                schedule, dots, targets, fock_cutoff, period_hint, rel_tol, abs_tol
            )
        )
    else:
        raise ValueError(f"unknown tier {tier!r}")

    pops = np.abs(amps) ** 2
    if np.any(pops < 1.0 - LEAKAGE_MAX):
        raise LeakageError(
            f"basis-ray populations {pops} dropped below {1 - LEAKAGE_MAX}"
        )
    corr = np.array(
        [
            corrections[targets[0]] * s1 + corrections[targets[1]] * s2
            for s1, s2 in basis
        ]
    )
    phases = tuple(wrap_phase(a) for a in np.angle(amps) + corr)
    cond = wrap_phase(phases[3] - phases[2] - phases[1] + phases[0])
    return GateResult(
        phases=phases,
        conditional_phase=cond,
        fidelity_vs_ideal_cz=_cz_fidelity(phases),
        tier=tier,
        t_gate_ns=schedule.t_total,
    )


def plan_null_gate(
    m: int, n: int, k: int, lambda0: float, delta0: float
) -> DriveSchedule:
    """Two dots in different groups m, n, held for the closure time k pi hbar/delta0.

    Dot 0 is driven at (sqrt(m) lambda0, m delta0) and dot 1 at
    (sqrt(n) lambda0, n delta0); at the emitted duration their conditional
    phase nulls out while each still accumulates its single-dot Stark phase.
    """
    if m == n:
        raise ValueError("group indices must differ")
    if min(m, n) < 1 or k < 1:
        raise ValueError("group indices and k are 1-based")
    if lambda0 <= 0 or delta0 <= 0:
        raise ValueError("lambda0 and delta0 must be > 0")
    t = k * math.pi * HBAR_MEV_NS / delta0
    drives = tuple(
        DotDrive(
            active=True,
            lam=complex(math.sqrt(J) * lambda0),
            delta=J * delta0,
            group=J,
        )
        for J in (m, n)
    )
    seg = ScheduleSegment(0.0, t, drives, delta0=delta0)
    return DriveSchedule(segments=(seg,), k_integer=k, lambda0=lambda0, delta0=delta0)


def commensurate_period(
    dots: Sequence[DotParams], max_cycles: float = 5e4
) -> float | None:
    """Common period of the full-tier drive phases, if one exists.

    Finds a base energy dividing every detuning (up to float dust) and
    returns 2 pi hbar / base, or None when the fastest phase would need more
    than ``max_cycles`` oscillations per period to resolve.
    """
    from fractions import Fraction

    energies = []
    for d in dots:
        energies += [abs(d.delta), abs(d.delta_prime), abs(d.delta_cav)]
    energies = [e for e in energies if e > 0]
    if not energies:
        return None
    fracs = [Fraction(e).limit_denominator(10**6) for e in energies]
    den_l = 1
    for f in fracs:
        den_l = den_l * f.denominator // math.gcd(den_l, f.denominator)
    num_g = 0
    for f in fracs:
        num_g = math.gcd(num_g, f.numerator * (den_l // f.denominator))
    base = num_g / den_l
    if base <= 0:
        return None
    if 2 * max(energies) / base > max_cycles:
        return None
    return 2 * math.pi * HBAR_MEV_NS / base


def calibrate_cz_schedule(
    dots: Sequence[DotParams], ratio_min: float = 100.0
) -> tuple[tuple[DotParams, ...], DriveSchedule]:
    """Fit the mode detunings of a dot set to a same-detuning CZ schedule.

    The closure detuning depends on the drive amplitudes, which in turn
    depend on the mode detuning (delta_cav = delta + delta0), so the pair is
    solved as a fixed point: delta0 = sqrt(2k) * geomean_j |lambda_j(delta0)|.
    Returns the recalibrated dots and the schedule driving all of them in one
    group at their physical drive amplitudes.
    """
    k = closure_integer(ratio_min)
    root = math.sqrt(2 * k)

    def lambdas(delta0):
        return [
            lambda_coeff(
                DotParams(
                    g=d.g,
                    omega=d.omega,
                    delta=d.delta,
                    delta_cav=d.delta + delta0,
                    omega_prime=d.omega_prime,
                    delta_prime=d.delta_prime,
                )
            )
            for d in dots
        ]

    def geomean(vals):
        return math.exp(sum(math.log(abs(v)) for v in vals) / len(vals))

    delta0 = root * geomean(
        [lambda_coeff(DotParams(d.g, d.omega, d.delta, d.delta)) for d in dots]
    )
    for _ in range(200):
        nxt = root * geomean(lambdas(delta0))
        if abs(nxt - delta0) <= 1e-15 * abs(nxt):
            delta0 = nxt
            break
        delta0 = nxt
    lams = lambdas(delta0)
    lambda0 = geomean(lams)
    new_dots = tuple(
        DotParams(
            g=d.g,
            omega=d.omega,
            delta=d.delta,
            delta_cav=d.delta + delta0,
            omega_prime=d.omega_prime,
            delta_prime=d.delta_prime,
        )
        for d in dots
    )
    t_gate = k * math.pi * HBAR_MEV_NS / delta0
    drives = tuple(
        DotDrive(active=True, lam=complex(lam), delta=delta0, group=1)
        for lam in lams
    )
    seg = ScheduleSegment(0.0, t_gate, drives, delta0=delta0)
    schedule = DriveSchedule(
        segments=(seg,), k_integer=k, lambda0=lambda0, delta0=delta0
    )
    return new_dots, schedule


def null_gate_check(
    m: int,
    n: int,
    k: int,
    lambda0: float,
    delta0: float,
    t: float | None = None,
) -> float:
    """Residual conditional phase between group-m and group-n dots.

    With lambda_J = sqrt(J) lambda0 and delta_J = J delta0, the cross term
    integrates to (2 eta_mn / delta_mn) sin(delta_mn t / hbar); at the
    closure time t = k pi hbar / delta0 the sine vanishes identically.  An
    explicit ``t`` evaluates the residual away from closure.
    """
    if m == n:
        raise ValueError("group indices must differ")
    if k < 1:
        raise ValueError("k must be >= 1")
    lam_m, lam_n = math.sqrt(m) * lambda0, math.sqrt(n) * lambda0
    d_m, d_n = m * delta0, n * delta0
    eta_mn = abs(lam_m * lam_n) / 2.0 * (1.0 / d_m + 1.0 / d_n)
    d_mn = d_m - d_n
    if t is None:
        # at closure the sine argument is the exact integer multiple (m-n)k pi
        angle = (m - n) * k * math.pi
    else:
        angle = d_mn * t / HBAR_MEV_NS
    return 2.0 * eta_mn / d_mn * math.sin(angle)
