"""Time-evolution engines for the three model tiers.

Four engines live here:

* :func:`schrodinger_evolve` -- adaptive integration of a time-dependent
  Hamiltonian acting on a pure state (any tier).
* :func:`lindblad_evolve` -- master-equation integration with photon loss
  from the shared mode at rate ``gamma``.
* :func:`diagonal_propagate` -- exact analytic phases for the vacuum tier,
  whose Hamiltonian is diagonal in the register basis.
* the blockwise engine (:func:`blockwise_decoherence_evolve`,
  :func:`blockwise_fidelity`) -- exploits that the dispersive tier contains
  no qubit flips, so the density matrix splits into register-bitstring-indexed
  cavity blocks, each obeying an independent driven-damped-mode equation.
  Blocks that share per-dot drive parameters are grouped and solved once.

Segment drives are periodic whenever the active two-photon detunings are
integer multiples of a base value (scheduled drives always are), so the
blockwise engine integrates a single drive period and chains it by matrix
powers instead of stepping through every oscillation of a long gate.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .model import DotLike, EffectiveDot, HBAR_MEV_NS, as_effective, derive_couplings
from .operators import (
    HilbertSpace,
    LinearOperator,
    QuantumState,
    cavity_ops,
)

logger = logging.getLogger(__name__)

#: Norm drift above which unitary integration is considered healthy/logged.
NORM_DRIFT_LOG = 1e-7
#: Norm drift above which integration aborts.
NORM_DRIFT_ABORT = 1e-5

#: Internal tolerances for one-period propagators (powering amplifies error,
#: so these are kept well below trajectory tolerances).
_PROP_RTOL = 1e-12
_PROP_ATOL = 1e-14


class NumericalFailure(RuntimeError):
    """An evolution engine violated its accuracy contract."""


@dataclass(frozen=True)
class EvolutionSpec:
    """Run parameters shared by the trajectory engines."""

    t_final: float
    model_tier: str = "eff1"  # "full" | "eff1" | "eff"
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float | None = None
    sample_times: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.t_final <= 0:
            raise ValueError("t_final must be > 0")
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be > 0")
        if self.model_tier not in ("full", "eff1", "eff"):
            raise ValueError(f"unknown model tier {self.model_tier!r}")
        if self.sample_times is not None:
            ts = tuple(float(t) for t in self.sample_times)
            if any(t < 0 or t > self.t_final for t in ts) or list(ts) != sorted(ts):
                raise ValueError("sample_times must be sorted within [0, t_final]")
            object.__setattr__(self, "sample_times", ts)

    @property
    def times(self) -> tuple[float, ...]:
        return self.sample_times if self.sample_times else (self.t_final,)


@dataclass(frozen=True)
class DecayModel:
    """Waveguide photon loss: rate gamma = 1/tau_w (1/ns)."""

    gamma: float
    tau_w: float

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        expected = math.inf if self.gamma == 0 else 1.0 / self.gamma
        if not (
            (math.isinf(expected) and math.isinf(self.tau_w))
            or abs(self.tau_w - expected) <= 1e-12 * max(abs(expected), 1.0)
        ):
            raise ValueError("gamma and tau_w must satisfy gamma = 1/tau_w")

    @classmethod
    def from_gamma(cls, gamma: float) -> "DecayModel":
        return cls(gamma=gamma, tau_w=math.inf if gamma == 0 else 1.0 / gamma)

    @classmethod
    def from_tau(cls, tau_w: float) -> "DecayModel":
        if tau_w <= 0:
            raise ValueError("tau_w must be > 0")
        return cls(gamma=0.0 if math.isinf(tau_w) else 1.0 / tau_w, tau_w=tau_w)

    @classmethod
    def none(cls) -> "DecayModel":
        return cls(gamma=0.0, tau_w=math.inf)


def _as_matrix(h) -> object:
    return h.matrix if isinstance(h, LinearOperator) else h


# ---------------------------------------------------------------------------
# Trajectory engines
# ---------------------------------------------------------------------------


def schrodinger_evolve(
    hamiltonian: Callable[[float], object],
    psi0: QuantumState,
    spec: EvolutionSpec,
) -> list[QuantumState]:
    """Integrate i hbar dpsi/dt = H(t) psi with adaptive stepping.

    The state norm is monitored at every sample: drift below
    :data:`NORM_DRIFT_ABORT` is renormalized and logged, larger drift raises
    :class:`NumericalFailure`.
    """
    if psi0.kind != "pure":
        raise ValueError("schrodinger_evolve requires a pure state")
    space = psi0.space
    for t_check in (0.0, spec.t_final):
        m = _as_matrix(hamiltonian(t_check))
        arr = m.toarray() if hasattr(m, "toarray") else np.asarray(m)
        defect = float(np.max(np.abs(arr - arr.conj().T)))
        if defect > 1e-9 * max(1.0, float(np.max(np.abs(arr)))):
            raise ValueError(f"Hamiltonian not Hermitian at t={t_check}: {defect:.3e}")

    def rhs(t, y):
        return (-1j / HBAR_MEV_NS) * (_as_matrix(hamiltonian(t)) @ y)

    sol = solve_ivp(
        rhs,
        (0.0, spec.t_final),
        psi0.amplitudes,
        method="DOP853",
        rtol=spec.rel_tol,
        atol=spec.abs_tol,
        max_step=spec.max_step or np.inf,
        t_eval=spec.times,
        dense_output=False,
    )
    if not sol.success:
        raise NumericalFailure(f"integrator failed: {sol.message}")
    out = []
    for i, t in enumerate(spec.times):
        y = sol.y[:, i]
        drift = abs(float(np.linalg.norm(y)) - 1.0)
        if drift > NORM_DRIFT_ABORT:
            raise NumericalFailure(
                f"norm drift {drift:.3e} at t={t} exceeds {NORM_DRIFT_ABORT}"
            )
        level = logging.DEBUG if drift < NORM_DRIFT_LOG else logging.WARNING
        logger.log(level, "norm drift %.3e at t=%g ns (renormalized)", drift, t)
        out.append(QuantumState.pure(space, y / np.linalg.norm(y)))
    return out


def lindblad_evolve(
    hamiltonian: Callable[[float], object],
    rho0: QuantumState,
    decay: DecayModel,
    spec: EvolutionSpec,
) -> list[QuantumState]:
    """Master equation with photon loss from the shared mode.

    drho/dt = -(i/hbar)[H(t), rho] + gamma/2 (2 a rho a^+ - a^+a rho - rho a^+a)

    Trace, Hermiticity and approximate positivity are asserted at every
    sample time (positivity only below the dense-diagonalization size limit).
    """
    space = rho0.space
    if not space.has_cavity:
        raise ValueError("lindblad_evolve requires a space with a cavity factor")
    rho_init = rho0.to_density().amplitudes
    d = space.dim
    a_op = cavity_ops(space)[0].matrix
    a_dag = a_op.conj().T if isinstance(a_op, np.ndarray) else a_op.getH()
    n_op = a_dag @ a_op
    gamma = decay.gamma

    def rhs(t, y):
        rho = y.reshape(d, d)
        h = _as_matrix(hamiltonian(t))
        drho = (-1j / HBAR_MEV_NS) * (h @ rho - rho @ h)
        if gamma:
            drho = drho + gamma * (
                a_op @ rho @ a_dag - 0.5 * (n_op @ rho + rho @ n_op)
            )
        return drho.ravel()

    sol = solve_ivp(
        rhs,
        (0.0, spec.t_final),
        rho_init.ravel(),
        method="DOP853",
        rtol=spec.rel_tol,
        atol=spec.abs_tol,
        max_step=spec.max_step or np.inf,
        t_eval=spec.times,
    )
    if not sol.success:
        raise NumericalFailure(f"integrator failed: {sol.message}")
    out = []
    for i, t in enumerate(spec.times):
        rho = sol.y[:, i].reshape(d, d)
        tr = complex(np.trace(rho))
        if abs(tr - 1.0) > 1e-7:
            raise NumericalFailure(f"trace drift {abs(tr - 1.0):.3e} at t={t}")
        herm = float(np.max(np.abs(rho - rho.conj().T)))
        if herm > 1e-8:
            raise NumericalFailure(f"hermiticity defect {herm:.3e} at t={t}")
        rho = 0.5 * (rho + rho.conj().T) / tr.real
        if d <= 512:
            lo = float(np.linalg.eigvalsh(rho)[0])
            if lo < -1e-6:
                raise NumericalFailure(f"negative eigenvalue {lo:.3e} at t={t}")
        out.append(QuantumState.density(space, rho))
    return out


# ---------------------------------------------------------------------------
# Exact diagonal propagation (vacuum tier)
# ---------------------------------------------------------------------------


def register_phases(dots: Sequence[DotLike], num_dots: int, t_final: float) -> np.ndarray:
    """Accumulated phase per register bitstring under the vacuum tier.

    phi_s(t) = [ sum_j eta_jj s_j t + sum_{j<k} s_j s_k Phi_jk(t) ] / hbar
    with Phi_jk = 2 eta_jk t when the detunings match exactly and
    (2 eta_jk hbar / delta_jk) sin(delta_jk t / hbar) otherwise.  The cross
    integral is closed-form, so there is no integration error.
    """
    cpl = derive_couplings(dots)
    if len(cpl.lambdas) != num_dots:
        raise ValueError("need one dot parameter set per dot")
    r = np.arange(2**num_dots)
    bits = (r[:, None] >> np.arange(num_dots - 1, -1, -1)[None, :]) & 1
    acc = (bits @ cpl.eta.diagonal()) * t_final
    for j in range(num_dots):
        for k in range(j + 1, num_dots):
            eta = cpl.eta[j, k]
            if eta == 0.0:
                continue
            if cpl.deltas[j] == cpl.deltas[k]:
                phi = 2.0 * eta * t_final
            else:
                djk = cpl.delta_jk[j, k]
                phi = 2.0 * eta * HBAR_MEV_NS / djk * math.sin(
                    djk * t_final / HBAR_MEV_NS
                )
            acc = acc + bits[:, j] * bits[:, k] * phi
    return np.asarray(acc, dtype=float) / HBAR_MEV_NS


def diagonal_propagate(dots, state: QuantumState, t_final: float) -> QuantumState:
    """Propagate a register state under the diagonal vacuum-tier Hamiltonian.

    ``dots`` is a sequence of dot parameters (physical or effective).  A
    constant diagonal matrix (or :class:`LinearOperator`) is also accepted
    and phase-evolved exactly; non-diagonal input is rejected.
    """
    space = state.space
    if space.levels_per_dot != 2 or space.has_cavity:
        raise ValueError("diagonal propagation runs on the two-level register")
    if isinstance(dots, (LinearOperator, np.ndarray)):
        m = dots.toarray() if isinstance(dots, LinearOperator) else np.asarray(dots)
        if np.any(m - np.diag(np.diagonal(m))):
            raise ValueError("non-diagonal Hamiltonian rejected")
        phases = np.real(np.diagonal(m)) * t_final / HBAR_MEV_NS
    else:
        phases = register_phases(dots, space.num_dots, t_final)
    factors = np.exp(-1j * phases)
    if state.kind == "pure":
        return QuantumState.pure(space, state.amplitudes * factors)
    rho = state.amplitudes * factors[:, None] * factors.conj()[None, :]
    return QuantumState.density(space, rho)


# ---------------------------------------------------------------------------
# Blockwise decoherence engine
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DriveSegment:
    """Normalized per-segment drive data consumed by the blockwise engine.

    ``lam[j]`` is the effective drive of dot j during the segment (0 when
    idle), ``delta[j]`` its two-photon detuning and ``stark[j]`` the
    dispersive mode-shift coefficient.  ``base_delta`` is the common
    frequency base when every active detuning is an integer multiple of it,
    enabling one-period propagators; ``None`` forces direct integration.
    """

    duration: float
    lam: tuple[complex, ...]
    delta: tuple[float, ...]
    stark: tuple[float, ...]
    base_delta: float | None = None

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("segment duration must be > 0")
        n = len(self.lam)
        if len(self.delta) != n or len(self.stark) != n:
            raise ValueError("per-dot arrays must share a length")


def infer_base_delta(deltas: Sequence[float]) -> float | None:
    """Smallest positive detuning if all active ones are integer multiples."""
    active = sorted({abs(d) for d in deltas if d != 0})
    if not active:
        return None
    base = active[0]
    for d in active[1:]:
        ratio = d / base
        if abs(ratio - round(ratio)) > 1e-9:
            return None
    return base


def segment_from_dots(dots: Sequence[DotLike], duration: float) -> DriveSegment:
    eff = as_effective(dots)
    deltas = tuple(e.delta for e in eff)
    return DriveSegment(
        duration=duration,
        lam=tuple(e.lam for e in eff),
        delta=deltas,
        stark=tuple(e.stark for e in eff),
        base_delta=infer_base_delta(
            [e.delta for e in eff if e.lam != 0]
        ),
    )


@dataclass(frozen=True)
class BlockwiseAudit:
    """Grouping statistics: how many distinct block equations were solved."""

    num_dots: int
    set_sizes: tuple[int, ...]
    num_side_classes: int
    block_equations_per_segment: tuple[int, ...]


def _batched_matpow(p: np.ndarray, n: int) -> np.ndarray:
    """Power each matrix of a (stack, d, d) array by repeated squaring."""
    result = np.broadcast_to(np.eye(p.shape[-1], dtype=complex), p.shape).copy()
    base = p.copy()
    while n:
        if n & 1:
            result = base @ result
        base = base @ base
        n >>= 1
    return result


def _integrate_props(l0, lp, lm, freqs, duration):
    """Propagators of dP/dt = L(t) P for a stack of linear systems, where
    L_s(t) = l0[s] + sum_f e^{i w_f t} lp[s,f] + e^{-i w_f t} lm[s,f]."""
    nstack, dd, _ = l0.shape
    y0 = np.broadcast_to(np.eye(dd, dtype=complex), (nstack, dd, dd)).copy()

    if len(freqs) == 0:
        # time independent: single dense expm per stack entry
        from scipy.linalg import expm

        return np.stack([expm(l0[s] * duration) for s in range(nstack)])

    w = np.asarray(freqs) / HBAR_MEV_NS

    def rhs(t, y):
        p = y.reshape(nstack, dd, dd)
        ph = np.exp(1j * w * t)
        lt = l0 + np.einsum("f,sfij->sij", ph, lp) + np.einsum(
            "f,sfij->sij", ph.conj(), lm
        )
        return (lt @ p).ravel()

    sol = solve_ivp(
        rhs,
        (0.0, duration),
        y0.ravel(),
        method="DOP853",
        rtol=_PROP_RTOL,
        atol=_PROP_ATOL,
    )
    if not sol.success:
        raise NumericalFailure(f"propagator integration failed: {sol.message}")
    return sol.y[:, -1].reshape(nstack, dd, dd)


def _segment_propagators(
    sigs: list[tuple],
    segment: DriveSegment,
    gamma: float,
    dc: int,
    unitary: bool,
):
    """Propagators for the distinct block equations of one segment.

    ``sigs`` holds pair signatures ((A_u, drives_u), (A_v, drives_v)) for the
    superoperator case or side signatures (A_u, drives_u) when ``unitary``.
    Each drives tuple is ((delta, coeff), ...) with nonzero coefficients.
    """
    a = np.diag(np.sqrt(np.arange(1, dc, dtype=float)), 1).astype(complex)
    ad = a.conj().T
    nop = np.diag(np.arange(dc, dtype=float)).astype(complex)
    eye = np.eye(dc, dtype=complex)

    def stark_sum(stark_pairs) -> float:
        return sum(c * s for s, c in stark_pairs)

    def drive_terms(drive_pairs):
        # ((delta, re, im), count) -> (delta, count * lam)
        return [
            (key[0], c * complex(key[1], key[2])) for key, c in drive_pairs
        ]

    freqs = sorted(
        {
            d
            for sig in sigs
            for side in ((sig,) if unitary else sig)
            for (d, _) in drive_terms(side[1])
        }
    )
    fidx = {d: i for i, d in enumerate(freqs)}
    nf = len(freqs)

    if unitary:
        dd = dc
        l0 = np.zeros((len(sigs), dd, dd), dtype=complex)
        lp = np.zeros((len(sigs), nf, dd, dd), dtype=complex)
        lm = np.zeros_like(lp)
        for s, (stark_pairs, drive_pairs) in enumerate(sigs):
            l0[s] = (1j / HBAR_MEV_NS) * (stark_sum(stark_pairs) * nop)
            for (d, c) in drive_terms(drive_pairs):
                lp[s, fidx[d]] += (1j / HBAR_MEV_NS) * c * a
                lm[s, fidx[d]] += (1j / HBAR_MEV_NS) * np.conj(c) * ad
    else:
        dd = dc * dc

        def left(m):
            return np.kron(m, eye)

        def right(m):
            return np.kron(eye, m.T)

        diss = gamma * (np.kron(a, a.conj()) - 0.5 * (left(nop) + right(nop)))
        l0 = np.zeros((len(sigs), dd, dd), dtype=complex)
        lp = np.zeros((len(sigs), nf, dd, dd), dtype=complex)
        lm = np.zeros_like(lp)
        la, ra = left(a), right(a)
        lad, rad = left(ad), right(ad)
        ln, rn = left(nop), right(nop)
        for s, ((st_u, dr_u), (st_v, dr_v)) in enumerate(sigs):
            l0[s] = (1j / HBAR_MEV_NS) * (
                stark_sum(st_u) * ln - stark_sum(st_v) * rn
            ) + diss
            for (d, c) in drive_terms(dr_u):
                lp[s, fidx[d]] += (1j / HBAR_MEV_NS) * c * la
                lm[s, fidx[d]] += (1j / HBAR_MEV_NS) * np.conj(c) * lad
            for (d, c) in drive_terms(dr_v):
                lp[s, fidx[d]] -= (1j / HBAR_MEV_NS) * c * ra
                lm[s, fidx[d]] -= (1j / HBAR_MEV_NS) * np.conj(c) * rad

    base = segment.base_delta
    dur = segment.duration
    if base is not None and nf > 0:
        period = 2 * math.pi * HBAR_MEV_NS / base
        if dur > period * (1 + 1e-9):
            q = int(math.floor(dur / period + 1e-9))
            rem = dur - q * period
            pc = _integrate_props(l0, lp, lm, np.asarray(freqs), period)
            props = _batched_matpow(pc, q)
            if rem > 1e-9 * period:
                props = _integrate_props(l0, lp, lm, np.asarray(freqs), rem) @ props
            return props
    return _integrate_props(l0, lp, lm, np.asarray(freqs), dur)


def _dot_classes(segments: Sequence[DriveSegment], num_dots: int):
    """Group dots whose drive parameters agree in every segment."""
    keys = []
    for j in range(num_dots):
        keys.append(
            tuple((seg.lam[j], seg.delta[j], seg.stark[j]) for seg in segments)
        )
    uniq: dict[tuple, list[int]] = {}
    for j, key in enumerate(keys):
        uniq.setdefault(key, []).append(j)
    sets = list(uniq.values())
    return sets


def _side_signature(segment: DriveSegment, sets, counts) -> tuple:
    """Canonical (stark, drive) signature of one register-side class.

    Counts stay integers until superoperator assembly so that equivalent
    classes (e.g. 3+4 vs 7 dots of one kind) hash identically; a float sum
    taken in different orders would split them by an ulp.
    """
    starks: dict[float, int] = {}
    drives: dict[tuple[float, complex], int] = {}
    for members, c in zip(sets, counts):
        if c == 0:
            continue
        j = members[0]
        if segment.stark[j] != 0:
            starks[segment.stark[j]] = starks.get(segment.stark[j], 0) + c
        if segment.lam[j] != 0:
            key = (segment.delta[j], segment.lam[j])
            drives[key] = drives.get(key, 0) + c
    return (
        tuple(sorted((s, c) for s, c in starks.items())),
        tuple(sorted(((d, lam.real, lam.imag), c) for (d, lam), c in drives.items())),
    )


class _BlockwiseRun:
    """Shared grouping state for one blockwise evolution problem."""

    def __init__(self, segments: Sequence[DriveSegment], num_dots: int, fock_cutoff: int):
        if fock_cutoff < 1:
            raise ValueError("blockwise engine needs a cavity (fock_cutoff >= 1)")
        self.segments = list(segments)
        self.num_dots = num_dots
        self.dc = fock_cutoff + 1
        self.sets = _dot_classes(self.segments, num_dots)
        self.set_sizes = [len(s) for s in self.sets]
        ranges = [range(sz + 1) for sz in self.set_sizes]
        self.classes = list(itertools.product(*ranges))
        self.ncls = len(self.classes)
        self.mult = np.array(
            [
                math.prod(math.comb(sz, c) for sz, c in zip(self.set_sizes, counts))
                for counts in self.classes
            ],
            dtype=float,
        )
        # side signatures per segment
        self.side_sigs = [
            [_side_signature(seg, self.sets, counts) for counts in self.classes]
            for seg in self.segments
        ]

    def class_of_bitstrings(self) -> np.ndarray:
        """Class index for every register bitstring (dot 0 = MSB)."""
        n = self.num_dots
        r = np.arange(2**n)
        bits = (r[:, None] >> np.arange(n - 1, -1, -1)[None, :]) & 1
        strides = []
        acc = 1
        for sz in reversed(self.set_sizes):
            strides.append(acc)
            acc *= sz + 1
        strides = list(reversed(strides))
        cls = np.zeros(2**n, dtype=np.int64)
        for members, stride in zip(self.sets, strides):
            cls += bits[:, members].sum(axis=1) * stride
        return cls

    def evolve_tables(self, gamma: float) -> tuple[np.ndarray, list[int]]:
        """Final Tr_cav of every class-pair block from a unit |0><0| start."""
        dc = self.dc
        dd = dc * dc
        blocks = np.zeros((self.ncls * self.ncls, dd), dtype=complex)
        blocks[:, 0] = 1.0  # vec index of |0><0|
        eq_counts = []
        for seg_i, seg in enumerate(self.segments):
            sides = self.side_sigs[seg_i]
            side_of: dict[tuple, int] = {}
            side_idx = np.empty(self.ncls, dtype=np.int64)
            side_list: list[tuple] = []
            for u, sig in enumerate(sides):
                i = side_of.get(sig)
                if i is None:
                    i = len(side_list)
                    side_of[sig] = i
                    side_list.append(sig)
                side_idx[u] = i
            nss = len(side_list)
            pair_code = (side_idx[:, None] * nss + side_idx[None, :]).ravel()
            codes, pair_sig_idx = np.unique(pair_code, return_inverse=True)
            sig_list = [(side_list[c // nss], side_list[c % nss]) for c in codes]
            eq_counts.append(len(sig_list))
            props = _segment_propagators(sig_list, seg, gamma, dc, unitary=False)
            for idx in range(len(sig_list)):
                rows = np.nonzero(pair_sig_idx == idx)[0]
                blocks[rows] = blocks[rows] @ props[idx].T
        diag_idx = np.arange(dc) * dc + np.arange(dc)
        traces = blocks[:, diag_idx].sum(axis=1).reshape(self.ncls, self.ncls)
        return traces, eq_counts

    def audit(self, eq_counts: list[int]) -> BlockwiseAudit:
        return BlockwiseAudit(
            num_dots=self.num_dots,
            set_sizes=tuple(self.set_sizes),
            num_side_classes=self.ncls,
            block_equations_per_segment=tuple(eq_counts),
        )


def blockwise_decoherence_evolve(
    dots: Sequence[DotLike],
    decay: DecayModel,
    spec: EvolutionSpec,
    fock_cutoff: int = 4,
    segments: Sequence[DriveSegment] | None = None,
) -> QuantumState:
    """Evolve |+>^N x vacuum under the dispersive tier and trace out the mode.

    Every (s, s') register-bitstring pair indexes an independent cavity block
    of dimension ``(fock_cutoff+1)^2``; blocks whose per-dot drive parameters
    repeat are solved once and fanned out.  Returns the register density
    matrix.  ``segments`` overrides the single full-length segment derived
    from ``dots``.
    """
    if spec.model_tier != "eff1":
        raise ValueError("blockwise engine runs the eff1 tier only")
    num_dots = len(dots) if segments is None else len(segments[0].lam)
    if segments is None:
        segments = [segment_from_dots(dots, spec.t_final)]
    run = _BlockwiseRun(segments, num_dots, fock_cutoff)
    traces, _ = run.evolve_tables(decay.gamma)
    cls = run.class_of_bitstrings()
    rho = traces[cls[:, None], cls[None, :]] * 2.0 ** (-num_dots)
    rho = 0.5 * (rho + rho.conj().T)
    space = HilbertSpace(num_dots, 2, 0)
    return QuantumState.density(space, rho / np.trace(rho).real)


def blockwise_tables(
    segments: Sequence[DriveSegment],
    num_dots: int,
    gamma: float,
    fock_cutoff: int = 4,
) -> tuple[np.ndarray, np.ndarray]:
    """Class-pair trace table and class multiplicities for one decay rate.

    Building block for fidelity sweeps: the decay-free table can be computed
    once and contracted against many decayed tables.
    """
    run = _BlockwiseRun(segments, num_dots, fock_cutoff)
    traces, _ = run.evolve_tables(gamma)
    return traces, run.mult


def fidelity_from_tables(
    t_gamma: np.ndarray, t_zero: np.ndarray, mult: np.ndarray, num_dots: int
) -> float:
    """Contract two class-pair tables into the overlap fidelity Tr(rho rho')."""
    val = complex(
        np.einsum("uv,vu,u,v->", t_gamma, t_zero, mult, mult)
    ) * 4.0 ** (-num_dots)
    if abs(val.imag) > 1e-9:
        raise NumericalFailure(f"fidelity imaginary residue {val.imag:.3e}")
    return float(val.real)


def blockwise_fidelity(
    segments: Sequence[DriveSegment],
    num_dots: int,
    decay: DecayModel,
    fock_cutoff: int = 4,
    return_audit: bool = False,
):
    """Overlap fidelity Tr(rho rho') between the decayed and decay-free runs.

    Both runs start from |+>^N x vacuum, follow ``segments`` and trace out
    the mode; the contraction over register pairs is done classwise without
    materializing the register density matrices.
    """
    run = _BlockwiseRun(segments, num_dots, fock_cutoff)
    t_gamma, eq_counts = run.evolve_tables(decay.gamma)
    t_zero, _ = run.evolve_tables(0.0)
    fid = fidelity_from_tables(t_gamma, t_zero, run.mult, num_dots)
    if return_audit:
        return fid, run.audit(eq_counts)
    return fid


def eff1_vacuum_amplitudes(
    segments: Sequence[DriveSegment],
    bitstrings: Sequence[Sequence[int]],
    fock_cutoff: int = 4,
) -> list[complex]:
    """Vacuum amplitude <s, 0| psi_s(t)> for pure dispersive-tier evolution.

    Because the dispersive tier flips no qubits, a basis state |s> x |0>
    stays |s> x |chi_s(t)>; the returned amplitude carries both the phase and
    the photon-leakage magnitude of each bitstring's cavity wavefunction.
    """
    dc = fock_cutoff + 1
    num_dots = len(segments[0].lam)
    sets = _dot_classes(segments, num_dots)
    out = []
    for bits in bitstrings:
        if len(bits) != num_dots:
            raise ValueError("bitstring length must equal the dot count")
        counts = [sum(bits[j] for j in members) for members in sets]
        chi = np.zeros(dc, dtype=complex)
        chi[0] = 1.0
        for seg in segments:
            sig = _side_signature(seg, sets, counts)
            u = _segment_propagators([sig], seg, 0.0, dc, unitary=True)[0]
            chi = u @ chi
        out.append(complex(chi[0]))
    return out


# ---------------------------------------------------------------------------
# Fock-cutoff convergence
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FockConvergenceReport:
    cutoffs: tuple[int, ...]
    changes: tuple[float, ...]  # successive-state change, one per adjacent pair
    converged: bool
    threshold: float

    def summary(self) -> str:
        rows = [
            f"cutoff {a}->{b}: change {c:.3e}"
            for (a, b), c in zip(zip(self.cutoffs, self.cutoffs[1:]), self.changes)
        ]
        rows.append("converged" if self.converged else "NOT converged")
        return "\n".join(rows)


def fock_convergence_check(
    scenario: Callable[[int], QuantumState],
    cutoffs: Sequence[int],
    threshold: float = 1e-8,
) -> FockConvergenceReport:
    """Run ``scenario`` at each cutoff and compare successive final states.

    ``scenario(cutoff)`` must return states on a common space (typically the
    register after tracing out the mode).  The change metric is 1 - fidelity
    for pure pairs and half the trace-norm distance otherwise; convergence
    means the last change is below ``threshold``.
    """
    cutoffs = tuple(int(c) for c in cutoffs)
    if len(cutoffs) < 2:
        raise ValueError("need at least two cutoffs")
    states = [scenario(c) for c in cutoffs]
    changes = []
    for s1, s2 in zip(states, states[1:]):
        if s1.kind == "pure" and s2.kind == "pure":
            ov = abs(np.vdot(s1.amplitudes, s2.amplitudes)) ** 2
            changes.append(float(1.0 - min(ov, 1.0)))
        else:
            d = s1.to_density().amplitudes - s2.to_density().amplitudes
            ev = np.linalg.eigvalsh(0.5 * (d + d.conj().T))
            changes.append(float(0.5 * np.sum(np.abs(ev))))
    return FockConvergenceReport(
        cutoffs=cutoffs,
        changes=tuple(changes),
        converged=changes[-1] < threshold,
        threshold=threshold,
    )
