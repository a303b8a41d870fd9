"""Physical parameters, derived couplings, Hamiltonian tiers and regime checks.

Unit system
-----------
Energies are in meV, times in ns, decay rates in 1/ns.  Every phase is
computed as ``E * t / HBAR_MEV_NS``; the constant below fixes the package's
energy-time conversion and is used everywhere a phase appears.

Model tiers
-----------
``full``
    The interaction-picture Hamiltonian of the driven three-level dots
    coupled to the shared mode (:func:`build_full_hamiltonian`).
``eff1``
    After adiabatic elimination of the upper level: a dispersive mode shift
    plus a laser-to-mode exchange term, conditioned on each dot being in
    |g> (:func:`build_eff1_hamiltonian`).
``eff``
    With the mode in vacuum the exchange term is eliminated as well, leaving
    a diagonal two-body Stark Hamiltonian on the qubit register
    (:func:`build_eff_hamiltonian`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .operators import (
    HilbertSpace,
    LinearOperator,
    SPARSE_DIM_THRESHOLD,
    cavity_ops,
    dot_operator,
    embed,
)

#: Energy-time phase conversion constant (meV * ns): phases are E*t/HBAR.
HBAR_MEV_NS = 0.6582119569

#: Default drive strength used by schedule builders when none is configured.
DEFAULT_LAMBDA0 = 0.0025  # meV


@dataclass(frozen=True)
class DotParams:
    """Per-dot physical parameters, all energies in meV.

    ``omega_prime`` and ``delta_prime`` default to ``omega`` and ``delta``,
    which is the balanced two-tone drive the scheme assumes.
    """

    g: complex
    omega: complex
    delta: float
    delta_cav: float
    omega_prime: complex | None = None
    delta_prime: float | None = None

    def __post_init__(self):
        if self.omega_prime is None:
            object.__setattr__(self, "omega_prime", self.omega)
        if self.delta_prime is None:
            object.__setattr__(self, "delta_prime", self.delta)
        for name in ("delta", "delta_prime", "delta_cav"):
            if getattr(self, name) == 0:
                raise ValueError(f"{name} must be nonzero (it is divided by)")

    @property
    def delta_small(self) -> float:
        """Two-photon detuning between mode and drive, delta_cav - delta."""
        return self.delta_cav - self.delta

    @property
    def stark_coeff(self) -> float:
        """Dispersive mode-shift coefficient |g|^2 / delta_cav (meV)."""
        return abs(self.g) ** 2 / self.delta_cav


@dataclass(frozen=True)
class EffectiveDot:
    """Effective per-dot drive parameters for the eff1/eff tiers."""

    lam: complex  # meV
    delta: float  # meV
    stark: float = 0.0  # meV


DotLike = Union[DotParams, EffectiveDot]


def lambda_coeff(dot: DotParams) -> complex:
    """Laser-to-mode exchange amplitude (Omega* g / 4)(1/Delta + 1/Delta_cav)."""
    if dot.delta == 0 or dot.delta_cav == 0:
        raise ValueError("zero detuning in lambda_coeff")
    return np.conj(dot.omega) * dot.g / 4.0 * (1.0 / dot.delta + 1.0 / dot.delta_cav)


def as_effective(dots: Sequence[DotLike]) -> tuple[EffectiveDot, ...]:
    """Normalize DotParams to their effective (lam, delta, stark) triple."""
    out = []
    for d in dots:
        if isinstance(d, EffectiveDot):
            out.append(d)
        else:
            out.append(
                EffectiveDot(
                    lam=complex(lambda_coeff(d)),
                    delta=d.delta_small,
                    stark=d.stark_coeff,
                )
            )
    return tuple(out)


def eta_coeff(j: DotLike, k: DotLike) -> float:
    """Cross-Stark rate |lam_j lam_k| / 2 * (1/delta_j + 1/delta_k), meV.

    Symmetric in its arguments; ``eta_coeff(j, j)`` reduces to
    ``|lam_j|^2 / delta_j``.  The two detunings must share a sign: the
    vacuum-elimination step behind this coefficient is one-sided, and a
    mixed-sign pair falls outside it.
    """
    (ej, ek) = as_effective([j, k])
    if ej.lam == 0 or ek.lam == 0:
        return 0.0
    if ej.delta == 0 or ek.delta == 0:
        raise ValueError("zero two-photon detuning in eta_coeff")
    if (ej.delta > 0) != (ek.delta > 0):
        raise ValueError(
            f"mixed-sign detunings {ej.delta} and {ek.delta}: "
            "cross-Stark coefficient undefined for opposite rotation senses"
        )
    return abs(ej.lam * ek.lam) / 2.0 * (1.0 / ej.delta + 1.0 / ek.delta)


@dataclass(frozen=True)
class DerivedCouplings:
    """Couplings derived from a dot list; arrays indexed like the input."""

    lambdas: tuple[complex, ...]
    deltas: tuple[float, ...]
    eta: np.ndarray  # symmetric N x N, meV
    delta_jk: np.ndarray  # antisymmetric N x N, meV
    epsilon: float | None  # common eta_jj when uniform, else None


def derive_couplings(dots: Sequence[DotLike]) -> DerivedCouplings:
    eff = as_effective(dots)
    n = len(eff)
    lambdas = tuple(e.lam for e in eff)
    deltas = tuple(e.delta for e in eff)
    eta = np.zeros((n, n))
    for j in range(n):
        for k in range(j, n):
            eta[j, k] = eta[k, j] = eta_coeff(eff[j], eff[k])
    delta_jk = np.subtract.outer(np.array(deltas), np.array(deltas))
    diag = eta.diagonal()
    epsilon = None
    if n and diag[0] > 0 and np.all(
        np.abs(diag - diag[0]) <= 1e-9 * np.abs(diag[0])
    ):
        epsilon = float(diag[0])
    return DerivedCouplings(lambdas, deltas, eta, delta_jk, epsilon)


# ---------------------------------------------------------------------------
# Hamiltonian builders
# ---------------------------------------------------------------------------


def build_full_hamiltonian(
    dots: Sequence[DotParams], space: HilbertSpace, t: float
) -> LinearOperator:
    """Interaction Hamiltonian of driven three-level dots and the shared mode.

    H(t) = sum_j [ g_j a e^{i delta_cav_j t/hbar}
                   + (omega_j/2) e^{i delta_j t/hbar}
                   + (omega'_j/2) e^{-i delta'_j t/hbar} ] |e>_j<g|  + h.c.
    """
    if space.levels_per_dot != 3 or not space.has_cavity:
        raise ValueError("full tier requires a three-level space with a cavity")
    if len(dots) != space.num_dots:
        raise ValueError("need one DotParams per dot")
    if t < 0:
        raise ValueError("t must be >= 0")
    a, _, _ = cavity_ops(space)
    h = None
    for j, d in enumerate(dots):
        sp = dot_operator(space, j, "raise")
        coeff = (
            d.omega / 2.0 * np.exp(1j * d.delta * t / HBAR_MEV_NS)
            + d.omega_prime / 2.0 * np.exp(-1j * d.delta_prime * t / HBAR_MEV_NS)
        )
        term = (sp.matrix @ a.matrix) * (
            d.g * np.exp(1j * d.delta_cav * t / HBAR_MEV_NS)
        ) + sp.matrix * coeff
        h = term if h is None else h + term
    full = h + (h.getH() if hasattr(h, "getH") else h.conj().T)
    return LinearOperator(space, full, hermitian=True)


def build_eff1_hamiltonian(
    dots: Sequence[DotLike], space: HilbertSpace, t: float
) -> LinearOperator:
    """Dispersive-tier Hamiltonian on qubits x cavity.

    H(t) = - sum_j [ stark_j a^+ a + lam_j a e^{i delta_j t/hbar} + h.c. ] |g>_j<g|

    Contains no qubit flips: it commutes with every |g>_j<g| projector, so the
    register bitstring is conserved and the mode dynamics is block-diagonal.
    """
    if space.levels_per_dot != 2 or not space.has_cavity:
        raise ValueError("eff1 tier requires a two-level space with a cavity")
    eff = as_effective(dots)
    if len(eff) != space.num_dots:
        raise ValueError("need one dot parameter set per dot")
    a, ad, num = cavity_ops(space)
    h = None
    for j, e in enumerate(eff):
        pg = dot_operator(space, j, "proj_g")
        drive = e.lam * np.exp(1j * e.delta * t / HBAR_MEV_NS)
        cav = e.stark * num.matrix + drive * a.matrix + np.conj(drive) * ad.matrix
        term = -(cav @ pg.matrix)
        h = term if h is None else h + term
    return LinearOperator(space, h, hermitian=True)


def _register_bits(num_dots: int) -> np.ndarray:
    """(2^N, N) array of register bits; bit j is 1 when dot j is in |g>."""
    r = np.arange(2**num_dots)
    return (r[:, None] >> np.arange(num_dots - 1, -1, -1)[None, :]) & 1


def eff_diagonal(dots: Sequence[DotLike], num_dots: int, t: float) -> np.ndarray:
    """Diagonal of the vacuum-eliminated Hamiltonian over register bitstrings.

    E_s(t) = sum_j eta_jj s_j + sum_{j<k} 2 eta_jk s_j s_k c_jk(t) with
    c_jk = 1 when delta_j == delta_k and cos(delta_jk t / hbar) otherwise.
    """
    cpl = derive_couplings(dots)
    if len(cpl.lambdas) != num_dots:
        raise ValueError("need one dot parameter set per dot")
    bits = _register_bits(num_dots)
    diag = bits @ cpl.eta.diagonal()
    for j in range(num_dots):
        for k in range(j + 1, num_dots):
            if cpl.eta[j, k] == 0.0:
                continue
            c = 1.0 if cpl.deltas[j] == cpl.deltas[k] else math.cos(
                cpl.delta_jk[j, k] * t / HBAR_MEV_NS
            )
            diag = diag + bits[:, j] * bits[:, k] * (2.0 * cpl.eta[j, k] * c)
    return diag.astype(float)


def build_eff_hamiltonian(
    dots: Sequence[DotLike], space: HilbertSpace, t: float
) -> LinearOperator:
    """Vacuum-tier Hamiltonian: exactly diagonal in the computational basis."""
    if space.levels_per_dot != 2 or space.has_cavity:
        raise ValueError("eff tier requires a two-level space without a cavity")
    diag = eff_diagonal(dots, space.num_dots, t)
    if space.dim > SPARSE_DIM_THRESHOLD:
        import scipy.sparse as sps

        m = sps.diags(diag.astype(complex), format="csr")
    else:
        m = np.diag(diag.astype(complex))
    return LinearOperator(space, m, hermitian=True)


# ---------------------------------------------------------------------------
# Regime validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegimeThresholds:
    """Pass thresholds for :func:`validate_regime`; '>>' made concrete."""

    cond3_min: float = 20.0
    dispersive_min: float = 50.0
    equality_rtol: float = 1e-9


@dataclass(frozen=True)
class RegimeCheck:
    name: str
    passed: bool
    ratio: float
    detail: str


@dataclass(frozen=True)
class RegimeReport:
    checks: tuple[RegimeCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            flag = "pass" if c.passed else "FAIL"
            lines.append(f"[{flag}] {c.name}: ratio={c.ratio:.6g} ({c.detail})")
        return "\n".join(lines)


def validate_regime(
    dots: Sequence[DotParams], thresholds: RegimeThresholds | None = None
) -> RegimeReport:
    """Check the approximation conditions behind the effective tiers.

    Reports every measured ratio whether passing or not; never raises.
    """
    th = thresholds or RegimeThresholds()
    checks = []

    # 1: balanced tone amplitudes |omega| == |omega'|
    devs = [
        abs(abs(d.omega_prime) / abs(d.omega) - 1.0) if d.omega != 0 else 0.0
        for d in dots
    ]
    worst = max(devs) if devs else 0.0
    checks.append(
        RegimeCheck(
            "tone-balance",
            worst <= th.equality_rtol,
            worst,
            "max per-dot | |omega'|/|omega| - 1 |",
        )
    )

    # 2: matched tone detunings delta == delta'
    devs = [abs(d.delta_prime / d.delta - 1.0) for d in dots]
    worst = max(devs) if devs else 0.0
    checks.append(
        RegimeCheck(
            "tone-detuning-match",
            worst <= th.equality_rtol,
            worst,
            "max per-dot |delta'/delta - 1|",
        )
    )

    # 3: large detuning vs both couplings
    ratios = []
    for d in dots:
        vals = [abs(d.delta) / abs(d.g) if d.g != 0 else math.inf]
        vals.append(abs(d.delta) / abs(d.omega) if d.omega != 0 else math.inf)
        ratios.append(min(vals))
    r3 = min(ratios) if ratios else math.inf
    checks.append(
        RegimeCheck(
            "large-detuning",
            r3 >= th.cond3_min,
            r3,
            f"min over dots of min(|delta|/|g|, |delta|/|omega|), threshold {th.cond3_min}",
        )
    )

    # 4: two-photon detunings defined and of one sign
    deltas = [d.delta_small for d in dots]
    nonzero = all(x != 0 for x in deltas)
    same_sign = nonzero and (all(x > 0 for x in deltas) or all(x < 0 for x in deltas))
    spread = (
        min(abs(x) for x in deltas) / max(abs(x) for x in deltas) if nonzero else 0.0
    )
    checks.append(
        RegimeCheck(
            "two-photon-detuning",
            same_sign,
            spread,
            "min|delta_cav-delta| / max|delta_cav-delta|; fails on zero or mixed sign",
        )
    )

    # 5: dispersive hierarchy delta >> |g|^2/delta_cav, |lam|
    ratios = []
    for d in dots:
        floor = max(d.stark_coeff, abs(lambda_coeff(d)))
        ratios.append(abs(d.delta_small) / floor if floor > 0 else math.inf)
    r5 = min(ratios) if ratios else math.inf
    checks.append(
        RegimeCheck(
            "dispersive-hierarchy",
            r5 >= th.dispersive_min,
            r5,
            f"min over dots of |delta_small|/max(|g|^2/delta_cav, |lam|), "
            f"threshold {th.dispersive_min}",
        )
    )
    return RegimeReport(tuple(checks))
