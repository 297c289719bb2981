"""Null-condition forward model and geometry recovery for the three-arm constellation.

Conditions
----------
Cross condition for ordered arm pair (i, j) with sign pattern (s_i, s_j)::

    (k + s_i delta/2) l_i - (k + s_j delta/2) l_j - inst - m pi/2 - y = 0

Pattern (+1, -1) sends the signal beam along arm i and the idler along arm
j; (-1, +1) swaps them.  Each of the pairs (1,2), (2,3), (3,1) carries both
patterns.  Self condition for arm i: ``delta l_i - inst - m pi/2 - y = 0``.
Pump condition: ``(k_L - 2k) * reference_length``.  ``inst`` is the
instrument phase and ``m`` the fringe integer (both from the
:class:`Constellation`), and ``y`` is the measured phase (from the
:class:`NullConditionSet`).

Precision
---------
At 4e7 m the optical phases reach ~1e14 rad and a float64 arm length has a
resolution of ~7e-9 m.  Lengths are therefore carried as
``arm_lengths + length_offsets``, and the large products are evaluated once
in multiprecision around a reference point.  Everything else is computed in
float64 through the exact bilinear expansion in small offsets
``(d_delta, x_1, x_2, x_3)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import mpmath
import numpy as np
from scipy.optimize import lsq_linear

from .errors import AmbiguityError, ConvergenceError, DomainError, SearchBoundError
from .optics import WaveVectorPair

HALF_PI = math.pi / 2
QUARTER_PI = math.pi / 4
TWO_PI = 2 * math.pi
MP_DPS = 45
# relative cost decrease treated as no progress
COST_STALL = 1e-13

PAIRS = ((1, 2), (2, 3), (3, 1))
PATTERNS = ((1, -1), (-1, 1))
CROSS_LAYOUT = tuple((i, j, s) for (i, j) in PAIRS for s in PATTERNS)
N_CROSS = len(CROSS_LAYOUT)
N_CONDITIONS = N_CROSS + 3 + 1
PARAMETERS = ("delta", "l1", "l2", "l3")


def _wrap_2pi(x: float) -> float:
    w = math.fmod(x, TWO_PI)
    if w < 0:
        w += TWO_PI
    return 0.0 if w >= TWO_PI else w


def wrap_quarter(x):
    """Wrap into [-pi/4, pi/4), the interval of one pi/2 fringe."""
    return np.mod(np.asarray(x, dtype=float) + QUARTER_PI, HALF_PI) - QUARTER_PI


@dataclass(frozen=True)
class Constellation:
    """Arm lengths plus the per-condition calibration phases and fringe integers.

    Cross entries follow :data:`CROSS_LAYOUT`: (1,2,+-), (1,2,-+), (2,3,+-),
    (2,3,-+), (3,1,+-), (3,1,-+).  ``length_offsets`` hold sub-resolution
    corrections, so the physical length of arm i is
    ``arm_lengths[i] + length_offsets[i]``.
    """

    arm_lengths: tuple[float, float, float]
    instrument_phases_cross: tuple[float, ...] = (0.0,) * N_CROSS
    instrument_phases_self: tuple[float, float, float] = (0.0, 0.0, 0.0)
    integers_cross: tuple[int, ...] = (0,) * N_CROSS
    integers_self: tuple[int, int, int] = (0, 0, 0)
    length_offsets: tuple[float, float, float] = (0.0, 0.0, 0.0)
    length_band: tuple[float, float] = (1e6, 1e9)

    def __post_init__(self):
        lengths = tuple(float(v) for v in self.arm_lengths)
        if len(lengths) != 3:
            raise DomainError("arm_lengths needs exactly three values")
        lo, hi = self.length_band
        if not 0 < lo < hi:
            raise DomainError(f"invalid length band {self.length_band!r}")
        for i, v in enumerate(lengths):
            if not (math.isfinite(v) and lo <= v <= hi):
                raise DomainError(f"arm length l{i + 1}={v!r} outside [{lo:g}, {hi:g}] m")
        offsets = tuple(float(v) for v in self.length_offsets)
        if len(offsets) != 3 or not all(math.isfinite(v) for v in offsets):
            raise DomainError("length_offsets needs three finite values")
        cross = tuple(_wrap_2pi(float(v)) for v in self.instrument_phases_cross)
        selfp = tuple(_wrap_2pi(float(v)) for v in self.instrument_phases_self)
        if len(cross) != N_CROSS or len(selfp) != 3:
            raise DomainError(f"need {N_CROSS} cross and 3 self instrument phases")
        icross = tuple(int(v) for v in self.integers_cross)
        iself = tuple(int(v) for v in self.integers_self)
        if len(icross) != N_CROSS or len(iself) != 3:
            raise DomainError(f"need {N_CROSS} cross and 3 self integers")
        object.__setattr__(self, "arm_lengths", lengths)
        object.__setattr__(self, "length_offsets", offsets)
        object.__setattr__(self, "instrument_phases_cross", cross)
        object.__setattr__(self, "instrument_phases_self", selfp)
        object.__setattr__(self, "integers_cross", icross)
        object.__setattr__(self, "integers_self", iself)

    @property
    def lengths(self) -> np.ndarray:
        """Physical lengths rounded to float64 (drops sub-resolution detail)."""
        return np.asarray(self.arm_lengths) + np.asarray(self.length_offsets)

    def with_integers(self, cross: Sequence[int], self_: Sequence[int]) -> "Constellation":
        return replace(self, integers_cross=tuple(cross), integers_self=tuple(self_))


@dataclass(frozen=True)
class NullCondition:
    kind: str
    arms: tuple[int, ...] = ()
    signs: tuple[int, int] | None = None
    measured: float = 0.0

    @property
    def key(self):
        if self.kind == "cross":
            return ("cross", self.arms[0], self.arms[1], self.signs)
        if self.kind == "self":
            return ("self", self.arms[0])
        return ("pump",)


def _canonical_keys():
    keys = [("cross", i, j, s) for (i, j, s) in CROSS_LAYOUT]
    keys += [("self", i) for i in (1, 2, 3)]
    keys.append(("pump",))
    return keys


CANONICAL_KEYS = tuple(_canonical_keys())


@dataclass(frozen=True)
class NullConditionSet:
    """The ten scalar null conditions, stored in canonical order.

    ``reference_length`` scales the pump condition into radians; ``None``
    means the mean arm length of whichever constellation it is paired with.
    """

    conditions: tuple[NullCondition, ...]
    pump_wavelength: float
    reference_length: float | None = None

    def __post_init__(self):
        if not self.pump_wavelength > 0:
            raise DomainError("pump_wavelength must be positive")
        if self.reference_length is not None and not self.reference_length > 0:
            raise DomainError("reference_length must be positive")
        by_key = {}
        for c in self.conditions:
            if c.kind not in ("cross", "self", "pump"):
                raise DomainError(f"unknown condition kind {c.kind!r}")
            if c.kind == "cross":
                if c.signs not in PATTERNS:
                    raise DomainError(f"cross sign pattern must be (+1,-1) or (-1,+1), got {c.signs!r}")
                if tuple(c.arms) not in PAIRS:
                    raise DomainError(f"cross arms must be one of {PAIRS}, got {c.arms!r}")
            if c.kind == "self" and (len(c.arms) != 1 or c.arms[0] not in (1, 2, 3)):
                raise DomainError(f"self condition needs a single arm in 1..3, got {c.arms!r}")
            if not math.isfinite(c.measured):
                raise DomainError("measured phases must be finite")
            c = replace(c, arms=tuple(c.arms))
            if c.key in by_key:
                raise DomainError(f"duplicate null condition {c.key!r}")
            by_key[c.key] = c
        if len(self.conditions) != N_CONDITIONS or set(by_key) != set(CANONICAL_KEYS):
            raise DomainError(
                f"need exactly {N_CONDITIONS} conditions: both sign patterns for each of "
                f"{PAIRS}, one self condition per arm and one pump condition"
            )
        object.__setattr__(self, "conditions", tuple(by_key[k] for k in CANONICAL_KEYS))

    @classmethod
    def from_measurements(cls, cross: Sequence[float], self_: Sequence[float],
                          pump_wavelength: float,
                          reference_length: float | None = None) -> "NullConditionSet":
        conds = [NullCondition("cross", (i, j), s, float(y))
                 for (i, j, s), y in zip(CROSS_LAYOUT, cross, strict=True)]
        conds += [NullCondition("self", (i,), None, float(y))
                  for i, y in zip((1, 2, 3), self_, strict=True)]
        conds.append(NullCondition("pump"))
        return cls(tuple(conds), pump_wavelength, reference_length)

    @property
    def measured(self) -> np.ndarray:
        return np.array([c.measured for c in self.conditions])

    def with_measured(self, values: Sequence[float]) -> "NullConditionSet":
        conds = tuple(replace(c, measured=float(v)) for c, v in zip(self.conditions, values, strict=True))
        return replace(self, conditions=conds)


def condition_labels() -> list[str]:
    labels = []
    for (i, j, s) in CROSS_LAYOUT:
        labels.append(f"cross{i}{j}{'+-' if s == (1, -1) else '-+'}")
    labels += ["self1", "self2", "self3", "pump"]
    return labels


def _mp(x: float):
    return mpmath.mpf(float(x))


class _BilinearModel:
    """Residuals as exact bilinear functions of offsets from a reference point."""

    def __init__(self, ncs: NullConditionSet, c: Constellation, k: float, delta0: float):
        self.k = float(k)
        self.delta0 = float(delta0)
        self.ref = np.asarray(c.arm_lengths, dtype=float)
        self.off0 = np.asarray(c.length_offsets, dtype=float)
        ell = self.ref + self.off0
        inst = list(c.instrument_phases_cross) + list(c.instrument_phases_self)
        ints = list(c.integers_cross) + list(c.integers_self)

        # rows of: constant, d/d(d_delta), d/dx1..3, bilinear d_delta*x weights
        n = N_CONDITIONS
        self.base = np.zeros(n)
        self.lin = np.zeros((n, 4))
        self.bil = np.zeros((n, 3))
        # constant terms of the valley coordinates, see valley_residuals
        self.c1 = np.zeros(n)
        self.c2 = np.zeros(n)
        self.ell = ell
        with mpmath.workdps(MP_DPS):
            k_mp, d_mp = _mp(self.k), _mp(self.delta0)
            lengths = [_mp(r) + _mp(o) for r, o in zip(self.ref, self.off0)]
            half_pi = mpmath.pi / 2
            for row, cond in enumerate(ncs.conditions):
                if cond.kind == "pump":
                    ref_len = ncs.reference_length or float(np.mean(ell))
                    k_pump = _mp(TWO_PI / ncs.pump_wavelength)
                    self.base[row] = float((k_pump - 2 * k_mp) * _mp(ref_len))
                    continue
                if cond.kind == "cross":
                    i, j = cond.arms[0] - 1, cond.arms[1] - 1
                    si, sj = cond.signs
                    phi = (k_mp + si * d_mp / 2) * lengths[i] - (k_mp + sj * d_mp / 2) * lengths[j]
                    self.lin[row, 0] = (si * ell[i] - sj * ell[j]) / 2
                    self.lin[row, 1 + i] = self.k + si * self.delta0 / 2
                    self.lin[row, 1 + j] = -(self.k + sj * self.delta0 / 2)
                    self.bil[row, i] = si / 2
                    self.bil[row, j] = -sj / 2
                    self.c1[row] = float(-k_mp * (lengths[i] - lengths[j]))
                    self.c2[row] = float(-d_mp / 2 * (si * lengths[i] - sj * lengths[j]))
                else:
                    i = cond.arms[0] - 1
                    phi = d_mp * lengths[i]
                    self.lin[row, 0] = ell[i]
                    self.lin[row, 1 + i] = self.delta0
                    self.bil[row, i] = 1.0
                    self.c2[row] = float(-d_mp * lengths[i])
                r = phi - _mp(inst[row]) - ints[row] * half_pi - _mp(cond.measured)
                self.base[row] = float(r)

    def residuals(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return self.base + self.lin @ p + p[0] * (self.bil @ p[1:])

    def jacobian(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        J = self.lin.copy()
        J[:, 0] += self.bil @ p[1:]
        J[:, 1:] += p[0] * self.bil
        return J

    # Valley coordinates q = (eps, u1, u2, u3) with delta = delta0 (1 + eps)
    # and x_i = u_i - eps * l_i.  Moving eps alone rescales delta against
    # the common arm length, the direction the self conditions cannot see;
    # written this way the residuals avoid cancelling large terms.

    def to_offsets(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        return np.concatenate([[self.delta0 * q[0]], q[1:] - q[0] * self.ell])

    def valley_residuals(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        eps, u = q[0], q[1:]
        A = self.lin[:, 1:]
        B = self.delta0 * self.bil
        return self.base + A @ u + eps * (B @ u) + self.c1 * eps + self.c2 * eps * eps

    def valley_jacobian(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        eps, u = q[0], q[1:]
        B = self.delta0 * self.bil
        J = np.empty((N_CONDITIONS, 4))
        J[:, 0] = B @ u + self.c1 + 2 * self.c2 * eps
        J[:, 1:] = self.lin[:, 1:] + eps * B
        return J

    def numeric_valley_jacobian(self, q, steps) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        J = np.empty((N_CONDITIONS, 4))
        for col in range(4):
            h = np.zeros(4)
            h[col] = steps[col]
            J[:, col] = (self.valley_residuals(q + h) - self.valley_residuals(q - h)) / (2 * steps[col])
        return J

    def numeric_jacobian(self, p, steps) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        J = np.empty((N_CONDITIONS, 4))
        for col in range(4):
            h = np.zeros(4)
            h[col] = steps[col]
            J[:, col] = (self.residuals(p + h) - self.residuals(p - h)) / (2 * steps[col])
        return J


def forward_residuals(c: Constellation, wv: WaveVectorPair, ncs: NullConditionSet,
                      wrapped: bool = True) -> np.ndarray:
    """Ten residuals in rad, in :data:`CANONICAL_KEYS` order.

    ``wrapped`` folds the nine phase residuals into one pi/2 fringe, which
    makes the fringe integers irrelevant; unwrapped residuals include them.
    The pump residual is never wrapped.
    """
    r = _BilinearModel(ncs, c, wv.k, wv.delta).residuals(np.zeros(4))
    if wrapped:
        r[:-1] = wrap_quarter(r[:-1])
    return r


def _fd_steps(wv: WaveVectorPair, c: Constellation) -> np.ndarray:
    # ~1e-3 rad of phase per step on the strongest coefficient
    lmax = float(np.max(c.arm_lengths))
    return np.array([1e-3 / lmax] + [1e-3 / (wv.k + wv.delta / 2)] * 3)


def null_condition_jacobian(c: Constellation, wv: WaveVectorPair, ncs: NullConditionSet,
                            conditions: Iterable[int] | None = None,
                            method: str = "analytic") -> np.ndarray:
    """Jacobian over (delta, l1, l2, l3) at ``c``, optionally for a subset of rows."""
    model = _BilinearModel(ncs, c, wv.k, wv.delta)
    if method == "analytic":
        J = model.jacobian(np.zeros(4))
    elif method == "numeric":
        J = model.numeric_jacobian(np.zeros(4), _fd_steps(wv, c))
    else:
        raise DomainError(f"unknown jacobian method {method!r}")
    if conditions is not None:
        J = J[list(conditions)]
    return J


def jacobian_rank(J: np.ndarray, rtol: float = 1e-12) -> int:
    """Numerical rank after normalising each column to unit length."""
    J = np.asarray(J, dtype=float)
    if J.size == 0:
        return 0
    norms = np.linalg.norm(J, axis=0)
    norms[norms == 0] = 1.0
    s = np.linalg.svd(J / norms, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def self_fringe(wv: WaveVectorPair) -> float:
    """Arm-length change that advances a self condition by one pi/2 fringe."""
    if wv.delta == 0:
        return math.inf
    return HALF_PI / wv.delta


@dataclass(frozen=True)
class SolverOptions:
    max_iter: int = 200
    step_tol: float = 1e-14
    residual_tol: float = 1e-12
    jacobian: str = "numeric"
    phase_sigma: float | None = None
    poor_fit_rms: float = 1e-2

    def __post_init__(self):
        if self.max_iter < 1:
            raise DomainError("max_iter must be >= 1")
        if self.jacobian not in ("numeric", "analytic"):
            raise DomainError("jacobian must be 'numeric' or 'analytic'")
        if self.phase_sigma is not None and not self.phase_sigma > 0:
            raise DomainError("phase_sigma must be positive")


@dataclass(frozen=True)
class GeometrySolution:
    """Recovered wavenumbers, arm lengths and a linearised covariance.

    ``covariance_estimate`` is ordered (k, delta, l1, l2, l3); its ``k``
    row and column are zero because ``k`` is fixed by the pump wavelength.
    Lengths are split into float reference values and small offsets, like
    :class:`Constellation`.
    """

    k: float
    delta_reference: float
    delta_offset: float
    reference_lengths: tuple[float, float, float]
    length_offsets: tuple[float, float, float]
    residuals: np.ndarray = field(repr=False)
    residual_norm: float
    iterations: int
    covariance_estimate: np.ndarray = field(repr=False)
    converged: bool = True
    poor_fit: bool = False
    termination: str = ""

    @property
    def delta(self) -> float:
        return self.delta_reference + self.delta_offset

    @property
    def arm_lengths(self) -> np.ndarray:
        return np.asarray(self.reference_lengths) + np.asarray(self.length_offsets)

    def length_errors(self, truth: Constellation) -> np.ndarray:
        """Per-arm ``recovered - truth`` computed without float64 length rounding."""
        ref = np.asarray(self.reference_lengths) - np.asarray(truth.arm_lengths)
        return ref + (np.asarray(self.length_offsets) - np.asarray(truth.length_offsets))

    def as_constellation(self, calibration: Constellation) -> Constellation:
        return replace(calibration, arm_lengths=self.reference_lengths,
                       length_offsets=self.length_offsets)

    def as_row(self) -> dict[str, float]:
        row = {"k": self.k, "delta": self.delta}
        for i, (ref, off) in enumerate(zip(self.reference_lengths, self.length_offsets), 1):
            row[f"l{i}"] = ref + off
        for i, off in enumerate(self.length_offsets, 1):
            row[f"l{i}_offset"] = off
        row["delta_offset"] = self.delta_offset
        row["residual_norm"] = self.residual_norm
        row["iterations"] = self.iterations
        row["converged"] = int(self.converged)
        row["poor_fit"] = int(self.poor_fit)
        names = ("k", "delta", "l1", "l2", "l3")
        for a, na in enumerate(names):
            for b, nb in enumerate(names):
                row[f"cov_{na}_{nb}"] = float(self.covariance_estimate[a, b])
        return row


def _covariance(J: np.ndarray, sigma2: float) -> np.ndarray:
    norms = np.linalg.norm(J, axis=0)
    norms[norms == 0] = 1.0
    U, s, Vt = np.linalg.svd(J / norms, full_matrices=False)
    keep = s > s[0] * 1e-15 if s.size and s[0] > 0 else np.zeros_like(s, dtype=bool)
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep] ** 2
    C = (Vt.T * inv) @ Vt
    C = C / np.outer(norms, norms) * sigma2
    full = np.zeros((5, 5))
    full[1:, 1:] = C
    return full


def solve_geometry(ncs: NullConditionSet, guess: Constellation, guess_wv: WaveVectorPair,
                   opts: SolverOptions | None = None) -> GeometrySolution:
    """Damped least squares for (delta, l1, l2, l3) with k fixed by the pump.

    Fringe integers and instrument phases come from ``guess``.  Steps start
    undamped (Gauss-Newton) and are damped Marquardt-style only when a step
    fails to lower the residual norm, so the accepted norm never increases.
    Step size is measured in fringe units: each parameter change is scaled
    by its column norm and divided by pi/2.  Iterations run in the valley
    coordinates of the residual model, which keeps the poorly determined
    delta-versus-common-length direction numerically resolvable.
    """
    opts = opts or SolverOptions()
    k = math.pi / ncs.pump_wavelength
    if not guess_wv.delta > 0:
        raise DomainError("solve_geometry needs a positive delta guess (non-degenerate triplet)")
    if not k > guess_wv.delta / 2:
        raise DomainError("delta guess is incompatible with the pump wavenumber")
    model = _BilinearModel(ncs, guess, k, guess_wv.delta)
    self_rows = slice(N_CROSS, N_CROSS + 3)
    start = model.residuals(np.zeros(4))
    if np.any(np.abs(start[self_rows]) >= QUARTER_PI):
        raise AmbiguityError(
            "initial guess is at least half a fringe from the self conditions "
            f"(residuals {start[self_rows].tolist()}); resolve the fringe integers first"
        )

    steps = _fd_steps(WaveVectorPair(k, guess_wv.delta), guess)
    steps[0] /= guess_wv.delta

    def jac(q):
        if opts.jacobian == "analytic":
            return model.valley_jacobian(q)
        return model.numeric_valley_jacobian(q, steps)

    p = np.zeros(4)
    r = start
    cost = float(r @ r)
    lam = 0.0
    iterations = 0
    converged = False
    termination = "max_iter"
    while iterations < opts.max_iter:
        if math.sqrt(cost) < opts.residual_tol:
            converged, termination = True, "residual"
            break
        J = jac(p)
        norms = np.linalg.norm(J, axis=0)
        norms[norms == 0] = 1.0
        A = J / norms
        iterations += 1
        improved = False
        while True:
            if lam > 0:
                A_aug = np.vstack([A, math.sqrt(lam) * np.eye(4)])
                b_aug = np.concatenate([-r, np.zeros(4)])
            else:
                A_aug, b_aug = A, -r
            scaled, *_ = np.linalg.lstsq(A_aug, b_aug, rcond=None)
            dp = scaled / norms
            trial = p + dp
            r_trial = model.valley_residuals(trial)
            c_trial = float(r_trial @ r_trial)
            if c_trial <= cost:
                improved = True
                break
            lam = 1e-6 if lam == 0 else lam * 10
            if lam > 1e12:
                break
        if not improved:
            # no descent left: stationary to working precision
            converged, termination = True, "stationary"
            break
        step_fringes = float(np.max(np.abs(scaled))) / HALF_PI
        reduction = cost - c_trial
        p, r, cost = trial, r_trial, c_trial
        lam = lam / 10 if lam > 1e-9 else 0.0
        if step_fringes < opts.step_tol:
            converged, termination = True, "step"
            break
        if reduction <= COST_STALL * cost:
            converged, termination = True, "cost"
            break
    else:
        if math.sqrt(cost) < opts.residual_tol:
            converged, termination = True, "residual"

    q, p = p, model.to_offsets(p)
    J = model.jacobian(p)
    phase_rows = N_CONDITIONS - 1
    dof = phase_rows - 4
    if opts.phase_sigma is not None:
        sigma2 = opts.phase_sigma**2
    else:
        sigma2 = float(r[:phase_rows] @ r[:phase_rows]) / dof
    rms = math.sqrt(float(r[:phase_rows] @ r[:phase_rows]) / phase_rows)
    sol = GeometrySolution(
        k=k,
        delta_reference=float(guess_wv.delta),
        delta_offset=float(p[0]),
        reference_lengths=tuple(float(v) for v in model.ref),
        length_offsets=tuple(float(v) for v in model.off0 + p[1:]),
        residuals=r.copy(),
        residual_norm=math.sqrt(cost),
        iterations=iterations,
        covariance_estimate=_covariance(J, sigma2),
        converged=converged,
        poor_fit=rms > opts.poor_fit_rms,
        termination=termination,
    )
    if not converged:
        raise ConvergenceError(f"no convergence after {iterations} iterations", best=sol)
    return sol


def _mp_phases(c: Constellation, k: float, delta: float) -> list:
    """Unwrapped optical phase of each non-pump condition (multiprecision)."""
    out = []
    with mpmath.workdps(MP_DPS):
        k_mp, d_mp = _mp(k), _mp(delta)
        lengths = [_mp(r) + _mp(o) for r, o in zip(c.arm_lengths, c.length_offsets)]
        for (i, j, (si, sj)) in CROSS_LAYOUT:
            out.append((k_mp + si * d_mp / 2) * lengths[i - 1] - (k_mp + sj * d_mp / 2) * lengths[j - 1])
        for i in range(3):
            out.append(d_mp * lengths[i])
    return out


def synthesize(arm_lengths: Sequence[float], wv: WaveVectorPair, pump_wavelength: float,
               rng: np.random.Generator | None = None, phase_noise: float = 0.0,
               length_offsets: Sequence[float] = (0.0, 0.0, 0.0)):
    """A consistent (truth constellation, null-condition set) pair.

    Instrument phases are spread over [0, 2pi) by drawing the fringe integer
    from the four candidates that put the phase there.  Measured phases are
    zero, plus Gaussian noise of ``phase_noise`` rad when requested.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    base = Constellation(tuple(arm_lengths), length_offsets=tuple(length_offsets))
    phases = _mp_phases(base, wv.k, wv.delta)
    inst, ints = [], []
    with mpmath.workdps(MP_DPS):
        half_pi = mpmath.pi / 2
        for phi in phases:
            m = int(mpmath.floor(phi / half_pi)) - int(rng.integers(0, 4))
            inst.append(float(phi - m * half_pi))
            ints.append(m)
    truth = replace(base,
                    instrument_phases_cross=tuple(inst[:N_CROSS]),
                    instrument_phases_self=tuple(inst[N_CROSS:]),
                    integers_cross=tuple(ints[:N_CROSS]),
                    integers_self=tuple(ints[N_CROSS:]))
    noise = rng.normal(0.0, phase_noise, size=N_CONDITIONS - 1) if phase_noise > 0 else np.zeros(N_CONDITIONS - 1)
    ncs = NullConditionSet.from_measurements(noise[:N_CROSS], noise[N_CROSS:], pump_wavelength)
    return truth, ncs


@dataclass(frozen=True)
class IntegerResolution:
    integers_cross: tuple[int, ...]
    integers_self: tuple[int, int, int]
    length_offsets: tuple[float, float, float]
    cost: float


def resolve_integers(ncs: NullConditionSet, coarse: Constellation, uncertainty,
                     wv: WaveVectorPair, max_candidates: int = 1_000_000,
                     separation: float = math.pi / 16) -> IntegerResolution:
    """Fringe integers from coarse lengths known to within ``uncertainty`` (m).

    Self conditions are resolved first: each arm's candidates are ranked by
    the smallest residual reachable inside its box, ties ordered by
    ``(|m|, m)``.  A runner-up within ``separation`` rad of the best is an
    ambiguity and raises.  Cross integers then follow by rounding at the
    self-resolved lengths, and a box-constrained linear fit reports the
    total squared residual.
    """
    u = np.broadcast_to(np.asarray(uncertainty, dtype=float), (3,)).copy()
    if np.any(u < 0) or not np.all(np.isfinite(u)):
        raise DomainError("uncertainty must be finite and non-negative")
    model = _BilinearModel(ncs, coarse, wv.k, wv.delta)
    phase_rows = N_CONDITIONS - 1
    # Residual range over the box, in fringes, bounds the candidate count.
    spread = np.abs(model.lin[:phase_rows, 1:]) @ u
    counts = np.floor(2 * spread / HALF_PI) + 1
    if np.any(counts > max_candidates):
        worst = int(np.argmax(counts))
        raise SearchBoundError(
            f"condition {condition_labels()[worst]} spans {int(counts[worst])} fringe candidates "
            f"(limit {max_candidates}); tighten the coarse ranging first"
        )

    ints_cross = list(coarse.integers_cross)
    ints_self = list(coarse.integers_self)
    x = np.zeros(3)
    for arm in range(3):
        row = N_CROSS + arm
        r0 = model.base[row]  # residual at the coarse length with the coarse integer
        if wv.delta == 0:
            shift = int(np.round(r0 / HALF_PI))
            ints_self[arm] += shift
            continue
        n = int(counts[row]) + 2
        # centred on direct rounding, so a zero-width box reduces to it
        shifts = int(np.round(r0 / HALF_PI)) + np.arange(-n, n + 1)
        r_at_center = r0 - shifts * HALF_PI
        # offset that zeroes the residual, and what remains if clipped to the box
        zero_at = -r_at_center / wv.delta
        clipped = np.clip(zero_at, -u[arm], u[arm])
        best_res = np.abs(r_at_center + wv.delta * clipped)
        m_abs = np.abs(np.asarray([ints_self[arm] + int(s) for s in shifts], dtype=float))
        order = np.lexsort((shifts, m_abs, best_res))
        if len(order) > 1 and best_res[order[1]] - best_res[order[0]] < separation:
            raise AmbiguityError(
                f"arm {arm + 1}: fringe candidates m={ints_self[arm] + int(shifts[order[0]])} and "
                f"m={ints_self[arm] + int(shifts[order[1]])} both fit inside the "
                f"+-{u[arm]:.3g} m box"
            )
        s = int(shifts[order[0]])
        ints_self[arm] += s
        x[arm] = clipped[order[0]]

    # cross integers by rounding at the self-resolved lengths (delta fixed)
    p = np.concatenate([[0.0], x])
    r = model.residuals(p)
    for row in range(N_CROSS):
        ints_cross[row] += int(np.round(r[row] / HALF_PI))

    resolved = coarse.with_integers(ints_cross, ints_self)
    model = _BilinearModel(ncs, resolved, wv.k, wv.delta)
    A = model.lin[:phase_rows, 1:]
    b = -model.base[:phase_rows]
    best = np.zeros(3)
    free = u > 0
    if np.any(free):
        best[free] = lsq_linear(A[:, free], b, bounds=(-u[free], u[free]), method="bvls").x
    res = model.base[:phase_rows] + A @ best
    return IntegerResolution(tuple(ints_cross), tuple(ints_self),
                             tuple(float(v) + o for v, o in zip(best, coarse.length_offsets)),
                             float(res @ res))


def inject_gw(c: Constellation, strain_amplitude: float, frequency: float,
              antenna_pattern: Sequence[float], t: float) -> Constellation:
    """Copy of ``c`` with arm i stretched by ``1 + h w_i sin(2 pi f t)``.

    The stretch lands in ``length_offsets`` so that strains far below the
    float64 length resolution survive.
    """
    if not abs(strain_amplitude) < 1e-6:
        raise DomainError("strain amplitude must satisfy |h| < 1e-6")
    w = [float(v) for v in antenna_pattern]
    if len(w) != 3 or any(abs(v) > 1 for v in w):
        raise DomainError("antenna_pattern needs three weights in [-1, 1]")
    s = math.sin(TWO_PI * frequency * t)
    offsets = tuple(off + (ref + off) * strain_amplitude * wi * s
                    for ref, off, wi in zip(c.arm_lengths, c.length_offsets, w))
    return replace(c, length_offsets=offsets)
