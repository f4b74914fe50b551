"""Covariance-weighted likelihood, profile scans and threshold significances.

The likelihood is the Gaussian quadratic form

    -2 log L(x) = (o - x)^T U^+ (o - x),   x in [-1, 1]^15

over the canonical 15-vector of coefficients. Profiles hold an observable
fixed with an exterior quadratic penalty whose weight is escalated
geometrically until the constraint is met.
"""

from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Literal, Sequence

import numpy as np
from scipy.optimize import least_squares, lsq_linear

from .errors import (
    ConvergenceError,
    GridTooNarrowError,
    InfeasibleTargetError,
    ValidationError,
)
from .fano import PAULI_BASIS, BinKinematics, SpinBasis, density_from_vector
from .observables import (
    TWO_PI,
    DiscordOptions,
    QuadratureSpec,
    chsh_marker,
    discord_at_direction,
    discord_at_direction_grad,
    discord_relaxed,
    entanglement_from_matrix,
    magic_from_vector,
    steering_marker,
)

N_COEFF = 15
NULL_EIG_RTOL = 1e-12
BOX = (-1.0, 1.0)


@dataclass(frozen=True)
class MeasurementRecord:
    """Observed coefficients of one bin with their 15x15 covariance."""

    observed: np.ndarray
    covariance: np.ndarray
    bin: BinKinematics
    basis: SpinBasis = field(default_factory=SpinBasis.helicity)
    label: str = ""

    def __post_init__(self):
        o = np.array(self.observed, dtype=float)
        U = np.array(self.covariance, dtype=float)
        if o.shape != (N_COEFF,):
            raise ValidationError(f"observed must have 15 entries, got shape {o.shape}")
        if U.shape != (N_COEFF, N_COEFF):
            raise ValidationError(f"covariance must be 15x15, got shape {U.shape}")
        if not (np.all(np.isfinite(o)) and np.all(np.isfinite(U))):
            raise ValidationError("observed values and covariance must be finite")
        if np.any(np.abs(o) > 1.5):
            raise ValidationError("observed entries must lie in [-1.5, 1.5]")
        scale = max(np.max(np.abs(U)), np.finfo(float).tiny)
        if np.max(np.abs(U - U.T)) > 1e-10 * scale:
            raise ValidationError("covariance is not symmetric")
        lam = np.linalg.eigvalsh(0.5 * (U + U.T))
        if lam[-1] <= 0.0:
            raise ValidationError(f"covariance has no positive eigenvalue (largest {lam[-1]:.3g})")
        if lam[0] < -1e-10 * lam[-1]:
            raise ValidationError(
                f"covariance eigenvalue {lam[0]:.3g} is negative beyond tolerance "
                f"(largest eigenvalue {lam[-1]:.3g})"
            )
        o.setflags(write=False)
        U.setflags(write=False)
        object.__setattr__(self, "observed", o)
        object.__setattr__(self, "covariance", U)

    @cached_property
    def whitening(self) -> np.ndarray:
        """Matrix L with chi2 = |L (x - o)|^2, null directions dropped."""
        lam, vec = np.linalg.eigh(0.5 * (self.covariance + self.covariance.T))
        keep = lam > NULL_EIG_RTOL * lam[-1]
        if not np.any(keep):
            raise ValidationError(f"covariance not invertible: largest eigenvalue {lam[-1]:.3g}")
        L = (vec[:, keep] / np.sqrt(lam[keep])).T
        L.setflags(write=False)
        return L


def chi2(x, record: MeasurementRecord) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (N_COEFF,):
        raise ValidationError(f"x must have 15 entries, got shape {x.shape}")
    if np.any(np.abs(x) > 1.0 + 1e-12):
        raise ValidationError("x must lie in the box [-1, 1]^15")
    r = record.whitening @ (x - record.observed)
    return float(r @ r)


# -- observables on the 15-vector --------------------------------------------


@dataclass(frozen=True)
class Observable:
    """A named scalar function of the 15-vector with its scan metadata.

    ``domain`` is the attainable range used to clip scan grids; ``threshold``
    the null-hypothesis value for significances. One-sided observables only
    count exceedances above the threshold.
    """

    name: str
    func: Callable[[np.ndarray], float]
    domain: tuple[float, float] = (-math.inf, math.inf)
    threshold: float | None = None
    one_sided: bool = True
    needs_physical: bool = False
    gradient: Callable[[np.ndarray], np.ndarray] | None = None
    # Optional lower-envelope structure g = min_u F(x, u); see _DiscordFunction.
    cuts: object | None = None

    def __call__(self, x: np.ndarray) -> float:
        return float(self.func(x))

    def grad(self, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
        if self.gradient is not None:
            return np.asarray(self.gradient(x), dtype=float)
        g = np.empty(N_COEFF)
        for k in range(N_COEFF):
            xp = x.copy()
            xm = x.copy()
            xp[k] += h
            xm[k] -= h
            g[k] = (self.func(xp) - self.func(xm)) / (2.0 * h)
        return g


def as_observable(obs) -> Observable:
    if isinstance(obs, Observable):
        return obs
    if isinstance(obs, str):
        return standard_observable(obs)
    if callable(obs):
        return Observable(getattr(obs, "__name__", "observable"), obs)
    raise TypeError(f"cannot interpret {obs!r} as an observable")


class _DiscordFunction:
    """Discord of the nearest physical state, with envelope-theorem gradient.

    The optimal measurement direction of the last evaluation is cached per
    thread; the gradient holds it fixed, which is exact to first order.

    Discord is a minimum over directions, so at crossings of two branches it
    has a concave kink that traps local solvers when the constraint pushes
    it upward. Recently optimal directions are therefore kept as cuts:
    F(x, u) >= g(x) for any fixed u, so ``F(x, u_k) >= target`` holds on the
    whole constraint set and exposes every nearby branch to the solver.
    """

    max_cuts = 8

    def __init__(self, sides: Sequence[str], signs: Sequence[float], opts: DiscordOptions):
        self.sides = tuple(sides)
        self.signs = tuple(signs)
        self.opts = opts
        self._local = threading.local()

    def _evaluate(self, x):
        dirs = []
        total = 0.0
        for side, sign in zip(self.sides, self.signs):
            value, u = discord_relaxed(x, side, self.opts)
            total += sign * value
            dirs.append(u)
        self._local.last = (np.array(x, copy=True), dirs)
        if len(self.sides) == 1:
            self._remember(dirs[0])
        return total, dirs

    def _remember(self, u):
        seen = getattr(self._local, "seen", None)
        if seen is None:
            seen = self._local.seen = []
        seen[:] = [v for v in seen if abs(float(v @ u)) < 1.0 - 1e-4]
        seen.append(np.array(u, copy=True))
        del seen[: -self.max_cuts]

    def __call__(self, x):
        return self._evaluate(x)[0]

    @staticmethod
    def _bracket_grad(x, u, side):
        return discord_at_direction_grad(np.asarray(x, dtype=float), u, side)

    def gradient(self, x):
        last = getattr(self._local, "last", None)
        if last is not None and np.array_equal(last[0], x):
            dirs = last[1]
        else:
            dirs = self._evaluate(x)[1]
        g = np.zeros(N_COEFF)
        for side, sign, u in zip(self.sides, self.signs, dirs):
            g += sign * self._bracket_grad(x, u, side)
        return g

    # cut interface, single-side only
    def directions(self) -> list[np.ndarray]:
        if len(self.sides) != 1:
            return []
        return list(getattr(self._local, "seen", None) or [])

    def bracket(self, x, u) -> float:
        return discord_at_direction(x, u, self.sides[0])

    def bracket_grad(self, x, u) -> np.ndarray:
        return self._bracket_grad(x, u, self.sides[0])


def _steering(quad):
    return lambda x: steering_marker(np.asarray(x[6:]).reshape(3, 3), quad)


def _chsh(x):
    return chsh_marker(np.asarray(x[6:]).reshape(3, 3))


def _delta_e(x):
    return entanglement_from_matrix(density_from_vector(np.asarray(x)))[0]


STANDARD_OBSERVABLES = (
    "discord_top",
    "discord_antitop",
    "discord_difference",
    "entanglement",
    "steering",
    "chsh",
    "magic",
)


def standard_observable(
    name: str,
    discord_opts: DiscordOptions | None = None,
    quad: QuadratureSpec | None = None,
) -> Observable:
    """Observable with the domain and null threshold used in reports."""
    dopts = discord_opts or DiscordOptions()
    if name in ("discord_top", "discord_antitop"):
        f = _DiscordFunction([name.split("_")[1]], [1.0], dopts)
        return Observable(name, f, (0.0, math.inf), 0.0, True, True, f.gradient, f)
    if name == "discord_difference":
        f = _DiscordFunction(["top", "antitop"], [1.0, -1.0], dopts)
        return Observable(name, f, (-1.0, 1.0), 0.0, False, True, f.gradient)
    if name == "entanglement":
        return Observable(name, _delta_e, (0.0, 3.0), 1.0)
    if name == "steering":
        return Observable(name, _steering(quad), (0.0, 4.0 * math.pi), TWO_PI)
    if name == "chsh":
        return Observable(name, _chsh, (0.0, 2.0), 1.0)
    if name == "magic":
        return Observable(name, magic_from_vector, (0.0, math.inf), 0.0)
    raise ValidationError(
        f"unknown observable {name!r}; expected one of {', '.join(STANDARD_OBSERVABLES)}"
    )


# -- constrained minimization ------------------------------------------------


@dataclass(frozen=True)
class PenaltySchedule:
    weights: tuple[float, ...] = tuple(10.0**k for k in range(2, 11))
    residual_tol: float = 1e-6
    physical_tol: float = 1e-7
    max_nfev: int = 100


def _min_eig(x):
    lam, vec = np.linalg.eigh(density_from_vector(x))
    return lam[0], vec[:, 0]


def _min_eig_grad(x) -> tuple[float, np.ndarray]:
    lam, v = _min_eig(x)
    # d lambda / d x_k = <v| drho/dx_k |v>, drho/dx_k = B_k / 4
    return lam, 0.25 * np.einsum("i,kij,j->k", v.conj(), PAULI_BASIS, v).real


def _spectrum_grad(x) -> tuple[np.ndarray, np.ndarray]:
    """All eigenvalues of rho(x) and their gradients, one row per eigenvalue."""
    lam, vec = np.linalg.eigh(density_from_vector(x))
    return lam, 0.25 * np.einsum("in,kij,jn->nk", vec.conj(), PAULI_BASIS, vec).real


def _physical_violation(x) -> float:
    return max(-_min_eig(x)[0], 0.0)


def _uses_sqrt(obs: Observable, target: float) -> bool:
    # For observables bounded below by zero the square root keeps the
    # constraint gradient finite at the zero set, where g itself is quadratic.
    return obs.domain[0] == 0.0 and target >= 0.0


def _transform(obs: Observable, target: float, g: float) -> float:
    return math.sqrt(max(g, 0.0)) if _uses_sqrt(obs, target) else g


_FLAT = 1e-12
_RANK_FLOOR = 1e-9
_MIX = 1e-3
_ESCAPE_STAGE = 2


def _constraint(obs: Observable, target: float, x) -> tuple[float, Callable[[], np.ndarray]]:
    g = obs(x)
    if not _uses_sqrt(obs, target):
        return g - target, lambda: obs.grad(x)
    r = math.sqrt(max(g, 0.0))
    if g < _FLAT:
        # the gradient of g is pure round-off here; sqrt(g) has no slope
        return r - math.sqrt(target), lambda: np.zeros(N_COEFF)
    return r - math.sqrt(target), lambda: obs.grad(x) / (2.0 * r)


def _leave_zero_set(obs: Observable, target: float, x: np.ndarray, h: float = 1e-2) -> np.ndarray:
    """Starting point off a flat spot of the constraint.

    Where an observable sits at a minimum (zero gradient, e.g. discord on a
    classical-quantum state) a local solver has no direction to follow.
    Probe the coordinate directions, then step along the steepest one,
    scaling the step quadratically to land near ``target``.
    """
    g0 = obs(x)
    best, best_gain = None, 0.0
    for k in range(N_COEFF):
        for sign in (1.0, -1.0):
            d = np.zeros(N_COEFF)
            d[k] = sign
            y = np.clip(x + h * d, *BOX)
            gain = obs(y) - g0
            if gain > best_gain:
                best, best_gain = d, gain
    if best is None:
        return x
    step = h * math.sqrt(max(target - g0, 0.0) / best_gain)
    return np.clip(x + min(step, 1.0) * best, *BOX)


@dataclass(frozen=True)
class _Multipliers:
    stage: int
    mu: float
    nu: np.ndarray
    factored: bool = False


def _penalty_solve(
    record: MeasurementRecord,
    x0: np.ndarray,
    obs: Observable | None,
    target: float | None,
    physical: bool,
    schedule: PenaltySchedule,
    warm: _Multipliers | None = None,
) -> tuple[np.ndarray, _Multipliers]:
    """Exterior penalty with multiplier shifts (augmented Lagrangian).

    Each stage minimizes chi2 + w (c + mu/w)^2 + w sum_k max(0, nu_k/w - lambda_k)^2,
    then updates the shifts mu, nu; the weight w escalates geometrically.
    Penalizing every eigenvalue rather than only the smallest keeps the
    physical term smooth where several eigenvalues cross zero together, as
    they do at pure states.
    ``warm`` carries the multipliers and weight stage of a neighbouring
    solve, so a warm-started grid point skips the low-weight stages that
    would pull it back toward the data.
    """
    L = record.whitening
    o = record.observed
    x = np.clip(np.asarray(x0, dtype=float), *BOX)
    if warm is None:
        first, mu, nu = 0, 0.0, np.zeros(4)
    else:
        first, mu, nu = max(warm.stage - 2, 0), warm.mu, warm.nu.copy()
    diagnostics = {}
    cuts = obs.cuts if obs is not None else None
    if obs is not None and obs.needs_physical and _min_eig(x)[0] < _RANK_FLOOR:
        # entropy gradients diverge on rank-deficient states; start just inside
        x = (1.0 - _MIX) * x
    if obs is not None and _uses_sqrt(obs, target) and target > _FLAT and obs(x) < _FLAT:
        # low weights would slide straight back to the apex of the sqrt cone
        x = _leave_zero_set(obs, target, x)
        first = max(first, _ESCAPE_STAGE)
    for stage, w in enumerate(schedule.weights[first:], start=first):
        sw = math.sqrt(w)
        dirs = cuts.directions() if cuts is not None else []
        level = _transform(obs, target, target) if dirs else 0.0

        def cut_values(x):
            return np.array([_transform(obs, target, cuts.bracket(x, u)) for u in dirs])

        def fun(x):
            parts = [L @ (x - o)]
            if obs is not None:
                parts.append([sw * (_constraint(obs, target, x)[0] + mu / w)])
            if dirs:
                parts.append(sw * np.minimum(cut_values(x) - level, 0.0))
            if physical:
                lam = np.linalg.eigvalsh(density_from_vector(x))
                parts.append(sw * np.maximum(nu / w - lam, 0.0))
            return np.concatenate(parts)

        def jac(x):
            rows = [L]
            if obs is not None:
                rows.append(sw * _constraint(obs, target, x)[1]()[None, :])
            if dirs:
                for u, f in zip(dirs, cut_values(x)):
                    if f < level:
                        raw = cuts.bracket(x, u)
                        scale = 0.5 / max(math.sqrt(max(raw, 0.0)), 1e-12) if _uses_sqrt(obs, target) else 1.0
                        rows.append(sw * scale * cuts.bracket_grad(x, u)[None, :])
                    else:
                        rows.append(np.zeros((1, N_COEFF)))
            if physical:
                lam, dl = _spectrum_grad(x)
                active = (nu / w - lam > 0.0)[:, None]
                rows.append(np.where(active, -sw * dl, 0.0))
            return np.vstack(rows)

        res = least_squares(
            fun,
            x,
            jac=jac,
            bounds=BOX,
            method="trf",
            xtol=1e-12,
            ftol=1e-12,
            gtol=1e-12,
            max_nfev=schedule.max_nfev,
        )
        x = np.clip(res.x, *BOX)
        resid = abs(obs(x) - target) if obs is not None else 0.0
        viol = _physical_violation(x) if physical else 0.0
        diagnostics = {"weight": w, "residual": resid, "violation": viol, "nfev": res.nfev}
        if resid < schedule.residual_tol and viol < schedule.physical_tol:
            return x, _Multipliers(stage, mu, nu)
        if obs is not None:
            mu += w * _constraint(obs, target, x)[0]
        if physical:
            nu = np.maximum(nu - w * np.linalg.eigvalsh(density_from_vector(x)), 0.0)
    if obs is None:
        raise ConvergenceError("physical projection did not converge", diagnostics)
    raise InfeasibleTargetError(
        f"target {target!r} for {obs.name} not reached (residual {diagnostics['residual']:.3g} "
        f"after weight {diagnostics['weight']:.0e})"
    )


# -- fallback on the factorized state --------------------------------------------
#
# rho = T T^dagger / Tr(T T^dagger) with T lower triangular (real diagonal,
# complex below it) is physical for every T and has all coefficients in the
# box. Entropies are smooth in T even where rho loses rank (lambda log lambda
# becomes t^2 log t^2), which rescues profiles around nearly pure states
# where the penalty on x stalls.

_OFF = np.tril_indices(4, -1)


def _factor_unpack(th: np.ndarray) -> np.ndarray:
    T = np.diag(th[:4]).astype(complex)
    T[_OFF] = th[4:10] + 1j * th[10:16]
    return T


def _factor_basis() -> np.ndarray:
    """d T / d theta_j as a (16, 4, 4) stack."""
    dT = np.zeros((16, 4, 4), dtype=complex)
    for j in range(4):
        dT[j, j, j] = 1.0
    for k, (a, b) in enumerate(zip(*_OFF)):
        dT[4 + k, a, b] = 1.0
        dT[10 + k, a, b] = 1j
    return dT


_DT = _factor_basis()


def _factor_x(th: np.ndarray) -> np.ndarray:
    T = _factor_unpack(th)
    A = T @ T.conj().T
    rho = A / np.trace(A).real
    return np.einsum("kij,ji->k", PAULI_BASIS, rho).real


def _factor_jac(th: np.ndarray) -> np.ndarray:
    T = _factor_unpack(th)
    A = T @ T.conj().T
    tr = np.trace(A).real
    dA = _DT @ T.conj().T
    dA = dA + dA.conj().transpose(0, 2, 1)
    drho = (dA - np.trace(dA, axis1=1, axis2=2).real[:, None, None] * (A / tr)) / tr
    return np.einsum("kij,nji->kn", PAULI_BASIS, drho).real


def _factor_start(x: np.ndarray) -> np.ndarray:
    lam, vec = np.linalg.eigh(density_from_vector(x))
    rho = (vec * np.clip(lam, 1e-6, None)) @ vec.conj().T
    T = np.linalg.cholesky(rho)
    T = T * np.exp(-1j * np.angle(np.diag(T)))[None, :]  # real diagonal
    return np.concatenate([np.diag(T).real, T[_OFF].real, T[_OFF].imag])


def _factor_solve(
    record, x0, obs: Observable, target: float, schedule: PenaltySchedule, warm=None
) -> tuple[np.ndarray, "_Multipliers"]:
    """Augmented Lagrangian for ``obs == target`` over factorized states."""
    L = record.whitening
    o = record.observed
    th = _factor_start(x0)
    first, mu = (0, 0.0) if warm is None else (max(warm.stage - 2, 0), warm.mu)
    resid = math.inf
    for stage, w in enumerate(schedule.weights[first:], start=first):
        sw = math.sqrt(w)

        def fun(th):
            x = _factor_x(th)
            return np.append(L @ (x - o), sw * (_constraint(obs, target, x)[0] + mu / w))

        def jac(th):
            x = _factor_x(th)
            J = _factor_jac(th)
            return np.vstack([L @ J, sw * (_constraint(obs, target, x)[1]() @ J)[None, :]])

        res = least_squares(
            fun, th, jac=jac, method="trf", xtol=1e-12, ftol=1e-12, gtol=1e-12,
            max_nfev=schedule.max_nfev,
        )
        th = res.x
        x = _factor_x(th)
        resid = abs(obs(x) - target)
        if resid < schedule.residual_tol:
            return np.clip(x, *BOX), _Multipliers(stage, mu, np.zeros(4), factored=True)
        mu += w * _constraint(obs, target, x)[0]
    raise InfeasibleTargetError(
        f"target {target!r} for {obs.name} not reached (residual {resid:.3g})"
    )


def _inside_box(x) -> bool:
    return bool(np.all(np.abs(x) <= 1.0))


def fit_central(
    record: MeasurementRecord,
    observable,
    schedule: PenaltySchedule | None = None,
) -> tuple[float, np.ndarray]:
    """Minimum of -2 log L over the allowed region and the observable there."""
    obs = as_observable(observable)
    schedule = schedule or PenaltySchedule()
    o = np.array(record.observed)
    if _inside_box(o):
        x = o
    else:
        res = lsq_linear(record.whitening, record.whitening @ o, bounds=BOX, tol=1e-14)
        if not res.success:
            raise ConvergenceError(
                f"box-constrained fit failed: {res.message}",
                {"status": res.status, "nit": res.nit, "cost": res.cost},
            )
        x = np.clip(res.x, *BOX)
    if obs.needs_physical and _min_eig(x)[0] < -schedule.physical_tol:
        x = _penalty_solve(record, x, None, None, True, schedule)[0]
    return obs(x), x


def _profile_point(record, obs, target, x0, schedule, warm=None):
    lo, hi = obs.domain
    if not lo <= target <= hi:
        raise InfeasibleTargetError(f"target {target!r} outside {obs.name} range {obs.domain}")
    if warm is not None and warm.factored:
        # a neighbour needed the factorized solver; so will this point
        try:
            x, mult = _factor_solve(record, x0, obs, target, schedule, warm)
            return chi2(x, record), x, mult
        except InfeasibleTargetError:
            warm = None
    try:
        x, mult = _penalty_solve(record, x0, obs, target, obs.needs_physical, schedule, warm)
    except InfeasibleTargetError:
        if not obs.needs_physical:
            raise
        x, mult = _factor_solve(record, x0, obs, target, schedule)
    return chi2(x, record), x, mult


def profile_at(
    record: MeasurementRecord,
    observable,
    target: float,
    x0=None,
    schedule: PenaltySchedule | None = None,
) -> float:
    """Minimum of -2 log L subject to ``observable(x) == target``."""
    obs = as_observable(observable)
    schedule = schedule or PenaltySchedule()
    if x0 is None:
        _, x0 = fit_central(record, obs, schedule)
    return _profile_point(record, obs, float(target), x0, schedule)[0]


# -- scans -------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    lo: float
    hi: float
    n: int

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        try:
            lo, hi, n = text.split(":")
            return cls(float(lo), float(hi), int(n))
        except ValueError as exc:
            raise ValidationError(f"grid must look like lo:hi:n, got {text!r}") from exc


@dataclass(frozen=True)
class ScanOptions:
    n_points: int = 201
    n_sigma: float = 5.0
    threads: int = 1
    schedule: PenaltySchedule = field(default_factory=PenaltySchedule)


@dataclass(frozen=True)
class ScanResult:
    observable_name: str
    central: float
    ci68_low: float
    ci68_high: float
    at_boundary_low: bool
    at_boundary_high: bool
    curve: tuple[tuple[float, float], ...]
    threshold: float | None = None
    significance: float = 0.0
    significance_side: Literal["above", "below"] = "above"
    threshold_unattainable: bool = False
    _context: dict | None = field(default=None, repr=False, compare=False)

    @property
    def err_low(self) -> float:
        return self.central - self.ci68_low

    @property
    def err_high(self) -> float:
        return self.ci68_high - self.central


def _linearized_sigma(record, obs: Observable, central: float, x_star, schedule) -> float:
    """sqrt(g^T U g); falls back to a doubling probe when the gradient vanishes."""
    g = obs.grad(x_star)
    s2 = float(g @ record.covariance @ g)
    if math.isfinite(s2) and s2 > 1e-16:
        return math.sqrt(s2)
    base = chi2(x_star, record)
    lo, hi = obs.domain
    delta = 1e-4
    while delta < 1e3:
        for sign in (1.0, -1.0):
            t = central + sign * delta
            if not lo <= t <= hi:
                continue
            try:
                c = _profile_point(record, obs, t, x_star, schedule)[0]
            except InfeasibleTargetError:
                continue
            if c - base >= 1.0:
                return delta
        delta *= 2.0
    return 1e-3


_PROBE_BAND = (0.25, 4.0)
_PROBE_ROUNDS = 6


def provisional_sigma(record, obs: Observable, central: float, x_star, schedule) -> float:
    """Scan half-width unit: linearized sigma, corrected by probing.

    The linearized width is checked by profiling at central +- sigma. When
    Delta chi2 there falls outside [0.25, 4] (strong curvature, or a
    gradient that diverges as near pure states) sigma is rescaled by
    1/sqrt(Delta chi2), at most tenfold per round. The largest width over
    the attainable sides is kept, so both crossings stay inside the grid.
    """
    sigma = _linearized_sigma(record, obs, central, x_star, schedule)
    base = chi2(x_star, record)
    lo, hi = obs.domain
    for _ in range(_PROBE_ROUNDS):
        widths = []
        for sign, room in ((1.0, hi - central), (-1.0, central - lo)):
            # probe no further than halfway to the edge of the attainable range
            d = sigma if room > sigma else 0.5 * room
            if d <= 0.0:
                continue
            try:
                c = _profile_point(record, obs, central + sign * d, x_star, schedule)[0] - base
            except InfeasibleTargetError:
                continue
            if d == sigma and _PROBE_BAND[0] <= c <= _PROBE_BAND[1]:
                widths.append(sigma)
            elif d < sigma and c < _PROBE_BAND[0]:
                widths.append(sigma)  # flat all the way to the edge; keep the linear width
            else:
                widths.append(d * min(max(1.0 / math.sqrt(max(c, 1e-300)), 0.1), 10.0))
        if not widths or all(w == sigma for w in widths):
            return sigma
        sigma = max(widths)
    return sigma


def _scan_grid(central, sigma, obs, opts: ScanOptions) -> np.ndarray:
    half = max(opts.n_points // 2, 1)
    steps = opts.n_sigma * sigma * np.arange(1, half + 1) / half
    lo, hi = obs.domain
    left = central - steps
    right = central + steps
    if np.any(left < lo):
        left = np.append(left[left > lo], lo)
    if np.any(right > hi):
        right = np.append(right[right < hi], hi)
    return np.concatenate([left[::-1], [central], right])


def _sweep(record, obs, targets, x_start, schedule):
    """Profile ``targets`` in order, warm-starting each from the previous."""
    points = []
    x = x_start
    warm = None
    truncated = False
    for t in targets:
        try:
            c, x, warm = _profile_point(record, obs, float(t), x, schedule, warm)
        except InfeasibleTargetError:
            if warm is None:
                truncated = True
                break
            # a stale multiplier can mislead; retry from a cold schedule
            try:
                c, x, warm = _profile_point(record, obs, float(t), x, schedule)
            except InfeasibleTargetError:
                truncated = True
                break
        points.append((float(t), c, x))
    return points, truncated


def _crossing(side_points, central, start, domain_edge, truncated, direction):
    """First Delta chi2 = 1 crossing walking away from the central value.

    ``side_points`` are (value, delta_chi2) ordered outward. Returns
    (bound, at_boundary) or raises when the grid ends before either.
    """
    prev_v, prev_c = central, start
    for v, c in side_points:
        c = max(c, prev_c)
        if c >= 1.0:
            frac = (1.0 - prev_c) / (c - prev_c) if c > prev_c else 1.0
            return prev_v + frac * (v - prev_v), False
        prev_v, prev_c = v, c
    last = side_points[-1][0] if side_points else central
    if truncated or not side_points or last == domain_edge:
        return last, True
    raise GridTooNarrowError(
        f"Delta chi2 = 1 not reached on the {direction} side (last point {last:.6g}, "
        f"Delta chi2 {prev_c:.3g}); widen the grid"
    )


def scan_observable(
    record: MeasurementRecord,
    observable,
    grid: GridSpec | None = None,
    options: ScanOptions | None = None,
) -> ScanResult:
    """Profile-likelihood scan around the central value with 68% interval."""
    obs = as_observable(observable)
    opts = options or ScanOptions()
    sched = opts.schedule
    central, x_star = fit_central(record, obs, sched)
    base = chi2(x_star, record)

    if grid is None:
        sigma = provisional_sigma(record, obs, central, x_star, sched)
        values = _scan_grid(central, sigma, obs, opts)
    else:
        if not grid.lo <= central <= grid.hi:
            raise GridTooNarrowError(
                f"grid [{grid.lo}, {grid.hi}] does not contain the central value {central:.6g}"
            )
        values = np.union1d(np.linspace(grid.lo, grid.hi, grid.n), [central])

    right = values[values > central]
    left = values[values < central][::-1]
    jobs = [(left, x_star), (right, x_star)]
    if opts.threads > 1:
        with ThreadPoolExecutor(max_workers=2) as pool:
            (lpts, ltrunc), (rpts, rtrunc) = pool.map(
                lambda j: _sweep(record, obs, j[0], j[1], sched), jobs
            )
    else:
        (lpts, ltrunc), (rpts, rtrunc) = (_sweep(record, obs, j[0], j[1], sched) for j in jobs)

    raw = [(v, c) for v, c, _ in lpts[::-1]] + [(central, base)] + [(v, c) for v, c, _ in rpts]
    shift = min(c for _, c in raw)
    curve = tuple((v, c - shift) for v, c in raw)
    dcentral = base - shift

    # only the attainable range counts as a boundary; a short explicit grid does not
    lo_edge, hi_edge = obs.domain
    ci_low, b_low = _crossing(
        [(v, c - shift) for v, c, _ in lpts], central, dcentral, lo_edge, ltrunc, "lower"
    )
    ci_high, b_high = _crossing(
        [(v, c - shift) for v, c, _ in rpts], central, dcentral, hi_edge, rtrunc, "upper"
    )
    context = {
        "record": record,
        "observable": obs,
        "schedule": sched,
        "shift": shift,
        "points": [(central, x_star)] + [(v, x) for v, _, x in lpts + rpts],
    }
    result = ScanResult(
        observable_name=obs.name,
        central=float(central),
        ci68_low=float(ci_low),
        ci68_high=float(ci_high),
        at_boundary_low=b_low,
        at_boundary_high=b_high,
        curve=curve,
        threshold=obs.threshold,
        _context=context,
    )
    if obs.threshold is None:
        return result
    sig, side, unattainable = _significance(result, obs.threshold)
    return replace(
        result, significance=sig, significance_side=side, threshold_unattainable=unattainable
    )


def _significance(result: ScanResult, threshold: float):
    side = "above" if result.central > threshold else "below"
    ctx = result._context
    one_sided = ctx["observable"].one_sided if ctx else True
    if one_sided and result.central <= threshold:
        return 0.0, "below", False
    if ctx is None:
        vals = [v for v, _ in result.curve]
        if not min(vals) <= threshold <= max(vals):
            raise ValidationError("threshold outside the stored curve and no refit context")
        c = float(np.interp(threshold, vals, [c for _, c in result.curve]))
        return math.sqrt(max(c, 0.0)), side, False
    obs = ctx["observable"]
    x0 = min(ctx["points"], key=lambda p: abs(p[0] - threshold))[1]
    try:
        c = _profile_point(ctx["record"], obs, float(threshold), x0, ctx["schedule"])[0]
    except InfeasibleTargetError:
        return math.inf, side, True
    return math.sqrt(max(c - ctx["shift"], 0.0)), side, False


def threshold_significance(result: ScanResult, threshold: float | None = None) -> float:
    """Significance in sigma of the deviation from ``threshold``, by refitting."""
    if threshold is None:
        threshold = result.threshold
    if threshold is None:
        raise ValidationError("no threshold given and the scan carries none")
    return _significance(result, float(threshold))[0]
