"""Quantum-correlation markers evaluated on Fano coefficients.

Discord (both sides and their difference), the Peres-Horodecki entanglement
marker, the steering integral, the CHSH eigenvalue marker and the stabilizer
Renyi magic, plus the hierarchy classification built on them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Literal, NamedTuple

import numpy as np
from scipy.special import xlogy

from .errors import UnphysicalStateError, ValidationError
from .fano import (
    PAULI_BASIS,
    SIGMA,
    DensityMatrix4,
    FanoCoefficients,
    Side,
    SingleQubitState,
    assemble_density,
    density_from_vector,
    entropy_from_eigenvalues,
    partial_transpose,
    validate_physicality,
)
from .optimize import nelder_mead
from .sphere import fibonacci_hemisphere, tangent_frame

TWO_PI = 2.0 * math.pi
_LN2 = math.log(2.0)
_P_DEGENERATE = 1e-14
_COARSE_XATOL = 1e-4
# Coarse minima within this margin of the best are polished to full accuracy.
_POLISH_MARGIN = 1e-6
_SAME_BASIN = 1.0 - 1e-6


@dataclass(frozen=True)
class QuadratureSpec:
    """Product Gauss-Legendre rule for sphere integrals.

    ``polar_order`` counts polar nodes over the full sphere and
    ``azimuthal_order`` azimuthal nodes over the full circle; the integrand
    has octant symmetry after diagonalization, so only one octant is sampled
    with ``polar_order // 2`` by ``azimuthal_order // 4`` nodes.
    """

    polar_order: int = 64
    azimuthal_order: int = 128

    def __post_init__(self):
        if self.polar_order < 4 or self.azimuthal_order < 4:
            raise ValidationError("quadrature orders must be >= 4")


@dataclass(frozen=True)
class DiscordOptions:
    n_seeds: int = 64
    n_refine: int = 4
    xatol: float = 1e-9
    max_iter: int = 2000
    physicality_tol: float = 1e-6
    tolerance: float = 1e-7

    def __post_init__(self):
        if self.n_seeds < 1 or not 1 <= self.n_refine <= self.n_seeds:
            raise ValidationError("need n_seeds >= 1 and 1 <= n_refine <= n_seeds")


@dataclass(frozen=True)
class DiscordResult:
    value: float
    side: Side
    argmin_direction: np.ndarray
    optimizer_evals: int


class PostMeasurement(NamedTuple):
    probability: float
    state: SingleQubitState
    degenerate: bool


# -- entropies ---------------------------------------------------------------


def qubit_entropy(norm):
    """Entropy in bits of a qubit with Bloch-vector length ``norm``."""
    r = np.clip(norm, 0.0, 1.0)
    lp = 0.5 * (1.0 + r)
    lm = 0.5 * (1.0 - r)
    return -(xlogy(lp, lp) + xlogy(lm, lm)) / _LN2


def _state_entropy(lam: np.ndarray) -> float:
    return entropy_from_eigenvalues(np.clip(lam, 0.0, None))


def measurement_entropy(
    a: np.ndarray, b: np.ndarray, C: np.ndarray, u: np.ndarray
) -> np.ndarray:
    """Average conditional entropy of qubit A after measuring B along ``u``.

    ``a``, ``b`` are the Bloch vectors of the unmeasured and measured qubit,
    ``C`` the correlation matrix with rows on the unmeasured side. ``u`` has
    shape (..., 3). Outcomes with probability below 1e-14 contribute zero.
    """
    u = np.asarray(u, dtype=float)
    bu = u @ b
    Cu = u @ C.T
    total = np.zeros(bu.shape)
    for s in (1.0, -1.0):
        p = 0.5 * (1.0 + s * bu)
        ok = p > _P_DEGENERATE
        denom = np.where(ok, 2.0 * p, 1.0)
        r = np.linalg.norm(a + s * Cu, axis=-1) / denom
        total = total + np.where(ok, p * qubit_entropy(r), 0.0)
    return total


def _side_arrays(P, Pbar, C, side: Side):
    """(unmeasured Bloch, measured Bloch, correlation with unmeasured rows)."""
    if side == "top":
        return P, Pbar, C
    if side == "antitop":
        return Pbar, P, C.T
    raise ValidationError(f"side must be 'top' or 'antitop', got {side!r}")


# -- discord -----------------------------------------------------------------


def post_measurement_state(rho, u, outcome: Literal["+", "-"]) -> PostMeasurement:
    """Top-quark state conditioned on a projective antitop measurement along ``u``."""
    m = rho.entries if isinstance(rho, DensityMatrix4) else DensityMatrix4(rho).entries
    u = np.asarray(u, dtype=float)
    if abs(np.linalg.norm(u) - 1.0) > 1e-9:
        raise ValidationError("measurement direction must be a unit vector")
    if outcome not in ("+", "-"):
        raise ValidationError(f"outcome must be '+' or '-', got {outcome!r}")
    s = 1.0 if outcome == "+" else -1.0
    proj = 0.5 * (np.eye(2) + s * np.einsum("i,ijk->jk", u, SIGMA))
    big = np.kron(np.eye(2), proj)
    post = big @ m @ big
    p = float(np.trace(post).real)
    if p < _P_DEGENERATE:
        return PostMeasurement(p, SingleQubitState(np.zeros(3)), True)
    top = np.einsum("ajbj->ab", post.reshape(2, 2, 2, 2)) / p
    bloch = np.einsum("kij,ji->k", SIGMA, top).real
    n = np.linalg.norm(bloch)
    if n > 1.0:
        bloch = bloch / n
    return PostMeasurement(p, SingleQubitState(bloch), False)


def _canonical_direction(u: np.ndarray) -> np.ndarray:
    u = u / np.linalg.norm(u)
    for c in u:
        if abs(c) > 1e-12:
            return u if c > 0 else -u
    return u


def _scalar_objective(a, b, C):
    """Pure-float version of :func:`measurement_entropy` for one direction."""
    a0, a1, a2 = (float(t) for t in a)
    b0, b1, b2 = (float(t) for t in b)
    (c00, c01, c02), (c10, c11, c12), (c20, c21, c22) = C.tolist()
    log2 = math.log2
    sqrt = math.sqrt

    def f(u0, u1, u2):
        bu = b0 * u0 + b1 * u1 + b2 * u2
        w0 = c00 * u0 + c01 * u1 + c02 * u2
        w1 = c10 * u0 + c11 * u1 + c12 * u2
        w2 = c20 * u0 + c21 * u1 + c22 * u2
        total = 0.0
        for s in (1.0, -1.0):
            p = 0.5 * (1.0 + s * bu)
            if p <= _P_DEGENERATE:
                continue
            r = sqrt((a0 + s * w0) ** 2 + (a1 + s * w1) ** 2 + (a2 + s * w2) ** 2) / (2.0 * p)
            if r >= 1.0:
                continue
            lp = 0.5 * (1.0 + r)
            lm = 0.5 * (1.0 - r)
            total -= p * (lp * log2(lp) + lm * log2(lm))
        return total

    return f


def minimize_measurement_entropy(a, b, C, opts: DiscordOptions) -> tuple[float, np.ndarray, int]:
    """Multi-start minimization of :func:`measurement_entropy` over the sphere.

    The objective is even in ``u``, so seeds cover one hemisphere. All seeds
    are evaluated; the ``n_refine`` lowest are refined by Nelder-Mead in the
    tangent plane of the seed. Ties go to the lowest value, then to the
    lexicographically smallest canonical direction.
    """
    seeds = _seed_lattice(opts.n_seeds)
    f0 = measurement_entropy(a, b, C, seeds)
    nevals = len(seeds)
    order = np.lexsort((np.arange(len(seeds)), f0))[: opts.n_refine]
    f = _scalar_objective(a, b, C)

    def chart_at(s):
        e1, e2 = tangent_frame(s)
        s0, s1, s2 = s.tolist()
        p0, p1, p2 = e1.tolist()
        q0, q1, q2 = e2.tolist()

        def chart(xy):
            x, y = xy
            v0 = s0 + x * p0 + y * q0
            v1 = s1 + x * p1 + y * q1
            v2 = s2 + x * p2 + y * q2
            n = math.sqrt(v0 * v0 + v1 * v1 + v2 * v2)
            return v0 / n, v1 / n, v2 / n

        return chart

    # Coarse refinement of every candidate basin, then a fine polish of the
    # basins that could still hold the global minimum.
    coarse = []
    for k in order:
        chart = chart_at(seeds[k])
        xy, fmin, nev = nelder_mead(
            lambda xy: f(*chart(xy)), (0.0, 0.0), 0.2, _COARSE_XATOL, 1e-10, opts.max_iter
        )
        nevals += nev
        if fmin <= f0[k]:
            coarse.append((fmin, np.array(chart(xy))))
        else:
            coarse.append((float(f0[k]), seeds[k]))
    f_best = min(c[0] for c in coarse)
    basins = []
    for fc, s in sorted(coarse, key=lambda c: c[0]):
        if fc <= f_best + _POLISH_MARGIN and all(abs(float(s @ t)) < _SAME_BASIN for _, t in basins):
            basins.append((fc, s))
    candidates = []
    for fc, s in basins:
        chart = chart_at(s)
        xy, fmin, nev = nelder_mead(
            lambda xy: f(*chart(xy)), (0.0, 0.0), 1e-3, opts.xatol, 1e-15, opts.max_iter
        )
        nevals += nev
        if fmin <= fc:
            candidates.append((fmin, _canonical_direction(np.array(chart(xy)))))
        else:
            candidates.append((fc, _canonical_direction(s)))

    best = min(candidates, key=lambda c: (c[0], tuple(c[1])))
    return best[0], best[1], nevals


@lru_cache(maxsize=8)
def _seed_lattice(n: int) -> np.ndarray:
    pts = fibonacci_hemisphere(n)
    pts.setflags(write=False)
    return pts


def discord_arrays(
    P: np.ndarray,
    Pbar: np.ndarray,
    C: np.ndarray,
    side: Side,
    opts: DiscordOptions,
    rho_eigenvalues: np.ndarray | None = None,
) -> tuple[float, np.ndarray, int]:
    """Discord from raw arrays; no physicality check. Returns (value, u, evals)."""
    a, b, M = _side_arrays(P, Pbar, C, side)
    if rho_eigenvalues is None:
        v = np.concatenate([P, Pbar, C.ravel()])
        rho_eigenvalues = np.linalg.eigvalsh(density_from_vector(v))
    base = float(qubit_entropy(np.linalg.norm(b))) - _state_entropy(rho_eigenvalues)
    fmin, u, nevals = minimize_measurement_entropy(a, b, M, opts)
    value = base + fmin
    if -opts.tolerance < value < 0.0:
        value = 0.0
    return value, u, nevals


def discord(
    fano: FanoCoefficients, side: Side = "top", opts: DiscordOptions | None = None
) -> DiscordResult:
    """Quantum discord of the ``side`` quark, minimized over projective
    measurements on the other quark."""
    opts = opts or DiscordOptions()
    report = validate_physicality(fano, opts.physicality_tol)
    if not report.is_physical:
        raise UnphysicalStateError(
            f"state is unphysical (min eigenvalue {report.min_eigenvalue:.3g})", report
        )
    value, u, nevals = discord_arrays(
        fano.P, fano.Pbar, fano.C, side, opts, rho_eigenvalues=report.eigenvalues
    )
    if value < -1e-9:
        raise ArithmeticError(f"discord came out negative ({value:.3g})")
    return DiscordResult(value, side, u, nevals)


def discord_difference(fano: FanoCoefficients, opts: DiscordOptions | None = None) -> float:
    return discord(fano, "top", opts).value - discord(fano, "antitop", opts).value


# -- steering, CHSH, magic, entanglement -------------------------------------


@lru_cache(maxsize=8)
def _octant_rule(polar_order: int, azimuthal_order: int):
    nt = max(polar_order // 2, 1)
    nph = max(azimuthal_order // 4, 1)
    xt, wt = np.polynomial.legendre.leggauss(nt)
    xp, wp = np.polynomial.legendre.leggauss(nph)
    theta = (xt + 1.0) * (np.pi / 4.0)
    phi = (xp + 1.0) * (np.pi / 4.0)
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    sin_t = np.sin(th)
    u2 = np.stack([(sin_t * np.cos(ph)) ** 2, (sin_t * np.sin(ph)) ** 2, np.cos(th) ** 2])
    # 8 octants; each leggauss weight rescaled from [-1, 1] to [0, pi/2].
    w = 8.0 * np.outer(wt, wp) * (np.pi / 4.0) ** 2 * sin_t
    u2.setflags(write=False)
    w.setflags(write=False)
    return u2, w


def steering_marker(C, quad: QuadratureSpec | None = None) -> float:
    """Sphere integral of |C u|; the steerability threshold is 2 pi."""
    quad = quad or QuadratureSpec()
    C = np.asarray(C, dtype=float)
    m = np.clip(np.linalg.eigvalsh(C.T @ C), 0.0, None)
    u2, w = _octant_rule(quad.polar_order, quad.azimuthal_order)
    integrand = np.sqrt(np.tensordot(m, u2, axes=1))
    return float(np.sum(w * integrand))


def chsh_marker(C) -> float:
    """Sum of the two largest eigenvalues of C^T C."""
    C = np.asarray(C, dtype=float)
    m = np.linalg.eigvalsh(C.T @ C)
    return float(m[2] + m[1])


def magic(fano: FanoCoefficients) -> float:
    """Second stabilizer Renyi entropy of the two-qubit state, in bits."""
    v = fano.as_vector()
    return magic_from_vector(v)


def magic_from_vector(v: np.ndarray) -> float:
    v2 = np.square(v)
    # adding 0.0 turns -log2(1) = -0.0 into +0.0
    return 0.0 - math.log2((1.0 + float(np.sum(v2 * v2))) / (1.0 + float(np.sum(v2))))


def entanglement_marker(rho, *, tol: float = 1e-9) -> tuple[float, float]:
    """Return ``(delta_e, negativity)`` from the antitop partial transpose.

    ``delta_e = 1 - 4 lambda_min``; separable states have ``delta_e <= 1``.
    """
    if isinstance(rho, FanoCoefficients):
        rho = assemble_density(rho)
    elif not isinstance(rho, DensityMatrix4):
        rho = DensityMatrix4(rho)
    lam_rho = rho.eigenvalues()
    if lam_rho[0] < -tol:
        raise UnphysicalStateError(f"state is unphysical (min eigenvalue {lam_rho[0]:.3g})")
    return entanglement_from_matrix(rho.entries)


def entanglement_from_matrix(m: np.ndarray) -> tuple[float, float]:
    lam = np.linalg.eigvalsh(partial_transpose(m, "antitop"))
    return float(1.0 - 4.0 * lam[0]), float(-np.sum(lam[lam < 0.0]))


# -- hierarchy ---------------------------------------------------------------


class HierarchyFlags(NamedTuple):
    discordant: bool
    entangled: bool
    steerable: bool
    bell_correlated: bool
    magical: bool


@dataclass(frozen=True)
class HierarchyOptions:
    discord: DiscordOptions = field(default_factory=DiscordOptions)
    quadrature: QuadratureSpec = field(default_factory=QuadratureSpec)
    discord_tol: float = 1e-7
    magic_tol: float = 1e-9
    # relative margin on the Delta_E, steering and CHSH thresholds
    threshold_tol: float = 1e-9
    polarization_tol: float = 0.05


@dataclass(frozen=True)
class HierarchyReport:
    discord_top: float
    entanglement_marker: float
    negativity: float
    steering: float
    chsh: float
    magic: float
    flags: HierarchyFlags
    warnings: tuple[str, ...] = ()


def hierarchy_flags(
    discord_top: float,
    delta_e: float,
    steering: float,
    chsh: float,
    magic_value: float,
    opts: HierarchyOptions | None = None,
) -> HierarchyFlags:
    """Threshold logic alone, usable on externally reported marker values."""
    opts = opts or HierarchyOptions()
    rel = 1.0 + opts.threshold_tol
    return HierarchyFlags(
        discordant=discord_top > opts.discord_tol,
        entangled=delta_e > rel,
        steerable=steering > TWO_PI * rel,
        bell_correlated=chsh > rel,
        magical=magic_value > opts.magic_tol,
    )


def classify_hierarchy(
    fano: FanoCoefficients, opts: HierarchyOptions | None = None
) -> HierarchyReport:
    opts = opts or HierarchyOptions()
    rho = assemble_density(fano)
    d = discord(fano, "top", opts.discord).value
    delta_e, neg = entanglement_marker(rho, tol=opts.discord.physicality_tol)
    t = steering_marker(fano.C, opts.quadrature)
    b = chsh_marker(fano.C)
    mg = magic(fano)
    flags = hierarchy_flags(d, delta_e, t, b, mg, opts)
    warnings = []
    pol = max(np.linalg.norm(fano.P), np.linalg.norm(fano.Pbar))
    if pol > opts.polarization_tol:
        warnings.append(
            f"unpolarized-assumption: steering criterion assumes P = Pbar = 0, "
            f"max |P| is {pol:.3g}"
        )
    return HierarchyReport(d, delta_e, neg, t, b, mg, flags, tuple(warnings))


# -- helpers for the likelihood machinery ------------------------------------


def project_to_physical(v: np.ndarray) -> tuple[np.ndarray, np.ndarray, bool]:
    """Clip negative eigenvalues of rho(v) and renormalize.

    Returns the coefficient vector of the projected state, its eigenvalues,
    and whether any clipping happened.
    """
    rho = density_from_vector(v)
    lam, vec = np.linalg.eigh(rho)
    if lam[0] >= 0.0:
        return v, lam, False
    lam = np.clip(lam, 0.0, None)
    lam = lam / lam.sum()
    rho = (vec * lam) @ vec.conj().T
    w = np.einsum("kij,ji->k", PAULI_BASIS, rho).real
    return w, lam, True


def discord_at_direction(v: np.ndarray, u: np.ndarray, side: Side) -> float:
    """Discord bracket at a fixed measurement direction, for envelope derivatives."""
    w, lam, _ = project_to_physical(v)
    a, b, M = _side_arrays(w[:3], w[3:6], w[6:].reshape(3, 3), side)
    return (
        float(qubit_entropy(np.linalg.norm(b)))
        - _state_entropy(lam)
        + float(measurement_entropy(a, b, M, u))
    )


def _dentropy_dnorm(n: float) -> float:
    n = min(n, 1.0 - 1e-15)
    return 0.5 * math.log2((1.0 - n) / (1.0 + n))


def discord_at_direction_grad(v: np.ndarray, u: np.ndarray, side: Side) -> np.ndarray:
    """Analytic gradient of :func:`discord_at_direction` in the 15-vector.

    Exact for states with a strictly positive spectrum; unphysical inputs
    are projected first and differentiated at the projection.
    """
    w, lam, _ = project_to_physical(v)
    a, b, M = _side_arrays(w[:3], w[3:6], w[6:].reshape(3, 3), side)
    u = np.asarray(u, dtype=float)
    ga = np.zeros(3)
    gb = np.zeros(3)
    gM = np.zeros((3, 3))
    nb = float(np.linalg.norm(b))
    if nb > 0.0:
        gb += _dentropy_dnorm(nb) * b / nb
    Mu = M @ u
    bu = float(b @ u)
    for s in (1.0, -1.0):
        p = 0.5 * (1.0 + s * bu)
        if p <= _P_DEGENERATE:
            continue
        q = a + s * Mu
        nq = float(np.linalg.norm(q))
        n = nq / (2.0 * p)
        dS = _dentropy_dnorm(n)
        # d(p S(n))/dp at fixed q, and d/dq
        dp = float(qubit_entropy(n)) - n * dS
        gb += dp * 0.5 * s * u
        if nq > 0.0:
            dq = 0.5 * dS * q / nq
            ga += dq
            gM += s * np.outer(dq, u)
    # -S(rho): dS/dx_k = -Tr(B_k/4 log2 rho)
    rho = density_from_vector(w)
    evals, vecs = np.linalg.eigh(rho)
    logr = (vecs * (np.log2(np.clip(evals, 1e-300, None)))) @ vecs.conj().T
    g = 0.25 * np.einsum("kij,ji->k", PAULI_BASIS, logr).real
    if side == "top":
        g[:3] += ga
        g[3:6] += gb
        g[6:] += gM.ravel()
    else:
        g[:3] += gb
        g[3:6] += ga
        g[6:] += gM.T.ravel()
    return g


def discord_relaxed(v: np.ndarray, side: Side, opts: DiscordOptions) -> tuple[float, np.ndarray]:
    """Discord of the nearest physical state (eigenvalue clipping) to rho(v)."""
    w, lam, _ = project_to_physical(v)
    value, u, _ = discord_arrays(w[:3], w[3:6], w[6:].reshape(3, 3), side, opts, lam)
    return max(value, 0.0), u
