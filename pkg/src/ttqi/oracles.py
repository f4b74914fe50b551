"""Brute-force reference implementations and analytic state generators.

Everything here trades speed for transparency: discord by exhaustive
search over a direction lattice with explicit 4x4 projectors, steering by
plain Monte Carlo, and profile minima by random feasible draws. These are
the independent checks for the fast paths in :mod:`ttqi.observables` and
:mod:`ttqi.inference`.

Random generators use ``numpy.random.default_rng(seed)`` (PCG64), which
reproduces the same sequence for a given 64-bit seed on every platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import InfeasibleTargetError, UnphysicalStateError, ValidationError
from .fano import (
    I2,
    SIGMA,
    FanoCoefficients,
    Side,
    SpinBasis,
    density_from_vector,
    entropy_from_eigenvalues,
    extract_fano,
    validate_physicality,
)
from .inference import MeasurementRecord, Observable, as_observable, chi2
from .sphere import nested_hemisphere_points

STATE_NAMES = (
    "maximally_mixed",
    "bell_phi_plus",
    "bell_phi_minus",
    "bell_psi_plus",
    "bell_psi_minus",
    "werner",
    "product",
    "random_physical",
    "random_separable",
)

# Bell states are unpolarized with diagonal C; the entries are exact integers,
# which keeps exact-zero fixtures such as magic free of rounding
_BELL_CORRELATIONS = {
    "bell_phi_plus": (1.0, -1.0, 1.0),
    "bell_phi_minus": (-1.0, 1.0, 1.0),
    "bell_psi_plus": (1.0, 1.0, -1.0),
    "bell_psi_minus": (-1.0, -1.0, -1.0),
}

MAX_SEPARABLE_TERMS = 8


@dataclass(frozen=True)
class NamedState:
    name: str
    fano: FanoCoefficients
    params: dict[str, Any] = field(default_factory=dict)


def _unit_bloch(rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


def _check_bloch(name: str, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (3,):
        raise ValidationError(f"{name} must be a 3-vector, got shape {v.shape}")
    if np.linalg.norm(v) > 1.0 + 1e-12:
        raise ValidationError(f"{name} must have norm <= 1, got {np.linalg.norm(v):.6g}")
    return v


def analytic_state(name: str, basis: SpinBasis | None = None, **params) -> NamedState:
    """Exact coefficients for a named two-qubit state.

    Parameters by name: ``werner`` takes ``p`` in [0, 1]; ``product`` takes
    Bloch vectors ``P`` and ``Pbar``; the ``random_*`` states take ``seed``.
    ``random_physical`` draws a full-rank Ginibre state; ``random_separable``
    mixes up to eight pure product states with Dirichlet weights.
    """
    basis = basis or SpinBasis.beam()
    zero = np.zeros(3)
    if name == "maximally_mixed":
        fano = FanoCoefficients(zero, zero, np.zeros((3, 3)), basis)
    elif name in _BELL_CORRELATIONS:
        fano = FanoCoefficients(zero, zero, np.diag(_BELL_CORRELATIONS[name]), basis)
    elif name == "werner":
        p = float(params["p"])
        if not 0.0 <= p <= 1.0:
            raise ValidationError(f"Werner weight p must lie in [0, 1], got {p}")
        fano = FanoCoefficients(zero, zero, -p * np.eye(3), basis)
    elif name == "product":
        P = _check_bloch("P", params["P"])
        Pbar = _check_bloch("Pbar", params["Pbar"])
        fano = FanoCoefficients(P, Pbar, np.outer(P, Pbar), basis)
    elif name == "random_physical":
        rng = np.random.default_rng(int(params["seed"]))
        g = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        rho = g @ g.conj().T
        fano = extract_fano(rho / np.trace(rho).real, basis)
    elif name == "random_separable":
        rng = np.random.default_rng(int(params["seed"]))
        k = int(rng.integers(1, MAX_SEPARABLE_TERMS + 1))
        weights = rng.dirichlet(np.ones(k))
        v = np.zeros(15)
        for w in weights:
            a = _unit_bloch(rng)
            b = _unit_bloch(rng)
            v += w * np.concatenate([a, b, np.outer(a, b).ravel()])
        fano = FanoCoefficients.from_vector(np.clip(v, -1.0, 1.0), basis)
    else:
        raise ValidationError(f"unknown state {name!r}; expected one of {', '.join(STATE_NAMES)}")
    return NamedState(name, fano, dict(params))


# -- discord by exhaustive search ---------------------------------------------


def _qubit_entropies(m: np.ndarray) -> np.ndarray:
    """Entropies in bits of a stack of 2x2 density matrices."""
    lam = np.clip(np.linalg.eigvalsh(m), 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(lam > 0.0, -lam * np.log2(np.where(lam > 0.0, lam, 1.0)), 0.0)
    return terms.sum(axis=-1)


def grid_discord(
    fano: FanoCoefficients,
    side: Side = "top",
    n_points: int = 20000,
    chunk: int = 4096,
) -> float:
    """Discord minimized over the first ``n_points`` of a nested hemisphere lattice.

    Each direction is handled by explicit projectors on the 4x4 matrix:
    measure the other quark with (1 +- u.sigma)/2, trace it out, and take
    the outcome-weighted entropy of what is left. The result upper-bounds
    the exact discord and can only decrease as ``n_points`` grows.
    """
    if n_points < 100:
        raise ValidationError(f"n_points must be at least 100, got {n_points}")
    if side not in ("top", "antitop"):
        raise ValidationError(f"side must be 'top' or 'antitop', got {side!r}")
    report = validate_physicality(fano, 1e-6)
    if not report.is_physical:
        raise UnphysicalStateError(
            f"state is unphysical (min eigenvalue {report.min_eigenvalue:.3g})", report
        )
    rho = density_from_vector(fano.as_vector())
    t = rho.reshape(2, 2, 2, 2)  # indices: top, antitop, top', antitop'
    if side == "top":
        measured = np.einsum("iaib->ab", t)
        pattern = "nab,ibjc,nca->nij"
    else:
        measured = np.einsum("ajbj->ab", t)
        pattern = "nab,bicj,nca->nij"
    s_measured = float(_qubit_entropies(measured[None])[0])
    s_joint = entropy_from_eigenvalues(np.clip(np.linalg.eigvalsh(rho), 0.0, None))

    best = math.inf
    # the bracket is even in u, so one hemisphere suffices
    dirs = nested_hemisphere_points(n_points)
    for start in range(0, n_points, chunk):
        u = dirs[start : start + chunk]
        us = np.einsum("ni,ijk->njk", u, SIGMA)
        cond_entropy = np.zeros(len(u))
        for s in (1.0, -1.0):
            proj = 0.5 * (I2 + s * us)  # (n, 2, 2)
            # sandwich the measured index with the projector, then trace it out
            sub = np.einsum(pattern, proj, t, proj)
            p = np.trace(sub, axis1=1, axis2=2).real
            ok = p > 1e-14
            state = sub / np.where(ok, p, 1.0)[:, None, None]
            cond_entropy += np.where(ok, p * _qubit_entropies(state), 0.0)
        best = min(best, float(cond_entropy.min()))
    return s_measured - s_joint + best


# -- steering by Monte Carlo ----------------------------------------------------


def mc_steering(
    C, n_samples: int = 10**6, seed: int = 0, chunk: int = 10**6
) -> tuple[float, float]:
    """Monte Carlo estimate of the integral of |C u| over the unit sphere.

    Directions are normalized Gaussian triples. Returns the estimate and
    its sample standard error; chunks are accumulated in a fixed order so
    the result depends only on ``seed``.
    """
    if n_samples < 10**4:
        raise ValidationError(f"n_samples must be at least 1e4, got {n_samples}")
    C = np.asarray(C, dtype=float)
    if C.shape != (3, 3):
        raise ValidationError(f"C must be 3x3, got shape {C.shape}")
    rng = np.random.default_rng(seed)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        u = rng.standard_normal((m, 3))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        f = np.linalg.norm(u @ C.T, axis=1)
        total += float(f.sum())
        total_sq += float((f * f).sum())
        done += m
    mean = total / n_samples
    var = max(total_sq / n_samples - mean * mean, 0.0) * n_samples / (n_samples - 1)
    scale = 4.0 * math.pi
    return scale * mean, scale * math.sqrt(var / n_samples)


# -- profile minimum by random feasible draws -----------------------------------

_FEASIBLE_WINDOW = 1e-3


def _repair(obs: Observable, target: float, x: np.ndarray, max_iter: int = 30):
    """Newton steps along the gradient until obs(x) == target; None on failure."""
    for _ in range(max_iter):
        r = obs(x) - target
        if abs(r) < 1e-12:
            return x
        g = obs.grad(x)
        gg = float(g @ g)
        if gg == 0.0:
            return None
        x = np.clip(x - r * g / gg, -1.0, 1.0)
    return x if abs(obs(x) - target) < _FEASIBLE_WINDOW else None


def _admissible(obs: Observable, target: float, x) -> bool:
    if x is None or abs(obs(x) - target) >= _FEASIBLE_WINDOW:
        return False
    if obs.needs_physical and np.linalg.eigvalsh(density_from_vector(x))[0] < 0.0:
        return False
    return True


def dense_profile_oracle(
    record: MeasurementRecord,
    observable,
    target: float,
    n_draws: int = 200,
    seed: int = 0,
    max_sweeps: int = 200,
) -> float:
    """Upper bound on the profile minimum from random feasible points.

    Draws come from the Gaussian centred on the observation, are pulled onto
    the constraint surface by Newton steps along the observable gradient and
    kept when they land within 1e-3 of ``target`` (and are physical when the
    observable requires it). The best one is then polished by coordinate
    descent in the tangent plane, with the same repair after every move.
    """
    obs = as_observable(observable)
    rng = np.random.default_rng(seed)
    U = record.covariance
    lam, vecs = np.linalg.eigh(0.5 * (U + U.T))
    root = vecs * np.sqrt(np.clip(lam, 0.0, None))

    best_x, best_c = None, math.inf
    for _ in range(n_draws):
        x = np.clip(record.observed + root @ rng.standard_normal(len(lam)), -1.0, 1.0)
        x = _repair(obs, target, x)
        if not _admissible(obs, target, x):
            continue
        c = chi2(x, record)
        if c < best_c:
            best_x, best_c = x, c
    if best_x is None:
        raise InfeasibleTargetError(
            f"no feasible draw for {obs.name} = {target!r} among {n_draws} samples"
        )

    x, c = best_x, best_c
    step = 0.1
    for _ in range(max_sweeps):
        improved = False
        for k in range(len(x)):
            g = obs.grad(x)
            d = np.zeros(len(x))
            d[k] = 1.0
            gg = float(g @ g)
            if gg > 0.0:
                d -= g[k] / gg * g
            for sign in (1.0, -1.0):
                y = _repair(obs, target, np.clip(x + sign * step * d, -1.0, 1.0))
                if not _admissible(obs, target, y):
                    continue
                cy = chi2(y, record)
                if cy < c:
                    x, c, improved = y, cy, True
                    break
        if not improved:
            step *= 0.5
            if step < 1e-7:
                break
    return c
