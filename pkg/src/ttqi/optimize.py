"""Small derivative-free minimizer for low-dimensional smooth objectives."""

from __future__ import annotations

from typing import Callable, Sequence


def nelder_mead(
    func: Callable[[Sequence[float]], float],
    x0: Sequence[float],
    step: float = 0.1,
    xatol: float = 1e-9,
    fatol: float = 1e-15,
    max_iter: int = 2000,
) -> tuple[list[float], float, int]:
    """Minimize ``func`` from ``x0`` with the standard Nelder-Mead simplex.

    Stops when every vertex lies within ``xatol`` (max-norm) of the best one
    and the function spread is below ``fatol``, or after ``max_iter``
    iterations. Returns ``(x_best, f_best, n_evals)``.
    """
    n = len(x0)
    simplex = [list(map(float, x0))]
    for i in range(n):
        v = list(simplex[0])
        v[i] += step
        simplex.append(v)
    fs = [func(v) for v in simplex]
    nev = n + 1

    for _ in range(max_iter):
        order = sorted(range(n + 1), key=fs.__getitem__)
        simplex = [simplex[i] for i in order]
        fs = [fs[i] for i in order]
        best = simplex[0]
        size = max(abs(v[k] - best[k]) for v in simplex[1:] for k in range(n))
        if size <= xatol and fs[-1] - fs[0] <= fatol:
            break

        centroid = [sum(v[k] for v in simplex[:-1]) / n for k in range(n)]
        worst = simplex[-1]
        xr = [2.0 * c - w for c, w in zip(centroid, worst)]
        fr = func(xr)
        nev += 1
        if fr < fs[0]:
            xe = [3.0 * c - 2.0 * w for c, w in zip(centroid, worst)]
            fe = func(xe)
            nev += 1
            if fe < fr:
                simplex[-1], fs[-1] = xe, fe
            else:
                simplex[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-2]:
            simplex[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-1]:
            xc = [c + 0.5 * (r - c) for c, r in zip(centroid, xr)]
        else:
            xc = [c + 0.5 * (w - c) for c, w in zip(centroid, worst)]
        fc = func(xc)
        nev += 1
        if fc < min(fr, fs[-1]):
            simplex[-1], fs[-1] = xc, fc
            continue
        # shrink toward the best vertex
        for i in range(1, n + 1):
            simplex[i] = [b + 0.5 * (v - b) for b, v in zip(best, simplex[i])]
            fs[i] = func(simplex[i])
        nev += n

    i_best = min(range(n + 1), key=fs.__getitem__)
    return simplex[i_best], fs[i_best], nev
