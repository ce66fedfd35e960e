"""Independent oracles for the test suite.

Everything here deliberately avoids the package's spectral machinery:
derivatives come from 4th-order centered finite differences on the
periodic grid and the Burgers reference truth comes from the method of
characteristics solved pointwise by Newton iteration.
"""

import numpy as np


def fd_derivative(values: np.ndarray, axis: int, spacing: float, order: int = 1) -> np.ndarray:
    """4th-order centered periodic finite difference, first or second order."""
    r = np.roll
    if order == 1:
        return (
            -r(values, -2, axis)
            + 8 * r(values, -1, axis)
            - 8 * r(values, 1, axis)
            + r(values, 2, axis)
        ) / (12.0 * spacing)
    if order == 2:
        return (
            -r(values, -2, axis)
            + 16 * r(values, -1, axis)
            - 30 * values
            + 16 * r(values, 1, axis)
            - r(values, 2, axis)
        ) / (12.0 * spacing**2)
    raise ValueError(f"unsupported order {order}")


def fd_sigma(v_values: np.ndarray, spacing: float) -> dict:
    """Brute-force filter stress sum_c d_c v^a d_c v^b from grid values."""
    n = v_values.shape[0]
    grads = [
        [fd_derivative(v_values[a], c, spacing) for c in range(n)] for a in range(n)
    ]
    return {
        (a, b): sum(grads[a][c] * grads[b][c] for c in range(n))
        for a in range(n)
        for b in range(n)
    }


def fd_fluid_source(v_values: np.ndarray, spacing: float) -> np.ndarray:
    """Brute-force s = -2 div sigma from grid values."""
    n = v_values.shape[0]
    sig = fd_sigma(v_values, spacing)
    return np.stack(
        [
            -2.0 * sum(fd_derivative(sig[(a, b)], b, spacing) for b in range(n))
            for a in range(n)
        ]
    )


def burgers_characteristics(x: np.ndarray, t: float, tol: float = 1e-13) -> np.ndarray:
    """Solve u = sin(x - u t) pointwise by Newton iteration (pre-shock)."""
    if not 0.0 <= t < 1.0:
        raise ValueError("characteristics are single-valued only for t < 1")
    u = np.sin(x)
    for _ in range(100):
        f = u - np.sin(x - u * t)
        df = 1.0 + t * np.cos(x - u * t)
        step = f / df
        u = u - step
        if np.max(np.abs(step)) < tol:
            break
    return u
