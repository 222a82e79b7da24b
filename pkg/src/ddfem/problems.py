"""Manufactured solution u = sin(pi x) sin(pi y) and the matching sources."""

from __future__ import annotations

import numpy as np

from .material import kappa_factor

PI = np.pi

# ||u||_{L2} and ||grad u||_{L2} on the unit square
U_L2_NORM = 0.5
GRAD_U_L2_NORM = PI / np.sqrt(2.0)


def exact_u(x, y):
    return np.sin(PI * x) * np.sin(PI * y)


def exact_grad_u(x, y):
    return PI * np.cos(PI * x) * np.sin(PI * y), PI * np.sin(PI * x) * np.cos(PI * y)


def source_fourier(x, y):
    """-Laplace u."""
    return 2.0 * PI ** 2 * np.sin(PI * x) * np.sin(PI * y)


def source_arctan(x, y):
    """-div kappa(grad u) for the arctan law.

    With g = grad u, s = |g|^2 and kappa(g) = phi(s) g:
    div kappa(g) = phi'(s) grad(s) . g + phi(s) Laplace u, grad(s) = 2 Hess(u) g.
    """
    gx, gy = exact_grad_u(x, y)
    s = gx ** 2 + gy ** 2
    phi = kappa_factor(np.stack([gx, gy], axis=-1))
    dphi = 2.0 / (1.0 + (s - 1.0) ** 2)
    uxx = -PI ** 2 * np.sin(PI * x) * np.sin(PI * y)
    uxy = PI ** 2 * np.cos(PI * x) * np.cos(PI * y)
    g_hess_g = uxx * gx ** 2 + 2.0 * uxy * gx * gy + uxx * gy ** 2
    return -(2.0 * dphi * g_hess_g + phi * 2.0 * uxx)


SOURCES = {"fourier": source_fourier, "arctan": source_arctan}


def source_for(law: str):
    try:
        return SOURCES[law]
    except KeyError:
        raise ValueError(f"unknown material law {law!r}; expected one of {sorted(SOURCES)}") from None
