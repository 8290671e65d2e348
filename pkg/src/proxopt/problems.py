"""Seeded random test problems: quadratic forms on spheres and Stiefel manifolds."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import ortho_group

from . import manifold
from .kkt import ObjectiveMap, quadratic_form, trace_form


@dataclass
class Problem:
    obj: ObjectiveMap
    c: manifold.ConstraintMap
    A: Optional[np.ndarray] = None
    spectrum: Optional[np.ndarray] = None
    name: str = ""


def random_symmetric(spectrum, seed=0):
    """``Q diag(spectrum) Q^T`` with a seeded Haar-random orthogonal ``Q``."""
    w = np.asarray(spectrum, dtype=float)
    if w.size == 1:
        return np.diag(w)
    Q = ortho_group.rvs(w.size, random_state=np.random.default_rng(seed))
    A = (Q * w) @ Q.T
    return 0.5 * (A + A.T)


def sphere_quadratic(A=None, spectrum=None, seed=0) -> Problem:
    """``(Ax, x)`` on the unit sphere; ``A`` built from ``spectrum`` if not given."""
    if A is None:
        A = random_symmetric(spectrum, seed)
    A = np.asarray(A, dtype=float)
    return Problem(quadratic_form(A), manifold.sphere(A.shape[0]), A, np.linalg.eigvalsh(A), "sphere_quadratic")


def stiefel_quadratic(n, k, A=None, spectrum=None, seed=0) -> Problem:
    """``trace(X^T A X)`` on ``S_{n,k}``."""
    if A is None:
        spectrum = np.arange(1, n + 1, dtype=float) if spectrum is None else spectrum
        A = random_symmetric(spectrum, seed)
    A = np.asarray(A, dtype=float)
    return Problem(trace_form(A, k), manifold.stiefel(n, k), A, np.linalg.eigvalsh(A), "stiefel_quadratic")
