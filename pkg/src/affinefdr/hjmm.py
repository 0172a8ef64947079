"""Forward-rate models with square-root volatility and their Riccati curves.

The one-dimensional model has volatility sigma(h) = rho sqrt(ell(h)) lam,
where lam solves the pre-Riccati equation lam' + rho^2 lam Lam + gamma lam = 0
and Lam is its primitive, the solution of the scalar Riccati equation

    Lam' + (rho^2 / 2) Lam^2 + gamma Lam = 1,   Lam(0) = 0.

The closed form uses theta = sqrt(gamma^2 + 2 rho^2) throughout and is
evaluated in an overflow-free rational-in-expm1 arrangement.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import realization as rz
from .cones import ConeBasis, SplitSpace, StateBasis, orthogonal_split
from .curves import Grid, PointCombo, ShortEnd, apply_functional, derivative, primitive
from .errors import ConstraintViolated


def riccati_capital(x, rho: float, gamma: float) -> np.ndarray:
    """Solution Lam of Lam' + (rho^2/2) Lam^2 + gamma Lam = 1, Lam(0) = 0.

    Stable closed form: with theta = sqrt(gamma^2 + 2 rho^2) and
    E = 1 - exp(-theta x),

        Lam(x) = 2 E / ((theta + gamma) E + 2 theta exp(-theta x)).

    Degenerate rho = gamma = 0 gives Lam(x) = x.
    """
    x = np.asarray(x, dtype=float)
    theta = np.sqrt(gamma * gamma + 2.0 * rho * rho)
    if theta == 0.0:
        return x.copy()
    e = -np.expm1(-theta * x)
    return 2.0 * e / ((theta + gamma) * e + 2.0 * theta * np.exp(-theta * x))


def riccati_small(x, rho: float, gamma: float) -> np.ndarray:
    """The derivative lam = Lam' = 1 - (rho^2/2) Lam^2 - gamma Lam."""
    lam_cap = riccati_capital(x, rho, gamma)
    return 1.0 - (rho * rho / 2.0) * lam_cap * lam_cap - gamma * lam_cap


def riccati_pair(rho: float, gamma: float, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Grid samples of (Lam, lam)."""
    return riccati_capital(grid.x, rho, gamma), riccati_small(grid.x, rho, gamma)


def riccati_rk4(grid: Grid, rho: float, gamma: float, substeps: int = 4) -> np.ndarray:
    """Classical Runge-Kutta reference integration of the Riccati equation."""

    def f(y):
        return 1.0 - (rho * rho / 2.0) * y * y - gamma * y

    out = np.empty(grid.n)
    out[0] = 0.0
    h = grid.dx / substeps
    y = 0.0
    for i in range(1, grid.n):
        for _ in range(substeps):
            k1 = f(y)
            k2 = f(y + h / 2 * k1)
            k3 = f(y + h / 2 * k2)
            k4 = f(y + h * k3)
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i] = y
    return out


def hjm_drift(sigma_curves: np.ndarray, grid: Grid) -> np.ndarray:
    """Drift alpha(x) = sum_k sigma_k(x) * int_0^x sigma_k(u) du.

    sigma_curves has one volatility component per row.
    """
    sig = np.atleast_2d(np.asarray(sigma_curves, dtype=float))
    return np.sum(sig * primitive(sig, grid), axis=0)


def build_s_operator(basis_curves: np.ndarray, grid: Grid) -> Callable[[np.ndarray], np.ndarray]:
    """Map from state-coordinate matrices to curves matching the HJM drift.

    For a volatility sigma = sum_i c_i b_i with coordinate matrix
    Phi = c c^T this operator reproduces the HJM drift:
    S(Phi) = sum_ij Phi_ij b_j(x) int_0^x b_i(u) du.
    """
    curves = np.atleast_2d(np.asarray(basis_curves, dtype=float))
    prims = primitive(curves, grid)

    def s_op(phi: np.ndarray) -> np.ndarray:
        phi = np.asarray(phi, dtype=float)
        # sum_ij phi_ij b_j * B_i  ==  sum_i B_i * (phi @ b)_i
        return np.einsum("ij,jx,ix->x", phi, curves, prims)

    return s_op


@dataclass(frozen=True)
class CirModel:
    """Square-root forward-rate model with a one-dimensional state space.

    rho = 0 is accepted and degenerates to a deterministic state process.
    """

    grid: Grid
    rho: float
    gamma: float
    ell: object = field(default_factory=ShortEnd)

    def __post_init__(self):
        if self.rho < 0 or self.gamma < 0:
            raise ConstraintViolated("rho and gamma must be nonnegative")
        if self.rho == 0 and self.gamma == 0:
            raise ConstraintViolated("rho and gamma cannot both vanish")
        if abs(self.ell_of(self.lam) - 1.0) > 1e-8:
            raise ConstraintViolated("functional must normalize lam to 1")

    @property
    def lam(self) -> np.ndarray:
        return riccati_small(self.grid.x, self.rho, self.gamma)

    @property
    def lam_capital(self) -> np.ndarray:
        return riccati_capital(self.grid.x, self.rho, self.gamma)

    def ell_of(self, values: np.ndarray) -> np.ndarray:
        return apply_functional(self.ell, values, self.grid)

    def sigma(self, h: np.ndarray) -> np.ndarray:
        """Volatility curve rho sqrt(ell(h)) lam; negative ell clipped to 0."""
        amp = self.rho * np.sqrt(np.maximum(self.ell_of(h), 0.0))
        return np.multiply.outer(amp, self.lam) if np.ndim(amp) else amp * self.lam

    def drift(self, h: np.ndarray) -> np.ndarray:
        """Full SPDE drift d/dx h + alpha_HJM(h)."""
        amp = self.rho * self.rho * np.maximum(self.ell_of(h), 0.0)
        alpha = np.multiply.outer(amp, self.lam * self.lam_capital) \
            if np.ndim(amp) else amp * self.lam * self.lam_capital
        return derivative(h, self.grid) + alpha

    @property
    def state_drift_slope(self) -> float:
        """Coefficient a in the state equation dX = (b(t) + a X) dt + ...

        Computed as ell applied to the generator drift of lam:
        a = ell(lam') + rho^2 ell(lam Lam) reduces to -gamma - rho^2 ell(lam Lam)
        + rho^2 ell(lam Lam) cancellation aside; evaluated numerically so it
        stays correct for any normalizing functional.
        """
        lam_prime = derivative(self.lam, self.grid)
        return float(self.ell_of(lam_prime) + self.rho * self.rho
                     * self.ell_of(self.lam * self.lam_capital))

    def split(self) -> SplitSpace:
        """Direct-sum split with V = <lam>+ and G = ker ell."""
        lam_norm = float(np.linalg.norm(self.lam))
        basis = StateBasis(ConeBasis(self.lam.reshape(1, -1) / lam_norm, normed=True))
        dual = (getattr(self.ell, "dual_vector")(self.grid) * lam_norm).reshape(1, -1)
        return SplitSpace(basis, dual)

    def model_data(self, boundary_samples=None, tol: rz.Tolerances | None = None,
                   lam_override: np.ndarray | None = None) -> rz.ModelData:
        """Assembled checker input; lam_override swaps in a non-Riccati lam.

        The override rebuilds the state space, the drift-image operator and
        the volatility around the supplied curve, which is how failures of
        the realizability conditions are exercised.
        """
        lam = self.lam if lam_override is None else np.asarray(lam_override, dtype=float)
        lam_norm = float(np.linalg.norm(lam))
        basis = StateBasis(ConeBasis(lam.reshape(1, -1) / lam_norm, normed=True))
        ell_lam = float(self.ell_of(lam))
        dual = (getattr(self.ell, "dual_vector")(self.grid)
                * lam_norm / ell_lam).reshape(1, -1)
        split = SplitSpace(basis, dual)
        if boundary_samples is None:
            boundary_samples = default_boundary_samples(self, split)
        basis_curve = (lam / lam_norm).reshape(1, -1)
        s_op = build_s_operator(basis_curve, self.grid)

        def sigma_sq_at(h: np.ndarray) -> np.ndarray:
            amp = self.rho * self.rho * max(float(self.ell_of(h)), 0.0)
            return np.array([[amp * lam_norm * lam_norm]])

        return rz.ModelData(
            split=split,
            apply_a=lambda h: derivative(h, self.grid),
            s_op=s_op,
            sigma_sq_at=sigma_sq_at,
            boundary_samples=list(boundary_samples),
            tol=tol if tol is not None else rz.Tolerances(),
        )

    def initial_set(self, h: np.ndarray) -> tuple[bool, bool]:
        """Membership in the maximal initial set, and boundary flag.

        A curve belongs iff ell(h) >= 0 and
        ell(h') + (rho^2 ell(lam Lam) + gamma) ell(h) > 0; it sits on the
        boundary iff additionally ell(h) = 0.
        """
        h = np.asarray(h, dtype=float)
        val = float(self.ell_of(h))
        scale = max(1.0, float(np.linalg.norm(h)))
        tol = 1e-9 * scale
        if val < -tol:
            return False, False
        coef = self.rho * self.rho * float(self.ell_of(self.lam * self.lam_capital)) + self.gamma
        strict = float(self.ell_of(derivative(h, self.grid))) + coef * max(val, 0.0)
        if strict <= tol:
            return False, False
        return True, bool(abs(val) <= tol)


def cir_initial_set(h: np.ndarray, model: CirModel) -> tuple[bool, bool]:
    """Functional form of CirModel.initial_set."""
    return model.initial_set(h)


def sigma_cir(h: np.ndarray, model: CirModel) -> np.ndarray:
    """Volatility curve rho sqrt(|ell(h)|) lam."""
    amp = model.rho * np.sqrt(np.abs(model.ell_of(h)))
    return np.multiply.outer(amp, model.lam) if np.ndim(amp) else amp * model.lam


def default_boundary_samples(model: CirModel, split: SplitSpace, n: int = 6,
                             seed: int = 7) -> list[np.ndarray]:
    """Smooth curves in G = ker ell whose short-end drift points inward.

    Every shape vanishes at x = 0 with strictly positive slope, so positive
    combinations stay strictly inside the boundary-drift condition; beyond
    the named shapes, random positive mixtures are drawn.
    """
    x = model.grid.x
    shapes = np.array([x * np.exp(-a * x) for a in (0.5, 1.0, 1.5, 2.0, 3.0)]
                      + [np.sin(b * x) * np.exp(-x) for b in (0.5, 1.0, 2.0)])
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        s = shapes[i] if i < len(shapes) else \
            rng.uniform(0.2, 1.0, size=len(shapes)) @ shapes
        out.append(split.project_g(0.05 * s / max(1.0, float(np.abs(s).max()))))
    return out


@dataclass(frozen=True)
class TwoFactorModel:
    """Square-root model on V = <lam>+ (+) <lam^2> with lam = exp(-gamma x).

    The functional is a two-point combination chosen so that ell(lam) = 1
    and ell(lam^2) = 0; with gamma = 1 and x1 = ln 2 the coefficients are
    a = -1 at 0 and b = 4 at x1.
    """

    grid: Grid
    rho: float = 0.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.gamma <= 0:
            raise ConstraintViolated("gamma must be positive")

    @property
    def x1(self) -> float:
        x1 = np.log(2.0) / self.gamma
        i = round(x1 / self.grid.dx)  # snap to the grid
        return i * self.grid.dx

    @property
    def ell(self) -> PointCombo:
        # coefficients solve ell(lam) = 1, ell(lam^2) = 0 at the snapped x1
        l1 = np.exp(-self.gamma * self.x1)
        a = np.linalg.solve(np.array([[1.0, l1], [1.0, l1 * l1]]), np.array([1.0, 0.0]))
        return PointCombo((0.0, self.x1), (float(a[0]), float(a[1])))

    @property
    def lam(self) -> np.ndarray:
        return np.exp(-self.gamma * self.grid.x)

    def ell_of(self, values: np.ndarray) -> np.ndarray:
        return apply_functional(self.ell, values, self.grid)

    def split(self) -> SplitSpace:
        lam = self.lam
        lam_norm = float(np.linalg.norm(lam))
        basis = StateBasis(ConeBasis((lam / lam_norm).reshape(1, -1), normed=True),
                           subspace=(lam * lam).reshape(1, -1))
        d1 = self.ell.dual_vector(self.grid) * lam_norm
        # second dual row: orthogonal dual of lam^2 already annihilates lam-hat
        d2 = orthogonal_split(basis).dual[1]
        return SplitSpace(basis, np.vstack([d1, d2]))

    def initial_set(self, h: np.ndarray) -> tuple[bool, bool]:
        """Membership: ell(h) >= 0 and ell(h' + gamma h) > 0."""
        h = np.asarray(h, dtype=float)
        val = float(self.ell_of(h))
        scale = max(1.0, float(np.linalg.norm(h)))
        tol = 1e-9 * scale
        if val < -tol:
            return False, False
        strict = float(self.ell_of(derivative(h, self.grid) + self.gamma * h))
        if strict <= tol:
            return False, False
        return True, bool(abs(val) <= tol)


def two_factor_initial_set(h: np.ndarray, model: TwoFactorModel) -> bool:
    member, _ = model.initial_set(h)
    return member


def build_two_factor_model_data(model: TwoFactorModel,
                                boundary_samples=None) -> rz.ModelData:
    """ModelData for the two-factor state space.

    The volatility is rho sqrt(ell(h)) lam; its squared-volatility matrix in
    the normed basis is rho^2 ell(h) |lam|^2 on the cone coordinate, zero on
    the subspace block, and vanishes on the boundary leaves.
    """
    split = model.split()
    grid = model.grid
    lam_norm = float(np.linalg.norm(model.lam))
    s_op = build_s_operator(split.v_basis.matrix, grid)

    def sigma_sq_at(h: np.ndarray) -> np.ndarray:
        amp = model.rho * model.rho * max(float(model.ell_of(h)), 0.0)
        out = np.zeros((2, 2))
        out[0, 0] = amp * lam_norm * lam_norm
        return out

    if boundary_samples is None:
        x = grid.x
        shapes = [x * np.exp(-x), np.sin(x) * np.exp(-0.5 * x)]
        boundary_samples = [split.project_g(0.05 * s) for s in shapes]

    return rz.ModelData(
        split=split,
        apply_a=lambda h: derivative(h, grid),
        s_op=s_op,
        sigma_sq_at=sigma_sq_at,
        boundary_samples=list(boundary_samples),
    )


def build_example64_model_data(grid: Grid, gamma: float = 1.0,
                               rho: float = 0.2) -> rz.ModelData:
    """Two-dimensional state space whose drift image leaks into V.

    Volatility rho sqrt(ell(h)) lam on V = <lam>+ (+) <lam^2>: the image of
    the squared-volatility family under the drift operator is the span of
    lam (1 - lam) / gamma, which lies inside V, so the intersection
    conditions for realizability with affine state processes fail.
    """
    model = TwoFactorModel(grid, rho=rho, gamma=gamma)
    split = model.split()
    lam_norm = float(np.linalg.norm(model.lam))
    s_op = build_s_operator(split.v_basis.matrix, grid)

    def sigma_sq_at(h: np.ndarray) -> np.ndarray:
        amp = rho * rho * max(float(model.ell_of(h)), 0.0)
        out = np.zeros((2, 2))
        out[0, 0] = amp * lam_norm * lam_norm
        return out

    x = grid.x
    shapes = [x * np.exp(-x), np.sin(x) * np.exp(-0.5 * x)]
    boundary_samples = [split.project_g(0.05 * s) for s in shapes]
    r_basis = [np.array([[1.0, 0.0], [0.0, 0.0]])]

    return rz.ModelData(
        split=split,
        apply_a=lambda h: derivative(h, grid),
        s_op=s_op,
        sigma_sq_at=sigma_sq_at,
        boundary_samples=boundary_samples,
        r_basis=r_basis,
    )
