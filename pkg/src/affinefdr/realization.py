"""Executable realizability checks for SPDEs with volatility-structured drift.

The checks certify, on a finite sample of boundary curves, that a model of
the form  dr = (A r + S sigma^2(r)) dt + sigma(r) dW  admits an affine
realization on a cone-plus-subspace state space with affine and admissible
state processes.  Universally quantified conditions over the boundary set
are verified on the supplied samples; the report says so explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import admissibility as adm
from .admissibility import AffineSquareVol
from .cones import SplitSpace, membership_coords
from .errors import AffineFdrError, DimensionExceeded, NotAffine, NotInDomain


@dataclass(frozen=True)
class Tolerances:
    """Numerical bands for span, membership, and affinity tests."""

    span: float = 1e-5        # relative residual for "lies in span V"
                              # (limited by the second-order boundary stencils)
    membership: float = 1e-9  # band for cone-coordinate sign tests
    affine: float = 1e-6      # relative residual for affine fits
    rank: float = 1e-9        # relative singular-value cutoff


@dataclass
class ModelData:
    """Everything the checkers need, on a common grid representation.

    apply_a differentiates/transports ambient curves, s_op maps symmetric
    state-space matrices to ambient curves, sigma_sq_at evaluates the squared
    volatility (in state-basis coordinates) at an ambient curve, and
    boundary_samples is a finite list of boundary representatives.
    """

    split: SplitSpace
    apply_a: Callable[[np.ndarray], np.ndarray]
    s_op: Callable[[np.ndarray], np.ndarray]
    sigma_sq_at: Callable[[np.ndarray], np.ndarray]
    boundary_samples: Sequence[np.ndarray]
    r_basis: Sequence[np.ndarray] | None = None
    tol: Tolerances = field(default_factory=Tolerances)

    @property
    def dim_v(self) -> int:
        return self.split.v_basis.dim_v

    @property
    def m(self) -> int:
        return self.split.v_basis.m


def _span_residual(curve: np.ndarray, basis_matrix: np.ndarray) -> float:
    """Relative residual of a curve after least-squares projection onto a span."""
    norm = np.linalg.norm(curve)
    if norm == 0.0:
        return 0.0
    coef, *_ = np.linalg.lstsq(basis_matrix.T, curve, rcond=None)
    return float(np.linalg.norm(curve - basis_matrix.T @ coef) / norm)


def fit_boundary_square_vol(model: ModelData, g: np.ndarray) -> AffineSquareVol:
    """Affine fit of v -> sigma^2(g + v) from perturbations along the basis.

    Perturbation steps t in {0, 1/2, 1} along each basis direction; three
    collinear points also detect non-affinity.
    """
    basis = model.split.v_basis
    B = basis.matrix
    d = basis.dim_v
    samples = [(np.zeros(d), model.sigma_sq_at(g))]
    for i in range(d):
        for t in (0.5, 1.0):
            v = np.zeros(d)
            v[i] = t
            samples.append((v, model.sigma_sq_at(g + t * B[i])))
    return adm.fit_affine_square(samples, basis, tol=model.tol.affine)


@dataclass(frozen=True)
class ConditionResult:
    name: str
    ok: bool
    detail: str = ""


@dataclass(frozen=True)
class RealizabilityReport:
    """Per-condition verdicts over all boundary samples."""

    conditions: tuple[ConditionResult, ...]

    @property
    def overall(self) -> bool:
        return all(c.ok for c in self.conditions)

    def failed(self) -> list[ConditionResult]:
        return [c for c in self.conditions if not c.ok]

    def by_name(self, name: str) -> list[ConditionResult]:
        return [c for c in self.conditions if c.name == name]


def check_beta_inc_v(model: ModelData, g: np.ndarray,
                     sqvol: AffineSquareVol | None = None) -> bool:
    """Whether A v + S sigma_g^2(v) stays in span V for every basis vector v."""
    if sqvol is None:
        sqvol = fit_boundary_square_vol(model, g)
    B = model.split.v_basis.matrix
    for i in range(model.dim_v):
        v = np.zeros(model.dim_v)
        v[i] = 1.0
        curve = model.apply_a(B[i]) + model.s_op(sqvol(v) - sqvol.t1)
        if _span_residual(curve, B) > model.tol.span:
            return False
    return True


def check_thm_main2(model: ModelData) -> RealizabilityReport:
    """Full realizability check on every boundary sample.

    Per sample: the squared volatility must fit affinely and be parallel,
    the projected boundary drift must lie in the state space, each edge
    image under A + S sigma_g^2 must lie in the edge-widened state space,
    and the subspace must be invariant under A.  Failures are recorded
    per condition; one failing fit never aborts the report.
    """
    basis = model.split.v_basis
    B = basis.matrix
    m, d = model.m, model.dim_v
    tol = model.tol
    results: list[ConditionResult] = []
    for idx, g in enumerate(model.boundary_samples):
        tag = f"g[{idx}]"
        try:
            sqvol = fit_boundary_square_vol(model, g)
        except (NotAffine, AffineFdrError) as exc:
            results.append(ConditionResult("sigma-affine-parallel", False, f"{tag}: {exc}"))
            continue
        par = adm.is_parallel(sqvol, basis, tol=tol.membership)
        results.append(ConditionResult(
            "sigma-affine-parallel", par.ok,
            f"{tag}" + ("" if par.ok else f": violations {par.witnesses[:2]}")))

        curve = model.apply_a(g) + model.s_op(sqvol.t1)
        coords = model.split.v_coords(curve)
        scale = max(1.0, float(np.linalg.norm(coords)))
        ok1 = membership_coords(coords, m, "closed", tol=tol.membership * scale)
        results.append(ConditionResult("cond-AR-1", ok1,
                                       f"{tag}: coords {np.round(coords, 6)}"))

        ok2 = True
        detail2 = tag
        for k in range(m):
            v = np.zeros(d)
            v[k] = 1.0
            edge_curve = model.apply_a(B[k]) + model.s_op(sqvol(v) - sqvol.t1)
            resid = _span_residual(edge_curve, B)
            if resid > tol.span:
                ok2 = False
                detail2 = f"{tag}: edge {k} off-V residual {resid:.3e}"
                break
            coef, *_ = np.linalg.lstsq(B.T, edge_curve, rcond=None)
            scale = max(1.0, float(np.linalg.norm(coef)))
            if not membership_coords(coef, m, "shifted", shift_index=k,
                                     tol=tol.membership * scale):
                ok2 = False
                detail2 = f"{tag}: edge {k} coords {np.round(coef, 6)}"
                break
        results.append(ConditionResult("cond-AR-2", ok2, detail2))

        ok3 = True
        detail3 = tag
        for k in range(m, d):
            a_u = model.apply_a(B[k])
            resid = _span_residual(a_u, B)
            coef, *_ = np.linalg.lstsq(B.T, a_u, rcond=None)
            cone_leak = float(np.max(np.abs(coef[:m]), initial=0.0))
            scale = max(1.0, float(np.linalg.norm(coef)))
            if resid > tol.span or cone_leak > tol.span * scale:
                ok3 = False
                detail3 = f"{tag}: u-dir {k} residual {resid:.3e}, cone leak {cone_leak:.3e}"
                break
        results.append(ConditionResult("cond-AR-3", ok3, detail3))

        okv = check_beta_inc_v(model, g, sqvol)
        results.append(ConditionResult("beta-inc-V", okv, tag))
    return RealizabilityReport(tuple(results))


@dataclass(frozen=True)
class KSpace:
    """Basis of the symmetric matrices in R that S maps into span V."""

    basis: tuple[np.ndarray, ...]

    @property
    def dim(self) -> int:
        return len(self.basis)


def _default_r_basis(model: ModelData) -> list[np.ndarray]:
    if model.r_basis is not None:
        return [np.asarray(r, dtype=float) for r in model.r_basis]
    mats = []
    B = model.split.v_basis.matrix
    for g in model.boundary_samples:
        mats.append(model.sigma_sq_at(g))
        for i in range(model.dim_v):
            mats.append(model.sigma_sq_at(g + B[i]))
    if not mats:
        return []
    d = model.dim_v
    flat = np.array([m.ravel() for m in mats])
    u, s, vt = np.linalg.svd(flat, full_matrices=False)
    rank = int(np.sum(s > model.tol.rank * max(s[0], 1e-30))) if s.size else 0
    return [vt[i].reshape(d, d) for i in range(rank)]


def compute_k(model: ModelData) -> KSpace:
    """Nullspace construction of the matrices in span R mapped into V by S."""
    r_basis = _default_r_basis(model)
    if not r_basis:
        return KSpace(())
    B = model.split.v_basis.matrix
    residuals = []
    for r in r_basis:
        curve = model.s_op(r)
        coef, *_ = np.linalg.lstsq(B.T, curve, rcond=None)
        residuals.append(curve - B.T @ coef)
    M = np.array(residuals).T  # ambient x nR
    _, s, vt = np.linalg.svd(M, full_matrices=True)
    scale = max(float(s[0]) if s.size else 0.0, 1e-30)
    in_null = np.ones(len(r_basis), dtype=bool)
    in_null[: s.size] = s <= model.tol.span * scale
    basis = [sum(ci * ri for ci, ri in zip(c, r_basis)) for c in vt[in_null]]
    return KSpace(tuple(basis))


def check_const_mod_k(model: ModelData, kspace: KSpace | None = None) -> bool:
    """Whether the boundary dependence of the squared volatility lies in K.

    For all pairs of boundary samples and all basis directions, the
    difference of the fitted linear parts must lie in span K.
    """
    if kspace is None:
        kspace = compute_k(model)
    fits = [fit_boundary_square_vol(model, g) for g in model.boundary_samples]
    if len(fits) < 2:
        return True
    kmat = np.array([k.ravel() for k in kspace.basis]) if kspace.dim else None
    ref = fits[0]
    for other in fits[1:]:
        for i in range(model.dim_v):
            diff = (other.t2[i] - ref.t2[i]).ravel()
            norm = np.linalg.norm(diff)
            if norm <= model.tol.span * max(1.0, np.abs(ref.t2).max()):
                continue
            if kmat is None:
                return False
            coef, *_ = np.linalg.lstsq(kmat.T, diff, rcond=None)
            if np.linalg.norm(diff - kmat.T @ coef) > model.tol.span * norm:
                return False
    return True


def _numerical_rank(mat: np.ndarray, rel_tol: float) -> int:
    if mat.size == 0:
        return 0
    s = np.linalg.svd(mat, compute_uv=False)
    return int(np.sum(s > rel_tol * s[0]))


def check_damir(model: ModelData) -> bool:
    """Both intersection conditions: V and S(R) meet only at 0, and S is
    injective on R."""
    r_basis = _default_r_basis(model)
    if not r_basis:
        return True
    sr = np.array([model.s_op(r) for r in r_basis])
    rank_sr = _numerical_rank(sr, model.tol.rank * 1e3)
    if rank_sr < len(r_basis):
        return False  # ker(S) meets R nontrivially
    B = model.split.v_basis.matrix
    Bn = B / np.linalg.norm(B, axis=1, keepdims=True)
    srn = sr / np.linalg.norm(sr, axis=1, keepdims=True)
    stacked = np.vstack([Bn, srn])
    return _numerical_rank(stacked, model.tol.rank * 1e3) == Bn.shape[0] + rank_sr


def quasi_exp_subspace(apply_a: Callable[[np.ndarray], np.ndarray],
                       sigma_vectors: Sequence[np.ndarray],
                       max_dim: int = 20, tol: float = 1e-3) -> np.ndarray:
    """Iterated-image subspace of the volatility vectors under the generator.

    Krylov-style: start from the volatility vectors, repeatedly apply the
    generator, orthonormalize, and stop once no new direction appears above
    tol (relative).  Raises DimensionExceeded past max_dim, signalling that
    the volatility is not quasi-exponential at this resolution.
    """
    basis: list[np.ndarray] = []

    def try_add(v: np.ndarray) -> bool:
        norm0 = np.linalg.norm(v)
        if norm0 == 0.0:
            return False
        w = v.copy()
        for _ in range(2):  # modified Gram-Schmidt, twice for stability
            for q in basis:
                w = w - np.dot(q, w) * q
        norm = np.linalg.norm(w)
        if norm <= tol * norm0:
            return False
        basis.append(w / norm)
        return True

    frontier = [np.asarray(v, dtype=float) for v in sigma_vectors]
    while frontier:
        new = []
        for v in frontier:
            if try_add(v):
                if len(basis) > max_dim:
                    raise DimensionExceeded(
                        f"iterated subspace exceeds {max_dim} dimensions")
                new.append(basis[-1])
        frontier = [apply_a(q) for q in new]
    return np.array(basis)


@dataclass(frozen=True)
class QeReport:
    """Outcome of the quasi-exponential affine-state criterion."""

    a_sigma_dim: int
    a_sigma_in_v: bool
    square_vol_constant: bool
    sigma_constant: bool | None = None

    @property
    def ok(self) -> bool:
        extra = True if self.sigma_constant is None else self.sigma_constant
        return self.a_sigma_in_v and self.square_vol_constant and extra


def check_qe_affine(apply_a: Callable[[np.ndarray], np.ndarray],
                    sigma_at: Callable[[np.ndarray], list[np.ndarray]],
                    v_basis_curves: np.ndarray,
                    probe_curves: Sequence[np.ndarray],
                    max_dim: int = 20, tol: float = 1e-3,
                    rank_one_vol: bool = False) -> QeReport:
    """Quasi-exponential criterion for affine admissible subspace realizations.

    Checks that the iterated volatility subspace lies in span V and that the
    squared volatility does not vary along V at any probe curve.  When each
    volatility component spans at most one direction, constancy of the
    squared volatility upgrades to constancy of the volatility itself, which
    is checked directly.
    """
    seeds: list[np.ndarray] = []
    for h in probe_curves:
        seeds.extend(sigma_at(h))
    a_sigma = quasi_exp_subspace(apply_a, seeds, max_dim=max_dim, tol=tol)
    in_v = all(_span_residual(q, v_basis_curves) <= max(tol, 1e-6) for q in a_sigma)

    sq_const = True
    sig_const = True if rank_one_vol else None
    ref_vecs = sigma_at(probe_curves[0])
    ref_sq = _gram(ref_vecs)
    scale = max(1.0, np.abs(ref_sq).max(initial=0.0))
    for h in probe_curves:
        for v in list(v_basis_curves) + [np.zeros_like(h)]:
            vecs = sigma_at(h + v)
            if np.max(np.abs(_gram(vecs) - ref_sq)) > 1e3 * tol * scale:
                sq_const = False
            if rank_one_vol:
                for a, b in zip(vecs, ref_vecs):
                    if np.linalg.norm(a - b) > 1e3 * tol * max(1.0, np.linalg.norm(b)):
                        sig_const = False
    return QeReport(a_sigma_dim=len(a_sigma), a_sigma_in_v=in_v,
                    square_vol_constant=sq_const, sigma_constant=sig_const)


def _gram(vecs: Sequence[np.ndarray]) -> np.ndarray:
    arr = np.array(vecs)
    return arr @ arr.T


def maximal_initial_membership(h: np.ndarray, model: ModelData,
                               deriv_check: bool = True) -> tuple[bool, bool]:
    """Membership of a curve in the maximal initial set, and boundary flag.

    A member has its V-part in the state space and the projected drift of
    its boundary part strictly inside; it sits on the boundary when its
    V-part vanishes.
    """
    h = np.asarray(h, dtype=float)
    if deriv_check and not np.all(np.isfinite(model.apply_a(h))):
        raise NotInDomain("generator not evaluable on this curve")
    coords = model.split.v_coords(h)
    m = model.m
    scale = max(1.0, float(np.linalg.norm(coords)))
    if not membership_coords(coords, m, "closed", tol=model.tol.membership * scale):
        return False, False
    g = model.split.project_g(h)
    drift_coords = model.split.v_coords(model.apply_a(g) + model.s_op(model.sigma_sq_at(g)))
    interior = membership_coords(drift_coords, m, "interior",
                                 tol=model.tol.membership)
    if not interior:
        return False, False
    on_boundary = bool(np.linalg.norm(coords) <= 1e3 * model.tol.membership * max(
        1.0, float(np.linalg.norm(h))))
    return True, on_boundary
