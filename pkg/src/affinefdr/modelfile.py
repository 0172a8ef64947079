"""Declarative model files: INI sections in, assembled model objects out.

Sections: [space] grid and weight, [model] kind and coefficients, [cone] and
[subspace] basis curves as closed-form expressions in x, [check] tolerance
and sampling knobs, [sim] simulation configuration.  Curve expressions are
evaluated in a restricted numpy namespace; parse and validation problems
raise ModelFileError with the offending section and key.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

import numpy as np

from .curves import Grid, PointCombo, ShortEnd, Weight
from .errors import ModelFileError
from .hjmm import CirModel, TwoFactorModel
from .simulate import SimConfig

_EXPR_NAMES = {
    "exp": np.exp, "log": np.log, "sqrt": np.sqrt, "sin": np.sin,
    "cos": np.cos, "tanh": np.tanh, "abs": np.abs, "pi": np.pi, "e": np.e,
}


def eval_curve(expr: str, grid: Grid, params: dict[str, float],
               where: str = "curve") -> np.ndarray:
    """Evaluate a closed-form curve expression on the grid.

    The namespace contains x, the model parameters, and a small set of
    numpy functions; builtins are disabled.
    """
    ns = dict(_EXPR_NAMES)
    ns.update(params)
    ns["x"] = grid.x
    try:
        with np.errstate(all="ignore"):
            values = eval(expr, {"__builtins__": {}}, ns)  # noqa: S307 - restricted names
    except Exception as exc:
        raise ModelFileError(f"{where}: cannot evaluate {expr!r}: {exc}") from exc
    values = np.asarray(values, dtype=float)
    if values.ndim == 0:
        values = np.full(grid.n, float(values))
    if values.shape != (grid.n,) or not np.all(np.isfinite(values)):
        raise ModelFileError(f"{where}: expression {expr!r} is not a finite curve")
    return values


def _parse_ell(spec: str, grid: Grid):
    spec = spec.strip()
    if spec == "short_end":
        return ShortEnd()
    if spec.startswith("points:"):
        points, coeffs = [], []
        for item in spec[len("points:"):].split(","):
            item = item.strip()
            if not item:
                continue
            try:
                xs, cs = item.split(":")
                x0 = float(xs)
                points.append(round(x0 / grid.dx) * grid.dx)  # snap to grid
                coeffs.append(float(cs))
            except ValueError as exc:
                raise ModelFileError(f"[model] ell: bad point entry {item!r}") from exc
        if not points:
            raise ModelFileError("[model] ell: no points given")
        return PointCombo(tuple(points), tuple(coeffs))
    raise ModelFileError(f"[model] ell: unknown spec {spec!r}")


KINDS = ("cir", "two_factor", "linear", "custom")


@dataclass(frozen=True)
class ModelSpec:
    """Parsed and validated content of a model file."""

    kind: str
    grid: Grid
    weight: Weight
    rho: float
    gamma: float
    ell: object
    cone_curves: tuple[np.ndarray, ...] = ()
    subspace_curves: tuple[np.ndarray, ...] = ()
    vol_amplitude: str = "sqrt_ell"      # sqrt_ell | const
    vol_curves: tuple[np.ndarray, ...] = ()
    check_options: dict = field(default_factory=dict)
    sim: SimConfig | None = None
    h0: np.ndarray | None = None
    source_text: str = ""

    def cir_model(self) -> CirModel:
        if self.kind != "cir":
            raise ModelFileError(f"model kind is {self.kind!r}, not cir")
        return CirModel(self.grid, self.rho, self.gamma, self.ell)

    def two_factor_model(self) -> TwoFactorModel:
        if self.kind != "two_factor":
            raise ModelFileError(f"model kind is {self.kind!r}, not two_factor")
        return TwoFactorModel(self.grid, rho=self.rho, gamma=self.gamma)


def _get(cfg: configparser.ConfigParser, section: str, key: str, cast,
         default=None, required: bool = False):
    if not cfg.has_option(section, key):
        if required:
            raise ModelFileError(f"[{section}] missing required key {key!r}")
        return default
    raw = cfg.get(section, key)
    try:
        return cast(raw)
    except ValueError as exc:
        raise ModelFileError(f"[{section}] {key}: cannot parse {raw!r}") from exc


def parse_model_text(text: str) -> ModelSpec:
    cfg = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cfg.read_string(text)
    except configparser.Error as exc:
        raise ModelFileError(f"parse error: {exc}") from exc
    if not cfg.has_section("model"):
        raise ModelFileError("missing [model] section")

    x_max = _get(cfg, "space", "x_max", float, 10.0) if cfg.has_section("space") else 10.0
    dx = _get(cfg, "space", "dx", float, 0.005) if cfg.has_section("space") else 0.005
    alpha = _get(cfg, "space", "weight_alpha", float, 4.0) if cfg.has_section("space") else 4.0
    try:
        grid = Grid(x_max, dx)
    except Exception as exc:
        raise ModelFileError(f"[space]: {exc}") from exc
    if alpha <= 3.0:
        raise ModelFileError("[space] weight_alpha must exceed 3")
    weight = Weight(alpha)

    kind = _get(cfg, "model", "kind", str, required=True).strip()
    if kind not in KINDS:
        raise ModelFileError(f"[model] kind must be one of {KINDS}, got {kind!r}")
    rho = _get(cfg, "model", "rho", float, 0.0)
    gamma = _get(cfg, "model", "gamma", float, 0.0)
    params = {"rho": rho, "gamma": gamma}
    ell_spec = _get(cfg, "model", "ell", str, "short_end")
    ell = _parse_ell(ell_spec, grid)

    def section_curves(section: str) -> tuple[np.ndarray, ...]:
        if not cfg.has_section(section):
            return ()
        return tuple(eval_curve(cfg.get(section, key), grid, params,
                                where=f"[{section}] {key}")
                     for key in sorted(cfg.options(section)))

    cone_curves = section_curves("cone")
    subspace_curves = section_curves("subspace")

    vol_amp = _get(cfg, "model", "vol_amplitude", str, "sqrt_ell").strip()
    if vol_amp not in ("sqrt_ell", "const"):
        raise ModelFileError(f"[model] vol_amplitude must be sqrt_ell or const, got {vol_amp!r}")
    vol_curves = ()
    if cfg.has_option("model", "vol_curve"):
        vol_curves = (eval_curve(cfg.get("model", "vol_curve"), grid, params,
                                 where="[model] vol_curve"),)
    if kind in ("linear", "custom") and not vol_curves:
        raise ModelFileError(f"[model] kind {kind!r} requires vol_curve")
    if kind == "custom" and not cone_curves and not subspace_curves:
        raise ModelFileError("[model] kind custom requires [cone] or [subspace] curves")
    if kind == "cir" and rho < 0:
        raise ModelFileError("[model] rho must be nonnegative")

    check_options = {}
    if cfg.has_section("check"):
        check_options["boundary_samples"] = _get(cfg, "check", "boundary_samples", int, 6)
        check_options["max_dim"] = _get(cfg, "check", "max_dim", int, 20)
        check_options["span_tol"] = _get(cfg, "check", "span_tol", float, 1e-5)

    sim = None
    h0 = None
    if cfg.has_section("sim"):
        horizon = _get(cfg, "sim", "horizon", float, required=True)
        dt = _get(cfg, "sim", "dt", float, grid.dx)
        n_paths = _get(cfg, "sim", "paths", int, 1000)
        seed = _get(cfg, "sim", "seed", int, 0)
        scheme = _get(cfg, "sim", "scheme", str, "full_truncation").strip()
        try:
            sim = SimConfig(horizon, dt, n_paths, seed, scheme)
        except Exception as exc:
            raise ModelFileError(f"[sim]: {exc}") from exc
        if cfg.has_option("sim", "h0"):
            h0 = eval_curve(cfg.get("sim", "h0"), grid, params, where="[sim] h0")

    return ModelSpec(kind=kind, grid=grid, weight=weight, rho=rho, gamma=gamma,
                     ell=ell, cone_curves=cone_curves,
                     subspace_curves=subspace_curves, vol_amplitude=vol_amp,
                     vol_curves=vol_curves, check_options=check_options,
                     sim=sim, h0=h0, source_text=text)


def custom_model_data(spec: ModelSpec):
    """ModelData assembly for kind = custom.

    The state space comes from the declared cone and subspace curves with
    the orthogonal-complement split; the volatility is the declared curve
    scaled by a constant or by rho sqrt(|ell(h)|).  Only split-independent
    structural checks should be run on this assembly.
    """
    from . import realization as rz
    from .cones import ConeBasis, StateBasis, orthogonal_split
    from .curves import apply_functional, derivative
    from .hjmm import build_s_operator

    grid = spec.grid
    cone_rows = np.array([c / np.linalg.norm(c) for c in spec.cone_curves]) \
        if spec.cone_curves else np.zeros((0, grid.n))
    sub_rows = np.array(spec.subspace_curves) if spec.subspace_curves \
        else np.zeros((0, grid.n))
    try:
        basis = StateBasis(ConeBasis(cone_rows, normed=bool(spec.cone_curves)),
                           subspace=sub_rows)
        split = orthogonal_split(basis)
    except Exception as exc:
        raise ModelFileError(f"[cone]/[subspace]: {exc}") from exc
    B = basis.matrix
    s_op = build_s_operator(B, grid)
    vol = spec.vol_curves[0]
    coef, *_ = np.linalg.lstsq(B.T, vol, rcond=None)
    resid = np.linalg.norm(vol - B.T @ coef)
    if resid > 1e-6 * max(1.0, np.linalg.norm(vol)):
        raise ModelFileError("[model] vol_curve does not lie in the state space")
    outer = np.outer(coef, coef)

    def sigma_sq_at(h: np.ndarray) -> np.ndarray:
        if spec.vol_amplitude == "const":
            return spec.rho * spec.rho * outer
        amp = spec.rho * spec.rho * abs(float(apply_functional(spec.ell, h, grid)))
        return amp * outer

    x = grid.x
    shapes = [x * np.exp(-x), np.sin(x) * np.exp(-0.5 * x), x * np.exp(-2.0 * x)]
    n_b = spec.check_options.get("boundary_samples", 3)
    boundary_samples = [split.project_g(0.05 * s) for s in shapes[:max(1, n_b)]]
    tol = rz.Tolerances(span=spec.check_options.get("span_tol", 1e-5))

    return rz.ModelData(
        split=split,
        apply_a=lambda h: derivative(h, grid),
        s_op=s_op,
        sigma_sq_at=sigma_sq_at,
        boundary_samples=boundary_samples,
        r_basis=[outer / max(np.abs(outer).max(), 1e-30)],
        tol=tol,
    )


def parse_model_file(path: str) -> ModelSpec:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ModelFileError(f"cannot read {path}: {exc}") from exc
    return parse_model_text(text)
