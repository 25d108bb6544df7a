"""Small state-space models with affine parameter dependence.

Builds the constrained problems consumed by :mod:`randrobust.engine` for
four formulations: robust stability, stability margin, performance range
and constrained H-infinity synthesis. Models are read from a JSON file
format (see :class:`ModelFile`).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.optimize import minimize_scalar

from .engine import ConstrainedProblem, Coordinate, ParameterSpace
from .errors import ConfigurationError, InstabilityError, NumericalError

__all__ = [
    "AffineMatrix",
    "StateSpaceModel",
    "SynthesisProblem",
    "spectral_abscissa",
    "hinf_norm",
    "robust_stability_problem",
    "stability_margin_problem",
    "performance_range_problem",
    "synthesis_problem",
    "ModelFile",
    "load_model",
    "problem_from_model",
    "bundled_models",
]

MAX_ORDER = 16
DEFAULT_GRID = 400
DEFAULT_BAND = (1e-4, 1e4)


class AffineMatrix:
    """Matrix whose entries are ``c_0 + sum_i c_i q_i``.

    ``coeffs`` has shape ``(rows, cols, 1 + n_params)``.
    """

    def __init__(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.ndim != 3 or coeffs.shape[2] < 1:
            raise ConfigurationError(f"affine coefficients need shape (r, c, 1+d), got {coeffs.shape}")
        if not np.all(np.isfinite(coeffs)):
            raise ConfigurationError("affine coefficients must be finite")
        self.coeffs = coeffs
        self.coeffs.setflags(write=False)

    @classmethod
    def constant(cls, matrix, n_params: int = 0) -> "AffineMatrix":
        m = np.atleast_2d(np.asarray(matrix, dtype=float))
        c = np.zeros(m.shape + (1 + n_params,))
        c[:, :, 0] = m
        return cls(c)

    @property
    def shape(self):
        return self.coeffs.shape[:2]

    @property
    def n_params(self) -> int:
        return self.coeffs.shape[2] - 1

    def at(self, q) -> np.ndarray:
        q = np.atleast_1d(np.asarray(q, dtype=float))
        if q.shape != (self.n_params,):
            raise ConfigurationError(f"expected {self.n_params} parameters, got {q.shape}")
        return self.coeffs[:, :, 0] + self.coeffs[:, :, 1:] @ q


@dataclass(frozen=True)
class StateSpaceModel:
    """``(A(q), B(q), C(q), D(q))`` with affine entries."""

    A: AffineMatrix
    B: AffineMatrix
    C: AffineMatrix
    D: AffineMatrix

    def __post_init__(self):
        n, n2 = self.A.shape
        if n != n2:
            raise ConfigurationError(f"A must be square, got {self.A.shape}")
        if n > MAX_ORDER:
            raise ConfigurationError(f"state dimension {n} exceeds the supported {MAX_ORDER}")
        if self.B.shape[0] != n or self.C.shape[1] != n:
            raise ConfigurationError("B must have n rows and C n columns")
        if self.D.shape != (self.C.shape[0], self.B.shape[1]):
            raise ConfigurationError(f"D must be {self.C.shape[0]}x{self.B.shape[1]}, got {self.D.shape}")
        counts = {m.n_params for m in (self.A, self.B, self.C, self.D)}
        if len(counts) != 1:
            raise ConfigurationError(f"matrices disagree on the number of parameters: {sorted(counts)}")

    @property
    def n_params(self) -> int:
        return self.A.n_params

    @property
    def order(self) -> int:
        return self.A.shape[0]

    def at(self, q):
        return self.A.at(q), self.B.at(q), self.C.at(q), self.D.at(q)


@dataclass(frozen=True)
class SynthesisProblem:
    """Closed loop ``F_l(P, K(q))`` over controller parameters with decay margin ``alpha``."""

    plant: StateSpaceModel
    space: ParameterSpace
    decay_margin: float

    def __post_init__(self):
        if not (self.decay_margin > 0 and math.isfinite(self.decay_margin)):
            raise ConfigurationError(f"decay_margin must be positive, got {self.decay_margin!r}")


# ---------------------------------------------------------------------------
# Numerical kernels
# ---------------------------------------------------------------------------


def spectral_abscissa(A) -> float:
    """Largest real part among the eigenvalues of the square matrix ``A``."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ConfigurationError(f"A must be square, got shape {A.shape}")
    if A.shape[0] > MAX_ORDER:
        raise ConfigurationError(f"matrix order {A.shape[0]} exceeds {MAX_ORDER}")
    if not np.all(np.isfinite(A)):
        raise NumericalError("matrix has non-finite entries")
    try:
        lam = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue iteration failed: {exc}") from exc
    return float(np.max(lam.real))


def _sigma_max(A, B, C, D, omega):
    """Largest singular value of ``C (j w I - A)^-1 B + D`` for each frequency."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    n = A.shape[0]
    eye = np.eye(n)
    M = 1j * omega[:, None, None] * eye - A
    g = C @ np.linalg.solve(M, np.broadcast_to(B, (len(omega),) + B.shape)) + D
    return np.linalg.norm(g, ord=2, axis=(1, 2))


def hinf_norm(
    model,
    q=None,
    rel_tol: float = 1e-4,
    *,
    grid_points: int = DEFAULT_GRID,
    band: tuple[float, float] = DEFAULT_BAND,
) -> float:
    """H-infinity norm of a stable continuous-time system.

    Parameters
    ----------
    model : StateSpaceModel or tuple
        Either a model evaluated at ``q`` or an explicit ``(A, B, C, D)``.
    q : array_like, optional
        Parameter vector for an affine model.
    rel_tol : float
        Relative accuracy of the peak search, in ``(1e-6, 1e-1)``.
    grid_points, band
        Log-spaced frequency grid used to locate candidate peaks, which are
        then refined by bounded scalar search in ``log10(omega)``.

    Raises
    ------
    InstabilityError
        If the state matrix is not Hurwitz.
    """
    if not 1e-6 < rel_tol < 1e-1:
        raise ConfigurationError(f"rel_tol must lie in (1e-6, 1e-1), got {rel_tol}")
    if isinstance(model, StateSpaceModel):
        A, B, C, D = model.at(np.zeros(model.n_params) if q is None else q)
    else:
        A, B, C, D = (np.atleast_2d(np.asarray(m, dtype=float)) for m in model)
    if spectral_abscissa(A) >= 0.0:
        raise InstabilityError("H-infinity norm requested for a non-Hurwitz state matrix")

    dc = float(np.linalg.norm(D - C @ np.linalg.solve(A, B), 2))
    feedthrough = float(np.linalg.norm(D, 2)) if D.size else 0.0
    logw = np.linspace(math.log10(band[0]), math.log10(band[1]), grid_points)
    vals = _sigma_max(A, B, C, D, 10.0**logw)
    best = max(dc, feedthrough, float(vals.max()))

    # Refine around every local maximum of the grid that could beat the
    # current best; the bracket is one grid step on either side.
    peaks = [k for k in range(len(vals)) if (k == 0 or vals[k] >= vals[k - 1]) and (k == len(vals) - 1 or vals[k] >= vals[k + 1])]
    peaks.sort(key=lambda k: -vals[k])
    step = logw[1] - logw[0]
    for k in peaks[:8]:
        lo, hi = logw[max(k - 1, 0)], logw[min(k + 1, len(logw) - 1)]
        if hi <= lo:
            continue
        res = minimize_scalar(
            lambda lw: -float(_sigma_max(A, B, C, D, 10.0**lw)[0]),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": min(step, rel_tol * 1e-2)},
        )
        best = max(best, -float(res.fun))
    if not math.isfinite(best):
        raise NumericalError("H-infinity norm evaluation produced a non-finite value")
    return best


# ---------------------------------------------------------------------------
# Problem formulations
# ---------------------------------------------------------------------------


def _space_for(model: StateSpaceModel, space: ParameterSpace):
    if space.dimension != model.n_params:
        raise ConfigurationError(
            f"model depends on {model.n_params} parameters but the space has {space.dimension}"
        )


def robust_stability_problem(model: StateSpaceModel, space: ParameterSpace) -> ConstrainedProblem:
    """Whole space admissible; index is the spectral abscissa of ``A(q)``."""
    _space_for(model, space)
    return ConstrainedProblem(
        space=space,
        constraint=lambda q: True,
        index=lambda q: spectral_abscissa(model.A.at(q)),
        name="robust-stability",
    )


def stability_margin_problem(loop_gain_model: StateSpaceModel, gamma0: float) -> ConstrainedProblem:
    """Smallest destabilizing scalar gain perturbation ``Delta(q) = q``.

    The parameter space is ``[0, gamma0]``; the constrained subset holds the
    gains for which the closed-loop ``A(q)`` is not Hurwitz, and the index is
    ``|q|``. Its minimum over the subset is the stability margin.
    """
    if not (gamma0 > 0 and math.isfinite(gamma0)):
        raise ConfigurationError(f"gamma0 must be a positive bound, got {gamma0!r}")
    if loop_gain_model.n_params != 1:
        raise ConfigurationError("the margin formulation supports a single scalar gain parameter")
    space = ParameterSpace((Coordinate(0.0, float(gamma0), name="gain"),))
    A = loop_gain_model.A
    return ConstrainedProblem(
        space=space,
        constraint=lambda q: spectral_abscissa(A.at(q)) >= 0.0,
        index=lambda q: float(abs(q[0])),
        name="margin",
    )


def performance_range_problem(
    model: StateSpaceModel, space: ParameterSpace, *, rel_tol: float = 1e-4, grid_points: int = DEFAULT_GRID
) -> ConstrainedProblem:
    """Stable parameters; index is the H-infinity norm of ``T_zv(q)``."""
    _space_for(model, space)
    return ConstrainedProblem(
        space=space,
        constraint=lambda q: spectral_abscissa(model.A.at(q)) < 0.0,
        index=lambda q: hinf_norm(model, q, rel_tol, grid_points=grid_points),
        name="performance-range",
    )


def synthesis_problem(
    p: SynthesisProblem, *, rel_tol: float = 1e-4, grid_points: int = DEFAULT_GRID
) -> ConstrainedProblem:
    """Controller parameters whose closed loop decays faster than ``exp(-alpha t)``.

    Minimizing the index over the constrained subset is the randomized
    H-infinity design.
    """
    _space_for(p.plant, p.space)
    plant, alpha = p.plant, p.decay_margin
    return ConstrainedProblem(
        space=p.space,
        constraint=lambda q: spectral_abscissa(plant.A.at(q)) < -alpha,
        index=lambda q: hinf_norm(plant, q, rel_tol, grid_points=grid_points),
        name="synthesis",
    )


# ---------------------------------------------------------------------------
# Model file format
# ---------------------------------------------------------------------------

Entry = Union[float, list[float]]


class ParameterDecl(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = ""
    lower: float
    upper: float
    distribution: Literal["uniform", "truncated_normal"] = "uniform"
    mean: Optional[float] = None
    std: Optional[float] = None

    @model_validator(mode="after")
    def _check_bounds(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper) and self.lower <= self.upper):
            raise ValueError(f"bounds [{self.lower}, {self.upper}] must be finite with lower <= upper")
        return self


class ModelFile(BaseModel):
    """Schema of a model description file.

    ``matrices`` maps each of ``A``, ``B``, ``C``, ``D`` to a row-major list of
    rows; each entry is either a constant or a list ``[c0, c1, ..., cd]`` of
    affine coefficients over the declared parameters.
    """

    model_config = ConfigDict(extra="forbid")

    name: str = ""
    formulation: Literal["robust-stability", "margin", "performance-range", "synthesis"]
    parameters: list[ParameterDecl] = Field(min_length=1)
    matrices: dict[Literal["A", "B", "C", "D"], list[list[Entry]]]
    alpha: Optional[float] = Field(default=None, gt=0)
    gamma0: Optional[float] = Field(default=None, gt=0)
    rel_tol: float = Field(default=1e-4, gt=1e-6, lt=1e-1)
    grid_points: int = Field(default=DEFAULT_GRID, ge=16, le=100000)

    @field_validator("matrices")
    @classmethod
    def _all_matrices(cls, v):
        missing = {"A", "B", "C", "D"} - set(v)
        if missing:
            raise ValueError(f"missing matrices: {sorted(missing)}")
        return v

    @model_validator(mode="after")
    def _formulation_fields(self):
        if self.formulation == "synthesis" and self.alpha is None:
            raise ValueError("the synthesis formulation needs a positive alpha")
        if self.formulation == "margin":
            if self.gamma0 is None:
                raise ValueError("the margin formulation needs a positive gamma0")
            if len(self.parameters) != 1:
                raise ValueError("the margin formulation takes exactly one gain parameter")
        return self

    def affine(self, key: str) -> AffineMatrix:
        d = len(self.parameters)
        rows = self.matrices[key]
        if not rows or any(len(r) != len(rows[0]) for r in rows):
            raise ConfigurationError(f"matrix {key} must be a nonempty rectangular list of rows")
        coeffs = np.zeros((len(rows), len(rows[0]), 1 + d))
        for r, row in enumerate(rows):
            for c, entry in enumerate(row):
                vals = [entry] if isinstance(entry, (int, float)) else list(entry)
                if not 1 <= len(vals) <= 1 + d:
                    raise ConfigurationError(
                        f"{key}[{r}][{c}] has {len(vals)} coefficients; at most {1 + d} allowed"
                    )
                coeffs[r, c, : len(vals)] = vals
        return AffineMatrix(coeffs)

    def state_space(self) -> StateSpaceModel:
        return StateSpaceModel(*(self.affine(k) for k in "ABCD"))

    def space(self) -> ParameterSpace:
        return ParameterSpace(
            tuple(
                Coordinate(p.lower, p.upper, law=p.distribution, mean=p.mean, std=p.std, name=p.name)
                for p in self.parameters
            )
        )


def bundled_models() -> list[str]:
    """Names of the example models shipped with the package."""
    root = resources.files("randrobust") / "models"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_model(source) -> ModelFile:
    """Load a model from a dict, a path, or ``"bundled:<name>"``."""
    if isinstance(source, ModelFile):
        return source
    if isinstance(source, dict):
        return ModelFile.model_validate(source)
    source = str(source)
    if source.startswith("bundled:"):
        name = source.split(":", 1)[1]
        if name not in bundled_models():
            raise ConfigurationError(f"no bundled model {name!r}; available: {bundled_models()}")
        text = (resources.files("randrobust") / "models" / f"{name}.json").read_text()
    else:
        path = Path(source)
        if not path.is_file():
            raise ConfigurationError(f"model file not found: {source}")
        text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"model file is not valid JSON: {exc}") from exc
    return ModelFile.model_validate(data)


def problem_from_model(model: ModelFile) -> ConstrainedProblem:
    ss = model.state_space()
    if model.formulation == "robust-stability":
        return robust_stability_problem(ss, model.space())
    if model.formulation == "margin":
        lo, hi = model.parameters[0].lower, model.parameters[0].upper
        if (lo, hi) != (0.0, model.gamma0):
            raise ConfigurationError("margin models must declare the gain on [0, gamma0]")
        return stability_margin_problem(ss, model.gamma0)
    if model.formulation == "performance-range":
        return performance_range_problem(ss, model.space(), rel_tol=model.rel_tol, grid_points=model.grid_points)
    return synthesis_problem(
        SynthesisProblem(ss, model.space(), model.alpha), rel_tol=model.rel_tol, grid_points=model.grid_points
    )
