"""Isotropic elastic material parameters.

A medium is described by density rho and the Lame parameters lambda and mu.
Each of the three may be a plain constant, a gridded table with bilinear
evaluation, or any callable ``f(x, y) -> values``.  The module also inverts
the constitutive relation (stress -> strain coefficients) and samples
coefficients onto the staggered subgrids of the finite-difference region.
"""
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Union

import numpy as np


class MediumError(ValueError):
    """Material parameters violate an admissibility condition."""


class SingularConstitutiveError(MediumError):
    """The stress-strain relation cannot be inverted (mu = 0 or lambda + mu = 0)."""


class GriddedModelError(ValueError):
    """A gridded model file is malformed or contains non-finite data."""


@dataclass(frozen=True)
class GriddedField:
    """Scalar field tabulated on a regular grid, bilinearly interpolated.

    ``values[i, j]`` lives at ``(origin[0] + i*dx, origin[1] + j*dx)``.
    Queries outside the table clamp to the nearest edge value.
    """

    values: np.ndarray
    dx: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __call__(self, x, y):
        values = self.values
        nx, ny = values.shape
        gx = (np.asarray(x, dtype=float) - self.origin[0]) / self.dx
        gy = (np.asarray(y, dtype=float) - self.origin[1]) / self.dx
        gx = np.clip(gx, 0.0, nx - 1.0)
        gy = np.clip(gy, 0.0, ny - 1.0)
        i0 = np.minimum(np.floor(gx).astype(int), max(nx - 2, 0))
        j0 = np.minimum(np.floor(gy).astype(int), max(ny - 2, 0))
        i1 = np.minimum(i0 + 1, nx - 1)
        j1 = np.minimum(j0 + 1, ny - 1)
        fx = gx - i0
        fy = gy - j0
        return (
            values[i0, j0] * (1 - fx) * (1 - fy)
            + values[i1, j0] * fx * (1 - fy)
            + values[i0, j1] * (1 - fx) * fy
            + values[i1, j1] * fx * fy
        )


ScalarField = Union[float, GriddedField, Callable]


def evaluate_field(field: ScalarField, x, y) -> np.ndarray:
    """Evaluate a scalar field at broadcastable coordinate arrays."""
    if callable(field):
        return np.asarray(field(x, y), dtype=float)
    shape = np.broadcast_shapes(np.shape(x), np.shape(y))
    return np.full(shape, float(field))


@dataclass(frozen=True)
class IsotropicMedium:
    """Density and Lame parameters, each a constant, table, or callable."""

    density_field: ScalarField
    lambda_field: ScalarField
    mu_field: ScalarField

    def density(self, x, y) -> np.ndarray:
        return evaluate_field(self.density_field, x, y)

    def lame_lambda(self, x, y) -> np.ndarray:
        return evaluate_field(self.lambda_field, x, y)

    def mu(self, x, y) -> np.ndarray:
        return evaluate_field(self.mu_field, x, y)

    def check_at(self, x, y) -> None:
        """Raise MediumError if admissibility fails at any of the points."""
        rho = self.density(x, y)
        lam = self.lame_lambda(x, y)
        mu = self.mu(x, y)
        if np.any(rho <= 0):
            raise MediumError("density must be positive everywhere sampled")
        if np.any(mu <= 0):
            raise MediumError("shear modulus must be positive everywhere sampled")
        if np.any(lam + 2 * mu <= 0):
            raise MediumError("lambda + 2*mu must be positive everywhere sampled")
        if np.any(lam + mu <= 0):
            raise MediumError("lambda + mu must be positive everywhere sampled")


@dataclass(frozen=True)
class ComplianceCoeffs:
    """Nonzero coefficients of the inverted plane-strain constitutive relation.

    strain_xx = s_nn*sigma_xx - s_nt*sigma_yy
    strain_yy = -s_nt*sigma_xx + s_nn*sigma_yy
    strain_xy = s_shear*sigma_xy
    """

    s_nn: float
    s_nt: float
    s_shear: float


def medium_from_velocities(rho: ScalarField, cp: ScalarField, cs: ScalarField) -> IsotropicMedium:
    """Build a medium from density and P/S wave speeds.

    lambda = rho*(cp**2 - 2*cs**2) and mu = rho*cs**2 pointwise.  A negative
    lambda is admissible (warned about) as long as lambda + mu stays positive.
    """
    constant_inputs = not (callable(rho) or callable(cp) or callable(cs))

    def lam(x, y):
        return evaluate_field(rho, x, y) * (
            evaluate_field(cp, x, y) ** 2 - 2 * evaluate_field(cs, x, y) ** 2
        )

    def mu(x, y):
        return evaluate_field(rho, x, y) * evaluate_field(cs, x, y) ** 2

    if constant_inputs:
        if rho <= 0 or cp <= 0:
            raise MediumError("rho and cp must be positive")
        if cs < 0:
            raise MediumError("cs must be non-negative")
        lam_c = float(rho) * (float(cp) ** 2 - 2 * float(cs) ** 2)
        mu_c = float(rho) * float(cs) ** 2
        if lam_c + mu_c <= 0:
            raise MediumError("lambda + mu must be positive")
        if lam_c <= 0:
            warnings.warn("lambda <= 0 (cp <= cs*sqrt(2)); medium is still admissible")
        return IsotropicMedium(float(rho), lam_c, mu_c)

    def checked_lam(x, y):
        rho_v = evaluate_field(rho, x, y)
        cp_v = evaluate_field(cp, x, y)
        if np.any(rho_v <= 0) or np.any(cp_v <= 0):
            raise MediumError("rho and cp must be positive everywhere sampled")
        lam_v = lam(x, y)
        if np.any(lam_v + mu(x, y) <= 0):
            raise MediumError("lambda + mu must be positive everywhere sampled")
        if np.any(lam_v <= 0):
            warnings.warn("lambda <= 0 at some sample points; medium is still admissible")
        return lam_v

    return IsotropicMedium(rho, checked_lam, mu)


def compliance_coefficients(medium: IsotropicMedium, at: tuple[float, float]) -> ComplianceCoeffs:
    """Invert the constitutive relation at one point."""
    x, y = at
    lam = float(medium.lame_lambda(x, y))
    mu = float(medium.mu(x, y))
    if mu == 0 or lam + mu == 0:
        raise SingularConstitutiveError(
            f"cannot invert constitutive relation at {at}: mu={mu}, lambda+mu={lam + mu}"
        )
    denom = 4 * mu * (lam + mu)
    return ComplianceCoeffs(
        s_nn=(lam + 2 * mu) / denom,
        s_nt=lam / denom,
        s_shear=1 / (2 * mu),
    )


@dataclass(frozen=True)
class SubgridCoefficients:
    """Material coefficients flattened onto each staggered subgrid.

    Vectors are C-order flattenings of the (nx_points, ny_points) subgrid
    arrays, so they line up with the field vectors they multiply.
    """

    rho_vx: np.ndarray
    rho_vy: np.ndarray
    lam_normal: np.ndarray
    mu_normal: np.ndarray
    mu_shear: np.ndarray


def sample_on_subgrids(medium: IsotropicMedium, layout) -> SubgridCoefficients:
    """Sample density and Lame parameters onto the staggered subgrids.

    The layout must provide ``subgrid_coords(name)`` returning broadcastable
    (x, y) coordinate arrays for the five subgrids.
    """

    def flat(field, name):
        x, y = layout.subgrid_coords(name)
        return np.ascontiguousarray(
            np.broadcast_to(evaluate_field(field, x, y), np.broadcast_shapes(x.shape, y.shape))
        ).ravel()

    for name in ("vx", "vy", "sxx", "sxy"):
        x, y = layout.subgrid_coords(name)
        medium.check_at(x, y)
    return SubgridCoefficients(
        rho_vx=flat(medium.density_field, "vx"),
        rho_vy=flat(medium.density_field, "vy"),
        lam_normal=flat(medium.lambda_field, "sxx"),
        mu_normal=flat(medium.mu_field, "sxx"),
        mu_shear=flat(medium.mu_field, "sxy"),
    )


def load_gridded_model(path, nx: int, ny: int, dx: float, origin=(0.0, 0.0)) -> GriddedField:
    """Read a little-endian float32 table, stored with y varying fastest.

    The file must hold exactly nx*ny values; entry ``i*ny + j`` is the value
    at grid node ``(origin[0] + i*dx, origin[1] + j*dx)``.
    """
    raw = Path(path).read_bytes()
    expected = nx * ny * 4
    if len(raw) != expected:
        raise GriddedModelError(
            f"{path}: expected {expected} bytes for a {nx}x{ny} float32 table, got {len(raw)}"
        )
    values = np.frombuffer(raw, dtype="<f4").astype(float).reshape(nx, ny)
    if not np.all(np.isfinite(values)):
        raise GriddedModelError(f"{path}: table contains NaN or Inf entries")
    return GriddedField(values=values, dx=dx, origin=(float(origin[0]), float(origin[1])))
