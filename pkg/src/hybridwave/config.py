"""Run configuration: file format, validation, and model construction.

Configs are line-oriented ``key = value`` entries grouped under
``[section]`` headers; blank lines and lines starting with ``#`` are
ignored.  ``parse_config`` validates everything up front (unknown keys
are rejected, physical values are range-checked, gridded-model files are
loaded) so that ``build_model`` only assembles.  Relative paths inside a
config resolve against the config file's own directory.

The three scenarios cover a flat interface with square elements, a
sinusoidal free surface over a flat interface, and a user-supplied mesh
file for the shallow region.
"""
from dataclasses import dataclass
from pathlib import Path

from .coupling import build_interface_operators
from .fdm import StaggeredLayout2D, build_fdm_operators
from .fem import FemBasis, assemble, quadrature_rule
from .medium import IsotropicMedium, load_gridded_model, medium_from_velocities
from .mesh import DEFAULT_JITTER_SEED, read_mesh, sinusoidal_mesh, structured_mesh
from .sbp1d import GridAxis1D
from .simulation import (
    MODES,
    HybridModel,
    SimClock,
    validate_model,
)
from .sources import (
    Receiver,
    RickerSource,
    place_fdm_receiver,
    place_fdm_source,
    place_fem_receiver,
    place_fem_source,
)

SCENARIOS = ("flat", "sinusoidal", "custom")

_SECTION_KEYS = {
    "scenario": {"kind", "mode"},
    "geometry": {
        "width", "dx", "nx", "fem_ny", "fdm_ny",
        "base_height", "amplitude_fraction", "jitter", "jitter_seed",
        "mesh_path",
    },
    "medium": {
        "kind", "rho", "cp", "cs",
        "rho_path", "cp_path", "cs_path",
        "grid_nx", "grid_ny", "grid_dx", "grid_x0", "grid_y0",
    },
    "time": {"dt", "n_steps"},
    "discretization": {"quadrature"},
    "source": {"frequency", "delay", "amplitude", "x", "y"},
    "receivers": {"point"},
    "output": {"directory", "energy_stride"},
}
_REQUIRED_SECTIONS = ("scenario", "geometry", "medium", "time", "source")

# geometry keys each scenario understands; subsets without the optional
# jitter controls are required
_GEOMETRY_KEYS = {
    "flat": {"width", "dx", "nx", "fem_ny", "fdm_ny"},
    "sinusoidal": {
        "width", "dx", "nx", "fem_ny", "fdm_ny",
        "base_height", "amplitude_fraction", "jitter", "jitter_seed",
    },
    "custom": {"mesh_path", "width", "dx", "nx", "fdm_ny"},
}


class ConfigError(ValueError):
    """A config file is malformed or fails validation."""


@dataclass(frozen=True)
class RunConfig:
    """Fully validated run description.

    The medium is already materialized (gridded files loaded); geometry
    fields that a scenario does not use are None.  raw_text keeps the
    config file verbatim for the run manifest.
    """

    path: str
    raw_text: str
    scenario: str
    mode: str
    width: float
    dx: float
    nx: int
    fem_ny: int
    fdm_ny: int
    base_height: float
    amplitude_fraction: float
    jitter: float
    jitter_seed: int
    mesh_path: str
    medium: IsotropicMedium
    quadrature: str
    source: RickerSource
    receivers: tuple
    dt: float
    n_steps: int
    out_dir: str
    energy_stride: int


# ---------------------------------------------------------------------------
# value converters (raise ValueError; the section helper adds file:line)

def _as_float(text):
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"expected a number, got {text!r}") from None


def _as_positive_float(text):
    value = _as_float(text)
    if value <= 0:
        raise ValueError(f"must be positive, got {value:g}")
    return value


def _as_nonnegative_float(text):
    value = _as_float(text)
    if value < 0:
        raise ValueError(f"must be non-negative, got {value:g}")
    return value


def _as_int(text):
    try:
        return int(text, 10)
    except ValueError:
        raise ValueError(f"expected an integer, got {text!r}") from None


def _as_positive_int(text):
    value = _as_int(text)
    if value < 1:
        raise ValueError(f"must be at least 1, got {value}")
    return value


def _as_nonnegative_int(text):
    value = _as_int(text)
    if value < 0:
        raise ValueError(f"must be non-negative, got {value}")
    return value


def _as_choice(*options):
    def convert(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}; got {text!r}")
        return text

    return convert


def _as_point(text):
    parts = text.split()
    if len(parts) != 2:
        raise ValueError(f"expected two coordinates 'x y', got {text!r}")
    return (_as_float(parts[0]), _as_float(parts[1]))


_MISSING = object()


class _Section:
    """One parsed section: key -> [(value, line)] plus error context."""

    def __init__(self, path, name, items):
        self.path = path
        self.name = name
        self.items = items

    def take(self, key, convert, default=_MISSING):
        if key not in self.items:
            if default is _MISSING:
                raise ConfigError(
                    f"{self.path}: [{self.name}] is missing required key '{key}'"
                )
            return default
        (value, line), = self.items[key]
        try:
            return convert(value)
        except ValueError as err:
            raise ConfigError(f"{self.path}:{line}: {self.name}.{key}: {err}") from None

    def take_repeated(self, key, convert):
        out = []
        for value, line in self.items.get(key, []):
            try:
                out.append(convert(value))
            except ValueError as err:
                raise ConfigError(
                    f"{self.path}:{line}: {self.name}.{key}: {err}"
                ) from None
        return out

    def line_of(self, key):
        return self.items[key][0][1]

    def reject_outside(self, allowed, context):
        for key, entries in self.items.items():
            if key not in allowed:
                raise ConfigError(
                    f"{self.path}:{entries[0][1]}: [{self.name}] key '{key}' "
                    f"is not used by {context}"
                )


def _read_sections(path, text):
    """Split the file into sections, rejecting unknown names and duplicates."""
    sections = {}
    current = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in _SECTION_KEYS:
                raise ConfigError(f"{path}:{line_no}: unknown section [{name}]")
            if name in sections:
                raise ConfigError(f"{path}:{line_no}: duplicate section [{name}]")
            sections[name] = {}
            current = name
            continue
        if "=" not in line:
            raise ConfigError(
                f"{path}:{line_no}: expected 'key = value' or a [section] header"
            )
        if current is None:
            raise ConfigError(f"{path}:{line_no}: key outside any section")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _SECTION_KEYS[current]:
            raise ConfigError(f"{path}:{line_no}: unknown key '{key}' in [{current}]")
        entries = sections[current].setdefault(key, [])
        if entries and (current, key) != ("receivers", "point"):
            raise ConfigError(
                f"{path}:{line_no}: duplicate key '{key}' in [{current}] "
                f"(first set on line {entries[0][1]})"
            )
        entries.append((value, line_no))
    return sections


def _check_mode(scenario, mode, path):
    if scenario in ("sinusoidal", "custom") and mode == "fdm":
        raise ConfigError(
            f"{path}: the {scenario} scenario cannot run fdm-only; the deep "
            f"grid is rectangular and cannot follow the shallow geometry"
        )


def _parse_medium(section, base_dir):
    kind = section.take("kind", _as_choice("constant", "gridded"))
    if kind == "constant":
        section.reject_outside({"kind", "rho", "cp", "cs"}, "a constant medium")
        rho = section.take("rho", _as_positive_float)
        cp = section.take("cp", _as_positive_float)
        cs = section.take("cs", _as_positive_float)
        return medium_from_velocities(rho, cp, cs)
    section.reject_outside(
        {"kind", "rho_path", "cp_path", "cs_path",
         "grid_nx", "grid_ny", "grid_dx", "grid_x0", "grid_y0"},
        "a gridded medium",
    )
    grid_nx = section.take("grid_nx", _as_positive_int)
    grid_ny = section.take("grid_ny", _as_positive_int)
    grid_dx = section.take("grid_dx", _as_positive_float)
    origin = (
        section.take("grid_x0", _as_float, default=0.0),
        section.take("grid_y0", _as_float, default=0.0),
    )

    def load(key):
        rel = section.take(key, str)
        full = base_dir / rel
        try:
            return load_gridded_model(full, grid_nx, grid_ny, grid_dx, origin)
        except (OSError, ValueError) as err:
            raise ConfigError(
                f"{section.path}:{section.line_of(key)}: {err}"
            ) from None

    return medium_from_velocities(load("rho_path"), load("cp_path"), load("cs_path"))


def parse_config(path) -> RunConfig:
    """Read and validate a config file.

    Raises ConfigError with a file:line prefix for anything wrong with
    the text, and materializes the medium (loading gridded tables) so a
    returned config is ready for build_model.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}") from None
    raw = _read_sections(path, text)
    for name in _REQUIRED_SECTIONS:
        if name not in raw:
            raise ConfigError(f"{path}: missing required section [{name}]")
    sections = {
        name: _Section(path, name, raw.get(name, {})) for name in _SECTION_KEYS
    }

    scenario_sec = sections["scenario"]
    scenario = scenario_sec.take("kind", _as_choice(*SCENARIOS))
    mode = scenario_sec.take("mode", _as_choice(*MODES))
    _check_mode(scenario, mode, path)

    geo = sections["geometry"]
    allowed = _GEOMETRY_KEYS[scenario]
    geo.reject_outside(allowed, f"the {scenario} scenario")
    width = geo.take("width", _as_positive_float)
    dx = geo.take("dx", _as_positive_float)
    nx = geo.take("nx", _as_positive_int)
    fdm_ny = geo.take("fdm_ny", _as_positive_int)
    fem_ny = geo.take("fem_ny", _as_positive_int) if "fem_ny" in allowed else None
    if abs(nx * dx - width) > 1e-9 * width:
        raise ConfigError(
            f"{path}:{geo.line_of('width')}: nx*dx = {nx * dx:g} does not "
            f"match width = {width:g}"
        )
    base_height = amplitude_fraction = None
    jitter, jitter_seed = 0.1, DEFAULT_JITTER_SEED
    mesh_path = None
    if scenario == "sinusoidal":
        base_height = geo.take("base_height", _as_positive_float)
        amplitude_fraction = geo.take("amplitude_fraction", _as_nonnegative_float)
        if amplitude_fraction >= 1:
            raise ConfigError(
                f"{path}:{geo.line_of('amplitude_fraction')}: "
                f"amplitude_fraction must be below 1, got {amplitude_fraction:g}"
            )
        jitter = geo.take("jitter", _as_nonnegative_float, default=0.1)
        jitter_seed = geo.take("jitter_seed", _as_nonnegative_int,
                               default=DEFAULT_JITTER_SEED)
    elif scenario == "custom":
        rel = geo.take("mesh_path", str)
        full = path.parent / rel
        if not full.is_file():
            raise ConfigError(
                f"{path}:{geo.line_of('mesh_path')}: mesh file not found: {full}"
            )
        mesh_path = str(full)

    medium = _parse_medium(sections["medium"], path.parent)

    time_sec = sections["time"]
    dt = time_sec.take("dt", _as_positive_float)
    n_steps = time_sec.take("n_steps", _as_nonnegative_int)

    quadrature = sections["discretization"].take(
        "quadrature", _as_choice("gauss3", "gll3"), default="gauss3"
    )

    src = sections["source"]
    source = RickerSource(
        frequency=src.take("frequency", _as_positive_float),
        delay=src.take("delay", _as_positive_float),
        amplitude=src.take("amplitude", _as_float),
        location=(src.take("x", _as_float), src.take("y", _as_float)),
    )

    receivers = tuple(
        Receiver(location=point)
        for point in sections["receivers"].take_repeated("point", _as_point)
    )

    out = sections["output"]
    out_dir = out.take("directory", str, default=None)
    energy_stride = out.take("energy_stride", _as_positive_int, default=1)

    return RunConfig(
        path=str(path), raw_text=text,
        scenario=scenario, mode=mode,
        width=width, dx=dx, nx=nx, fem_ny=fem_ny, fdm_ny=fdm_ny,
        base_height=base_height, amplitude_fraction=amplitude_fraction,
        jitter=jitter, jitter_seed=jitter_seed, mesh_path=mesh_path,
        medium=medium, quadrature=quadrature,
        source=source, receivers=receivers,
        dt=dt, n_steps=n_steps,
        out_dir=out_dir, energy_stride=energy_stride,
    )


# ---------------------------------------------------------------------------
# model construction

def _shallow_mesh(config, full_depth):
    """Mesh for the shallow region (hybrid) or the whole domain (fem mode)."""
    scenario = config.scenario
    if scenario == "flat":
        ny = config.fem_ny + (config.fdm_ny if full_depth else 0)
        origin_y = 0.0 if full_depth else config.fdm_ny * config.dx
        return structured_mesh(config.nx, ny, config.dx, origin=(0.0, origin_y))
    if scenario == "sinusoidal":
        fdm_height = config.fdm_ny * config.dx
        if full_depth:
            # stretch the base so the surface keeps its absolute amplitude
            base = config.base_height + fdm_height
            fraction = config.amplitude_fraction * config.base_height / base
            ny, origin_y = config.fem_ny + config.fdm_ny, 0.0
        else:
            base, fraction = config.base_height, config.amplitude_fraction
            ny, origin_y = config.fem_ny, fdm_height
        return sinusoidal_mesh(
            config.nx, ny, config.width, base, fraction,
            origin=(0.0, origin_y), jitter=config.jitter, seed=config.jitter_seed,
        )
    return read_mesh(config.mesh_path)


def _interface_baseline(mesh, dx):
    """Leftmost x and the common y of a mesh's coupling edge."""
    corners = []
    for element, edge in mesh.interface_elements:
        quad = mesh.elements[element]
        corners.append(quad[edge])
        corners.append(quad[(edge + 1) % 4])
    points = mesh.vertices[corners]
    y_values = points[:, 1]
    if y_values.max() - y_values.min() > 1e-9 * dx:
        raise ConfigError(
            "the mesh coupling edge is not flat: y spans "
            f"[{y_values.min():g}, {y_values.max():g}]"
        )
    return float(points[:, 0].min()), float(y_values.mean())


def _deep_layout(config, mesh=None):
    ny = config.fdm_ny if config.mode == "hybrid" else config.fem_ny + config.fdm_ny
    origin = (0.0, 0.0)
    if mesh is not None and config.scenario == "custom":
        left, interface_y = _interface_baseline(mesh, config.dx)
        origin = (left, interface_y - config.fdm_ny * config.dx)
    return StaggeredLayout2D(
        GridAxis1D(config.nx, config.dx, periodic=True),
        GridAxis1D(ny, config.dx, periodic=False),
        origin=origin,
    )


def build_model(config: RunConfig) -> HybridModel:
    """Assemble operators, place sources and receivers, validate."""
    _check_mode(config.scenario, config.mode, config.path)
    fdm_ops = system = exchange = None
    if config.mode in ("hybrid", "fem"):
        mesh = _shallow_mesh(config, full_depth=(config.mode == "fem"))
        basis = FemBasis("gauss_lobatto" if config.quadrature == "gll3" else "equidistant")
        system = assemble(mesh, basis, quadrature_rule(config.quadrature), config.medium)
    if config.mode == "hybrid":
        layout = _deep_layout(config, mesh)
        fdm_ops = build_fdm_operators(layout, config.medium, top_boundary="interface")
        exchange = build_interface_operators(config.nx, config.dx, config.quadrature)
    elif config.mode == "fdm":
        layout = _deep_layout(config)
        fdm_ops = build_fdm_operators(layout, config.medium, top_boundary="free")

    def in_shallow_region(location):
        if config.mode == "fem":
            return True
        if config.mode == "fdm":
            return False
        return location[1] >= fdm_ops.layout.interface_y

    fem_sources, fdm_sources = [], []
    if in_shallow_region(config.source.location):
        fem_sources.append(place_fem_source(config.source, system))
    else:
        fdm_sources.append(place_fdm_source(config.source, fdm_ops.layout))
    placed_receivers = [
        place_fem_receiver(receiver, system)
        if in_shallow_region(receiver.location)
        else place_fdm_receiver(receiver, fdm_ops.layout)
        for receiver in config.receivers
    ]

    model = HybridModel(
        mode=config.mode, fdm_ops=fdm_ops, system=system, exchange=exchange,
        fdm_sources=tuple(fdm_sources), fem_sources=tuple(fem_sources),
        receivers=tuple(placed_receivers),
    )
    validate_model(model)
    return model


def build_clock(config: RunConfig) -> SimClock:
    return SimClock(dt=config.dt, n_steps=config.n_steps)
