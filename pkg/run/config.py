"""Run configuration: INI text validated into frozen dataclasses."""

import configparser
import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path

from geom.errors import InputError
from geom.beltrami import SOLVER_RTOL, DEFAULT_ANCHORS, K_MAX, LEAF_AXIS, MODES
from geom.conformal_cert import CERT_TOL, SAMPLE_DIRECTIONS
from geom.grid import DIMENSION, Grid
from geom.integrability import INTEGRABILITY_KAPPA
from geom.pullback import JACOBIAN_TOL, METRIC_KEYS
from geom.tensor3 import SELF_ADJOINT_TOL, SPECTRAL_GAP_TOL, UNIT_TOL

STAGES = ('analyze', 'certify', 'integrability', 'isothermal', 'holomorphy')
FORMATS = ('records', 'summary')
EUCLIDEAN = ('1', '0', '0', '1', '0', '1')

VERDICT_VALUES = ('conformal', 'not_conformal', 'indeterminate')
ORIENTATION_VALUES = ('holomorphic', 'antiholomorphic')
MASKED_VALUES = ('none', 'some', 'all')

SECTIONS: dict[str, tuple[str, ...]] = {
    'run': ('name', 'seed', 'stages', 'refine'),
    'map': ('phi1', 'phi2', 'phi3', 'domain_lower', 'domain_upper'),
    'metric_g': METRIC_KEYS,
    'metric_h': METRIC_KEYS,
    'grid': ('lower', 'upper', 'nodes', 'periodic', 'anchor'),
    'target_grid': ('lower', 'upper', 'nodes'),
    'tolerances': (
        'spectral_gap_tol', 'cert_tol', 'jacobian_tol', 'unit_tol', 'self_adjoint_tol',
        'sample_directions', 'k_max', 'solver_rtol', 'integrability_kappa', 'iso_tol', 'cr_tol',
    ),
    'omega': ('w1', 'w2', 'w3'),
    'frame': ('e1', 'e2', 'e3'),
    'foliation': ('leaf_axis', 'mode'),
    'beltrami': ('anchor0', 'anchor1'),
    'output': ('out', 'format'),
    'expect': (
        'certify_plus', 'certify_minus', 'certify_omega',
        'integrable_plus', 'integrable_minus', 'integrable_omega', 'diag_integrable',
        'isothermal', 'holomorphy', 'masked',
    ),
}
REQUIRED = {'map': ('phi1', 'phi2', 'phi3'), 'grid': ('lower', 'upper', 'nodes')}


class ConfigError(Exception):
    """Ошибка конфигурации с указанием секции и ключа."""

    def __init__(self, message: str, section: str | None = None, key: str | None = None) -> None:
        self.message = message
        self.section = section
        self.key = key
        where = f"[{section}]" if section else ""
        if key:
            where += f" {key}"
        super().__init__(f"Config error {where}: {message}" if where else f"Config error: {message}")


@dataclass(frozen=True)
class GridSpec:
    lower: tuple[float, float, float]
    upper: tuple[float, float, float]
    nodes: tuple[int, int, int]
    periodic: bool = False
    anchor: tuple[int, int, int] = (0, 0, 0)

    def build(self, level: int = 0) -> Grid:
        """Решётка после level двоичных измельчений."""
        grid = Grid(self.lower, self.upper, self.nodes, self.periodic)
        for _ in range(level):
            grid = grid.refined()
        return grid


@dataclass(frozen=True)
class Tolerances:
    spectral_gap_tol: float = SPECTRAL_GAP_TOL
    cert_tol: float = CERT_TOL
    jacobian_tol: float = JACOBIAN_TOL
    unit_tol: float = UNIT_TOL
    self_adjoint_tol: float = SELF_ADJOINT_TOL
    sample_directions: int = SAMPLE_DIRECTIONS
    k_max: float = K_MAX
    solver_rtol: float = SOLVER_RTOL
    integrability_kappa: float = INTEGRABILITY_KAPPA
    iso_tol: float = 1e-3
    cr_tol: float = 1e-3

    def as_dict(self) -> dict[str, float | int]:
        return {name: getattr(self, name) for name in SECTIONS['tolerances']}


@dataclass(frozen=True)
class Expectations:
    """Ожидаемые вердикты; непустые поля сравниваются с результатами."""

    certify: dict[str, str] = field(default_factory=dict)
    integrable: dict[str, bool] = field(default_factory=dict)
    diag_integrable: bool | None = None
    isothermal: bool | None = None
    holomorphy: str | None = None
    masked: str | None = None

    @property
    def empty(self) -> bool:
        return not (self.certify or self.integrable) and all(
            value is None for value in (self.diag_integrable, self.isothermal, self.holomorphy, self.masked)
        )


@dataclass(frozen=True)
class RunConfig:
    name: str
    phi: tuple[str, str, str]
    metric_g: tuple[str, ...]
    metric_h: tuple[str, ...]
    grid: GridSpec
    domain: tuple[tuple[float, float, float], tuple[float, float, float]]
    target_grid: GridSpec | None = None
    tolerances: Tolerances = field(default_factory=Tolerances)
    omega: tuple[str, str, str] | None = None
    frame: tuple[tuple[str, str, str], ...] | None = None
    leaf_axis: int = LEAF_AXIS
    mode: str = 'flattened'
    anchors: tuple[tuple[float, float], tuple[float, float]] = DEFAULT_ANCHORS
    seed: int = 0
    stages: tuple[str, ...] = ('analyze', 'certify', 'integrability')
    refine: int = 0
    out: str = 'out'
    format: str = 'summary'
    expect: Expectations = field(default_factory=Expectations)
    digest: str = ''

    def with_overrides(self, **changes: object) -> "RunConfig":
        """Копия с параметрами командной строки; None значит «не задано»."""
        return replace(self, **{key: value for key, value in changes.items() if value is not None})

    def describe(self) -> dict[str, object]:
        return {
            'name': self.name,
            'config_sha256': self.digest,
            'map': list(self.phi),
            'metric_g': list(self.metric_g),
            'metric_h': list(self.metric_h),
            'grid': {
                'lower': list(self.grid.lower),
                'upper': list(self.grid.upper),
                'nodes': list(self.grid.nodes),
                'periodic': self.grid.periodic,
                'anchor': list(self.grid.anchor),
            },
            'tolerances': self.tolerances.as_dict(),
            'seed': self.seed,
            'refine': self.refine,
        }


def _floats(text: str, count: int, section: str, key: str) -> tuple[float, ...]:
    try:
        values = tuple(float(part) for part in text.split(','))
    except ValueError as exc:
        raise ConfigError(f"expected numbers, got '{text}'", section, key) from exc
    if len(values) == 1:
        values = values * count
    if len(values) != count:
        raise ConfigError(f"expected {count} values, got {len(values)}", section, key)
    return values


def _ints(text: str, count: int, section: str, key: str) -> tuple[int, ...]:
    values = _floats(text, count, section, key)
    if any(v != int(v) for v in values):
        raise ConfigError(f"expected integers, got '{text}'", section, key)
    return tuple(int(v) for v in values)


def _choice(text: str, allowed: tuple[str, ...], section: str, key: str) -> str:
    value = text.strip()
    if value not in allowed:
        raise ConfigError(f"'{value}' is not one of {', '.join(allowed)}", section, key)
    return value


def _bool(parser: configparser.ConfigParser, section: str, key: str) -> bool:
    try:
        return parser.getboolean(section, key)
    except ValueError as exc:
        raise ConfigError(f"expected a boolean, got '{parser.get(section, key)}'", section, key) from exc


def _grid(parser: configparser.ConfigParser, section: str) -> GridSpec:
    items = parser[section]
    for key in REQUIRED['grid']:
        if key not in items:
            raise ConfigError("missing key", section, key)
    lower = _floats(items['lower'], DIMENSION, section, 'lower')
    upper = _floats(items['upper'], DIMENSION, section, 'upper')
    nodes = _ints(items['nodes'], DIMENSION, section, 'nodes')
    periodic = _bool(parser, section, 'periodic') if 'periodic' in items else False
    anchor = _ints(items['anchor'], DIMENSION, section, 'anchor') if 'anchor' in items else (0, 0, 0)
    if any(not 0 <= a < n for a, n in zip(anchor, nodes)):
        raise ConfigError(f"anchor {anchor} outside the grid {nodes}", section, 'anchor')
    try:
        Grid(lower, upper, nodes, periodic)  # type: ignore[arg-type]
    except InputError as exc:
        raise ConfigError(str(exc), section) from exc
    return GridSpec(lower, upper, nodes, periodic, anchor)  # type: ignore[arg-type]


def _expectations(parser: configparser.ConfigParser) -> Expectations:
    if not parser.has_section('expect'):
        return Expectations()
    items = parser['expect']
    certify = {
        key.removeprefix('certify_'): _choice(items[key], VERDICT_VALUES, 'expect', key)
        for key in items if key.startswith('certify_')
    }
    integrable = {
        key.removeprefix('integrable_'): _bool(parser, 'expect', key)
        for key in items if key.startswith('integrable_')
    }
    return Expectations(
        certify=certify,
        integrable=integrable,
        diag_integrable=_bool(parser, 'expect', 'diag_integrable') if 'diag_integrable' in items else None,
        isothermal=_bool(parser, 'expect', 'isothermal') if 'isothermal' in items else None,
        holomorphy=_choice(items['holomorphy'], ORIENTATION_VALUES, 'expect', 'holomorphy')
        if 'holomorphy' in items else None,
        masked=_choice(items['masked'], MASKED_VALUES, 'expect', 'masked') if 'masked' in items else None,
    )


def _tolerances(parser: configparser.ConfigParser) -> Tolerances:
    if not parser.has_section('tolerances'):
        return Tolerances()
    values: dict[str, float | int] = {}
    for key, text in parser['tolerances'].items():
        try:
            values[key] = int(text) if key == 'sample_directions' else float(text)
        except ValueError as exc:
            raise ConfigError(f"expected a number, got '{text}'", 'tolerances', key) from exc
        if values[key] <= 0:
            raise ConfigError("must be positive", 'tolerances', key)
    if values.get('k_max', K_MAX) >= 1.0:
        raise ConfigError("must be below 1", 'tolerances', 'k_max')
    return Tolerances(**values)  # type: ignore[arg-type]


def parse_config(text: str, name: str = 'run') -> RunConfig:
    """Разобрать и проверить конфигурацию; неизвестные секции и ключи отвергаются."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # type: ignore[assignment,method-assign]
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0]) from exc

    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError("unknown section", section)
        for key in parser[section]:
            if key not in SECTIONS[section]:
                raise ConfigError("unknown key", section, key)
    for section, keys in REQUIRED.items():
        if not parser.has_section(section):
            raise ConfigError("missing section", section)
        for key in keys:
            if key not in parser[section]:
                raise ConfigError("missing key", section, key)

    def metric(section: str) -> tuple[str, ...]:
        if not parser.has_section(section):
            return EUCLIDEAN
        items = parser[section]
        return tuple(items.get(key, default) for key, default in zip(METRIC_KEYS, EUCLIDEAN))

    grid = _grid(parser, 'grid')
    target = _grid(parser, 'target_grid') if parser.has_section('target_grid') else None
    items = parser['map']
    domain_lower = _floats(items['domain_lower'], DIMENSION, 'map', 'domain_lower') \
        if 'domain_lower' in items else grid.lower
    domain_upper = _floats(items['domain_upper'], DIMENSION, 'map', 'domain_upper') \
        if 'domain_upper' in items else grid.upper

    omega = None
    if parser.has_section('omega'):
        section = parser['omega']
        omega = (section.get('w1', '0'), section.get('w2', '0'), section.get('w3', '0'))
    frame = None
    if parser.has_section('frame'):
        section = parser['frame']
        if set(section) != {'e1', 'e2', 'e3'}:
            raise ConfigError("a frame needs e1, e2 and e3", 'frame')
        columns = []
        for key in ('e1', 'e2', 'e3'):
            parts = tuple(part.strip() for part in section[key].split(','))
            if len(parts) != DIMENSION:
                raise ConfigError(f"expected {DIMENSION} components", 'frame', key)
            columns.append(parts)
        frame = tuple(columns)

    run = parser['run'] if parser.has_section('run') else {}
    stages = tuple(part.strip() for part in run.get('stages', 'analyze, certify, integrability').split(','))
    for stage in stages:
        _choice(stage, STAGES, 'run', 'stages')
    try:
        seed = int(run.get('seed', '0'))
        refine = int(run.get('refine', '0'))
    except ValueError as exc:
        raise ConfigError("seed and refine must be integers", 'run') from exc
    if refine < 0:
        raise ConfigError("must not be negative", 'run', 'refine')

    foliation = parser['foliation'] if parser.has_section('foliation') else {}
    leaf_axis = int(_choice(foliation.get('leaf_axis', str(LEAF_AXIS + 1)), ('1', '2', '3'), 'foliation',
                            'leaf_axis')) - 1
    mode = _choice(foliation.get('mode', 'flattened'), MODES, 'foliation', 'mode')
    anchors = DEFAULT_ANCHORS
    if parser.has_section('beltrami'):
        section = parser['beltrami']
        anchors = (
            _floats(section.get('anchor0', '0.25, 0.5'), 2, 'beltrami', 'anchor0'),  # type: ignore[assignment]
            _floats(section.get('anchor1', '0.75, 0.5'), 2, 'beltrami', 'anchor1'),
        )
    output = parser['output'] if parser.has_section('output') else {}

    return RunConfig(
        name=run.get('name', name),
        phi=(items['phi1'], items['phi2'], items['phi3']),
        metric_g=metric('metric_g'),
        metric_h=metric('metric_h'),
        grid=grid,
        domain=(domain_lower, domain_upper),  # type: ignore[arg-type]
        target_grid=target,
        tolerances=_tolerances(parser),
        omega=omega,
        frame=frame,  # type: ignore[arg-type]
        leaf_axis=leaf_axis,
        mode=mode,
        anchors=anchors,  # type: ignore[arg-type]
        seed=seed,
        stages=stages,
        refine=refine,
        out=output.get('out', 'out'),
        format=_choice(output.get('format', 'summary'), FORMATS, 'output', 'format'),
        expect=_expectations(parser),
        digest=hashlib.sha256(text.encode('utf-8')).hexdigest(),
    )


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"file '{path}' not found")
    return parse_config(path.read_text(encoding='utf-8'), path.stem)
