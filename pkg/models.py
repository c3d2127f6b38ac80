from dataclasses import dataclass, field

from config import Config, ConfigError
from utils import to_jsonable

COMMANDS = (
    'relation.check',
    'surface.info',
    'impedance.classify',
    'impedance.extend',
    'maxwell1d.evolve',
    'maxwell1d.range',
    'maxwell1d.green',
    'maxwell1d.spectrum',
    'suite',
)

SUITES = ('duality', 'cayley', 'fk', 'maxwell1d', 'all')

# ledger key -> Config attribute
TOLERANCE_FIELDS = {
    'rank': 'RANK_TOL',
    'dissipative': 'DISSIPATIVE_TOL',
    'contraction': 'CONTRACTION_TOL',
    'psd': 'PSD_TOL',
    'roundtrip': 'ROUNDTRIP_TOL',
    'gram': 'GRAM_TOL',
    'resolvent': 'RESOLVENT_TOL',
    'energy': 'ENERGY_TOL',
    'fk_domain_threshold': 'FK_DOMAIN_THRESHOLD',
    'biorthogonality': 'BIORTHOGONALITY_TOL',
    'unitarity': 'UNITARITY_TOL',
    'duality': 'DUALITY_TOL',
    'green': 'GREEN_TOL',
    'discrete_green': 'DISCRETE_GREEN_TOL',
    'conservation': 'CONSERVATION_TOL',
    'spectrum': 'SPECTRUM_TOL',
    'min_order': 'MIN_ORDER',
}


class InvariantViolation(Exception):
    """An asserted numerical invariant failed; `check` names it"""

    def __init__(self, check, message):
        super().__init__(f"{check}: {message}")
        self.check = check
        self.message = message


@dataclass
class RunConfig:
    command: str
    options: dict = field(default_factory=dict)
    seed: int = None
    output: str = None
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.seed is None:
            self.seed = Config.DEFAULT_SEED

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError('config', 'run configuration must be a JSON object')
        known = {'command', 'options', 'seed', 'output', 'tolerances'}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(unknown[0], 'unknown configuration field')
        if 'command' not in data:
            raise ConfigError('command', 'missing')
        run = cls(**data)
        run.validate()
        return run

    def validate(self):
        """Raise ConfigError naming the first invalid field"""
        if self.command not in COMMANDS:
            raise ConfigError('command', f"unknown command '{self.command}' (choose from {', '.join(COMMANDS)})")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError('seed', f"must be a non-negative integer, got {self.seed!r}")
        for name, value in self.tolerances.items():
            if name not in TOLERANCE_FIELDS:
                raise ConfigError(f"tolerances.{name}", 'unknown tolerance')
            if not isinstance(value, (int, float)) or not value > 0:
                raise ConfigError(f"tolerances.{name}", f"must be positive, got {value!r}")

        opts = self.options
        for name in ('lmax', 'kmax', 'truncation', 'samples', 'steps', 'quad_factor'):
            if opts.get(name) is not None and (not isinstance(opts[name], int) or opts[name] < 0):
                raise ConfigError(name, f"must be a non-negative integer, got {opts[name]!r}")
        if opts.get('n') is not None and (not isinstance(opts['n'], int) or opts['n'] < 16):
            raise ConfigError('n', f"grid needs n >= 16, got {opts['n']!r}")
        if opts.get('dt') is not None and not opts['dt'] > 0:
            raise ConfigError('dt', f"time step must be positive, got {opts['dt']!r}")
        if opts.get('quad_factor') is not None and opts['quad_factor'] < 1:
            raise ConfigError('quad_factor', 'must be at least 1')
        if self.command == 'suite' and opts.get('name') not in SUITES:
            raise ConfigError('name', f"unknown suite '{opts.get('name')}' (choose from {', '.join(SUITES)})")
        if self.command == 'relation.check' and not opts.get('file'):
            raise ConfigError('file', 'relation check needs --file')
        if self.command == 'impedance.extend' and opts.get('method', 'friedrichs') not in ('friedrichs', 'krein'):
            raise ConfigError('method', f"unknown method '{opts.get('method')}'")
        return self

    def settings(self, base=None):
        """Config class with the tolerance overrides applied"""
        base = base or Config
        if not self.tolerances:
            return base
        overrides = {TOLERANCE_FIELDS[k]: float(v) for k, v in self.tolerances.items()}
        return type(f"{base.__name__}WithOverrides", (base,), overrides)

    def to_dict(self):
        return {
            'command': self.command,
            'options': dict(sorted(self.options.items())),
            'seed': self.seed,
            'output': self.output,
            'tolerances': dict(sorted(self.tolerances.items())),
        }


@dataclass
class Check:
    name: str
    passed: bool
    value: float = None
    threshold: float = None
    detail: str = None

    def to_dict(self):
        data = {'name': self.name, 'passed': bool(self.passed)}
        if self.value is not None:
            data['value'] = self.value
        if self.threshold is not None:
            data['threshold'] = self.threshold
        if self.detail:
            data['detail'] = self.detail
        return data


@dataclass
class Report:
    command: str
    config: dict
    verdicts: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    matrices: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    timing: dict = None
    schema_version: int = Config.SCHEMA_VERSION

    def check(self, name, passed, value=None, threshold=None, detail=None):
        self.checks.append(Check(name, bool(passed), value, threshold, detail))
        return passed

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    @property
    def failures(self):
        return [c.name for c in self.checks if not c.passed]

    def raise_for_failures(self):
        if not self.passed:
            raise InvariantViolation(self.failures[0], f"{len(self.failures)} check(s) failed")

    def to_dict(self):
        data = {
            'schema_version': self.schema_version,
            'command': self.command,
            'config': self.config,
            'passed': self.passed,
            'verdicts': self.verdicts,
            'checks': [c.to_dict() for c in self.checks],
            'tolerances': self.tolerances,
        }
        if self.matrices:
            data['matrices'] = self.matrices
        if self.tables:
            data['tables'] = {name: frame.to_dict(orient='records') for name, frame in self.tables.items()}
        if self.timing is not None:
            data['timing'] = self.timing
        return to_jsonable(data)
