import os
from dotenv import load_dotenv

load_dotenv()


class ConfigError(ValueError):
    """Invalid run configuration; `field` names the offending flag"""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


def _float(name, default):
    return float(os.environ.get(name, default))


class Config:
    SCHEMA_VERSION = 1

    # Runtime
    THREADS = int(os.environ.get('MDISP_THREADS', 1))
    LOG_LEVEL = os.environ.get('MDISP_LOG_LEVEL', 'WARNING')
    REPORT_TIMING = os.environ.get('MDISP_REPORT_TIMING', 'false').lower() == 'true'
    DEFAULT_SEED = int(os.environ.get('MDISP_SEED', 0))

    # Surfaces
    QUAD_FACTOR = int(os.environ.get('MDISP_QUAD_FACTOR', 3))

    # Tolerances
    RANK_TOL = _float('MDISP_RANK_TOL', 1e-11)
    DISSIPATIVE_TOL = _float('MDISP_DISSIPATIVE_TOL', 1e-10)
    CONTRACTION_TOL = _float('MDISP_CONTRACTION_TOL', 1e-10)
    PSD_TOL = _float('MDISP_PSD_TOL', 1e-10)
    ROUNDTRIP_TOL = _float('MDISP_ROUNDTRIP_TOL', 1e-12)
    GRAM_TOL = _float('MDISP_GRAM_TOL', 1e-9)
    RESOLVENT_TOL = _float('MDISP_RESOLVENT_TOL', 1e-8)
    ENERGY_TOL = _float('MDISP_ENERGY_TOL', 1e-12)
    FK_DOMAIN_THRESHOLD = _float('MDISP_FK_DOMAIN_THRESHOLD', 1e-8)
    BIORTHOGONALITY_TOL = _float('MDISP_BIORTHOGONALITY_TOL', 1e-12)
    UNITARITY_TOL = _float('MDISP_UNITARITY_TOL', 1e-12)
    DUALITY_TOL = _float('MDISP_DUALITY_TOL', 1e-10)
    GREEN_TOL = _float('MDISP_GREEN_TOL', 1e-10)
    DISCRETE_GREEN_TOL = _float('MDISP_DISCRETE_GREEN_TOL', 1e-13)
    CONSERVATION_TOL = _float('MDISP_CONSERVATION_TOL', 1e-10)
    SPECTRUM_TOL = _float('MDISP_SPECTRUM_TOL', 1e-3)
    MIN_ORDER = _float('MDISP_MIN_ORDER', 1.9)

    # Suite sizes
    SUITE_INSTANCES = int(os.environ.get('MDISP_SUITE_INSTANCES', 100))
    SUITE_MAXWELL_GRID = int(os.environ.get('MDISP_SUITE_MAXWELL_GRID', 400))
    SUITE_RESOLVENT_SAMPLES = int(os.environ.get('MDISP_SUITE_RESOLVENT_SAMPLES', 200))
    SUITE_RESOLVENT_INSTANCES = int(os.environ.get('MDISP_SUITE_RESOLVENT_INSTANCES', 5))
    SUITE_SPHERE_LMAX = int(os.environ.get('MDISP_SUITE_SPHERE_LMAX', 8))
    SUITE_TORUS_KMAX = int(os.environ.get('MDISP_SUITE_TORUS_KMAX', 4))
    SUITE_TIME_BUDGET = _float('MDISP_SUITE_TIME_BUDGET', 300.0)

    # Instance counts the acceptance criteria are stated for
    ACCEPTANCE_INSTANCES = 100
    ACCEPTANCE_RESOLVENT_INSTANCES = 100

    @classmethod
    def tolerance_ledger(cls):
        """Tolerances embedded in every report"""
        return {
            'rank': cls.RANK_TOL,
            'dissipative': cls.DISSIPATIVE_TOL,
            'contraction': cls.CONTRACTION_TOL,
            'psd': cls.PSD_TOL,
            'roundtrip': cls.ROUNDTRIP_TOL,
            'gram': cls.GRAM_TOL,
            'resolvent': cls.RESOLVENT_TOL,
            'energy': cls.ENERGY_TOL,
            'fk_domain_threshold': cls.FK_DOMAIN_THRESHOLD,
            'biorthogonality': cls.BIORTHOGONALITY_TOL,
            'unitarity': cls.UNITARITY_TOL,
            'duality': cls.DUALITY_TOL,
            'green': cls.GREEN_TOL,
            'discrete_green': cls.DISCRETE_GREEN_TOL,
            'conservation': cls.CONSERVATION_TOL,
            'spectrum': cls.SPECTRUM_TOL,
            'min_order': cls.MIN_ORDER,
        }


class QuickConfig(Config):
    SUITE_INSTANCES = 20
    SUITE_RESOLVENT_SAMPLES = 50
    SUITE_RESOLVENT_INSTANCES = 2
    SUITE_SPHERE_LMAX = 6
    SUITE_TORUS_KMAX = 3


class AcceptanceConfig(Config):
    SUITE_RESOLVENT_INSTANCES = 100


class TestingConfig(QuickConfig):
    LOG_LEVEL = 'DEBUG'
    REPORT_TIMING = False


config = {
    'default': Config,
    'quick': QuickConfig,
    'acceptance': AcceptanceConfig,
    'testing': TestingConfig,
}


def get_config(name=None):
    """Resolve a profile name (or MDISP_PROFILE) to its config class"""
    name = name or os.environ.get('MDISP_PROFILE', 'default')
    if name not in config:
        raise ConfigError('profile', f"unknown profile '{name}' (choose from {', '.join(sorted(config))})")
    return config[name]
