"""
Configuration management for the Segra rewiring engine
"""

import os
from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, List, Optional, Tuple

from core.errors import ConfigurationError


class Config:
    """Base configuration class"""

    # Logging
    SEGRA_LOG = os.environ.get('SEGRA_LOG', 'info')
    SEGRA_ENV = os.environ.get('SEGRA_ENV', 'production')

    # Graph construction defaults
    DEFAULT_D = 10
    DEFAULT_DISCOUNT = 'uniform'

    # Optimization defaults
    DEFAULT_TAU = 0.9
    DEFAULT_K = 50
    DEFAULT_ALGORITHM = 'heu'
    DEFAULT_SEED = 0

    # Solver defaults
    SOLVER_TOL = 1e-8
    SOLVER_MAX_ITER = None  # auto: sized from the first 100 iterations
    COLUMN_BATCH = 64
    COLUMN_CACHE_LIMIT = None
    DELTA_TIE_TOL = 1e-9  # relative to Z
    BOUND_SLACK = 1e-6

    # Oracles
    DENSE_ORACLE_GUARD = 2000
    MONTE_CARLO_TRIALS = 100000
    MONTE_CARLO_FALLBACK_CAP = 1000000
    VERIFY_SAMPLES = 20

    # Parallelism
    THREADS = int(os.environ.get('SEGRA_THREADS', os.cpu_count() or 1))

    # Output
    DEFAULT_OUT_DIR = 'out'
    RECORD_TIMING = True

    # Validation
    PROBABILITY_DRIFT_TOL = 1e-9


class DevelopmentConfig(Config):
    """Development configuration"""
    SEGRA_LOG = os.environ.get('SEGRA_LOG', 'debug')


class ProductionConfig(Config):
    """Production configuration"""


class TestingConfig(Config):
    """Testing configuration"""
    SOLVER_TOL = 1e-12
    RECORD_TIMING = False
    THREADS = 1


# Configuration mapping
config_map = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': ProductionConfig
}


def get_config():
    """Get configuration based on environment"""
    env = os.environ.get('SEGRA_ENV', 'production')
    return config_map.get(env, config_map['default'])


ALGORITHMS = ('heu', 'bsl1', 'bsl2', 'rnd', 'brute')

_INT_KEYS = {'d', 'k', 'max_iter', 'seed', 'threads', 'guard', 'cache_limit', 'trials', 'samples'}
_FLOAT_KEYS = {'tau', 'tol'}
_BOOL_KEYS = {'timing'}
_OPTIONAL_KEYS = {'max_iter', 'cache_limit'}


def _default(name: str):
    return field(default_factory=lambda: getattr(get_config(), name))


@dataclass
class RunConfig:
    """Parameters of one experiment run; every key can come from a file or a flag"""

    d: int = _default('DEFAULT_D')
    tau: float = _default('DEFAULT_TAU')
    k: int = _default('DEFAULT_K')
    discount: str = _default('DEFAULT_DISCOUNT')
    tol: float = _default('SOLVER_TOL')
    max_iter: Optional[int] = _default('SOLVER_MAX_ITER')
    seed: int = _default('DEFAULT_SEED')
    algorithm: str = _default('DEFAULT_ALGORITHM')
    threads: int = _default('THREADS')
    guard: int = _default('DENSE_ORACLE_GUARD')
    out_dir: str = _default('DEFAULT_OUT_DIR')
    cache_limit: Optional[int] = _default('COLUMN_CACHE_LIMIT')
    timing: bool = _default('RECORD_TIMING')
    trials: int = _default('MONTE_CARLO_TRIALS')
    samples: int = _default('VERIFY_SAMPLES')
    taus: Tuple[float, ...] = (0.5, 0.8, 0.9, 0.99)

    @classmethod
    def keys(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def parse_value(cls, key: str, raw: str) -> Any:
        """Convert a textual value for ``key`` to its typed form"""
        text = raw.strip()
        try:
            if key in _OPTIONAL_KEYS and text.lower() in ('', 'none', 'auto'):
                return None
            if key in _INT_KEYS:
                return int(text)
            if key in _FLOAT_KEYS:
                return float(text)
            if key in _BOOL_KEYS:
                lowered = text.lower()
                if lowered in ('1', 'true', 'yes', 'on'):
                    return True
                if lowered in ('0', 'false', 'no', 'off'):
                    return False
                raise ValueError(text)
            if key == 'taus':
                return tuple(float(part) for part in text.split(',') if part.strip())
        except ValueError:
            raise ConfigurationError(f"Configuration errors: invalid value for {key}: '{raw}'")
        return text

    @classmethod
    def from_file(cls, path: str) -> 'RunConfig':
        """
        Load a flat key=value configuration file

        Args:
            path: Path of the configuration file

        Returns:
            RunConfig: Defaults overridden by the file's keys
        """
        values: Dict[str, Any] = {}
        known = set(cls.keys())
        with open(path, 'r', encoding='utf-8') as handle:
            for line_no, line in enumerate(handle, start=1):
                stripped = line.split('#', 1)[0].strip()
                if not stripped:
                    continue
                if '=' not in stripped:
                    raise ConfigurationError(
                        f"Configuration errors: line {line_no} of {path} is not key=value"
                    )
                key, raw = stripped.split('=', 1)
                key = key.strip().replace('-', '_')
                if key not in known:
                    raise ConfigurationError(f"Configuration errors: unknown key '{key}' in {path}")
                values[key] = cls.parse_value(key, raw)
        return cls(**values)

    def merged(self, overrides: Dict[str, Any]) -> 'RunConfig':
        """Return a copy with every non-None override applied"""
        known = set(self.keys())
        applied = {key: value for key, value in overrides.items() if key in known and value is not None}
        return replace(self, **applied)

    def validate(self) -> bool:
        """Validate every range before any work starts"""
        from core.graph import DISCOUNT_ALIASES

        errors = []

        if self.d < 1:
            errors.append(f"d must be >= 1 (got {self.d})")
        if not 0.0 < self.tau < 1.0:
            errors.append(f"tau must lie in (0, 1) (got {self.tau})")
        if self.k < 0:
            errors.append(f"k must be >= 0 (got {self.k})")
        if self.discount.lower().strip() not in DISCOUNT_ALIASES:
            errors.append(f"unknown discount '{self.discount}'")
        if not self.tol > 0:
            errors.append(f"tol must be positive (got {self.tol})")
        if self.max_iter is not None and self.max_iter < 1:
            errors.append(f"max_iter must be >= 1 (got {self.max_iter})")
        if self.algorithm not in ALGORITHMS:
            errors.append(f"algorithm must be one of {', '.join(ALGORITHMS)} (got '{self.algorithm}')")
        if self.threads < 1:
            errors.append(f"threads must be >= 1 (got {self.threads})")
        if self.guard < 1:
            errors.append(f"guard must be >= 1 (got {self.guard})")
        if self.cache_limit is not None and self.cache_limit < 1:
            errors.append(f"cache_limit must be >= 1 (got {self.cache_limit})")
        if self.trials < 1:
            errors.append(f"trials must be >= 1 (got {self.trials})")
        if self.samples < 1:
            errors.append(f"samples must be >= 1 (got {self.samples})")
        if any(not 0.0 < tau < 1.0 for tau in self.taus):
            errors.append("every sweep tau must lie in (0, 1)")

        if errors:
            raise ConfigurationError(f"Configuration errors: {', '.join(errors)}")

        return True
