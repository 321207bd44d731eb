from dataclasses import dataclass

from core_main.exceptions import ConfigError

FLOW_SOURCES = ('computed', 'ingested', 'ground_truth')


@dataclass(frozen=True)
class FlowColorConfig:
    """
    Fixed HSV wheel: hue = flow angle, saturation 1, value = min(|flow|, v_max) / v_max
    """

    v_max: float = 8.0

    def __post_init__(self):
        if not self.v_max > 0:
            raise ConfigError(f"v_max must be > 0, got {self.v_max}")


@dataclass(frozen=True)
class HornSchunckParams:
    smoothness: float = 0.1
    iterations: int = 100

    def __post_init__(self):
        if not self.smoothness > 0:
            raise ConfigError(f"smoothness weight must be > 0, got {self.smoothness}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")


@dataclass(frozen=True)
class FlowConfig:
    """Flow source selection plus solver and colour settings"""

    source: str = 'computed'
    color: FlowColorConfig = FlowColorConfig()
    solver: HornSchunckParams = HornSchunckParams()

    def __post_init__(self):
        if self.source not in FLOW_SOURCES:
            raise ConfigError(f"flow source must be one of {FLOW_SOURCES}, got {self.source!r}")
