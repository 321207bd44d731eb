from dataclasses import dataclass

from core_main.exceptions import ConfigError


@dataclass(frozen=True)
class FeaturesConfig:
    ring_width: int = 4
    # autoencoder passes are batched in chunks of this many objects
    batch_size: int = 256

    def __post_init__(self):
        if self.ring_width < 1 or self.batch_size < 1:
            raise ConfigError("ring_width and batch_size must be >= 1")
