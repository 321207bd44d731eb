from dataclasses import dataclass, field

from core_main.exceptions import ConfigError

AUTOENCODER_ROLES = ('appearance', 'temporal')


@dataclass(frozen=True)
class AutoencoderSpec:
    """
    Encoder: 3x3 conv + batch norm + ReLU per width, stride 2 after the first layer.
    Decoder: x2 nearest upsampling + 3x3 conv + batch norm + ReLU per width,
    then a 3x3 conv to RGB and a per-pixel sigmoid.
    """

    input_size: int = 32
    encoder_widths: tuple = (16, 32, 64, 128)
    decoder_widths: tuple = (64, 32, 16)

    def __post_init__(self):
        object.__setattr__(self, 'encoder_widths', tuple(int(w) for w in self.encoder_widths))
        object.__setattr__(self, 'decoder_widths', tuple(int(w) for w in self.decoder_widths))
        if not self.encoder_widths or not self.decoder_widths:
            raise ConfigError("autoencoder needs at least one encoder and one decoder layer")
        if min(self.encoder_widths + self.decoder_widths) < 1:
            raise ConfigError("layer widths must be >= 1")
        if len(self.decoder_widths) != len(self.encoder_widths) - 1:
            raise ConfigError(
                f"{len(self.encoder_widths) - 1} downsampling encoder layers need as many decoder layers, "
                f"got {len(self.decoder_widths)}"
            )
        if self.input_size < 1 or self.input_size % self.downsampling:
            raise ConfigError(f"input size {self.input_size} must be a positive multiple of {self.downsampling}")

    @property
    def downsampling(self):
        return 2 ** len(self.decoder_widths)

    def as_dict(self):
        return {
            'input_size': self.input_size,
            'encoder_widths': list(self.encoder_widths),
            'decoder_widths': list(self.decoder_widths),
        }


@dataclass(frozen=True)
class AugmentationConfig:
    enabled: bool = True
    max_rotation_degrees: float = 10.0
    max_translation: int = 2
    shear: float = 0.2

    def __post_init__(self):
        if self.max_translation < 0 or self.max_rotation_degrees < 0:
            raise ConfigError("augmentation ranges must be >= 0")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 20
    seed: int = 0
    max_patches: int = 2000
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1) or not self.eps > 0:
            raise ConfigError("Adam betas must lie in [0, 1) and eps must be > 0")
        if self.max_patches < 1:
            raise ConfigError(f"max_patches must be >= 1, got {self.max_patches}")


@dataclass(frozen=True, eq=False)
class AutoencoderState:
    """
    A trained (or freshly initialised) autoencoder

    ``model`` is owned by the state: services copy it before mutating.
    """

    spec: AutoencoderSpec
    model: object
    loss_history: tuple = ()


@dataclass(frozen=True)
class AutoencoderConfig:
    """`autoencoder` section: one spec and one training setup shared by both roles"""

    spec: AutoencoderSpec = field(default_factory=AutoencoderSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
