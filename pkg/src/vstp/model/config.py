from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from ..codec import CONTENT_MAX_LEN, REGION_LEN, STRUCTURED_MAX_LEN
from ..errors import ConfigError
from ..synth import N_CHANNELS

DECODERS = ("structured", "region", "content")


@dataclass(frozen=True)
class ModelConfig:
    """Hyper-parameters of the encoder and the three decoders.

    Decoder defaults follow the reference design (4 layers, 8 heads, MLP x4)
    with the hidden size shrunk to desk scale.
    """

    d: int = 128
    layers: int = 4
    heads: int = 8
    mlp_factor: int = 4
    enc_layers: int = 2
    grid_size: int = 32
    channels: int = N_CHANNELS
    stride: int = 4
    structured_len: int = STRUCTURED_MAX_LEN
    region_len: int = REGION_LEN
    content_len: int = CONTENT_MAX_LEN
    vocab_size: int = 1098
    n_bins: int = 1000
    n_fourier: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.d % self.heads:
            raise ConfigError(f"d={self.d} is not divisible by heads={self.heads}")
        if min(self.structured_len, self.region_len, self.content_len) < 3:
            raise ConfigError("decoder max lengths must be >= 3")
        if self.grid_size % self.stride:
            raise ConfigError(f"grid_size={self.grid_size} is not a multiple of stride={self.stride}")
        if min(self.d, self.layers, self.heads, self.mlp_factor, self.vocab_size) < 1:
            raise ConfigError("model sizes must be positive")

    @property
    def n_embeddings(self) -> int:
        return (self.grid_size // self.stride) ** 2

    def max_len(self, decoder: str) -> int:
        if decoder not in DECODERS:
            raise ConfigError(f"unknown decoder {decoder!r}; expected one of {DECODERS}")
        return getattr(self, f"{decoder}_len")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    batch_size: int = 16
    lr: float = 1e-3
    warmup: int = 100
    optimizer: str = "adamw"
    momentum: float = 0.9
    weight_decay: float = 0.0
    grad_clip: float = 1.0
    spatial_prompting: bool = True
    prefix_prompting: bool = False
    # independent window/prefix prompts per image per step, all sharing one encoder pass
    prompts_per_image: int = 1
    # cap on region/content targets drawn per image each step; None uses all of them
    stage2_per_image: int | None = None
    seed: int = 0
    log_every: int = 100

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1:
            raise ConfigError("steps and batch_size must be positive")
        if self.optimizer not in ("sgd", "adamw"):
            raise ConfigError(f"optimizer must be 'sgd' or 'adamw', got {self.optimizer!r}")
        if self.prompts_per_image < 1:
            raise ConfigError("prompts_per_image must be >= 1")
        if self.stage2_per_image is not None and self.stage2_per_image < 1:
            raise ConfigError("stage2_per_image must be positive or None")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)
