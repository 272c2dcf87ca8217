"""Server configuration from environment variables.

Every knob has a MODELSERVER_* variable so deployments configure the
sidecar without touching code: bind address, device, checkpoint paths,
tower sizes, and segmentation limits. Unset variables fall back to the
defaults below.
"""

import os
from dataclasses import dataclass

ENV_PREFIX = "MODELSERVER_"


@dataclass(frozen=True)
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8700
    device: str = "cpu"
    seed: int = 0

    image_size: int = 240
    patch_size: int = 16
    embed_dim: int = 512
    vision_width: int = 256
    vision_depth: int = 4
    vision_heads: int = 4

    text_width: int = 256
    text_depth: int = 2
    text_heads: int = 4
    text_max_len: int = 77

    max_masks: int = 8
    min_mask_area: float = 0.005

    vision_checkpoint: str = ""
    text_checkpoint: str = ""
    name: str = ""

    def __post_init__(self):
        if self.image_size < self.patch_size or self.image_size % self.patch_size:
            raise ValueError(
                f"image size {self.image_size} not divisible by patch "
                f"size {self.patch_size}")
        if self.embed_dim < 8:
            raise ValueError(f"embed_dim must be >= 8, got {self.embed_dim}")
        if self.vision_width % self.vision_heads or self.text_width % self.text_heads:
            raise ValueError("tower width must be divisible by head count")
        if self.vision_depth < 1 or self.text_depth < 1:
            raise ValueError("tower depth must be >= 1")
        if self.text_max_len < 2:
            raise ValueError("text_max_len must be >= 2")
        if self.max_masks < 0:
            raise ValueError("max_masks must be >= 0")
        if not 0.0 <= self.min_mask_area < 1.0:
            raise ValueError("min_mask_area must be in [0, 1)")

    @property
    def grid_side(self) -> int:
        return self.image_size // self.patch_size

    @property
    def model_name(self) -> str:
        if self.name:
            return self.name
        tag = "ckpt" if self.vision_checkpoint else f"seed{self.seed}"
        return (f"masked-vit-p{self.patch_size}-"
                f"{self.vision_width}w{self.vision_depth}d-{tag}")

    @classmethod
    def from_env(cls, env: dict | None = None) -> "ServerConfig":
        env = os.environ if env is None else env

        def get(key, cast, default):
            raw = env.get(ENV_PREFIX + key)
            if raw is None or raw == "":
                return default
            try:
                return cast(raw)
            except (TypeError, ValueError) as exc:
                raise ValueError(f"bad {ENV_PREFIX}{key}={raw!r}: {exc}") from exc

        base = cls()
        return cls(
            host=get("HOST", str, base.host),
            port=get("PORT", int, base.port),
            device=get("DEVICE", str, base.device),
            seed=get("SEED", int, base.seed),
            image_size=get("IMAGE_SIZE", int, base.image_size),
            patch_size=get("PATCH_SIZE", int, base.patch_size),
            embed_dim=get("EMBED_DIM", int, base.embed_dim),
            vision_width=get("VISION_WIDTH", int, base.vision_width),
            vision_depth=get("VISION_DEPTH", int, base.vision_depth),
            vision_heads=get("VISION_HEADS", int, base.vision_heads),
            text_width=get("TEXT_WIDTH", int, base.text_width),
            text_depth=get("TEXT_DEPTH", int, base.text_depth),
            text_heads=get("TEXT_HEADS", int, base.text_heads),
            text_max_len=get("TEXT_MAX_LEN", int, base.text_max_len),
            max_masks=get("MAX_MASKS", int, base.max_masks),
            min_mask_area=get("MIN_MASK_AREA", float, base.min_mask_area),
            vision_checkpoint=get("VISION_CHECKPOINT", str, base.vision_checkpoint),
            text_checkpoint=get("TEXT_CHECKPOINT", str, base.text_checkpoint),
            name=get("NAME", str, base.name),
        )
