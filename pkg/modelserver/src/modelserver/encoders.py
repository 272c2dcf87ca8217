"""Transformer towers behind the embedding endpoints.

The image tower is a pre-norm ViT whose forward pass can drop patch
tokens before the transformer blocks run: a masked window keeps the
class token plus the window's patch tokens, each carrying the position
embedding of its original grid location. Embedding the full image is
the same forward with every token kept, so the two paths agree by
construction. The text tower runs over raw UTF-8 bytes with a prepended
summary token. Both project into a shared embedding space and
L2-normalize.

Weights load from a state-dict checkpoint when one is configured and
otherwise come from a seeded random init, which keeps the server fully
deterministic without any downloaded artifacts.
"""

import torch
from torch import nn
from torch.nn import functional as nnf

from .config import ServerConfig


class TransformerBlock(nn.Module):
    def __init__(self, width: int, heads: int):
        super().__init__()
        self.ln1 = nn.LayerNorm(width)
        self.attn = nn.MultiheadAttention(width, heads, batch_first=True)
        self.ln2 = nn.LayerNorm(width)
        self.mlp = nn.Sequential(
            nn.Linear(width, 4 * width), nn.GELU(), nn.Linear(4 * width, width))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.ln1(x)
        x = x + self.attn(h, h, h, need_weights=False)[0]
        return x + self.mlp(self.ln2(x))


class ImageTower(nn.Module):
    """ViT over a fixed square input; forwards an arbitrary token subset."""

    def __init__(self, image_size: int, patch_size: int, width: int,
                 depth: int, heads: int, embed_dim: int):
        super().__init__()
        self.image_size = image_size
        self.patch_size = patch_size
        self.grid = image_size // patch_size
        self.patch_embed = nn.Conv2d(3, width, patch_size, stride=patch_size)
        self.class_token = nn.Parameter(torch.zeros(1, 1, width))
        self.pos_embed = nn.Parameter(torch.zeros(1, self.grid * self.grid + 1, width))
        self.blocks = nn.ModuleList(
            TransformerBlock(width, heads) for _ in range(depth))
        self.ln_final = nn.LayerNorm(width)
        self.proj = nn.Linear(width, embed_dim, bias=False)

    def _tokens(self, image: torch.Tensor, keep: torch.Tensor | None) -> torch.Tensor:
        # image: (H, W, 3) float32 in [0, 1]
        x = image.permute(2, 0, 1).unsqueeze(0)
        x = self.patch_embed(x).flatten(2).transpose(1, 2)
        x = torch.cat([self.class_token, x], dim=1) + self.pos_embed
        if keep is not None:
            idx = torch.cat([keep.new_zeros(1), keep + 1])
            x = x[:, idx, :]
        for block in self.blocks:
            x = block(x)
        return self.ln_final(x)

    def window_embedding(self, image: torch.Tensor, keep: torch.Tensor) -> torch.Tensor:
        x = self._tokens(image, keep)
        return nnf.normalize(self.proj(x[:, 0, :]), dim=-1)[0]

    def image_embeddings(self, image: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        x = self._tokens(image, None)
        cls = nnf.normalize(self.proj(x[:, 0, :]), dim=-1)[0]
        patches = nnf.normalize(self.proj(x[:, 1:, :]), dim=-1)[0]
        return cls, patches.reshape(self.grid, self.grid, -1)


class TextTower(nn.Module):
    """Byte-level text encoder: UTF-8 bytes plus a summary token."""

    CLS_ID = 256

    def __init__(self, width: int, depth: int, heads: int, max_len: int,
                 embed_dim: int):
        super().__init__()
        self.max_len = max_len
        self.token_embed = nn.Embedding(257, width)
        self.pos_embed = nn.Parameter(torch.zeros(1, max_len, width))
        self.blocks = nn.ModuleList(
            TransformerBlock(width, heads) for _ in range(depth))
        self.ln_final = nn.LayerNorm(width)
        self.proj = nn.Linear(width, embed_dim, bias=False)

    def encode(self, text: str) -> torch.Tensor:
        ids = [self.CLS_ID] + list(text.encode("utf-8"))[: self.max_len - 1]
        x = self.token_embed(torch.tensor([ids], dtype=torch.long))
        x = x + self.pos_embed[:, : len(ids), :]
        for block in self.blocks:
            x = block(x)
        x = self.ln_final(x)
        return nnf.normalize(self.proj(x[:, 0, :]), dim=-1)[0]


def build_towers(cfg: ServerConfig) -> tuple[ImageTower, TextTower]:
    """Construct both towers on the configured device, seeded or from disk."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(cfg.seed)
        image = ImageTower(cfg.image_size, cfg.patch_size, cfg.vision_width,
                           cfg.vision_depth, cfg.vision_heads, cfg.embed_dim)
        text = TextTower(cfg.text_width, cfg.text_depth, cfg.text_heads,
                         cfg.text_max_len, cfg.embed_dim)
        nn.init.normal_(image.class_token, std=0.02)
        nn.init.normal_(image.pos_embed, std=0.02)
        nn.init.normal_(text.pos_embed, std=0.02)
    if cfg.vision_checkpoint:
        image.load_state_dict(torch.load(cfg.vision_checkpoint,
                                         map_location="cpu", weights_only=True))
    if cfg.text_checkpoint:
        text.load_state_dict(torch.load(cfg.text_checkpoint,
                                        map_location="cpu", weights_only=True))
    device = torch.device(cfg.device)
    for tower in (image, text):
        tower.to(device)
        tower.eval()
        tower.requires_grad_(False)
    return image, text
