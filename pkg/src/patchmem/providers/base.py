"""Provider contracts: embedding, text encoding, and object segmentation.

A provider turns canonical images into unit-norm embeddings (per masked
window, per patch, and for the full image), encodes text prompts, and
proposes object masks. The engine only ever sees these four operations;
everything model-specific stays behind them. All returned embeddings are
validated and renormalized at this boundary rather than trusted.
"""

import abc
from dataclasses import dataclass, field

import numpy as np

from ..decompose import PatchGrid, WindowSpec, validate_image
from ..errors import ContractViolationError, InvalidConfigError

NORM_TOLERANCE = 1e-5


@dataclass(frozen=True)
class ProviderDescriptor:
    name: str
    dim: int
    patch_size: int
    deterministic: bool

    def __post_init__(self):
        if self.dim < 8:
            raise InvalidConfigError(f"embedding dim must be >= 8, got {self.dim}")
        if not self.name:
            raise InvalidConfigError("provider name must be nonempty")
        if self.patch_size < 1:
            raise InvalidConfigError(f"patch_size must be >= 1, got {self.patch_size}")


@dataclass(frozen=True)
class ImageEmbeddings:
    """Class token plus the (rows, cols, dim) patch-token grid."""
    class_token: np.ndarray
    patch_tokens: np.ndarray


@dataclass(frozen=True)
class TextEmbeddingPair:
    normal: np.ndarray
    anomal: np.ndarray


@dataclass(frozen=True)
class PromptSet:
    """Prompt templates with a ``{c}`` placeholder for the class name."""
    normal_templates: tuple = (
        "a photo of a {c}",
        "a photo of a flawless {c}",
        "a photo of a perfect {c}",
    )
    anomal_templates: tuple = (
        "a photo of a damaged {c}",
        "a photo of a {c} with a defect",
        "a photo of a broken {c}",
    )

    def render(self, class_name: str) -> tuple[list[str], list[str]]:
        if not class_name:
            raise InvalidConfigError("class name must be nonempty")
        if not self.normal_templates or not self.anomal_templates:
            raise InvalidConfigError("prompt set must have templates on both sides")
        return ([t.format(c=class_name) for t in self.normal_templates],
                [t.format(c=class_name) for t in self.anomal_templates])


def ensure_unit(vec: np.ndarray, what: str = "embedding") -> np.ndarray:
    """Validate finiteness and unit norm; renormalize drifted vectors.

    Vectors within NORM_TOLERANCE of unit length pass through untouched so
    already-normalized data stays bitwise stable.
    """
    arr = np.asarray(vec, dtype=np.float32)
    if arr.ndim != 1 or arr.size == 0:
        raise ContractViolationError(f"{what} must be a nonempty vector, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ContractViolationError(f"{what} contains non-finite values")
    norm = float(np.linalg.norm(arr.astype(np.float64)))
    if norm < 1e-12:
        raise ContractViolationError(f"{what} has zero norm")
    if abs(norm - 1.0) > NORM_TOLERANCE:
        arr = (arr.astype(np.float64) / norm).astype(np.float32)
    return arr


def ensure_unit_rows(mat: np.ndarray, what: str = "embeddings") -> np.ndarray:
    arr = np.asarray(mat, dtype=np.float32)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ContractViolationError(f"{what} must be a nonempty matrix, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ContractViolationError(f"{what} contain non-finite values")
    norms = np.linalg.norm(arr.astype(np.float64), axis=1)
    if (norms < 1e-12).any():
        raise ContractViolationError(f"{what} contain a zero vector")
    off = np.abs(norms - 1.0) > NORM_TOLERANCE
    if off.any():
        arr = arr.copy()
        arr[off] = (arr[off].astype(np.float64) / norms[off, None]).astype(np.float32)
    return arr


class Provider(abc.ABC):
    """Abstract provider; see module docstring for the contract."""

    @abc.abstractmethod
    def descriptor(self) -> ProviderDescriptor:
        ...

    @abc.abstractmethod
    def embed_window(self, image: np.ndarray, window: WindowSpec) -> np.ndarray:
        """Unit-norm embedding of one patch-grid window of a canonical image."""

    @abc.abstractmethod
    def embed_image(self, image: np.ndarray) -> ImageEmbeddings:
        """Class token and per-patch tokens for the full image."""

    @abc.abstractmethod
    def embed_templates(self, templates: list[str]) -> np.ndarray:
        """(N, dim) unit-norm embeddings, one per template string."""

    @abc.abstractmethod
    def segment_objects(self, image: np.ndarray) -> list[np.ndarray]:
        """Candidate object masks, each a bool map of the image shape."""

    def embed_text(self, class_name: str,
                   prompts: PromptSet | None = None) -> TextEmbeddingPair:
        """Grouped text embedding pair: per-side template mean, renormalized."""
        prompts = prompts or PromptSet()
        normal_texts, anomal_texts = prompts.render(class_name)
        normal = ensure_unit_rows(self.embed_templates(normal_texts), "text embeddings")
        anomal = ensure_unit_rows(self.embed_templates(anomal_texts), "text embeddings")
        return TextEmbeddingPair(
            normal=ensure_unit(normal.astype(np.float64).mean(axis=0), "normal prompt mean"),
            anomal=ensure_unit(anomal.astype(np.float64).mean(axis=0), "anomal prompt mean"),
        )

    def check_canonical(self, image: np.ndarray) -> tuple[np.ndarray, PatchGrid]:
        """Validate the image and derive its patch grid for this provider."""
        arr = validate_image(image)
        ps = self.descriptor().patch_size
        try:
            grid = PatchGrid.for_image(arr.shape[0], arr.shape[1], ps)
        except Exception as exc:
            raise ContractViolationError(str(exc)) from exc
        return arr, grid

    def check_window(self, grid: PatchGrid, window: WindowSpec) -> WindowSpec:
        if (window.row0 < 0 or window.col0 < 0 or window.rows < 1 or window.cols < 1
                or window.row0 + window.rows > grid.rows
                or window.col0 + window.cols > grid.cols):
            raise ContractViolationError(
                f"window {window} outside patch grid {grid.rows}x{grid.cols}")
        return window
