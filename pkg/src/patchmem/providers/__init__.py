from .base import (
    ImageEmbeddings,
    PromptSet,
    Provider,
    ProviderDescriptor,
    TextEmbeddingPair,
    ensure_unit,
    ensure_unit_rows,
)
from .mock import MockProvider
from .remote import RemoteProvider

__all__ = [
    "Provider",
    "ProviderDescriptor",
    "ImageEmbeddings",
    "TextEmbeddingPair",
    "PromptSet",
    "MockProvider",
    "RemoteProvider",
    "ensure_unit",
    "ensure_unit_rows",
]
