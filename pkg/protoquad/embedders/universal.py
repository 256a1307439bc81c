from typing import Optional

from protoquad.embedders.base import BaseEmbedder, GradientMatrix
from protoquad.parsers.base import Dataset


class UniversalEmbedder(BaseEmbedder):
    """Universal embedder that can use different gradient sources."""

    def __init__(self, provider: str = "logistic", **kwargs):
        """Initialize the universal embedder.

        Args:
            provider (str): Gradient source ("logistic", "file")
            **kwargs: Arguments for the underlying embedder
        """
        self.provider = provider.lower()

        if self.provider == "logistic":
            from .logistic import LogisticEmbedder
            self.embedder = LogisticEmbedder(**kwargs)
        elif self.provider == "file":
            from .external import FileEmbedder
            self.embedder = FileEmbedder(**kwargs)
        else:
            raise ValueError(f"Unsupported provider: {provider}")

    def fit(self, dataset: Optional[Dataset]) -> "UniversalEmbedder":
        self.embedder.fit(dataset)
        return self

    def embed(self, dataset: Optional[Dataset], split: str = "train") -> GradientMatrix:
        """Embed examples of the given split.

        Args:
            dataset (Dataset): Examples to embed (may be None for file gradients)
            split (str): "train" or "test"

        Returns:
            GradientMatrix: Gradient rows
        """
        if self.provider == "file":
            return self.embedder.embed(dataset, split)
        return self.embedder.embed(dataset)
