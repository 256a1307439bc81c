import logging
from typing import Optional

from protoquad.embedders.base import BaseEmbedder, GradientMatrix
from protoquad.exceptions import DataFormatError
from protoquad.parsers.base import Dataset
from protoquad.parsers.fishgrad import load_embeddings

logger = logging.getLogger(__name__)


class FileEmbedder(BaseEmbedder):
    """Gradients of an external black-box model, read from FISHGRAD files.

    The model is trained elsewhere; ``fit`` only checks that the training file matches
    the training set, and ``embed`` serves rows by position.
    """

    def __init__(self, train_path: str, test_path: Optional[str] = None):
        """Initialize the file embedder.

        Args:
            train_path (str): FISHGRAD file with one row per training example
            test_path (str): FISHGRAD file with one row per test example
        """
        self.train_path = train_path
        self.test_path = test_path
        self.train_grads = load_embeddings(train_path)
        self.test_grads = load_embeddings(test_path) if test_path else None
        if self.test_grads is not None and self.test_grads.param_dim != self.train_grads.param_dim:
            raise DataFormatError(
                f"Train gradients have {self.train_grads.param_dim} parameters, "
                f"test gradients have {self.test_grads.param_dim}"
            )

    def fit(self, dataset: Optional[Dataset]) -> "FileEmbedder":
        if dataset is not None and dataset.n != self.train_grads.n:
            raise DataFormatError(
                f"{self.train_path} has {self.train_grads.n} rows for {dataset.n} training examples"
            )
        return self

    def embed(self, dataset: Optional[Dataset] = None, split: str = "train") -> GradientMatrix:
        """Return the stored gradients for a split ("train" or "test")."""
        grads = self.train_grads if split == "train" else self.test_grads
        if grads is None:
            raise DataFormatError(f"No gradient file was given for the {split} split")
        if dataset is not None and dataset.n != grads.n:
            raise DataFormatError(f"{grads.n} stored {split} gradients for {dataset.n} examples")
        logger.debug("Serving %d %s gradients from file", grads.n, split)
        return grads
