import logging
from typing import Optional, Tuple

from protoquad.config.manager import ConfigManager
from protoquad.embedders.base import GradientMatrix
from protoquad.embedders.fisher import FisherMetric, estimate_fisher_info
from protoquad.embedders.universal import UniversalEmbedder
from protoquad.kernels.fisher import AffinityVector, KernelOracle, affinity_vector
from protoquad.parsers.base import Dataset
from protoquad.selection.base import SelectionReport
from protoquad.selection.influence import InfluenceReport, influence_report
from protoquad.selection.universal import UniversalSelector

logger = logging.getLogger(__name__)


class PrototypePipeline:
    """Pipeline that embeds, builds the Fisher kernel and selects prototypes."""

    def __init__(self, config_manager: Optional[ConfigManager] = None,
                 embedder: Optional[UniversalEmbedder] = None, threads: Optional[int] = None):
        """Initialize the pipeline.

        Args:
            config_manager (ConfigManager): Configuration (packaged defaults if None)
            embedder (UniversalEmbedder): Gradient source (a logistic embedder from config if None)
            threads (int): Worker threads for distributed selection
        """
        self.config = config_manager or ConfigManager()
        embedding = self.config.get_embedding_config()
        if embedder is None:
            embedder = UniversalEmbedder(
                provider=embedding.get("provider", "logistic"),
                l2=embedding.get("l2", 1e-2),
                tol=embedding.get("tol", 1e-8),
                max_iter=embedding.get("max_iter", 100),
                fit_intercept=embedding.get("fit_intercept", True),
            )
        self.embedder = embedder
        self.threads = threads if threads is not None else self.config.get("performance.threads", 1)
        self.metric: Optional[FisherMetric] = None
        self.oracle: Optional[KernelOracle] = None
        self.affinity: Optional[AffinityVector] = None

    def embed(self, train: Optional[Dataset],
              test: Optional[Dataset]) -> Tuple[GradientMatrix, GradientMatrix]:
        """Fit the embedder on the training set and embed both splits.

        Args:
            train (Dataset): Training set
            test (Dataset): Examples to explain; unlabelled rows use predicted labels

        Returns:
            Tuple[GradientMatrix, GradientMatrix]: Train and test gradients
        """
        self.embedder.fit(train)
        train_grads = self.embedder.embed(train, split="train")
        test_grads = self.embedder.embed(test, split="test")
        logger.info("Embedded %d training and %d test examples in %d parameters",
                    train_grads.n, test_grads.n, train_grads.param_dim)
        return train_grads, test_grads

    def build_kernel(self, train_grads: GradientMatrix, test_grads: GradientMatrix,
                     mode: Optional[str] = None) -> Tuple[KernelOracle, AffinityVector]:
        """Estimate the metric, wrap the kernel oracle and compute the affinity vector."""
        embedding = self.config.get_embedding_config()
        mode = mode or embedding.get("mode", "full")
        self.metric = estimate_fisher_info(train_grads, embedding.get("ridge_coeff", 1e-6), mode)
        self.oracle = KernelOracle(train_grads, test_grads, self.metric,
                                   cache_train=self.config.get("kernel.cache_train", False))
        self.affinity = affinity_vector(self.oracle)
        return self.oracle, self.affinity

    def selector(self, method: Optional[str] = None, k: Optional[int] = None,
                 seed: int = 0) -> UniversalSelector:
        selection = self.config.get_selection_config()
        return UniversalSelector(
            method=method or selection.get("method", "sbq"),
            k=k or selection.get("k", 10),
            delta=selection.get("delta", 0.1),
            partitions=selection.get("partitions", 2),
            seed=seed,
            threads=self.threads,
            tol_d=selection.get("tol_d"),
            tol_d_scale=selection.get("tol_d_scale", 1e-10),
            verify_inverse=selection.get("verify_inverse", True),
        )

    def explain(self, train: Optional[Dataset], test: Optional[Dataset], k: Optional[int] = None,
                method: Optional[str] = None, mode: Optional[str] = None, seed: int = 0) -> SelectionReport:
        """Select k weighted prototypes from ``train`` that represent ``test``.

        Args:
            train (Dataset): Training set
            test (Dataset): Examples to explain
            k (int): Number of prototypes
            method (str): Selector ("sbq", "mp", "stochastic", "distributed")
            mode (str): Fisher kernel mode ("full" or "practical")
            seed (int): Seed for randomized selectors

        Returns:
            SelectionReport: Prototypes, weights and traces
        """
        train_grads, test_grads = self.embed(train, test)
        oracle, affinity = self.build_kernel(train_grads, test_grads, mode)
        return self.selector(method, k, seed).select(oracle, affinity)

    def influence(self, train: Optional[Dataset], test: Optional[Dataset], test_index: int,
                  k: int = 10) -> InfluenceReport:
        """Rank training points by influence on one test example (full metric)."""
        train_grads, test_grads = self.embed(train, test)
        oracle, _ = self.build_kernel(train_grads, test_grads, mode="full")
        return influence_report(oracle, test_index, k)
