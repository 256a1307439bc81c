from typing import Optional

from protoquad.config.manager import ConfigManager
from protoquad.parsers.base import Dataset
from protoquad.pipeline import PrototypePipeline
from protoquad.selection.base import SelectionReport
from protoquad.selection.influence import InfluenceReport


class ProtoQuad:
    """Simple prototype-selection interface for easy usage."""

    def __init__(self, mode: str = "full", method: str = "sbq", k: int = 10, seed: int = 0,
                 config_path: Optional[str] = None, **selection):
        """Initialize the interface.

        Args:
            mode (str): Fisher kernel mode ("full" or "practical")
            method (str): Selector ("sbq", "mp", "stochastic", "distributed")
            k (int): Default number of prototypes
            seed (int): Seed for randomized selectors
            config_path (str): Optional YAML configuration
            **selection: Further ``selection.*`` settings (delta, partitions, tol_d, ...)
        """
        config = ConfigManager(config_path)
        config.set("embedding.mode", mode)
        config.set("selection.method", method)
        config.set("selection.k", k)
        for key, value in selection.items():
            config.set(f"selection.{key}", value)
        self.seed = seed
        self.pipeline = PrototypePipeline(config)

    def explain(self, train: Dataset, test: Dataset, k: Optional[int] = None) -> SelectionReport:
        """Select weighted prototypes from ``train`` for the examples in ``test``.

        Args:
            train (Dataset): Labelled training set
            test (Dataset): Examples to explain; labels, if present, are not read

        Returns:
            SelectionReport: Prototypes, quadrature weights and traces
        """
        test = Dataset(test.features, None, test.ids)
        return self.pipeline.explain(train, test, k=k, seed=self.seed)

    def influence(self, train: Dataset, test: Dataset, test_index: int, k: int = 10) -> InfluenceReport:
        """Rank training points by influence on one test example."""
        test = Dataset(test.features, None, test.ids)
        return self.pipeline.influence(train, test, test_index, k)

    def __repr__(self) -> str:
        return (f"ProtoQuad(mode={self.pipeline.config.get('embedding.mode')}, "
                f"method={self.pipeline.config.get('selection.method')})")
