import logging
import threading
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from protoquad.embedders.base import GradientMatrix
from protoquad.embedders.fisher import FisherMetric
from protoquad.exceptions import ProtoQuadError
from protoquad.kernels.base import BaseKernel

logger = logging.getLogger(__name__)

NEGATIVE_MMD_TOL = 1e-10


class KernelOracle(BaseKernel):
    """Lazily evaluated Fisher kernel over train x train and train x test pairs.

    k(i, j) = f_i^T info^-1 f_j in full mode (applied through the metric's Cholesky
    factor, never an explicit inverse) and f_i^T f_j in practical mode.
    """

    def __init__(self, train_grads: GradientMatrix, test_grads: Optional[GradientMatrix],
                 metric: FisherMetric, cache_train: bool = False):
        """Initialize the oracle.

        Args:
            train_grads (GradientMatrix): Candidate (training) gradients
            test_grads (GradientMatrix): Target (test or validation) gradients
            metric (FisherMetric): Fisher metric and mode
            cache_train (bool): Materialize the train x train matrix on first use
        """
        super().__init__()
        if test_grads is not None and test_grads.param_dim != train_grads.param_dim:
            raise ValueError(
                f"Train gradients have {train_grads.param_dim} parameters, "
                f"test gradients have {test_grads.param_dim}"
            )
        if metric.param_dim != train_grads.param_dim:
            raise ValueError(
                f"Metric dimension {metric.param_dim} does not match {train_grads.param_dim} parameters"
            )
        self.train_grads = train_grads
        self.test_grads = test_grads
        self.metric = metric
        self.cache_train = cache_train
        self._train_white = None
        self._test_white = None
        self._cache = None
        self._lock = threading.Lock()

    @property
    def mode(self) -> str:
        return self.metric.mode

    @property
    def num_train(self) -> int:
        return self.train_grads.n

    @property
    def num_test(self) -> int:
        return 0 if self.test_grads is None else self.test_grads.n

    def _train(self) -> np.ndarray:
        with self._lock:
            if self._train_white is None:
                self._train_white = self.metric.whiten(self.train_grads.rows)
            return self._train_white

    def _test(self) -> np.ndarray:
        if self.test_grads is None:
            raise ProtoQuadError("Kernel oracle has no test gradients")
        with self._lock:
            if self._test_white is None:
                self._test_white = self.metric.whiten(self.test_grads.rows)
            return self._test_white

    def train_matrix(self) -> np.ndarray:
        """Return the cached t x t train kernel, building it once (uncounted)."""
        white = self._train()
        with self._lock:
            if self._cache is None:
                self._cache = white @ white.T
            return self._cache

    def _train_entries(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        if self.cache_train:
            return self.train_matrix()[np.ix_(rows, cols)]
        white = self._train()
        return white[rows] @ white[cols].T

    def _raw_entries(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        white = self._train()
        return white[rows] @ white[cols].T

    @property
    def cached_entries(self) -> int:
        """Entries of the materialized train matrix, 0 when none was built."""
        return 0 if self._cache is None else int(self._cache.size)

    def _train_diagonal(self, indices: np.ndarray) -> np.ndarray:
        white = self._train()[indices]
        return np.einsum("ij,ij->i", white, white)

    def kernel_value(self, i: int, j: int, against: str = "train") -> float:
        """Kernel between training point i and training or test point j.

        Args:
            i (int): Training index
            j (int): Training or test index
            against (str): "train" or "test", the set j indexes

        Returns:
            float: k(train_i, x_j)
        """
        train = self._train()
        other = train if against == "train" else self._test()
        if not 0 <= i < train.shape[0]:
            raise IndexError(f"Training index {i} out of range [0, {train.shape[0]})")
        if not 0 <= j < other.shape[0]:
            raise IndexError(f"{against.capitalize()} index {j} out of range [0, {other.shape[0]})")
        self._count(1)
        return float(np.dot(train[i], other[j]))

    def test_block(self, rows, cols) -> np.ndarray:
        """Kernel block between training indices (rows) and test indices (cols)."""
        rows = np.asarray(rows, dtype=np.int64).reshape(-1)
        cols = np.asarray(cols, dtype=np.int64).reshape(-1)
        test = self._test()
        self._check(rows, self.num_train)
        self._check(cols, test.shape[0])
        self._count(rows.size * cols.size)
        return self._train()[rows] @ test[cols].T

    def test_value(self, j: int, l: int) -> float:
        """Kernel between two test points."""
        test = self._test()
        self._check(np.array([j, l]), test.shape[0])
        self._count(1)
        return float(np.dot(test[j], test[l]))

    def dump_train_matrix(self, file_path: str, limit: int = 10000) -> None:
        """Write the t x t train kernel as CSV for diagnostics.

        Args:
            file_path (str): Destination path
            limit (int): Refuse when the training set is larger than this
        """
        if self.num_train > limit:
            raise ProtoQuadError(
                f"Refusing to dump a {self.num_train} x {self.num_train} kernel (limit {limit})"
            )
        np.savetxt(file_path, self.train_matrix(), delimiter=",", fmt="%.17g", encoding="utf-8")

    def __repr__(self) -> str:
        return (f"KernelOracle(train={self.num_train}, test={self.num_test}, "
                f"mode={self.mode}, evals={self.eval_count})")


@dataclass
class AffinityVector:
    """Mean kernel of each training point against the test set, plus the test self-term.

    z_i = (1/n) sum_j k(train_i, test_j); test_self_term = (1/n^2) sum_{j,l} k(test_j, test_l).
    """

    z: np.ndarray
    test_self_term: float

    def __len__(self) -> int:
        return self.z.shape[0]


def affinity_vector(oracle: KernelOracle) -> AffinityVector:
    """Compute z and the test self-term in one train/test sweep.

    Both are row sums of the kernel against the test set, so they are formed from the
    whitened test mean; the counter is charged t*n + n*n evaluations.
    """
    test = oracle._test()
    if test.shape[0] == 0:
        raise ProtoQuadError("Affinity needs a nonempty test set")
    train = oracle._train()
    mean_test = test.mean(axis=0)
    z = train @ mean_test
    self_term = float(np.dot(mean_test, mean_test))
    oracle._count(train.shape[0] * test.shape[0] + test.shape[0] * test.shape[0])
    return AffinityVector(z=z, test_self_term=self_term)


def mmd_squared(oracle: BaseKernel, selection: Sequence[int], weights, affinity: AffinityVector) -> float:
    """Squared MMD between the test distribution and a weighted set of training atoms.

    mu_pp - 2 w^T z_S + w^T K_SS w; negatives within round-off are clipped to 0.

    Args:
        oracle (BaseKernel): Kernel over the training pool
        selection (Sequence[int]): Training indices S
        weights (array-like): One weight per selected index
        affinity (AffinityVector): Affinity of the training pool to the test set

    Returns:
        float: Squared MMD
    """
    selection = np.asarray(selection, dtype=np.int64).reshape(-1)
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    if selection.size != weights.size:
        raise ValueError(f"{selection.size} indices but {weights.size} weights")
    if selection.size == 0:
        return affinity.test_self_term
    gram = oracle.train_block(selection, selection)
    value = (affinity.test_self_term - 2.0 * np.dot(weights, affinity.z[selection])
             + weights @ gram @ weights)
    if value < 0:
        if value >= -NEGATIVE_MMD_TOL:
            logger.debug("Clipping round-off negative MMD^2 %.3e to 0", value)
            return 0.0
        logger.warning("MMD^2 is %.3e < 0; the kernel may not be positive semidefinite", value)
    return float(value)


def rkhs_distance(oracle: KernelOracle, i: int, j: int) -> float:
    """RKHS distance between training point i and test point j."""
    sq = oracle.kernel_value(i, i) - 2.0 * oracle.kernel_value(i, j, against="test") + oracle.test_value(j, j)
    return float(np.sqrt(max(sq, 0.0)))
