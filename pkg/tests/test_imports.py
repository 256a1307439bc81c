import pytest


def test_package_import():
    """Test that the protoquad package can be imported."""
    import protoquad
    assert protoquad.__version__ == "0.1.0"


def test_module_imports():
    """Test that all main modules can be imported."""
    from protoquad import pipeline
    from protoquad.parsers import base
    from protoquad.embedders import base
    from protoquad.kernels import base
    from protoquad.selection import base

    from protoquad.pipeline import PrototypePipeline
    from protoquad.parsers.base import Dataset
    from protoquad.embedders.base import BaseEmbedder, GradientMatrix
    from protoquad.kernels.base import BaseKernel
    from protoquad.selection.base import InverseState, SelectionReport


def test_component_imports():
    """Test that all component implementations can be imported."""
    from protoquad.parsers.tabular import CsvLoader
    from protoquad.parsers.fishgrad import load_embeddings, save_embeddings
    from protoquad.embedders.logistic import LogisticEmbedder
    from protoquad.embedders.external import FileEmbedder
    from protoquad.kernels.fisher import KernelOracle
    from protoquad.selection import select_distributed, select_mp, select_sbq, select_stochastic
    from protoquad.evaluation.diagnostics import DiagnosticSuite
    from protoquad.workflows import run_experiment


def test_facade_export():
    from protoquad import ProtoQuad

    assert "sbq" in repr(ProtoQuad())
