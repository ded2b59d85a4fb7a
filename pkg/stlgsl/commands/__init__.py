"""
Command modules for the ST-LGSL CLI
"""

from .data import convert, synth
from .evaluation import evaluate, export_graph, predict
from .graph import init_graph
from .training import train

__all__ = ["convert", "evaluate", "export_graph", "init_graph", "predict", "synth", "train"]
