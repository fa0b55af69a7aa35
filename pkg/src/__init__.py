"""
grouper - group-structured datasets for federated learning

Partitions flat corpora into sharded, group-contiguous datasets, streams
groups with bounded memory, summarizes per-group statistics and simulates
FedAvg/FedSGD training with personalization evaluation.
"""

__version__ = "0.1.0"
__author__ = "grouper developers"
