"""Federated training of a shared feature backbone across sites whose label sets differ.

Only the backbone is averaged between sites. Each site keeps its own
classification head, and a purely local fine-tuning phase follows the
federated rounds.
"""
__version__ = "0.1.0"
