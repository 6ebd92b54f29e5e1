"""Mobility-aware content-popularity prediction and cache simulation for
fog access networks: request-log ingestion, neighbor-enhanced features, a
dual-channel preference model trained locally / federated / cluster-wise,
online mobile-preference learning, and a windowed cache-hit-rate replay
against frequency- and recency-based baselines."""

__version__ = "0.1.0"
