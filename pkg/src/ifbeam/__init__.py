"""Coordinated multicell MISO beamforming with limited scalar information exchange.

The package builds interference-free-user beamformers from local CSI, scores
candidate user selections with an analytic bound on the rates that need global
CSI, quantizes the exchanged rate scalars with Lloyd-Max codebooks and runs the
centralized/decentralized exchange protocols with exact bit ledgers.
"""

__version__ = "0.1.0"
