"""Semi-static option hedging toolkit.

Builds weekly replication portfolios of short-dated options for longer-dated
index option targets via L1-penalized regression, benchmarks them against
dynamic delta hedging and a quadrature-based static spanning portfolio,
ranks strategies with a bootstrap superior-predictive-ability test, and
decomposes daily PnL into factor and greek components.
"""

__version__ = "0.1.0"
