"""Lock-free locally-asynchronous block-partitioned SGD engine.

Subpackages cover the shared parameter store, block partitions, training
objectives, learning-rate/averaging schedules, the multi-threaded engine with
its synchronous baselines, run instrumentation, and a CLI.
"""

__version__ = "0.1.0"
