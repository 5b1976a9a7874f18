"""Rule-inferable question answering benchmarks over incomplete knowledge graphs."""

__version__ = "0.1.0"
