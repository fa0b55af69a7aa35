"""
Test package for grouper.

Covers:
- Record framing and shard files
- Partitioning and manifests
- Group streams, access backends and benchmarks
- Group statistics
- Federated simulation
- The command-line interface
"""
