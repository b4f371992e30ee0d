"""Skeleton-graph sign recognition: graphs, streams, networks, and late fusion."""
