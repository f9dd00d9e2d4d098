"""Translation-based knowledge graph embeddings with plateau-driven learning rates."""
