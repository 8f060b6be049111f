"""Training, compression and integer inference services."""
