"""Trial simulation and experiments."""
