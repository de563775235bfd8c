"""Gossip opinion dynamics with stubborn agents on random graphs."""
__version__ = "0.1.0"
