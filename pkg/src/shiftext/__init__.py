"""Shift-extension decisions for committed couriers in crowdsourced last-mile delivery."""

__version__ = "0.1.0"
