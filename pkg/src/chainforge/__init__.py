"""chainforge: supply-chain reconstruction from forum thread dumps."""

__version__ = "0.1.0"
