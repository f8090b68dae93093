"""chainviz: paper-style figures from chainforge JSON/CSV exports."""

__version__ = "0.1.0"
