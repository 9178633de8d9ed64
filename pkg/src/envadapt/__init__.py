"""Environment-adaptive position/force control: simulation and analysis toolkit."""

__version__ = "0.1.0"
