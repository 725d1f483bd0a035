"""Heat-stress biomarker modelling: wearable streams to survivability forecasts."""

__version__ = "0.1.0"
