"""Federated LoRaWAN gateway overlay and its discrete-event simulator."""

__version__ = "0.1.0"
