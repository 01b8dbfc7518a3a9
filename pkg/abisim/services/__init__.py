"""Simulation services of the AOM interferometer"""

from .errors import AbiSimError, ConfigError
from .optics import AbiConfig, AomConfig, Port, PortField, abi_transfer
from .fitting import FitResult, fit_fringe

__all__ = ['AbiSimError', 'ConfigError', 'AbiConfig', 'AomConfig', 'Port', 'PortField',
           'abi_transfer', 'FitResult', 'fit_fringe']
