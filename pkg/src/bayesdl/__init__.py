"""Monotone Bayesian resource tables for rain-interrupted one-day cricket."""

__version__ = "0.1.0"
DL_TABLE_VERSION = "DL-2013 standard edition"
