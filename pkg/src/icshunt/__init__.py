"""Automated threat hunting for Modbus/TCP industrial control networks.

The package decodes Modbus/TCP traffic from packet captures, matches it
against declarative attack signatures, maps hits onto the ATT&CK knowledge
base, attributes candidate adversary groups with a linear max-margin
classifier, and turns the evidence into hunting hypotheses served over an
HTTP API.
"""

__version__ = "0.1.0"


class IcshuntError(Exception):
    """Base class for all errors raised by this package."""
