"""Claim-completeness audits, response-rank certificates and completion replays."""

__version__ = "0.1.0"
