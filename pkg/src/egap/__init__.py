"""Entropy-coding pipeline for learned image compression latents, with
instance-adaptive pmf tables that shrink the amortization gap."""

__version__ = "0.1.0"
