"""Coordinated bidding of flexible multi-energy systems in sequential electricity markets."""
