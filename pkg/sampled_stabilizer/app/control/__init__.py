"""Sampled-data estimation and control package."""
