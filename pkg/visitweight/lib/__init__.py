"""Visitweight.lib holds utilities shared by tests and notebooks."""
