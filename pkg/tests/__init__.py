"""Test module of the visitweight project."""
