"""visitweight unit tests."""
