"""Test visitweight core functionalities."""
