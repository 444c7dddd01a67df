"""Tutorforge: script-induced conversational tutoring with a study harness."""

__version__ = "0.1.0"
