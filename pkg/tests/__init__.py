"""Tests suite for `etexshape`."""

from pathlib import Path

TESTS_DIR = Path(__file__).parent
FIXTURES_DIR = TESTS_DIR / "fixtures"
FRAME_LOG = FIXTURES_DIR / "frames.log"
"""Recorded-style frame log: comments, a header, three good records and one bad one."""
