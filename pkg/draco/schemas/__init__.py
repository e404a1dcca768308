"""Published JSON schemas for DRACO config documents (package data)."""
