"""Data-driven finite elements for scalar conductivity."""
