"""Stage-parallel Radau IIA solver kit."""
