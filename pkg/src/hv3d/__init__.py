"""Stereoscopic 3D video quality toolkit."""
