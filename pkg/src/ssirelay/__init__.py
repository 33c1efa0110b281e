"""Dual-hop AF relay selection over composite fading."""
