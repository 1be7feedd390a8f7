"""Synthetic-speech detection from prosodic, voice-quality and spectral cues."""
