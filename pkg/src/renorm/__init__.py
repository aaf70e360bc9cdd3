"""Renormalization fixed points for p-tupling maps of arbitrary critical degree."""
