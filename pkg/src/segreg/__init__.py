"""Segmentation-driven discontinuity-preserving registration.
"""
