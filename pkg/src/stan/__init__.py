"""Spatio-temporal adversarial networks for abnormal event detection in video."""
