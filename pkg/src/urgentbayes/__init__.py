"""Urgency triage for forum posts with recurrent classifiers and
Bayesian uncertainty (Monte Carlo dropout and variational inference)."""

__version__ = "0.1.0"
