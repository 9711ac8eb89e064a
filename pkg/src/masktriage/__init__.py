"""masktriage: train and evaluate masked-keyword transformer classifiers
that triage security-related issue reports."""

__version__ = "0.1.0"
