"""Tamper-evident, explainable loan underwriting at desk scale.

A simulated multi-organization ledger anchors digests of decision
explanations, model configurations, consents, and credentials; encrypted
payloads live in a deletable off-chain store; audits re-derive every
anchor; an entropy gate routes low-confidence decisions to human experts
whose annotations retrain the classifier.
"""

__version__ = "0.1.0"
