"""Multiword-expression identification toolkit.

Sequence tagging of verbal MWEs over .cupt corpora: a ConvNet+BiLSTM tagger
with a softmax or CRF head, two feature-template CRF baselines, and span
evaluation (token-based and MWE-based, per category, seen/unseen).
"""

__version__ = "0.1.0"
