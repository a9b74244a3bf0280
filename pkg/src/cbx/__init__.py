"""Concept-bottleneck explainability engine.

Builds and trains two-stage concept models, attributes both halves
(input to concepts, concepts to class) with relevance propagation,
gradients, or integrated gradients, scores saliency maps against
ground-truth part locations, and supports concept intervention through a
CLI and an HTTP service.
"""

__version__ = "0.1.0"
