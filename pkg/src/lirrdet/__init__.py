"""lirrdet: supervised domain-adaptive object detection at desk scale.

A numpy-backed library combining a small single-shot anchor detector with a
joint invariant-representation / invariant-risk training objective, plus a
seeded synthetic domain-shift benchmark, COCO-style AP evaluation, and an
experiment pipeline comparing source-only, oracle, and adaptive training.
"""

__version__ = "0.1.0"
