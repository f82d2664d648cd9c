"""Per-aspect ("facet") ontology embeddings for zero-shot learning.

The pipeline: parse an ontology, learn one embedding component per semantic
aspect (taxonomy, attributes, ...), then hand the disentangled class
embeddings to one of two zero-shot learners - a conditional WGAN-GP feature
generator or a GCN that propagates classifier weights over per-aspect
semantic graphs - and evaluate with macro accuracy / harmonic mean (imgc) or
MRR / hit@k (kgc).
"""

import torch as _torch

# single-threaded CPU math keeps reduction order, and therefore every float,
# identical across runs and machines
_torch.set_num_threads(1)

__version__ = "0.1.0"
