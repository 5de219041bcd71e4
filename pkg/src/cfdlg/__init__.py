"""Counterfactual dialogue learning: causal strategy discovery, BiCoGAN
counterfactual generation, and dueling double-DQN policy training for
persuasive dialogue corpora.
"""
__version__ = "0.1.0"

from .corpus import (DialogueCorpus, Dialogue, Utterance, Transition,
                     load_corpus, write_corpus, read_embeddings,
                     write_embeddings, normalize_donations, filter_by_donation,
                     to_transitions, all_transitions, EE, ER)

__all__ = [
    "DialogueCorpus", "Dialogue", "Utterance", "Transition",
    "load_corpus", "write_corpus", "read_embeddings", "write_embeddings",
    "normalize_donations", "filter_by_donation", "to_transitions",
    "all_transitions", "EE", "ER", "__version__",
]
