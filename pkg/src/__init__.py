"""
Contextual String Embeddings
Character language models, contextual word embeddings and downstream taggers/classifiers
"""

__version__ = "1.0.0"
__author__ = "Contextual String Embeddings Team"
