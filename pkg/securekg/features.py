"""Lexical entity features: hashed character trigrams of canonical names."""
import re

import numpy as np

_SPACE = re.compile(r'\s+')


def canonical_key(name):
    return _SPACE.sub(' ', name.strip().lower())


def trigrams(name):
    """Per-word unpadded trigrams; words shorter than three characters stay whole."""
    grams = set()
    for word in canonical_key(name).split(' '):
        if not word:
            continue
        if len(word) < 3:
            grams.add(word)
            continue
        grams.update(word[i:i + 3] for i in range(len(word) - 2))
    return grams


def trigram_slot(gram, dim):
    value = 0
    for char in gram:
        value = value * 31 + ord(char)
    return value % dim


def feature_vector(name, dim=128):
    vector = np.zeros(dim, dtype=np.int64)
    for gram in trigrams(name):
        vector[trigram_slot(gram, dim)] = 1
    return vector


def feature_matrix(names, dim=128):
    if not names:
        return np.zeros((0, dim), dtype=np.int64)
    return np.stack([feature_vector(name, dim) for name in names])


def jaccard(x, y):
    """Plaintext Jaccard over 0/1 vectors, the linking oracle."""
    x, y = np.asarray(x), np.asarray(y)
    dot = int(np.dot(x, y))
    union = int(x.sum() + y.sum()) - dot
    return dot / union if union else 0.0
