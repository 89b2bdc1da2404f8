"""From raw posts to model-ready arrays: tokenize, build a vocabulary,
encode with padding, and split while preserving the class ratio."""

import numpy as np

from urgentbayes.corpus import (
    build_vocabulary,
    examples_from_posts,
    random_embeddings,
    stratified_split,
    tokenize,
)
from urgentbayes.synthetic import imbalanced_corpus


def main():
    posts = imbalanced_corpus(400)
    n_pos = sum(1 for p in posts if p.urgency > 4)
    print(f"{len(posts)} posts, {n_pos} urgent ({n_pos / len(posts):.1%})")
    print(f"sample: {posts[0].text!r} (urgency {posts[0].urgency})")
    print(f"tokens: {tokenize(posts[0].text)}")

    vocab = build_vocabulary([tokenize(p.text) for p in posts], min_frequency=2)
    print(f"\nvocabulary: {len(vocab)} entries (pad=0, unk=1)")

    examples = examples_from_posts(posts, vocab, max_len=12)
    ex = examples[0]
    print(f"encoded row: ids {ex.token_ids[:8]}..., true length {ex.true_length}, label {ex.label}")

    emb = random_embeddings(vocab, d=32)
    print(f"embedding table {emb.matrix.shape}, pretrained coverage {emb.coverage:.0%}")

    train, test = stratified_split(examples, 0.4, seed=0)
    for name, part in (("train", train), ("test", test)):
        rate = np.mean([e.label for e in part])
        print(f"{name}: {len(part)} examples, {rate:.1%} positive")


if __name__ == "__main__":
    main()
