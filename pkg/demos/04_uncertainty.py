"""What the sampled predictions buy you: predictive entropy separates
confident calls from shaky ones, and more samples steady the estimate."""

import numpy as np

from urgentbayes.autodiff import RngStream
from urgentbayes.corpus import build_vocabulary, examples_from_posts, make_example, tokenize, random_embeddings
from urgentbayes.encoder import HyperParams
from urgentbayes.mcd import McdConfig
from urgentbayes.synthetic import separable_corpus
from urgentbayes.training import TrainConfig, build_model, train
from urgentbayes.vi import ViConfig


def describe(tag, dist):
    print(
        f"  {tag}: p(urgent)={dist.mean_probs[1]:.3f} "
        f"entropy={dist.entropy:.4f} label={dist.predicted_label}"
    )


def main():
    posts = separable_corpus(32)
    vocab = build_vocabulary([tokenize(p.text) for p in posts], min_frequency=1)
    hp = HyperParams(max_len=10, embed_dim=24, hidden_dim=12, z_dim=6)
    examples = examples_from_posts(posts, vocab, hp.max_len)
    emb = random_embeddings(vocab, hp.embed_dim)

    models = {}
    for kind in ("mcd", "vi"):
        model = build_model(
            hp, emb.matrix.copy(), kind, seed=0,
            mcd_cfg=McdConfig(num_samples=30),
            vi_cfg=ViConfig(z_dim=hp.z_dim, m_test=30),
        )
        train(model, examples, TrainConfig(learning_rate=3e-3, batch_size=16, epochs=40, model_kind=kind, seed=0))
        models[kind] = model

    clear = "assignment deadline tomorrow and the server keeps failing"
    murky = "thanks for the deadline reminder, enjoyed the lecture"
    for text in (clear, murky):
        print(f"\npost: {text!r}")
        ex = make_example(tokenize(text), 0, vocab, hp.max_len)
        ids, length = ex.token_ids[None, :], np.array([ex.true_length])
        for kind, model in models.items():
            dist = model.predict_batch(ids, length, RngStream(5).child(kind))[0]
            describe(kind, dist)

    print("\nsample count vs estimator spread (mcd, 30 repeats each):")
    ex = make_example(tokenize(murky), 0, vocab, hp.max_len)
    ids, length = ex.token_ids[None, :], np.array([ex.true_length])
    for m in (5, 50):
        models["mcd"].cfg.num_samples = m
        probs = [
            models["mcd"].predict_batch(ids, length, RngStream(rep).child("spread", m))[0].mean_probs[1]
            for rep in range(30)
        ]
        print(f"  M={m:>3}: p(urgent) spread (std over repeats) {np.std(probs):.5f}")


if __name__ == "__main__":
    main()
