"""Train the deterministic, dropout-sampled, and variational classifiers
on one small corpus and read their loss traces side by side."""

from urgentbayes.corpus import build_vocabulary, examples_from_posts, random_embeddings, tokenize
from urgentbayes.encoder import HyperParams
from urgentbayes.synthetic import separable_corpus
from urgentbayes.training import TrainConfig, build_model, train, train_accuracy
from urgentbayes.vi import ViConfig


def main():
    posts = separable_corpus(32)
    vocab = build_vocabulary([tokenize(p.text) for p in posts], min_frequency=1)
    hp = HyperParams(max_len=10, embed_dim=24, hidden_dim=12, z_dim=6)
    examples = examples_from_posts(posts, vocab, hp.max_len)
    emb = random_embeddings(vocab, hp.embed_dim)

    for kind in ("base", "mcd", "vi"):
        model = build_model(
            hp, emb.matrix.copy(), kind, seed=0, vi_cfg=ViConfig(z_dim=hp.z_dim)
        )
        cfg = TrainConfig(learning_rate=3e-3, batch_size=16, epochs=40, model_kind=kind, seed=0)
        result = train(model, examples, cfg)
        acc = train_accuracy(model, examples)
        first, last = result.loss_trace[0], result.loss_trace[-1]
        parts = ", ".join(f"{k}={v:.4f}" for k, v in last.parts.items())
        print(f"{kind:>4}: loss {first.loss:.4f} -> {last.loss:.4f} ({parts})")
        print(f"      train accuracy {acc:.2%} after {len(result.loss_trace)} epochs")


if __name__ == "__main__":
    main()
