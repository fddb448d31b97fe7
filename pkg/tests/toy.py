"""The small encoder, vocabulary and sentence shared by fixtures and golden files."""

from newscam.encoder import EncoderConfig, random_weights
from newscam.synthetic import toy_vocab

TOY_SENTENCE = ("president donald trump turned up the heat on friday on fellow "
                "republicans in the u.s. senate to pass a bill dismantling the obamacare")
TOY_WORDS = ["president", "donald", "trump", "turned", "up", "the", "heat", "on", "friday",
             "fellow", "republicans", "in", "u", "s", "senate", "to", "pass", "a", "bill",
             "dismantling", "obama", "##care"]


def vocab():
    return toy_vocab(TOY_WORDS)


def config():
    return EncoderConfig(num_layers=2, hidden=16, num_heads=2, ffn_dim=32,
                         max_positions=64, vocab_size=len(vocab()))


def weights():
    return random_weights(config(), seed=3, scale=0.3)
