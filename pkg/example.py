"""Example usage of the state-tracking library programmatically."""

import numpy as np
from loguru import logger

from algebra import get_group, is_solvable, prefix_products, sample_word
from chess_reduction import encode_word, reduce_word, to_uci_text
from config import ExperimentConfig
from constructions import WordSample, group_to_dfa, verify_construction
from harness import train_model
from ssm import FORMS, evaluate, random_layer_spec


def example_word_problem():
    """Example: Prefix products on A5 and a solvability check."""
    g = get_group("A5")
    word = sample_word(g, 8, seed=0)

    logger.info(f"A5 has order {g.order}, solvable: {is_solvable(g)}")
    logger.info(f"Word {[g.names[t] for t in word]}")
    logger.info(f"Prefix products {[g.names[t] for t in prefix_products(g, word)]}")


def example_forms_agree():
    """Example: Recurrent, convolutional and scan forms of one random layer."""
    rng = np.random.default_rng(0)
    spec = random_layer_spec("diagonalizable", input_dim=3, state_dim=4, rng=rng)
    inputs = rng.uniform(-1.0, 1.0, size=(32, 3))

    outputs = {form: evaluate(spec, inputs, form).outputs for form in FORMS}
    for form, y in outputs.items():
        gap = np.max(np.abs(y - outputs["recurrent"]))
        logger.info(f"{form:>13}: max deviation from recurrent {gap:.2e}")


def example_constructions():
    """Example: Compile the A5 automaton to IDS4 and check it against the DFA."""
    dfa = group_to_dfa(get_group("A5"))
    report = verify_construction("ids4", dfa, WordSample("random", max_length=32, count=100), label="A5")

    status = "passed" if report.passed else f"failed on {len(report.mismatches)} words"
    logger.info(f"IDS4 on A5: {report.words_tested} words, {status}")


def example_chess():
    """Example: Encode an S5 word as chess moves."""
    g = get_group("S5")
    word = sample_word(g, 3, seed=1)
    output = reduce_word(word, g)

    logger.info(f"Moves: {to_uci_text(encode_word(word, g))}")
    logger.info(f"Accept: {output.accept}\n{output.final_board.ascii()}")


def example_train():
    """Example: Train a small RNN on Z60 with the smoke preset."""
    config = ExperimentConfig.smoke()
    config.output_dir = "example_runs"
    record = train_model(config, "rnn", length=4, depth=1, seed=0)

    logger.info(
        f"{record.family}: {record.status} after {record.steps_used} steps, "
        f"full-sequence accuracy {record.full_sequence_accuracy:.3f}"
    )


if __name__ == "__main__":
    logger.remove()
    logger.add(lambda msg: print(msg, end=""), format="{message}", colorize=True, level="INFO")

    print("\n=== Example 1: Word problem ===\n")
    example_word_problem()

    print("\n=== Example 2: Evaluation forms ===\n")
    example_forms_agree()

    print("\n=== Example 3: Exact constructions ===\n")
    example_constructions()

    print("\n=== Example 4: Chess reduction ===\n")
    example_chess()

    print("\n=== Example 5: Training ===\n")
    example_train()
