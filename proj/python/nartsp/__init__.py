"""Non-autoregressive GNN solver for the travelling salesman problem."""

from ._nartsp import (
    ConfigError,
    ContractError,
    DimensionError,
    Error,
    IoError,
    Model,
    NumericError,
    ParseError,
    Trainer,
    beam_search,
    brute_force,
    farthest_insertion,
    generate_batch,
    generate_uniform,
    greedy_decode,
    held_karp,
    load_tsplib,
    nearest_insertion,
    sample_decode,
    tour_length,
    tour_log_prob,
    train_config,
    two_opt,
)

__version__ = "0.1.0"
