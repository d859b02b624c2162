from .games import (
    ExploitabilityReport,
    FiniteBayesianGame,
    GameFormatError,
    MixedStrategyProfile,
    best_response,
    brute_force_bne,
    expected_payoff,
    exploitability,
    load_game,
    load_shipped_game,
    parse_game,
    simplex_grid,
)
from .learners import (
    DebateLearner,
    EconGameLearner,
    RegretFit,
    RegretTrace,
    fit_regret_exponent,
    learning_rate,
    run_debate,
    run_econ,
    run_learner,
)

__all__ = [
    "ExploitabilityReport",
    "FiniteBayesianGame",
    "GameFormatError",
    "MixedStrategyProfile",
    "best_response",
    "brute_force_bne",
    "expected_payoff",
    "exploitability",
    "load_game",
    "load_shipped_game",
    "parse_game",
    "simplex_grid",
    "DebateLearner",
    "EconGameLearner",
    "RegretFit",
    "RegretTrace",
    "fit_regret_exponent",
    "learning_rate",
    "run_debate",
    "run_econ",
    "run_learner",
]
