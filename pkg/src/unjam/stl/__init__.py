"""Signal temporal logic: AST, parser, robustness evaluation, rule library."""

from .formula import (
    And,
    Atom,
    EvaluationError,
    Eventually,
    Formula,
    Globally,
    Not,
    Or,
    SignalTrace,
    TrueFormula,
    Until,
    robustness,
    satisfies,
)
from .parser import StlSyntaxError, parse, to_text
from .rules import (
    RuleContext,
    RuleInstance,
    build_rule_set,
    extract_channels,
    extract_channels_batch,
    formula_channels,
    parse_rule_file,
)

__all__ = [
    "And",
    "Atom",
    "EvaluationError",
    "Eventually",
    "Formula",
    "Globally",
    "Not",
    "Or",
    "SignalTrace",
    "TrueFormula",
    "Until",
    "robustness",
    "satisfies",
    "StlSyntaxError",
    "parse",
    "to_text",
    "RuleContext",
    "RuleInstance",
    "build_rule_set",
    "extract_channels",
    "extract_channels_batch",
    "formula_channels",
    "parse_rule_file",
]
