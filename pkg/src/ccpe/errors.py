"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class CcpeError(Exception):
    """Base class for all errors raised by :mod:`ccpe`."""


class GraphError(CcpeError):
    """Structural problem with a causal graph."""


class CycleError(GraphError):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("edge relation contains a cycle through " + " -> ".join(map(str, self.cycle)))


class DanglingEdgeError(GraphError):
    """An edge references a node that does not exist."""


class UnknownNodeError(GraphError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else "unknown node"


class OverlapError(GraphError, ValueError):
    """Node sets that must be disjoint intersect."""


class HiddenNodesError(GraphError):
    """The operation requires a graph without hidden nodes."""


class NoGlobalNodeError(GraphError):
    """The operation requires a global (always-one) node."""


class ParseError(CcpeError, ValueError):
    """Malformed graph, model, instance or config document."""


class ActionDomainError(CcpeError, ValueError):
    """An action targets a hidden, reward or global node, or repeats a target."""


class SequenceError(CcpeError, ValueError):
    """An admissible sequence is malformed or fails verification."""


class NoSequenceError(SequenceError):
    """The action has no admissible sequence, so no observational estimate exists."""


class ModelError(CcpeError, ValueError):
    """Invalid structural causal model parameters."""


class TooLargeError(CcpeError):
    """Exact enumeration requested above the node limit."""


class NonConvergenceError(CcpeError, ArithmeticError):
    """Newton iterations failed to solve the score equation."""


class ConfigError(CcpeError, ValueError):
    """Invalid algorithm or experiment configuration."""


class BudgetError(ConfigError):
    """Fixed-budget run requested with too small a budget."""


class ParamError(ConfigError):
    """Instance generator parameters outside the family's range."""


class InstanceClassError(CcpeError, ValueError):
    """Instance violates the constraints of the lower-bound class."""


class RangeError(CcpeError, ValueError):
    """Index argument outside its admissible range."""


class EmptyError(CcpeError, ValueError):
    """Operation on an empty collection."""
