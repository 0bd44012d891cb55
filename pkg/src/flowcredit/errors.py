"""Exception hierarchy shared by every flowcredit module."""


class FlowCreditError(Exception):
    """Base class for all errors raised by flowcredit."""


# graph construction and queries

class GraphError(FlowCreditError, ValueError):
    """The graph description is structurally invalid."""


class CycleDetected(GraphError):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("cycle detected: " + " -> ".join(self.cycle))


class MultipleSinks(GraphError):
    def __init__(self, sinks):
        self.sinks = sorted(sinks)
        super().__init__(f"graph must have exactly one sink, found {self.sinks}")


class UnknownParent(GraphError):
    def __init__(self, node, parent):
        self.node = node
        self.parent = parent
        super().__init__(f"node {node!r} lists unknown parent {parent!r}")


class DeadNode(GraphError):
    def __init__(self, nodes):
        self.nodes = sorted(nodes)
        super().__init__(f"nodes not on any source-to-sink path: {self.nodes}")


class AlreadyAugmented(GraphError):
    """augment_super_source was called on a graph that already has one."""


class UnknownEdge(FlowCreditError, KeyError):
    def __init__(self, edge):
        self.edge = edge
        super().__init__(f"unknown edge {edge!r}")

    def __str__(self):
        return self.args[0]


class SizeLimitExceeded(FlowCreditError):
    def __init__(self, what, limit):
        self.what = what
        self.limit = limit
        super().__init__(f"{what} exceeds the configured limit of {limit}")


# function engine

class ArityMismatch(GraphError, TypeError):
    def __init__(self, expected, got, where=""):
        self.expected = expected
        self.got = got
        prefix = f"{where}: " if where else ""
        super().__init__(f"{prefix}expected {expected} argument(s), got {got}")


class ExpressionSyntaxError(FlowCreditError, ValueError):
    def __init__(self, message, position, text=""):
        self.position = position
        self.text = text
        super().__init__(f"{message} at offset {position}")


class UnboundVariable(FlowCreditError, NameError):
    def __init__(self, name):
        super().__init__(f"unbound variable {name!r}")
        self.name = name  # NameError.__init__ resets .name


class DomainError(FlowCreditError, ValueError):
    """A value falls outside the domain an operation is defined on."""


class NumericError(FlowCreditError, ArithmeticError):
    """Division by zero, log of a non-positive number, overflow."""


class ExternalModelError(FlowCreditError):
    pass


class ProcessDead(ExternalModelError):
    pass


class ProtocolViolation(ExternalModelError):
    pass


class ModelTimeout(ExternalModelError, TimeoutError):
    pass


# attribution

class UnrealizableHistory(FlowCreditError, ValueError):
    def __init__(self, index, edge):
        self.index = index
        self.edge = edge
        super().__init__(
            f"edge {edge!r} at position {index} fires before its tail was updated"
        )


class ConfigurationCapExceeded(FlowCreditError):
    def __init__(self, count, cap):
        self.count = count
        self.cap = cap
        super().__init__(
            f"{count} configurations exceed the exact-mode cap of {cap}; "
            "use Monte Carlo sampling instead"
        )


# oracles and generators

class TooManyPlayers(FlowCreditError, ValueError):
    def __init__(self, count, limit):
        self.count = count
        self.limit = limit
        super().__init__(f"{count} players exceed the enumeration limit of {limit}")


class NotATree(FlowCreditError, ValueError):
    pass


class NotLinear(FlowCreditError, ValueError):
    pass


class DegenerateGraph(FlowCreditError):
    pass


class InvalidDistribution(FlowCreditError, ValueError):
    pass


# files

class ParseError(FlowCreditError, ValueError):
    def __init__(self, file, line, column, message):
        self.file = str(file)
        self.line = line
        self.column = column
        super().__init__(f"{self.file}:{line}:{column}: {message}")


class SchemaError(FlowCreditError, ValueError):
    pass


class MissingSource(SchemaError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"sample is missing a value for source node {name!r}")
