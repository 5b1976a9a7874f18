"""
Every error raised on purpose by ``kgbench`` derives from ``KgBenchError`` and from the closest
builtin, so ``except ValueError`` keeps working for callers who don't know about this module.
"""


class KgBenchError(Exception):
    pass


# kg-store


class MalformedLine(KgBenchError, ValueError):
    def __init__(
        self, line_number: int, reason: str = "expected exactly three TAB-separated fields"
    ):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {reason}")


class EmptyGraph(KgBenchError, ValueError):
    def __init__(self, message: str = "the graph contains no triples"):
        super().__init__(message)


class DuplicateLabel(KgBenchError, ValueError):
    def __init__(self, kind: str, label: str, first: int, second: int):
        self.label = label
        super().__init__(f"{kind} label {label!r} is used by ids {first} and {second}")


class NotPresent(KgBenchError, KeyError):
    def __init__(self, triple):
        self.triple = triple
        super().__init__(f"triple {triple} is not in the graph")

    def __str__(self):
        # ``KeyError.__str__`` would wrap the message in quotes
        return self.args[0]


class MissingLabel(KgBenchError, KeyError):
    def __init__(self, entity):
        self.entity = entity
        super().__init__(f"no label for entity {entity!r}")

    def __str__(self):
        return self.args[0]


# rule-miner


class ZeroHeadFacts(KgBenchError, ArithmeticError):
    def __init__(self, predicate):
        self.predicate = predicate
        super().__init__(f"head predicate {predicate!r} has no facts in the graph")


class ZeroBodyGroundings(KgBenchError, ArithmeticError):
    def __init__(self, rule):
        self.rule = rule
        super().__init__(f"the body of {rule} has no groundings")


class ZeroPcaDenominator(KgBenchError, ArithmeticError):
    def __init__(self, rule):
        self.rule = rule
        super().__init__(
            f"{rule} only predicts for subjects without any known head fact; "
            "PCA confidence is undefined"
        )


# bench-builder


class EmptyPlan(KgBenchError, ValueError):
    def __init__(self, message: str = "no rule grounding survived the removal constraints"):
        super().__init__(message)


class EmptyAnswerSet(KgBenchError, RuntimeError):
    def __init__(self, topic, predicate, direction):
        self.topic, self.predicate, self.direction = topic, predicate, direction
        super().__init__(
            f"no answers for topic {topic!r} via {predicate!r} ({direction}) in the complete graph"
        )


class ValidationFailure(KgBenchError, ValueError):
    def __init__(self, text: str, reason: str):
        self.text, self.reason = text, reason
        super().__init__(f"rejected question {text!r}: {reason}")


class CorruptBundle(KgBenchError, ValueError):
    pass


# llm-client


class GeneratorFailure(KgBenchError, RuntimeError):
    retriable = False


class TransportError(GeneratorFailure):
    retriable = True


class RateLimited(TransportError):
    pass


class EmptyCompletion(GeneratorFailure):
    pass


# eval-harness


class HardNotInGold(KgBenchError, ValueError):
    def __init__(self, hard: str):
        self.hard = hard
        super().__init__(f"hard answer {hard!r} is not among the gold answers")


class EmptyInput(KgBenchError, ValueError):
    def __init__(self, message: str = "nothing to aggregate"):
        super().__init__(message)


class UnknownQuestionId(KgBenchError, KeyError):
    def __init__(self, question_ids):
        self.question_ids = sorted(question_ids)
        super().__init__(f"unknown question ids: {', '.join(self.question_ids)}")

    def __str__(self):
        return self.args[0]


class DuplicatePrediction(KgBenchError, ValueError):
    def __init__(self, question_id: str):
        self.question_id = question_id
        super().__init__(f"more than one prediction row for question {question_id!r}")


# cli


class ConfigurationError(KgBenchError, ValueError):
    pass
