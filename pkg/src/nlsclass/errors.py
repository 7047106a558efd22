"""Exception hierarchy shared by all modules."""


class NLSClassError(Exception):
    """Base class for every error raised by the package."""


class ParseError(NLSClassError):
    def __init__(self, message: str, offset: int, text: str = ""):
        self.offset = offset
        self.text = text
        super().__init__(f"{message} at offset {offset}")


class UnknownIdentifier(ParseError):
    pass


class NotLaurentInX(NLSClassError):
    pass


class SingularityError(NLSClassError):
    """Evaluation hit (or came within 1e-12 of) a pole."""


class RankDeficientSampling(NLSClassError):
    pass


class SnapFailure(NLSClassError):
    pass


class UnregisteredInverse(NLSClassError):
    pass


class DomainViolation(NLSClassError):
    pass


class ConstraintViolation(NLSClassError):
    pass


class TemplateRejection(NLSClassError):
    def __init__(self, message: str, subterm=None):
        self.subterm = subterm
        super().__init__(message if subterm is None else f"{message}: {subterm}")
