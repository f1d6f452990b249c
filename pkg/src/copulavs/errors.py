"""Exception type shared by all modules."""


class CopulaVSError(ValueError):
    """Raised for invalid inputs or degenerate numerical situations.

    ``code`` is a short machine-readable tag such as ``"insufficient-data"``;
    it always appears at the start of the message.
    """

    def __init__(self, code: str, detail: str = ""):
        self.code = code
        self.detail = detail
        msg = code if not detail else f"{code}: {detail}"
        super().__init__(msg)
