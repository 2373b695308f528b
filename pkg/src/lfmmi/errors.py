"""Exception hierarchy shared across the toolkit.

Every error that can surface at a tool boundary carries a short
machine-parsable ``code`` so the CLI can emit ``ERR:<code>`` lines.
"""


class ToolkitError(Exception):
    """Base class for all toolkit errors."""

    code = "error"


class ParseError(ToolkitError):
    """A file or literal did not parse (lexicon, FSA text, emissions...)."""

    code = "parse"


class OovError(ToolkitError):
    """A transcript token is missing from the lexicon."""

    code = "oov"

    def __init__(self, token: str):
        super().__init__(f"token not in lexicon: {token!r}")
        self.token = token


class UnalignableError(ToolkitError):
    """The transcript admits no alignment of the requested length."""

    code = "unalignable"


class DeadPrefixError(ToolkitError):
    """A spelling prefix matches no lexicon word."""

    code = "dead-prefix"

    def __init__(self, prefix: str):
        super().__init__(f"dead prefix: no lexicon word starts with {prefix!r}")
        self.prefix = prefix
