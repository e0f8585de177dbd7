"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Invalid configuration or argument value."""


class SingularityError(ValueError):
    """Source and receiver coincide, so the Green's function is singular."""


class DegenerateInputError(ValueError):
    """Input has no usable structure (zero columns, coincident anchors, ...)."""


class NumericError(ArithmeticError):
    """Non-finite values in numerical input."""


class DisconnectedGraphError(RuntimeError):
    """Connectivity graph splits into several components."""

    def __init__(self, components):
        self.components = [sorted(int(i) for i in c) for c in components]
        sizes = [len(c) for c in self.components]
        super().__init__(
            f"connectivity graph has {len(sizes)} components (sizes {sizes}); "
            "refusing to embed"
        )


class DivergenceError(RuntimeError):
    """Alternating minimization objective kept increasing."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])
