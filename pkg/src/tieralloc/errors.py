"""Exception types shared across the solver suite."""


class ConfigError(ValueError):
    """Invalid configuration: unknown key, malformed value, or violated invariant."""


class InfeasibleError(RuntimeError):
    """The problem instance admits no assignment satisfying all constraints."""


class SolverError(RuntimeError):
    """A numerical solver failed to converge or tripped an internal guard."""
