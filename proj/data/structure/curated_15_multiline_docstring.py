def mean(xs):
    """Arithmetic mean.

    Returns 0.0 for an empty input.
    """
    if not xs:
        return 0.0
    return sum(xs) / len(xs)
